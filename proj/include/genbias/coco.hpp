/*
 * Copyright 2026 The genbias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "genbias/error.hpp"

// Streaming reader for COCO annotation JSON. Only the flat scalar fields of
// the objects inside the top-level "images", "annotations" and "categories"
// arrays are captured; nested payloads such as segmentation polygons are
// skipped without being materialized.

namespace genbias::coco {

// One object from a top-level array. Integer ids are kept in their decimal
// text form so they can serve directly as record ids.
struct Object {
  std::string section;  // "images", "annotations" or "categories"
  std::size_t index = 0;
  std::optional<std::string> id;
  std::optional<std::string> image_id;
  std::optional<std::string> category_id;
  std::optional<std::string> caption;
  std::optional<std::string> name;
  int bbox_values = -1;  // -1: no bbox key; otherwise number of numeric entries
};

using ObjectSink = std::function<void(const Object&)>;

namespace detail {

class Handler : public nlohmann::json_sax<nlohmann::json> {
 public:
  explicit Handler(ObjectSink sink) : sink_(std::move(sink)) {}

  bool null() override { return scalar(std::nullopt); }
  bool boolean(bool) override { return scalar(std::nullopt); }
  bool number_integer(number_integer_t v) override {
    return scalar(std::to_string(v), true);
  }
  bool number_unsigned(number_unsigned_t v) override {
    return scalar(std::to_string(v), true);
  }
  bool number_float(number_float_t v, const string_t&) override {
    const auto as_int = static_cast<std::int64_t>(v);
    if (static_cast<double>(as_int) == v) return scalar(std::to_string(as_int), true);
    return scalar(std::nullopt, true);
  }
  bool string(string_t& v) override { return scalar(v); }
  bool binary(binary_t&) override { return scalar(std::nullopt); }

  bool start_object(std::size_t) override {
    ++depth_;
    if (depth_ == 3 && in_section()) {
      current_ = Object{};
      current_.section = section_;
      current_.index = index_++;
    }
    return true;
  }
  bool end_object() override {
    if (depth_ == 3 && in_section()) sink_(current_);
    if (depth_ == 1) section_.clear();
    --depth_;
    return true;
  }
  bool start_array(std::size_t) override {
    ++depth_;
    if (depth_ == 2) index_ = 0;
    if (depth_ == 4 && in_section() && field_ == "bbox") current_.bbox_values = 0;
    return true;
  }
  bool end_array() override {
    --depth_;
    return true;
  }
  bool key(string_t& k) override {
    if (depth_ == 1) section_ = k;
    if (depth_ == 3) field_ = k;
    return true;
  }
  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    throw IngestError("JSON parse error at byte " + std::to_string(position) +
                      ": " + ex.what());
  }

 private:
  bool in_section() const {
    return section_ == "images" || section_ == "annotations" ||
           section_ == "categories";
  }

  bool scalar(std::optional<std::string> v, bool numeric = false) {
    if (!in_section()) return true;
    if (depth_ == 4 && field_ == "bbox" && numeric) {
      ++current_.bbox_values;
      return true;
    }
    if (depth_ != 3) return true;
    if (field_ == "id") current_.id = std::move(v);
    else if (field_ == "image_id") current_.image_id = std::move(v);
    else if (field_ == "category_id") current_.category_id = std::move(v);
    else if (field_ == "caption") current_.caption = std::move(v);
    else if (field_ == "name") current_.name = std::move(v);
    return true;
  }

  ObjectSink sink_;
  int depth_ = 0;
  std::string section_;
  std::string field_;
  std::size_t index_ = 0;
  Object current_;
};

}  // namespace detail

/// Streams every object of the top-level arrays to `sink`. An empty or
/// whitespace-only file is treated as containing no objects.
inline void read_objects(const std::filesystem::path& path, const ObjectSink& sink) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open annotation file " + path.string());
  in >> std::ws;
  if (in.peek() == std::char_traits<char>::eof()) return;
  detail::Handler handler([&](const Object& o) {
    try {
      sink(o);
    } catch (const IngestError& e) {
      throw IngestError(path.string() + ": " + o.section + "[" +
                        std::to_string(o.index) + "]: " + e.what());
    }
  });
  try {
    nlohmann::json::sax_parse(in, &handler);
  } catch (const IngestError& e) {
    if (std::string(e.what()).rfind(path.string(), 0) == 0) throw;
    throw IngestError(path.string() + ": " + e.what());
  }
}

}  // namespace genbias::coco
