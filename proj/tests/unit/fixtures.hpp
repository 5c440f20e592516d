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

// Helpers shared by the test binaries.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "genbias/corpus.hpp"
#include "genbias/embedding_store.hpp"
#include "genbias/random.hpp"

namespace genbias::fx {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("genbias-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ImageRecord real(std::string id, Gender g, std::vector<std::string> captions = {"a photo"},
                        int boxes = 1, Split split = Split::val) {
  ImageRecord r;
  r.id = std::move(id);
  r.split = split;
  r.captions = std::move(captions);
  r.person_box_count = boxes;
  r.gender_label = g;
  return r;
}

inline ImageRecord edit(std::string id, std::string source, Gender target,
                        std::vector<std::string> captions = {"an edit"}) {
  ImageRecord r;
  r.id = std::move(id);
  r.split = Split::train;
  r.captions = std::move(captions);
  r.person_box_count = 1;
  r.gender_label = target;
  r.synthetic = SyntheticOrigin{target, std::move(source), "more", "9.5"};
  return r;
}

inline EmbeddingStore store_of(std::vector<std::string> ids, std::size_t dim,
                               std::vector<float> values, bool normalized = false) {
  return EmbeddingStore(std::move(ids), dim, std::move(values), normalized, "test");
}

/// Gaussian-free random store: coordinates uniform in [-1, 1).
inline EmbeddingStore random_store(std::size_t n, std::size_t dim, Rng& rng,
                                   const std::string& prefix = "v") {
  std::vector<std::string> ids;
  std::vector<float> values;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(prefix + std::to_string(i));
    for (std::size_t d = 0; d < dim; ++d) {
      values.push_back(static_cast<float>(2.0 * rng.unit() - 1.0));
    }
  }
  return store_of(std::move(ids), dim, std::move(values));
}

}  // namespace genbias::fx
