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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "genbias/caption.hpp"
#include "genbias/coco.hpp"
#include "genbias/error.hpp"
#include "genbias/gender.hpp"
#include "genbias/lexicon.hpp"
#include "genbias/random.hpp"

namespace genbias {

enum class Split { train, val };

inline std::string_view to_string(Split s) {
  return s == Split::train ? "train" : "val";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  throw ArgumentError("unknown split '" + std::string(s) + "'");
}

// Provenance of a generated person edit.
struct SyntheticOrigin {
  Gender target = Gender::undefined;
  std::string source_id;
  std::string edit_instruction_tag;
  std::string guidance_tag;

  bool operator==(const SyntheticOrigin&) const = default;
};

struct ImageRecord {
  std::string id;
  Split split = Split::train;
  std::vector<std::string> captions;
  int person_box_count = 0;
  Gender gender_label = Gender::undefined;
  std::optional<SyntheticOrigin> synthetic;  // empty for real images

  bool is_synthetic() const { return synthetic.has_value(); }
  bool operator==(const ImageRecord&) const = default;
};

/// Id-indexed image records plus the lexicon that labels them. Record order
/// is insertion order and is preserved by every subset operation.
class Corpus {
 public:
  Corpus() : lexicon_(std::make_shared<const GenderLexicon>(GenderLexicon::builtin())) {}
  explicit Corpus(GenderLexicon lexicon)
      : lexicon_(std::make_shared<const GenderLexicon>(std::move(lexicon))) {}
  explicit Corpus(std::shared_ptr<const GenderLexicon> lexicon)
      : lexicon_(std::move(lexicon)) {}

  void add(ImageRecord record) {
    if (record.id.empty()) throw ArgumentError("record id must be non-empty");
    if (record.captions.empty()) {
      throw ArgumentError("record " + record.id + " has no captions");
    }
    if (record.person_box_count < 0) {
      throw ArgumentError("record " + record.id + " has a negative box count");
    }
    if (index_.count(record.id)) {
      throw ArgumentError("duplicate record id " + record.id);
    }
    index_.emplace(record.id, records_.size());
    records_.push_back(std::move(record));
  }

  const ImageRecord* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  const ImageRecord& at(std::string_view id) const {
    if (const auto* r = find(id)) return *r;
    throw ArgumentError("unknown image id " + std::string(id));
  }

  bool contains(std::string_view id) const { return find(id) != nullptr; }

  std::span<const ImageRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const GenderLexicon& lexicon() const { return *lexicon_; }
  const std::shared_ptr<const GenderLexicon>& shared_lexicon() const {
    return lexicon_;
  }

  template <class Pred>
  Corpus subset(Pred&& keep) const {
    Corpus out(lexicon_);
    for (const auto& r : records_) {
      if (keep(r)) out.add(r);
    }
    return out;
  }

  /// Every synthetic record must point at a real record in this corpus.
  void validate_origins() const {
    for (const auto& r : records_) {
      if (!r.synthetic) continue;
      const auto* src = find(r.synthetic->source_id);
      if (!src || src->is_synthetic()) {
        throw ArgumentError("synthetic record " + r.id +
                            " has unresolved source " + r.synthetic->source_id);
      }
      if (!is_defined(r.synthetic->target)) {
        throw ArgumentError("synthetic record " + r.id + " lacks a target gender");
      }
    }
  }

  std::unordered_map<std::string, Gender> labels() const {
    std::unordered_map<std::string, Gender> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.emplace(r.id, r.gender_label);
    return out;
  }

 private:
  std::shared_ptr<const GenderLexicon> lexicon_;
  std::vector<ImageRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads COCO caption annotations and, optionally, instance annotations.
/// Records are created for every image with at least one caption, in the
/// order of the captions file's "images" array. person_box_count counts the
/// instance boxes whose category is named "person"; images without
/// instances count zero. Labels start undefined.
inline Corpus load_annotations(const std::filesystem::path& captions_file,
                               const std::optional<std::filesystem::path>& instances_file,
                               Split split,
                               GenderLexicon lexicon = GenderLexicon::builtin()) {
  std::vector<std::string> order;
  std::unordered_set<std::string> listed;
  std::unordered_map<std::string, std::vector<std::string>> captions;
  coco::read_objects(captions_file, [&](const coco::Object& o) {
    if (o.section == "images") {
      if (!o.id) throw IngestError("image without 'id'");
      if (listed.insert(*o.id).second) order.push_back(*o.id);
    } else if (o.section == "annotations") {
      if (!o.image_id) throw IngestError("caption without 'image_id'");
      if (!o.caption) throw IngestError("annotation without 'caption' text");
      captions[*o.image_id].push_back(*o.caption);
    }
  });
  // Captioned images missing from "images" are appended in id order.
  std::vector<std::string> extra;
  for (const auto& [id, _] : captions) {
    if (!listed.count(id)) extra.push_back(id);
  }
  std::sort(extra.begin(), extra.end());
  order.insert(order.end(), extra.begin(), extra.end());

  std::unordered_map<std::string, int> person_boxes;
  if (instances_file) {
    std::unordered_set<std::string> person_categories;
    bool saw_categories = false;
    std::vector<std::pair<std::string, std::string>> boxes;  // image, category
    coco::read_objects(*instances_file, [&](const coco::Object& o) {
      if (o.section == "categories") {
        saw_categories = true;
        if (!o.id) throw IngestError("category without 'id'");
        if (o.name && *o.name == "person") person_categories.insert(*o.id);
      } else if (o.section == "annotations") {
        if (!o.image_id) throw IngestError("instance without 'image_id'");
        if (!o.category_id) throw IngestError("instance without 'category_id'");
        if (o.bbox_values != 4) throw IngestError("instance without a 4-value 'bbox'");
        boxes.emplace_back(*o.image_id, *o.category_id);
      }
    });
    if (!saw_categories) person_categories.insert("1");
    for (const auto& [image, category] : boxes) {
      if (person_categories.count(category)) ++person_boxes[image];
    }
  }

  Corpus corpus(std::move(lexicon));
  for (const auto& id : order) {
    auto it = captions.find(id);
    if (it == captions.end()) continue;
    ImageRecord r;
    r.id = id;
    r.split = split;
    r.captions = std::move(it->second);
    auto b = person_boxes.find(id);
    r.person_box_count = b == person_boxes.end() ? 0 : b->second;
    corpus.add(std::move(r));
  }
  return corpus;
}

/// Labels every record from its captions.
inline Corpus assign_gender_labels(const Corpus& corpus) {
  Corpus out(corpus.shared_lexicon());
  for (auto r : corpus.records()) {
    r.gender_label = label_captions(r.captions, corpus.lexicon());
    out.add(std::move(r));
  }
  return out;
}

/// Same records with every caption neutralized; labels are kept.
inline Corpus neutralize_corpus(const Corpus& corpus) {
  Corpus out(corpus.shared_lexicon());
  for (auto r : corpus.records()) {
    for (auto& c : r.captions) c = neutralize_caption(c, corpus.lexicon());
    out.add(std::move(r));
  }
  return out;
}

/// Images with exactly one person box and a defined gender label.
inline Corpus select_single_person_gendered(const Corpus& corpus) {
  return corpus.subset([](const ImageRecord& r) {
    return r.person_box_count == 1 && is_defined(r.gender_label);
  });
}

/// Undersamples the majority gender to the size of the minority gender.
/// The minority is kept whole; the majority sample is uniform without
/// replacement under `seed`. Undefined-label records pass through, and
/// record order is preserved.
inline Corpus balance_by_gender(const Corpus& corpus, std::uint64_t seed) {
  std::vector<std::size_t> male, female;
  const auto recs = corpus.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].gender_label == Gender::male) male.push_back(i);
    if (recs[i].gender_label == Gender::female) female.push_back(i);
  }
  if (male.empty()) throw ArgumentError("cannot balance: no male records");
  if (female.empty()) throw ArgumentError("cannot balance: no female records");
  auto& majority = male.size() >= female.size() ? male : female;
  const std::size_t target = std::min(male.size(), female.size());
  std::vector<bool> keep(recs.size(), true);
  if (majority.size() > target) {
    for (auto i : majority) keep[i] = false;
    Rng rng(seed);
    for (auto j : sample_without_replacement(majority.size(), target, rng)) {
      keep[majority[j]] = true;
    }
  }
  Corpus out(corpus.shared_lexicon());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (keep[i]) out.add(recs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus export: one record per line,
//   id \t split \t gender_label \t person_box_count \t origin \t captions
// origin is "real" or "synthetic|<target>|<source_id>|<instruction>|<guidance>",
// captions are joined with the ASCII unit separator (0x1F).

inline constexpr char kCaptionSeparator = '\x1f';

namespace detail {

inline std::string sanitize_field(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\t' || c == '\n' || c == '\r' || c == kCaptionSeparator) c = ' ';
  }
  return out;
}

inline void check_token(std::string_view what, std::string_view s) {
  if (s.find_first_of("\t\n\r|\x1f") != std::string_view::npos) {
    throw ArgumentError(std::string(what) + " '" + std::string(s) +
                        "' contains a reserved character");
  }
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline std::string format_origin(const ImageRecord& r) {
  if (!r.synthetic) return "real";
  const auto& s = *r.synthetic;
  detail::check_token("source id", s.source_id);
  detail::check_token("instruction tag", s.edit_instruction_tag);
  detail::check_token("guidance tag", s.guidance_tag);
  return "synthetic|" + std::string(to_string(s.target)) + "|" + s.source_id +
         "|" + s.edit_instruction_tag + "|" + s.guidance_tag;
}

inline std::optional<SyntheticOrigin> parse_origin(std::string_view text) {
  if (text == "real") return std::nullopt;
  auto parts = detail::split(text, '|');
  if (parts.size() != 5 || parts[0] != "synthetic") {
    throw IngestError("malformed origin '" + std::string(text) + "'");
  }
  SyntheticOrigin o;
  o.target = parse_gender(parts[1]);
  o.source_id = parts[2];
  o.edit_instruction_tag = parts[3];
  o.guidance_tag = parts[4];
  return o;
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  out << "# id\tsplit\tgender_label\tperson_box_count\torigin\tcaptions\n";
  for (const auto& r : corpus.records()) {
    detail::check_token("record id", r.id);
    out << r.id << '\t' << to_string(r.split) << '\t' << to_string(r.gender_label)
        << '\t' << r.person_box_count << '\t' << format_origin(r) << '\t';
    for (std::size_t i = 0; i < r.captions.size(); ++i) {
      if (i) out << kCaptionSeparator;
      out << detail::sanitize_field(r.captions[i]);
    }
    out << '\n';
  }
}

inline Corpus read_corpus(std::istream& in, const std::string& source,
                          GenderLexicon lexicon = GenderLexicon::builtin()) {
  Corpus corpus(std::move(lexicon));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto cols = detail::split(line, '\t');
    if (cols.size() != 6) {
      throw IngestError(where + ": expected 6 tab-separated fields, got " +
                        std::to_string(cols.size()));
    }
    try {
      ImageRecord r;
      r.id = cols[0];
      r.split = parse_split(cols[1]);
      r.gender_label = parse_gender(cols[2]);
      std::size_t used = 0;
      r.person_box_count = std::stoi(cols[3], &used);
      if (used != cols[3].size()) throw ArgumentError("bad box count '" + cols[3] + "'");
      r.synthetic = parse_origin(cols[4]);
      r.captions = detail::split(cols[5], kCaptionSeparator);
      corpus.add(std::move(r));
    } catch (const IngestError& e) {
      throw IngestError(where + ": " + e.what());
    } catch (const std::exception& e) {
      throw IngestError(where + ": " + e.what());
    }
  }
  return corpus;
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write corpus file " + path.string());
  write_corpus(out, corpus);
}

inline Corpus load_corpus(const std::filesystem::path& path,
                          GenderLexicon lexicon = GenderLexicon::builtin()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open corpus file " + path.string());
  return read_corpus(in, path.string(), std::move(lexicon));
}

// Caption embedding ids are "<image id>#<caption index>".
inline std::string caption_id(std::string_view image_id, std::size_t index) {
  return std::string(image_id) + "#" + std::to_string(index);
}

}  // namespace genbias
