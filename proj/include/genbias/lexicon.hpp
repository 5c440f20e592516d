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
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genbias/error.hpp"
#include "genbias/gender.hpp"
#include "genbias/text.hpp"

namespace genbias {

struct LexiconEntry {
  std::string masculine;
  std::string feminine;
  std::string neutral;

  bool operator==(const LexiconEntry&) const = default;
};

// Which column of the lexicon a transformation writes.
enum class LexiconColumn { masculine, feminine, neutral };

/// Masculine/feminine/neutral word triples.
///
/// Gendered words (masculine and feminine columns) are unique across the
/// whole lexicon and never double as a neutral word. Neutral words may be
/// shared by several entries ("man", "male" and "gentleman" all map to
/// "person"). Words are stored lowercase; lookup is case-insensitive.
class GenderLexicon {
 public:
  struct Match {
    std::size_t entry = 0;
    Gender gender = Gender::undefined;
  };

  explicit GenderLexicon(std::vector<LexiconEntry> entries)
      : entries_(std::move(entries)) {
    std::unordered_map<std::string, std::size_t> neutral_words;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& e = entries_[i];
      e.masculine = to_lower(e.masculine);
      e.feminine = to_lower(e.feminine);
      e.neutral = to_lower(e.neutral);
      const std::string where = "lexicon entry " + std::to_string(i + 1);
      for (const auto* w : {&e.masculine, &e.feminine, &e.neutral}) {
        if (w->empty()) throw ArgumentError(where + ": empty word");
        for (char c : *w) {
          if (!is_ascii_alpha(c)) {
            throw ArgumentError(where + ": '" + *w +
                                "' is not a single alphabetic word");
          }
        }
      }
      for (auto [w, g] : {std::pair{&e.masculine, Gender::male},
                          std::pair{&e.feminine, Gender::female}}) {
        if (!gendered_.emplace(*w, Match{i, g}).second) {
          throw ArgumentError(where + ": '" + *w + "' appears twice");
        }
      }
      neutral_words.emplace(e.neutral, i);
    }
    for (const auto& [w, i] : neutral_words) {
      if (gendered_.count(w)) {
        throw ArgumentError("lexicon entry " + std::to_string(i + 1) + ": '" +
                            w + "' is both neutral and gendered");
      }
    }
    object_row_ = find_row("him", "her");
    possessive_row_ = find_row("his", "hers");
  }

  /// The seed table: fourteen English word triples.
  static GenderLexicon builtin() {
    return GenderLexicon({
        {"man", "woman", "person"},
        {"men", "women", "people"},
        {"male", "female", "person"},
        {"boy", "girl", "child"},
        {"boys", "girls", "children"},
        {"gentleman", "lady", "person"},
        {"father", "mother", "parent"},
        {"husband", "wife", "partner"},
        {"boyfriend", "girlfriend", "partner"},
        {"brother", "sister", "sibling"},
        {"son", "daughter", "child"},
        {"he", "she", "they"},
        {"his", "hers", "their"},
        {"him", "her", "them"},
    });
  }

  /// Reads one entry per line: masculine<TAB>feminine<TAB>neutral.
  /// Blank lines and lines starting with '#' are ignored.
  static GenderLexicon load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open lexicon file " + path.string());
    std::vector<LexiconEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cols;
      std::stringstream ss(line);
      std::string col;
      while (std::getline(ss, col, '\t')) cols.push_back(col);
      if (cols.size() != 3) {
        throw IngestError(path.string() + ":" + std::to_string(line_no) +
                          ": expected 3 tab-separated words, got " +
                          std::to_string(cols.size()));
      }
      entries.push_back({cols[0], cols[1], cols[2]});
    }
    try {
      return GenderLexicon(std::move(entries));
    } catch (const ArgumentError& e) {
      throw IngestError(path.string() + ": " + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot write lexicon file " + path.string());
    out << "# masculine\tfeminine\tneutral\n";
    for (const auto& e : entries_) {
      out << e.masculine << '\t' << e.feminine << '\t' << e.neutral << '\n';
    }
  }

  const std::vector<LexiconEntry>& entries() const { return entries_; }

  /// Looks up a single word (any case). Neutral words do not match.
  std::optional<Match> lookup(std::string_view word) const {
    auto it = gendered_.find(to_lower(word));
    if (it == gendered_.end()) return std::nullopt;
    return it->second;
  }

  bool is_gendered(std::string_view word) const {
    return lookup(word).has_value();
  }

  const std::string& word(std::size_t entry, LexiconColumn col) const {
    const auto& e = entries_.at(entry);
    switch (col) {
      case LexiconColumn::masculine:
        return e.masculine;
      case LexiconColumn::feminine:
        return e.feminine;
      case LexiconColumn::neutral:
        break;
    }
    return e.neutral;
  }

  /// Copy with the masculine and feminine columns exchanged.
  GenderLexicon mirrored() const {
    std::vector<LexiconEntry> flipped;
    for (const auto& e : entries_) {
      flipped.push_back({e.feminine, e.masculine, e.neutral});
    }
    return GenderLexicon(std::move(flipped));
  }

  // Rows used to resolve the object/possessive ambiguity of "her".
  std::optional<std::size_t> object_row() const { return object_row_; }
  std::optional<std::size_t> possessive_row() const { return possessive_row_; }

 private:
  std::optional<std::size_t> find_row(std::string_view masc,
                                      std::string_view fem) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].masculine == masc && entries_[i].feminine == fem) return i;
    }
    return std::nullopt;
  }

  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, Match> gendered_;
  std::optional<std::size_t> object_row_;
  std::optional<std::size_t> possessive_row_;
};

}  // namespace genbias
