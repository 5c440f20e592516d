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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "genbias/corpus.hpp"
#include "genbias/error.hpp"
#include "genbias/random.hpp"
#include "genbias/synth_filter.hpp"

namespace genbias {

struct ContrastPair {
  std::string base_id;
  std::string male_edit_id;
  std::string female_edit_id;
  double mean_p_real = 0;  // average real share of the two chosen edits

  bool operator==(const ContrastPair&) const = default;
};

struct ContrastSet {
  std::vector<ContrastPair> pairs;

  std::size_t image_count() const { return 2 * pairs.size(); }
};

/// 1-based decile of an averaged real share (0.0-0.1 -> 1, ..., 0.9-1.0 -> 10).
inline int p_real_decile(double mean_p_real) {
  const int d = static_cast<int>(std::floor(mean_p_real * 10.0)) + 1;
  return std::clamp(d, 1, 10);
}

/// Keeps base images with at least one accepted edit of each gender and
/// picks one accepted edit per gender uniformly at random under \p seed.
/// Bases are visited in ascending id order and candidate edits are sorted,
/// so the result does not depend on the order of \p decisions.
inline ContrastSet assemble_contrast_set(const Corpus& corpus,
                                         std::span<const FilterDecision> decisions,
                                         std::uint64_t seed) {
  struct Candidates {
    std::vector<std::pair<std::string, double>> male, female;
  };
  std::map<std::string, Candidates> by_base;
  for (const auto& d : decisions) {
    const auto* rec = corpus.find(d.edit_id);
    if (!rec || !rec->synthetic) {
      throw ArgumentError("decision for '" + d.edit_id + "' does not name a synthetic record");
    }
    if (rec->synthetic->source_id != d.base_id || rec->synthetic->target != d.target_gender) {
      throw ArgumentError("decision for '" + d.edit_id + "' disagrees with its record");
    }
    if (!d.accepted) continue;
    auto& c = by_base[d.base_id];
    (d.target_gender == Gender::male ? c.male : c.female).emplace_back(d.edit_id, d.p_real);
  }
  Rng rng(seed);
  ContrastSet set;
  for (auto& [base, c] : by_base) {
    if (c.male.empty() || c.female.empty()) continue;
    std::sort(c.male.begin(), c.male.end());
    std::sort(c.female.begin(), c.female.end());
    const auto& m = c.male[rng.below(c.male.size())];
    const auto& f = c.female[rng.below(c.female.size())];
    set.pairs.push_back({base, m.first, f.first, 0.5 * (m.second + f.second)});
  }
  return set;
}

/// Tab-separated: base_id, male_edit_id, female_edit_id, mean_p_real,
/// p_real_decile.
inline void write_contrast_set(std::ostream& out, const ContrastSet& set) {
  out << "# base_id\tmale_edit_id\tfemale_edit_id\tmean_p_real\tp_real_decile\n";
  for (const auto& p : set.pairs) {
    out << fmt::format("{}\t{}\t{}\t{}\t{}\n", p.base_id, p.male_edit_id, p.female_edit_id,
                       p.mean_p_real, p_real_decile(p.mean_p_real));
  }
}

inline ContrastSet read_contrast_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open contrast set " + path.string());
  ContrastSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = detail::split(line, '\t');
    if (cols.size() < 3) {
      throw IngestError(path.string() + ":" + std::to_string(line_no) +
                        ": expected at least 3 columns");
    }
    ContrastPair p{cols[0], cols[1], cols[2], 0};
    if (cols.size() > 3) p.mean_p_real = std::stod(cols[3]);
    set.pairs.push_back(std::move(p));
  }
  return set;
}

}  // namespace genbias
