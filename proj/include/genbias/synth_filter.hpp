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
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "genbias/corpus.hpp"
#include "genbias/embedding_store.hpp"
#include "genbias/error.hpp"
#include "genbias/gender.hpp"
#include "genbias/metrics.hpp"
#include "genbias/parallel.hpp"

namespace genbias {

/// KNN quality filter for synthetic person edits.
///
/// An edit is accepted when the share of real images among its
/// \c k_neighbors nearest neighbours exceeds \c tau_real and the share of
/// neighbours with the edit's target gender among its \c gender_neighbors()
/// nearest exceeds \c tau_gender (both strict).
struct FilterConfig {
  std::size_t k_neighbors = 50;
  double tau_real = 0.08;
  double tau_gender = 0.5;
  // Separate neighbourhood size for the gender share; defaults to k_neighbors.
  std::optional<std::size_t> k_gender;
  DistanceMetric metric = DistanceMetric::euclidean;

  std::size_t gender_neighbors() const { return k_gender.value_or(k_neighbors); }
  std::size_t max_neighbors() const { return std::max(k_neighbors, gender_neighbors()); }

  void validate() const {
    if (k_neighbors == 0 || gender_neighbors() == 0) {
      throw ConfigError("filter neighbourhood sizes must be positive");
    }
    if (tau_real < 0 || tau_real > 1 || tau_gender < 0 || tau_gender > 1) {
      throw ConfigError("filter thresholds must lie in [0, 1]");
    }
    if (metric != DistanceMetric::euclidean) {
      throw ConfigError("the edit filter only supports euclidean distance");
    }
  }

  static std::vector<std::string> preset_names() { return {"clip-default", "dino-ablation"}; }

  /// "clip-default": K=50, tau_R=0.08, tau_G=0.5.
  /// "dino-ablation": K=5000 for the real share with tau_R=0.0002, and K=50
  /// for the gender share with tau_G=0.4.
  static FilterConfig preset(std::string_view name) {
    if (name == "clip-default") return {50, 0.08, 0.5, std::nullopt};
    if (name == "dino-ablation") return {5000, 0.0002, 0.4, 50};
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown filter preset '" + std::string(name) + "' (available: " +
                      names + ")");
  }

  bool operator==(const FilterConfig&) const = default;
};

struct NeighborStats {
  double p_real = 0;
  double p_synthetic = 0;
  double p_gender = 0;
};

struct FilterDecision {
  std::string edit_id;
  std::string base_id;
  Gender target_gender = Gender::undefined;
  double p_real = 0;
  double p_gender = 0;
  bool accepted = false;

  bool operator==(const FilterDecision&) const = default;
};

inline bool apply_filter(const NeighborStats& stats, const FilterConfig& config) {
  return stats.p_real > config.tau_real && stats.p_gender > config.tau_gender;
}

namespace detail {

// Population of the filter: store rows, real/synthetic flag and gender.
struct FilterPopulation {
  std::vector<std::size_t> rows;
  std::vector<char> is_real;   // indexed by store row
  std::vector<Gender> gender;  // indexed by store row
};

inline FilterPopulation make_population(const EmbeddingStore& store,
                                        std::span<const std::string> real_ids,
                                        std::span<const std::string> synth_ids,
                                        const LabelMap& genders) {
  FilterPopulation pop;
  pop.is_real.assign(store.size(), 0);
  pop.gender.assign(store.size(), Gender::undefined);
  std::vector<char> member(store.size(), 0);
  auto add = [&](const std::string& id, bool real) {
    const auto row = store.find(id);
    if (!row) throw ArgumentError("no embedding for image '" + id + "'");
    auto g = genders.find(id);
    if (g == genders.end() || !is_defined(g->second)) {
      throw ArgumentError("no defined gender for image '" + id + "'");
    }
    if (member[*row]) throw ArgumentError("image '" + id + "' listed twice in the population");
    member[*row] = 1;
    pop.rows.push_back(*row);
    pop.is_real[*row] = real ? 1 : 0;
    pop.gender[*row] = g->second;
  };
  for (const auto& id : real_ids) add(id, true);
  for (const auto& id : synth_ids) add(id, false);
  std::sort(pop.rows.begin(), pop.rows.end());
  return pop;
}

inline NeighborStats stats_for_row(const EmbeddingStore& store, const FilterPopulation& pop,
                                   std::size_t edit_row, const FilterConfig& config) {
  const auto neighbors =
      knn(store, store.ids()[edit_row], config.max_neighbors(), config.metric, pop.rows);
  std::size_t real = 0, synthetic = 0, same_gender = 0;
  const Gender target = pop.gender[edit_row];
  for (std::size_t i = 0; i < neighbors.neighbors.size(); ++i) {
    const std::size_t row = store.row_of(neighbors.neighbors[i].id);
    if (i < config.k_neighbors) (pop.is_real[row] ? real : synthetic)++;
    if (i < config.gender_neighbors() && pop.gender[row] == target) ++same_gender;
  }
  const double k = static_cast<double>(config.k_neighbors);
  return {static_cast<double>(real) / k, static_cast<double>(synthetic) / k,
          static_cast<double>(same_gender) / static_cast<double>(config.gender_neighbors())};
}

inline void check_population_size(const FilterPopulation& pop, const FilterConfig& config) {
  if (pop.rows.size() < config.max_neighbors() + 1) {
    throw ConfigError("filter population of " + std::to_string(pop.rows.size()) +
                      " images is too small for a neighbourhood of " +
                      std::to_string(config.max_neighbors()));
  }
}

}  // namespace detail

/// Real share and target-gender share in the KNN neighbourhood of one edit,
/// searched over real_ids and synth_ids together (the edit itself excluded).
/// \p genders gives caption labels for real images and target genders for
/// edits.
inline NeighborStats neighbor_stats(std::string_view edit_id,
                                    std::span<const std::string> real_ids,
                                    std::span<const std::string> synth_ids,
                                    const EmbeddingStore& store, const LabelMap& genders,
                                    const FilterConfig& config) {
  config.validate();
  if (std::find(synth_ids.begin(), synth_ids.end(), edit_id) == synth_ids.end()) {
    throw ArgumentError("'" + std::string(edit_id) + "' is not a synthetic edit");
  }
  const auto pop = detail::make_population(store, real_ids, synth_ids, genders);
  detail::check_population_size(pop, config);
  return detail::stats_for_row(store, pop, store.row_of(edit_id), config);
}

/// One decision per synthetic record, sorted by edit id. Real records with
/// an undefined label are left out of the neighbour population.
inline std::vector<FilterDecision> filter_dataset(const Corpus& corpus,
                                                  const EmbeddingStore& store,
                                                  const FilterConfig& config) {
  config.validate();
  corpus.validate_origins();
  std::vector<std::string> real_ids, synth_ids;
  LabelMap genders;
  for (const auto& r : corpus.records()) {
    if (r.synthetic) {
      if (!store.contains(r.id)) {
        throw ArgumentError("synthetic record '" + r.id + "' has no embedding");
      }
      synth_ids.push_back(r.id);
      genders[r.id] = r.synthetic->target;
    } else if (is_defined(r.gender_label)) {
      if (!store.contains(r.id)) {
        throw ArgumentError("real record '" + r.id + "' has no embedding");
      }
      real_ids.push_back(r.id);
      genders[r.id] = r.gender_label;
    }
  }
  if (synth_ids.empty()) return {};
  std::sort(synth_ids.begin(), synth_ids.end());
  const auto pop = detail::make_population(store, real_ids, synth_ids, genders);
  detail::check_population_size(pop, config);

  std::vector<FilterDecision> decisions(synth_ids.size());
  parallel_for(synth_ids.size(), [&](std::size_t i) {
    const auto& rec = corpus.at(synth_ids[i]);
    const auto stats = detail::stats_for_row(store, pop, store.row_of(rec.id), config);
    decisions[i] = {rec.id, rec.synthetic->source_id, rec.synthetic->target,
                    stats.p_real, stats.p_gender, apply_filter(stats, config)};
  });
  return decisions;
}

inline void write_decisions_csv(std::ostream& out, std::span<const FilterDecision> decisions) {
  out << "edit_id,base_id,target_gender,p_real,p_gender,accepted\n";
  for (const auto& d : decisions) {
    out << fmt::format("{},{},{},{},{},{}\n", d.edit_id, d.base_id, to_string(d.target_gender),
                       d.p_real, d.p_gender, d.accepted ? "true" : "false");
  }
}

inline std::vector<FilterDecision> read_decisions_csv(std::istream& in,
                                                      const std::string& source) {
  std::vector<FilterDecision> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line_no == 1) continue;  // header
    const auto cols = detail::split(line, ',');
    const std::string where = source + ":" + std::to_string(line_no);
    if (cols.size() != 6) throw IngestError(where + ": expected 6 columns");
    try {
      FilterDecision d;
      d.edit_id = cols[0];
      d.base_id = cols[1];
      d.target_gender = parse_gender(cols[2]);
      d.p_real = std::stod(cols[3]);
      d.p_gender = std::stod(cols[4]);
      if (cols[5] != "true" && cols[5] != "false") {
        throw ArgumentError("accepted must be true or false");
      }
      d.accepted = cols[5] == "true";
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw IngestError(where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace genbias
