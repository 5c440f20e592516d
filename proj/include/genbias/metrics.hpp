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
#include <compare>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "genbias/error.hpp"
#include "genbias/gender.hpp"
#include "genbias/retrieval.hpp"

namespace genbias {

using LabelMap = std::unordered_map<std::string, Gender>;

namespace detail {

inline const std::string& item_id(const std::string& s) { return s; }
inline const std::string& item_id(const Scored& s) { return s.id; }

struct GenderCounts {
  std::size_t male = 0;
  std::size_t female = 0;
  std::size_t labeled() const { return male + female; }
};

template <class Ranking>
GenderCounts count_top_k(const Ranking& ranking, const LabelMap& labels, std::size_t k) {
  if (k == 0 || k > std::size(ranking)) {
    throw ArgumentError("k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(std::size(ranking)) + "] for this ranking");
  }
  GenderCounts c;
  auto it = std::begin(ranking);
  for (std::size_t i = 0; i < k; ++i, ++it) {
    const auto& id = item_id(*it);
    auto found = labels.find(id);
    if (found == labels.end()) throw ArgumentError("no gender label for image '" + id + "'");
    if (found->second == Gender::male) ++c.male;
    if (found->second == Gender::female) ++c.female;
  }
  return c;
}

}  // namespace detail

/// Signed gender imbalance of the top k: (N_male - N_female) / (N_male +
/// N_female), or 0 when no labeled image is retrieved.
template <class Ranking>
double delta_k(const Ranking& ranking, const LabelMap& labels, std::size_t k) {
  const auto c = detail::count_top_k(ranking, labels, k);
  if (c.labeled() == 0) return 0.0;
  return (static_cast<double>(c.male) - static_cast<double>(c.female)) /
         static_cast<double>(c.labeled());
}

/// Mean of delta_k over the run's queries. Positive means male
/// over-representation.
inline double bias_at_k(const RetrievalRun& run, const LabelMap& labels, std::size_t k) {
  if (run.rankings.empty()) throw MetricError("Bias@K of an empty query set");
  double sum = 0;
  for (const auto& r : run.rankings) sum += delta_k(r, labels, k);
  return sum / static_cast<double>(run.rankings.size());
}

/// Desired share of each gender in a retrieval.
struct AttributeDistribution {
  double male = 0.5;
  double female = 0.5;

  double of(Gender g) const {
    if (g == Gender::male) return male;
    if (g == Gender::female) return female;
    throw ArgumentError("desired proportion requested for undefined gender");
  }

  void validate() const {
    if (male < 0 || female < 0 || male > 1 || female > 1 ||
        std::abs(male + female - 1.0) > 1e-9) {
      throw ArgumentError(fmt::format("desired proportions {}/{} do not form a distribution",
                                      male, female));
    }
  }
};

/// ln(p_actual / p_desired) for one attribute, where p_actual is the
/// attribute's share among labeled images in the top k. Returns -infinity
/// when the attribute is absent from a non-empty labeled top k.
template <class Ranking>
double skew_at_k(const Ranking& ranking, const LabelMap& labels, Gender attribute,
                 const AttributeDistribution& desired, std::size_t k) {
  const double p_desired = desired.of(attribute);
  if (!(p_desired > 0)) {
    throw MetricError("Skew@K undefined: desired proportion of " +
                      std::string(to_string(attribute)) + " is 0");
  }
  const auto c = detail::count_top_k(ranking, labels, k);
  if (c.labeled() == 0) throw MetricError("Skew@K undefined: no labeled image in top k");
  const double n = attribute == Gender::male ? static_cast<double>(c.male)
                                             : static_cast<double>(c.female);
  if (n == 0) return -std::numeric_limits<double>::infinity();
  return std::log((n / static_cast<double>(c.labeled())) / p_desired);
}

/// Largest Skew@K over {male, female}. Undefined-label images are ignored;
/// a top k without labeled images yields nullopt (the query is skipped).
template <class Ranking>
std::optional<double> max_skew_at_k(const Ranking& ranking, const LabelMap& labels,
                                    const AttributeDistribution& desired, std::size_t k) {
  const auto c = detail::count_top_k(ranking, labels, k);
  if (c.labeled() == 0) return std::nullopt;
  double best = -std::numeric_limits<double>::infinity();
  for (Gender g : kBinaryGenders) best = std::max(best, skew_at_k(ranking, labels, g, desired, k));
  return best;
}

struct SkewSummary {
  double mean = 0;
  std::size_t queries_used = 0;
};

/// Mean MaxSkew@K over the queries that retrieved at least one labeled image.
inline SkewSummary mean_max_skew_at_k(const RetrievalRun& run, const LabelMap& labels,
                                      const AttributeDistribution& desired, std::size_t k) {
  SkewSummary s;
  double sum = 0;
  for (const auto& r : run.rankings) {
    if (auto v = max_skew_at_k(r, labels, desired, k)) {
      sum += *v;
      ++s.queries_used;
    }
  }
  if (s.queries_used == 0) throw MetricError("MaxSkew@K: no query retrieved a labeled image");
  s.mean = sum / static_cast<double>(s.queries_used);
  return s;
}

/// Gender shares among the labeled members of \p pool.
inline AttributeDistribution desired_from_dataset(const LabelMap& labels,
                                                  std::span<const std::string> pool) {
  std::size_t male = 0, female = 0;
  for (const auto& id : pool) {
    auto it = labels.find(id);
    if (it == labels.end()) throw ArgumentError("no gender label for image '" + id + "'");
    if (it->second == Gender::male) ++male;
    if (it->second == Gender::female) ++female;
  }
  if (male == 0) throw MetricError("pool contains no male-labeled image");
  if (female == 0) throw MetricError("pool contains no female-labeled image");
  const double n = static_cast<double>(male + female);
  return {static_cast<double>(male) / n, static_cast<double>(female) / n};
}

struct MeanStd {
  double mean = 0;
  double std = 0;
  std::size_t n = 0;
};

/// Mean and population standard deviation.
inline MeanStd aggregate_over_seeds(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("aggregate_over_seeds: no values");
  MeanStd out;
  out.n = values.size();
  double sum = 0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double sq = 0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(out.n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

inline constexpr std::string_view kBiasMetric = "Bias";
inline constexpr std::string_view kMaxSkewMetric = "MaxSkew";

struct MetricKey {
  std::string metric;
  std::size_t k = 0;

  auto operator<=>(const MetricKey&) const = default;
};

struct MetricValue {
  double mean = 0;
  double std = 0;
  std::size_t n_seeds = 0;
  std::size_t n_queries = 0;
};

struct BiasReport {
  std::string model_tag;
  std::string dataset_tag;
  std::map<MetricKey, MetricValue> values;
};

inline void write_reports_csv(std::ostream& out, std::span<const BiasReport> reports) {
  out << "model,dataset,metric,K,mean,std,n_seeds,n_queries\n";
  for (const auto& r : reports) {
    for (const auto& [key, v] : r.values) {
      out << fmt::format("{},{},{},{},{},{},{},{}\n", r.model_tag, r.dataset_tag, key.metric,
                         key.k, v.mean, v.std, v.n_seeds, v.n_queries);
    }
  }
}

inline nlohmann::json reports_to_json(std::span<const BiasReport> reports) {
  auto rows = nlohmann::json::array();
  for (const auto& r : reports) {
    for (const auto& [key, v] : r.values) {
      rows.push_back({{"model", r.model_tag},
                      {"dataset", r.dataset_tag},
                      {"metric", key.metric},
                      {"K", key.k},
                      {"mean", v.mean},
                      {"std", v.std},
                      {"n_seeds", v.n_seeds},
                      {"n_queries", v.n_queries}});
    }
  }
  return rows;
}

}  // namespace genbias
