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
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "genbias/caption.hpp"
#include "genbias/embedding_store.hpp"
#include "genbias/error.hpp"
#include "genbias/gender.hpp"
#include "genbias/lexicon.hpp"
#include "genbias/metrics.hpp"
#include "genbias/parallel.hpp"
#include "genbias/random.hpp"
#include "genbias/text.hpp"

namespace genbias {

// ---------------------------------------------------------------------------
// Caption feature averaging.

/// One row per image: the mean of its caption vectors. Output rows follow
/// the iteration order of \p image_to_captions.
inline EmbeddingStore average_caption_features(
    const EmbeddingStore& caption_store,
    const std::map<std::string, std::vector<std::string>>& image_to_captions) {
  const std::size_t dim = caption_store.dim();
  std::vector<std::string> ids;
  std::vector<float> values;
  ids.reserve(image_to_captions.size());
  values.reserve(image_to_captions.size() * dim);
  for (const auto& [image, captions] : image_to_captions) {
    if (captions.empty()) throw ArgumentError("image '" + image + "' has no captions");
    std::vector<double> acc(dim, 0.0);
    for (const auto& c : captions) {
      const auto v = caption_store.vector(c);
      for (std::size_t d = 0; d < dim; ++d) acc[d] += v[d];
    }
    const double inv = 1.0 / static_cast<double>(captions.size());
    for (double a : acc) values.push_back(static_cast<float>(a * inv));
    ids.push_back(image);
  }
  return EmbeddingStore(std::move(ids), dim, std::move(values), false,
                        caption_store.encoder());
}

// ---------------------------------------------------------------------------
// K-means (Lloyd iterations, k-means++ seeding, Euclidean distance).

struct KMeansResult {
  std::vector<std::size_t> assignment;         // cluster per store row
  std::vector<std::vector<double>> centroids;  // m x dim
  std::vector<double> inertia_history;         // after each assignment step
  std::size_t iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

namespace detail {

inline double squared_distance(std::span<const float> x, const std::vector<double>& c) {
  double acc = 0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - c[d];
    acc += diff * diff;
  }
  return acc;
}

inline std::vector<std::vector<double>> kmeanspp_init(const EmbeddingStore& store,
                                                      std::size_t m, Rng& rng) {
  const std::size_t n = store.size();
  std::vector<std::vector<double>> centroids;
  std::vector<char> chosen(n, 0);
  auto take = [&](std::size_t i) {
    chosen[i] = 1;
    const auto r = store.row(i);
    centroids.emplace_back(r.begin(), r.end());
  };
  take(rng.below(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(store.row(i), centroids[0]);
  while (centroids.size() < m) {
    double total = 0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0) {
      const double target = rng.unit() * total;
      double cum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] == 0) continue;
        cum += d2[i];
        pick = i;
        if (cum > target) break;
      }
    } else {
      // Remaining points coincide with centers: take the first unused one.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    take(pick);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(store.row(i), centroids.back()));
    }
  }
  return centroids;
}

}  // namespace detail

inline KMeansResult kmeans(const EmbeddingStore& store, std::size_t m, std::uint64_t seed,
                           std::size_t max_iters = 300) {
  const std::size_t n = store.size();
  if (m == 0 || m > n) {
    throw ArgumentError("kmeans: m=" + std::to_string(m) + " outside [1, " +
                        std::to_string(n) + "]");
  }
  if (max_iters == 0) throw ArgumentError("kmeans: max_iters must be positive");
  Rng rng(seed);
  KMeansResult res;
  res.centroids = detail::kmeanspp_init(store, m, rng);
  res.assignment.assign(n, 0);
  std::vector<double> best_d2(n);
  const std::size_t dim = store.dim();

  for (std::size_t it = 0; it < max_iters; ++it) {
    std::vector<std::size_t> next(n);
    parallel_for(n, [&](std::size_t i) {
      const auto x = store.row(i);
      std::size_t best = 0;
      double bd = detail::squared_distance(x, res.centroids[0]);
      for (std::size_t c = 1; c < m; ++c) {
        const double d = detail::squared_distance(x, res.centroids[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      next[i] = best;
      best_d2[i] = bd;
    });
    double inertia = 0;
    for (double v : best_d2) inertia += v;
    res.inertia_history.push_back(inertia);
    res.iterations = it + 1;
    if (it > 0 && next == res.assignment) {
      res.converged = true;
      break;
    }
    res.assignment = std::move(next);

    std::vector<std::vector<double>> sums(m, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = store.row(i);
      auto& s = sums[res.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += x[d];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) {
        res.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Male over-representation.

/// Per cluster: 100 * male share - global_male_pct (percentage points).
/// Empty clusters report nullopt.
inline std::vector<std::optional<double>> overrepresentation(
    const std::unordered_map<std::string, std::size_t>& assignment, const LabelMap& labels,
    double global_male_pct, std::size_t m) {
  std::vector<std::size_t> male(m, 0), total(m, 0);
  for (const auto& [id, c] : assignment) {
    if (c >= m) throw ArgumentError("cluster index out of range for '" + id + "'");
    auto it = labels.find(id);
    if (it == labels.end() || !is_defined(it->second)) {
      throw ArgumentError("image '" + id + "' has no defined gender");
    }
    ++total[c];
    if (it->second == Gender::male) ++male[c];
  }
  std::vector<std::optional<double>> out(m);
  for (std::size_t c = 0; c < m; ++c) {
    if (total[c] == 0) continue;
    out[c] = 100.0 * static_cast<double>(male[c]) / static_cast<double>(total[c]) -
             global_male_pct;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Salient terms.

/// Words of the cluster captions ranked by smoothed log-odds against the
/// background captions: logit((c+1)/(N_c+V)) - logit((b+1)/(N_b+V)), where
/// c and b are in-cluster and background counts, N_c and N_b token totals,
/// and V the joint vocabulary size. Ties break by ascending word.
inline std::vector<std::string> top_terms(std::span<const std::string> cluster_captions,
                                          std::span<const std::string> background_captions,
                                          std::size_t n) {
  std::map<std::string, std::size_t> in_cluster, in_background;
  std::size_t nc = 0, nb = 0;
  for (const auto& c : cluster_captions) {
    for (auto& t : tokenize(c)) {
      ++in_cluster[t];
      ++nc;
    }
  }
  if (in_cluster.empty()) return {};
  for (const auto& c : background_captions) {
    for (auto& t : tokenize(c)) {
      ++in_background[t];
      ++nb;
    }
  }
  std::size_t vocab = in_background.size();
  for (const auto& [w, _] : in_cluster) {
    if (!in_background.count(w)) ++vocab;
  }
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  const double vc = static_cast<double>(nc + vocab);
  const double vb = static_cast<double>(nb + vocab);
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& [w, c] : in_cluster) {
    auto it = in_background.find(w);
    const double b = it == in_background.end() ? 0.0 : static_cast<double>(it->second);
    const double score = logit((static_cast<double>(c) + 1.0) / vc) - logit((b + 1.0) / vb);
    scored.emplace_back(score, w);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

// ---------------------------------------------------------------------------
// Cluster report.

struct ClusterSummary {
  std::size_t index = 0;
  std::vector<std::string> members;
  std::optional<double> male_fraction;
  std::optional<double> delta_m;
  std::vector<std::string> top_terms;
  std::string name;
};

struct ClusterReport {
  double global_male_pct = 0;
  std::vector<ClusterSummary> clusters;
};

/// \p captions maps each clustered image to its neutralized captions.
inline ClusterReport build_cluster_report(
    const std::unordered_map<std::string, std::size_t>& assignment, const LabelMap& labels,
    const std::map<std::string, std::vector<std::string>>& captions, std::size_t m,
    std::size_t n_terms = 10, const std::map<std::size_t, std::string>& names = {}) {
  ClusterReport report;
  std::size_t male = 0;
  for (const auto& [id, _] : assignment) {
    auto it = labels.find(id);
    if (it == labels.end() || !is_defined(it->second)) {
      throw ArgumentError("image '" + id + "' has no defined gender");
    }
    if (it->second == Gender::male) ++male;
  }
  if (assignment.empty()) throw ArgumentError("cluster report of an empty assignment");
  report.global_male_pct =
      100.0 * static_cast<double>(male) / static_cast<double>(assignment.size());
  const auto delta = overrepresentation(assignment, labels, report.global_male_pct, m);

  report.clusters.resize(m);
  for (std::size_t c = 0; c < m; ++c) {
    report.clusters[c].index = c;
    report.clusters[c].delta_m = delta[c];
    if (auto n = names.find(c); n != names.end()) report.clusters[c].name = n->second;
  }
  std::vector<std::size_t> male_count(m, 0);
  for (const auto& [id, c] : assignment) {
    report.clusters[c].members.push_back(id);
    if (labels.at(id) == Gender::male) ++male_count[c];
  }
  for (auto& cl : report.clusters) {
    std::sort(cl.members.begin(), cl.members.end());
    if (!cl.members.empty()) {
      cl.male_fraction = static_cast<double>(male_count[cl.index]) /
                         static_cast<double>(cl.members.size());
    }
  }
  for (auto& cl : report.clusters) {
    std::vector<std::string> inside, outside;
    for (const auto& [id, caps] : captions) {
      auto a = assignment.find(id);
      if (a == assignment.end()) continue;
      auto& dst = a->second == cl.index ? inside : outside;
      dst.insert(dst.end(), caps.begin(), caps.end());
    }
    cl.top_terms = top_terms(inside, outside, n_terms);
  }
  return report;
}

inline void write_cluster_csv(std::ostream& out, const ClusterReport& report) {
  bool named = false;
  for (const auto& c : report.clusters) named = named || !c.name.empty();
  out << "cluster_index,size,male_fraction,delta_m,top_terms" << (named ? ",name" : "") << '\n';
  for (const auto& c : report.clusters) {
    std::string terms;
    for (const auto& t : c.top_terms) terms += (terms.empty() ? "" : ";") + t;
    out << fmt::format("{},{},{},{},{}", c.index, c.members.size(),
                       c.male_fraction ? fmt::format("{}", *c.male_fraction) : "",
                       c.delta_m ? fmt::format("{}", *c.delta_m) : "", terms);
    if (named) out << ',' << c.name;
    out << '\n';
  }
}

inline nlohmann::json cluster_report_json(const ClusterReport& report) {
  nlohmann::json j;
  j["global_male_pct"] = report.global_male_pct;
  auto rows = nlohmann::json::array();
  for (const auto& c : report.clusters) {
    nlohmann::json row{{"cluster_index", c.index},
                       {"size", c.members.size()},
                       {"top_terms", c.top_terms}};
    row["male_fraction"] = c.male_fraction ? nlohmann::json(*c.male_fraction) : nlohmann::json();
    row["delta_m"] = c.delta_m ? nlohmann::json(*c.delta_m) : nlohmann::json();
    if (!c.name.empty()) row["name"] = c.name;
    rows.push_back(std::move(row));
  }
  j["clusters"] = std::move(rows);
  return j;
}

// ---------------------------------------------------------------------------
// AUC.

/// Mann-Whitney AUC: probability that a random positive outscores a random
/// negative, ties counting one half. Labels are 1 (positive) or 0.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      } else if (labels[order[t]] == 0) {
        ++n_neg;
      } else {
        throw ArgumentError("auc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw ArgumentError("auc needs both classes");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

// ---------------------------------------------------------------------------
// Text-only gender probe.

struct ProbeHyper {
  std::size_t epochs = 1000;
  double learning_rate = 0.5;
  double l2 = 1e-5;
};

/// Logistic regression over binary bag-of-words features; predicts P(male).
class ProbeModel {
 public:
  std::map<std::string, std::size_t> vocabulary;
  std::vector<double> weights;
  double bias = 0;

  std::vector<std::size_t> features(std::string_view caption) const {
    std::vector<std::size_t> f;
    for (const auto& t : tokenize(caption)) {
      auto it = vocabulary.find(t);
      if (it != vocabulary.end()) f.push_back(it->second);
    }
    std::sort(f.begin(), f.end());
    f.erase(std::unique(f.begin(), f.end()), f.end());
    return f;
  }

  double decision(std::string_view caption) const {
    double z = bias;
    for (auto i : features(caption)) z += weights[i];
    return z;
  }

  double probability(std::string_view caption) const {
    return 1.0 / (1.0 + std::exp(-decision(caption)));
  }

  /// Two columns: token and weight; the intercept is written as "__bias__".
  void save(std::ostream& out) const {
    out << fmt::format("__bias__\t{}\n", bias);
    for (const auto& [token, i] : vocabulary) out << fmt::format("{}\t{}\n", token, weights[i]);
  }
};

namespace detail {
inline double log1p_exp(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}
}  // namespace detail

/// Full-batch gradient descent on mean logistic loss + (l2/2)|w|^2 (the
/// intercept is not penalized). Every caption is rejected if it still
/// contains a gendered lexicon word. \p loss_history, when given, receives
/// the objective before each step and after the last one.
inline ProbeModel train_probe(std::span<const std::string> captions,
                              std::span<const Gender> labels, const ProbeHyper& hyper,
                              const GenderLexicon& lexicon,
                              std::vector<double>* loss_history = nullptr) {
  if (captions.size() != labels.size()) throw ArgumentError("train_probe: size mismatch");
  std::size_t n_male = 0, n_female = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    if (!is_gender_neutral(captions[i], lexicon)) {
      throw ArgumentError("probe input still contains a gendered word: \"" + captions[i] + "\"");
    }
    if (labels[i] == Gender::male) ++n_male;
    else if (labels[i] == Gender::female) ++n_female;
    else throw ArgumentError("probe labels must be male or female");
  }
  if (n_male == 0 || n_female == 0) throw ArgumentError("probe training data has a single class");

  ProbeModel model;
  for (const auto& c : captions) {
    for (auto& t : tokenize(c)) model.vocabulary.emplace(std::move(t), 0);
  }
  std::size_t next = 0;
  for (auto& [_, i] : model.vocabulary) i = next++;
  model.weights.assign(model.vocabulary.size(), 0.0);

  std::vector<std::vector<std::size_t>> x(captions.size());
  std::vector<double> y(captions.size());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    x[i] = model.features(captions[i]);
    y[i] = labels[i] == Gender::male ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(captions.size());
  auto objective = [&](std::vector<double>* residual) {
    double loss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = model.bias;
      for (auto f : x[i]) z += model.weights[f];
      loss += y[i] > 0.5 ? detail::log1p_exp(-z) : detail::log1p_exp(z);
      if (residual) (*residual)[i] = 1.0 / (1.0 + std::exp(-z)) - y[i];
    }
    double sq = 0;
    for (double w : model.weights) sq += w * w;
    return loss / n + 0.5 * hyper.l2 * sq;
  };

  std::vector<double> residual(x.size());
  std::vector<double> grad(model.weights.size());
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double loss = objective(&residual);
    if (loss_history) loss_history->push_back(loss);
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (auto f : x[i]) grad[f] += residual[i];
      grad_b += residual[i];
    }
    for (std::size_t f = 0; f < grad.size(); ++f) {
      model.weights[f] -= hyper.learning_rate * (grad[f] / n + hyper.l2 * model.weights[f]);
    }
    model.bias -= hyper.learning_rate * grad_b / n;
  }
  if (loss_history) loss_history->push_back(objective(nullptr));
  return model;
}

}  // namespace genbias
