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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genbias/corpus.hpp"
#include "genbias/embedding_store.hpp"
#include "genbias/error.hpp"
#include "genbias/metrics.hpp"
#include "genbias/parallel.hpp"
#include "genbias/random.hpp"
#include "genbias/retrieval.hpp"

namespace genbias {

enum class ModelKind { random, tfidf, embedding };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::random: return "random";
    case ModelKind::tfidf: return "tfidf";
    case ModelKind::embedding: return "embedding";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "random") return ModelKind::random;
  if (s == "tfidf") return ModelKind::tfidf;
  if (s == "embedding") return ModelKind::embedding;
  throw ConfigError("unknown model kind '" + std::string(s) +
                    "' (expected random, tfidf or embedding)");
}

/// A retrieval model under evaluation. Embedding models carry caption
/// vectors keyed "<image>#<caption index>" and image vectors keyed by image.
struct ModelSpec {
  std::string tag;
  ModelKind kind = ModelKind::random;
  std::shared_ptr<const EmbeddingStore> caption_store;
  std::shared_ptr<const EmbeddingStore> image_store;
};

struct EvalSettings {
  std::vector<std::size_t> bias_ks{5, 10};
  std::vector<std::size_t> maxskew_ks{25, 100};
  std::vector<std::uint64_t> seeds{0};
};

/// Caption-to-image retrieval of every query against \p pool. The random
/// model draws from a generator seeded with \p seed; TF-IDF excludes the
/// query's own image.
inline RetrievalRun run_retrieval(const ModelSpec& model, const Corpus& pool,
                                  std::span<const QueryCaption> queries, std::size_t depth,
                                  std::uint64_t seed) {
  RetrievalRun run;
  run.model_tag = model.tag;
  run.queries.reserve(queries.size());
  for (const auto& q : queries) run.queries.push_back(q.query);
  run.rankings.resize(queries.size());

  switch (model.kind) {
    case ModelKind::random: {
      run.order = ScoreOrder::none;
      std::vector<std::string> ids;
      for (const auto& r : pool.records()) ids.push_back(r.id);
      std::sort(ids.begin(), ids.end());
      Rng rng(seed);
      for (std::size_t i = 0; i < queries.size(); ++i) {
        for (auto& id : random_retrieve(ids, depth, rng)) run.rankings[i].push_back({id, 0.0});
      }
      break;
    }
    case ModelKind::tfidf: {
      run.order = ScoreOrder::descending;
      const auto index = build_tfidf_index(neutralize_corpus(pool));
      parallel_for(queries.size(), [&](std::size_t i) {
        run.rankings[i] =
            tfidf_retrieve(index, queries[i].text, depth, queries[i].query.source_image_id);
      });
      break;
    }
    case ModelKind::embedding: {
      run.order = ScoreOrder::ascending;
      if (!model.caption_store || !model.image_store) {
        throw ConfigError("model '" + model.tag + "' has no embeddings");
      }
      std::vector<std::size_t> rows;
      rows.reserve(pool.size());
      for (const auto& r : pool.records()) {
        const auto row = model.image_store->find(r.id);
        if (!row) throw ArgumentError("model '" + model.tag + "': no image vector for '" + r.id + "'");
        rows.push_back(*row);
      }
      std::sort(rows.begin(), rows.end());
      for (const auto& q : queries) {
        if (!model.caption_store->contains(q.query.query_id)) {
          throw ArgumentError("model '" + model.tag + "': no caption vector for '" +
                              q.query.query_id + "'");
        }
      }
      parallel_for(queries.size(), [&](std::size_t i) {
        run.rankings[i] = embedding_retrieve(*model.caption_store, *model.image_store,
                                             queries[i].query.query_id, rows, depth);
      });
      break;
    }
  }
  return run;
}

/// Bias@K over a pool that includes undefined images and MaxSkew@K over its
/// gender-labeled members, with desired proportions taken from that labeled
/// pool. Balanced datasets are re-drawn per seed; the random model is re-run
/// per seed; everything else is evaluated once with the first seed.
inline BiasReport evaluate_bias(const ModelSpec& model, const Corpus& dataset,
                                std::string dataset_tag, bool balanced,
                                const EvalSettings& settings) {
  if (settings.seeds.empty()) throw ConfigError("no seeds configured");
  for (auto k : settings.bias_ks) {
    if (k == 0) throw ConfigError("Bias K must be positive");
  }
  for (auto k : settings.maxskew_ks) {
    if (k == 0) throw ConfigError("MaxSkew K must be positive");
  }
  const bool repeat = balanced || model.kind == ModelKind::random;
  const std::size_t n_runs = repeat ? settings.seeds.size() : 1;

  std::map<MetricKey, std::vector<double>> samples;
  std::map<MetricKey, std::size_t> query_counts;
  for (std::size_t s = 0; s < n_runs; ++s) {
    const std::uint64_t seed = settings.seeds[s];
    const Corpus pool = balanced ? balance_by_gender(dataset, seed) : dataset;
    const auto labels = pool.labels();
    const auto queries = build_query_set(pool);
    if (queries.empty()) throw MetricError("dataset '" + dataset_tag + "' has no gendered query");

    if (!settings.bias_ks.empty()) {
      const auto depth = *std::max_element(settings.bias_ks.begin(), settings.bias_ks.end());
      const auto run = run_retrieval(model, pool, queries, depth, derive_seed(seed, 1));
      for (auto k : settings.bias_ks) {
        const MetricKey key{std::string(kBiasMetric), k};
        samples[key].push_back(bias_at_k(run, labels, k));
        query_counts.emplace(key, run.queries.size());
      }
    }
    if (!settings.maxskew_ks.empty()) {
      const Corpus labeled = pool.subset([](const ImageRecord& r) { return is_defined(r.gender_label); });
      std::vector<std::string> ids;
      for (const auto& r : labeled.records()) ids.push_back(r.id);
      const auto desired = desired_from_dataset(labels, ids);
      const auto depth =
          *std::max_element(settings.maxskew_ks.begin(), settings.maxskew_ks.end());
      const auto run = run_retrieval(model, labeled, queries, depth, derive_seed(seed, 2));
      for (auto k : settings.maxskew_ks) {
        const MetricKey key{std::string(kMaxSkewMetric), k};
        const auto summary = mean_max_skew_at_k(run, labels, desired, k);
        samples[key].push_back(summary.mean);
        query_counts.emplace(key, summary.queries_used);
      }
    }
  }

  BiasReport report;
  report.model_tag = model.tag;
  report.dataset_tag = std::move(dataset_tag);
  for (const auto& [key, values] : samples) {
    const auto agg = aggregate_over_seeds(values);
    report.values[key] = {agg.mean, agg.std, agg.n, query_counts.at(key)};
  }
  return report;
}

}  // namespace genbias
