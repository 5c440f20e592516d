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
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "genbias/caption.hpp"
#include "genbias/corpus.hpp"
#include "genbias/embedding_store.hpp"
#include "genbias/error.hpp"
#include "genbias/gender.hpp"
#include "genbias/random.hpp"
#include "genbias/text.hpp"

namespace genbias {

struct Scored {
  std::string id;
  double score = 0;

  bool operator==(const Scored&) const = default;
};

// How a model's scores relate to rank position.
enum class ScoreOrder { descending, ascending, none };

struct Query {
  std::string query_id;
  std::string source_image_id;
  Gender gender = Gender::undefined;
};

/// Ranked retrievals for a query set; the substrate of every metric.
struct RetrievalRun {
  std::string model_tag;
  ScoreOrder order = ScoreOrder::none;
  std::vector<Query> queries;
  std::vector<std::vector<Scored>> rankings;

  std::size_t depth() const { return rankings.empty() ? 0 : rankings.front().size(); }

  void validate() const {
    if (queries.size() != rankings.size()) {
      throw ArgumentError("run '" + model_tag + "': " + std::to_string(queries.size()) +
                          " queries but " + std::to_string(rankings.size()) + " rankings");
    }
    for (std::size_t q = 0; q < rankings.size(); ++q) {
      if (rankings[q].size() != depth()) {
        throw ArgumentError("run '" + model_tag + "': ranking " + std::to_string(q) +
                            " has length " + std::to_string(rankings[q].size()) +
                            ", expected " + std::to_string(depth()));
      }
      for (std::size_t i = 1; i < rankings[q].size(); ++i) {
        const double prev = rankings[q][i - 1].score, cur = rankings[q][i].score;
        if ((order == ScoreOrder::descending && cur > prev) ||
            (order == ScoreOrder::ascending && cur < prev)) {
          throw ArgumentError("run '" + model_tag + "': ranking " + std::to_string(q) +
                              " is not monotone at position " + std::to_string(i));
        }
      }
    }
  }
};

/// JSON-lines export: {query_id, source_image_id, gender, ranking: [[id, score]...]}.
inline void write_run_jsonl(std::ostream& out, const RetrievalRun& run) {
  for (std::size_t q = 0; q < run.queries.size(); ++q) {
    nlohmann::json line;
    line["query_id"] = run.queries[q].query_id;
    line["source_image_id"] = run.queries[q].source_image_id;
    line["gender"] = std::string(to_string(run.queries[q].gender));
    auto ranking = nlohmann::json::array();
    for (const auto& s : run.rankings[q]) ranking.push_back({s.id, s.score});
    line["ranking"] = std::move(ranking);
    out << line.dump() << '\n';
  }
}

inline RetrievalRun read_run_jsonl(std::istream& in, std::string model_tag,
                                   const std::string& source = "<run>") {
  RetrievalRun run;
  run.model_tag = std::move(model_tag);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Query q;
      q.query_id = j.at("query_id").get<std::string>();
      q.source_image_id = j.at("source_image_id").get<std::string>();
      q.gender = parse_gender(j.at("gender").get<std::string>());
      std::vector<Scored> ranking;
      for (const auto& item : j.at("ranking")) {
        ranking.push_back({item.at(0).get<std::string>(), item.at(1).get<double>()});
      }
      run.queries.push_back(std::move(q));
      run.rankings.push_back(std::move(ranking));
    } catch (const std::exception& e) {
      throw IngestError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    run.validate();
  } catch (const ArgumentError& e) {
    throw IngestError(source + ": " + e.what());
  }
  return run;
}

// ---------------------------------------------------------------------------
// Query sets.

struct QueryCaption {
  Query query;
  std::string text;  // neutralized caption
};

/// One query per neutralized caption of every gender-labeled image.
/// Query ids follow the caption embedding convention "<image>#<index>".
inline std::vector<QueryCaption> build_query_set(const Corpus& corpus) {
  std::vector<QueryCaption> out;
  for (const auto& r : corpus.records()) {
    if (!is_defined(r.gender_label)) continue;
    for (std::size_t j = 0; j < r.captions.size(); ++j) {
      out.push_back({{caption_id(r.id, j), r.id, r.gender_label},
                     neutralize_caption(r.captions[j], corpus.lexicon())});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// TF-IDF caption-to-caption retrieval.

class TfidfIndex;
inline TfidfIndex build_tfidf_index(const Corpus& corpus);

/// Sparse TF-IDF index over individual captions. tf is the raw term count,
/// idf = ln(N / df) without smoothing, and document vectors are L2
/// normalized (documents whose terms all have idf 0 stay all-zero).
class TfidfIndex {
 public:
  using Posting = std::pair<std::uint32_t, double>;  // document, weight

  const std::unordered_map<std::string, std::uint32_t>& vocabulary() const {
    return vocabulary_;
  }
  double idf(std::string_view term) const {
    auto it = vocabulary_.find(std::string(term));
    return it == vocabulary_.end() ? 0.0 : idf_[it->second];
  }
  std::size_t document_count() const { return doc_image_.size(); }
  const std::vector<std::string>& image_ids() const { return image_ids_; }

  /// Normalized TF-IDF vector of arbitrary text under this index's idf.
  std::vector<Posting> vectorize(std::string_view text) const {
    std::unordered_map<std::uint32_t, double> tf;
    for (const auto& tok : tokenize(text)) {
      auto it = vocabulary_.find(tok);
      if (it != vocabulary_.end()) tf[it->second] += 1.0;
    }
    return weigh(tf);
  }

  /// Weight of \p term in document \p doc (0 if absent).
  double weight(std::size_t doc, std::string_view term) const {
    auto it = vocabulary_.find(std::string(term));
    if (it == vocabulary_.end()) return 0;
    for (const auto& [d, w] : postings_[it->second]) {
      if (d == doc) return w;
    }
    return 0;
  }

  std::vector<Scored> retrieve(std::string_view query_caption, std::size_t k,
                               std::optional<std::string_view> exclude_image) const {
    std::optional<std::size_t> excluded;
    if (exclude_image) {
      auto it = std::lower_bound(image_ids_.begin(), image_ids_.end(), *exclude_image);
      if (it != image_ids_.end() && *it == *exclude_image) {
        excluded = static_cast<std::size_t>(it - image_ids_.begin());
      }
    }
    const std::size_t candidates = image_ids_.size() - (excluded ? 1 : 0);
    if (k == 0 || k > candidates) {
      throw ArgumentError("tfidf_retrieve: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(candidates) + "]");
    }
    std::vector<double> doc_score(doc_image_.size(), 0.0);
    for (const auto& [term, qw] : vectorize(query_caption)) {
      for (const auto& [doc, dw] : postings_[term]) doc_score[doc] += qw * dw;
    }
    std::vector<double> image_score(image_ids_.size(), 0.0);
    for (std::size_t d = 0; d < doc_score.size(); ++d) {
      auto& s = image_score[doc_image_[d]];
      s = std::max(s, doc_score[d]);
    }
    std::vector<std::uint32_t> order;
    order.reserve(candidates);
    for (std::uint32_t i = 0; i < image_ids_.size(); ++i) {
      if (!excluded || i != *excluded) order.push_back(i);
    }
    // image_ids_ is sorted, so index order is id order.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end(), [&](std::uint32_t a, std::uint32_t b) {
                        if (image_score[a] != image_score[b]) {
                          return image_score[a] > image_score[b];
                        }
                        return a < b;
                      });
    std::vector<Scored> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      out.push_back({image_ids_[order[i]], image_score[order[i]]});
    }
    return out;
  }

 private:
  friend TfidfIndex build_tfidf_index(const Corpus& corpus);

  std::vector<Posting> weigh(const std::unordered_map<std::uint32_t, double>& tf) const {
    std::vector<Posting> v;
    double sq = 0;
    for (const auto& [term, count] : tf) {
      const double w = count * idf_[term];
      if (w == 0) continue;
      v.emplace_back(term, w);
      sq += w * w;
    }
    if (sq > 0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (auto& p : v) p.second *= inv;
    }
    std::sort(v.begin(), v.end());
    return v;
  }

  std::unordered_map<std::string, std::uint32_t> vocabulary_;
  std::vector<double> idf_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_image_;
  std::vector<std::string> image_ids_;
};

/// Indexes every caption of every record. Callers neutralize first.
inline TfidfIndex build_tfidf_index(const Corpus& corpus) {
  if (corpus.empty()) throw ArgumentError("cannot index an empty corpus");
  TfidfIndex index;
  for (const auto& r : corpus.records()) index.image_ids_.push_back(r.id);
  std::sort(index.image_ids_.begin(), index.image_ids_.end());
  std::unordered_map<std::string, std::uint32_t> image_pos;
  for (std::uint32_t i = 0; i < index.image_ids_.size(); ++i) {
    image_pos.emplace(index.image_ids_[i], i);
  }

  std::vector<std::unordered_map<std::uint32_t, double>> doc_tf;
  std::vector<std::size_t> df;
  for (const auto& r : corpus.records()) {
    for (const auto& caption : r.captions) {
      std::unordered_map<std::uint32_t, double> tf;
      for (const auto& tok : tokenize(caption)) {
        auto [it, inserted] = index.vocabulary_.emplace(
            tok, static_cast<std::uint32_t>(index.vocabulary_.size()));
        if (inserted) df.push_back(0);
        tf[it->second] += 1.0;
      }
      for (const auto& [term, _] : tf) ++df[term];
      doc_tf.push_back(std::move(tf));
      index.doc_image_.push_back(image_pos.at(r.id));
    }
  }
  const double n = static_cast<double>(doc_tf.size());
  index.idf_.resize(df.size());
  for (std::size_t t = 0; t < df.size(); ++t) {
    index.idf_[t] = std::log(n / static_cast<double>(df[t]));
  }
  index.postings_.resize(df.size());
  for (std::uint32_t d = 0; d < doc_tf.size(); ++d) {
    for (const auto& [term, w] : index.weigh(doc_tf[d])) {
      index.postings_[term].emplace_back(d, w);
    }
  }
  return index;
}

/// Captions ranked by TF-IDF cosine; an image scores the max over its
/// captions. \p exclude_image removes that image from the candidates.
inline std::vector<Scored> tfidf_retrieve(const TfidfIndex& index,
                                          std::string_view query_caption, std::size_t k,
                                          std::optional<std::string_view> exclude_image = {}) {
  return index.retrieve(query_caption, k, exclude_image);
}

// ---------------------------------------------------------------------------
// Random model.

/// Uniform sample of k pool members without replacement, in random order.
/// The pool is sorted first so the result depends only on its contents.
inline std::vector<std::string> random_retrieve(std::span<const std::string> pool,
                                                std::size_t k, Rng& rng) {
  if (k == 0 || k > pool.size()) {
    throw ArgumentError("random_retrieve: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(pool.size()) + "]");
  }
  std::vector<std::string> sorted;
  if (!std::is_sorted(pool.begin(), pool.end())) {
    sorted.assign(pool.begin(), pool.end());
    std::sort(sorted.begin(), sorted.end());
    pool = sorted;
  }
  std::vector<std::string> out;
  out.reserve(k);
  for (auto i : sample_without_replacement(pool.size(), k, rng)) out.push_back(pool[i]);
  return out;
}

inline std::vector<std::string> random_retrieve(std::span<const std::string> pool,
                                                std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  return random_retrieve(pool, k, rng);
}

// ---------------------------------------------------------------------------
// Embedding model (caption-to-image).

inline void check_retrieval_stores(const EmbeddingStore& caption_store,
                                   const EmbeddingStore& image_store) {
  if (caption_store.dim() != image_store.dim()) {
    throw ArgumentError("caption embeddings have dimension " +
                        std::to_string(caption_store.dim()) + ", image embeddings " +
                        std::to_string(image_store.dim()));
  }
  if (!caption_store.normalized() || !image_store.normalized()) {
    throw ArgumentError("embedding retrieval requires normalized stores");
  }
}

/// Ranks pool images by Euclidean distance to the caption vector (score =
/// distance, ascending).
inline std::vector<Scored> embedding_retrieve(const EmbeddingStore& caption_store,
                                              const EmbeddingStore& image_store,
                                              std::string_view query_id,
                                              std::span<const std::size_t> pool_rows,
                                              std::size_t k) {
  check_retrieval_stores(caption_store, image_store);
  const auto hits =
      rank_by_similarity(image_store, caption_store.vector(query_id), pool_rows, k);
  std::vector<Scored> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.id, h.distance});
  return out;
}

inline std::vector<Scored> embedding_retrieve(const EmbeddingStore& caption_store,
                                              const EmbeddingStore& image_store,
                                              std::string_view query_id,
                                              std::span<const std::string> pool,
                                              std::size_t k) {
  std::vector<std::size_t> rows;
  rows.reserve(pool.size());
  for (const auto& id : pool) rows.push_back(image_store.row_of(id));
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return embedding_retrieve(caption_store, image_store, query_id, rows, k);
}

// ---------------------------------------------------------------------------
// Verification measurements.

/// Fraction of queries whose source image appears in the top k.
inline double recall_at_k(const RetrievalRun& run, std::size_t k) {
  if (run.queries.empty()) throw ArgumentError("recall_at_k: empty run");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < run.queries.size(); ++q) {
    const auto& ranking = run.rankings.at(q);
    if (k == 0 || ranking.size() < k) {
      throw ArgumentError("recall_at_k: ranking " + std::to_string(q) + " has length " +
                          std::to_string(ranking.size()) + " < k=" + std::to_string(k));
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (ranking[i].id == run.queries[q].source_image_id) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(run.queries.size());
}

/// Gender of the prompt vector ("male" / "female" rows of \p prompt_store)
/// most cosine-similar to the image; exact ties resolve to male.
inline Gender zero_shot_gender(const EmbeddingStore& image_store,
                               const EmbeddingStore& prompt_store,
                               std::string_view image_id) {
  const auto male = prompt_store.find("male");
  const auto female = prompt_store.find("female");
  if (!male || !female) {
    throw ConfigError("prompt embeddings must contain rows 'male' and 'female'");
  }
  if (prompt_store.dim() != image_store.dim()) {
    throw ArgumentError("prompt and image embeddings differ in dimension");
  }
  const auto v = image_store.vector(image_id);
  const double sm = cosine_similarity(v, prompt_store.row(*male));
  const double sf = cosine_similarity(v, prompt_store.row(*female));
  return sf > sm ? Gender::female : Gender::male;
}

}  // namespace genbias
