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
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "genbias/error.hpp"
#include "genbias/parallel.hpp"

namespace genbias {

/// Dense id-indexed float32 matrix (row-major), as produced by an external
/// encoder. Immutable once built.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  EmbeddingStore(std::vector<std::string> ids, std::size_t dim,
                 std::vector<float> values, bool normalized = false,
                 std::string encoder = {})
      : ids_(std::move(ids)),
        dim_(dim),
        values_(std::move(values)),
        normalized_(normalized),
        encoder_(std::move(encoder)) {
    if (dim_ == 0) throw ArgumentError("embedding dimension must be positive");
    if (values_.size() != ids_.size() * dim_) {
      throw ArgumentError("embedding matrix has " + std::to_string(values_.size()) +
                          " values, expected " + std::to_string(ids_.size() * dim_));
    }
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], i).second) {
        throw ArgumentError("duplicate embedding id '" + ids_[i] + "' at row " +
                            std::to_string(i));
      }
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      double sq = 0;
      for (float v : row(i)) {
        if (!std::isfinite(v)) {
          throw ArgumentError("non-finite value in embedding row " + std::to_string(i));
        }
        sq += static_cast<double>(v) * v;
      }
      if (normalized_ && std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
        throw ArgumentError("embedding row " + std::to_string(i) +
                            " is flagged normalized but has norm " +
                            std::to_string(std::sqrt(sq)));
      }
    }
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  bool normalized() const { return normalized_; }
  const std::string& encoder() const { return encoder_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> values() const { return values_; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values_).subspan(i * dim_, dim_);
  }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t row_of(std::string_view id) const {
    if (auto r = find(id)) return *r;
    throw ArgumentError("unknown embedding id '" + std::string(id) + "'");
  }

  std::span<const float> vector(std::string_view id) const { return row(row_of(id)); }

  bool contains(std::string_view id) const { return find(id).has_value(); }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  bool normalized_ = false;
  std::string encoder_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Manifest + blob format.
//   manifest: {"dim": int, "count": int, "dtype": "f32le", "normalized": bool,
//              "ids": [string], "encoder": string (optional)}
//   blob:     count*dim little-endian float32 values, row-major, no header.

namespace detail {
inline void to_little_endian(std::span<float> values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) |
             ((bits >> 8) & 0xFF00u) | (bits >> 24);
      v = std::bit_cast<float>(bits);
    }
  }
}
}  // namespace detail

inline EmbeddingStore load_embeddings(const std::filesystem::path& manifest,
                                      const std::filesystem::path& blob) {
  std::ifstream min(manifest);
  if (!min) throw IngestError("cannot open embedding manifest " + manifest.string());
  nlohmann::json m;
  try {
    min >> m;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(manifest.string() + ": " + e.what());
  }
  const auto where = manifest.string();
  std::size_t dim = 0, count = 0;
  bool normalized = false;
  std::vector<std::string> ids;
  std::string encoder;
  try {
    if (m.at("dtype").get<std::string>() != "f32le") {
      throw IngestError(where + ": unsupported dtype " + m.at("dtype").dump());
    }
    dim = m.at("dim").get<std::size_t>();
    count = m.at("count").get<std::size_t>();
    normalized = m.at("normalized").get<bool>();
    ids = m.at("ids").get<std::vector<std::string>>();
    if (m.contains("encoder")) encoder = m["encoder"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(where + ": " + e.what());
  }
  if (ids.size() != count) {
    throw IngestError(where + ": " + std::to_string(ids.size()) +
                      " ids for declared count " + std::to_string(count));
  }
  std::ifstream bin(blob, std::ios::binary | std::ios::ate);
  if (!bin) throw IngestError("cannot open embedding blob " + blob.string());
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  const std::size_t expected = count * dim * sizeof(float);
  if (bytes != expected) {
    const std::size_t row_bytes = dim * sizeof(float);
    throw IngestError(blob.string() + ": blob holds " + std::to_string(bytes) +
                      " bytes, expected " + std::to_string(expected) +
                      " (first incomplete row " +
                      std::to_string(row_bytes ? std::min(bytes / row_bytes, count) : 0) +
                      ")");
  }
  std::vector<float> values(count * dim);
  bin.seekg(0);
  bin.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected));
  if (!bin) throw IngestError(blob.string() + ": short read");
  detail::to_little_endian(values);
  try {
    return EmbeddingStore(std::move(ids), dim, std::move(values), normalized,
                          std::move(encoder));
  } catch (const ArgumentError& e) {
    throw IngestError(where + ": " + e.what());
  }
}

inline void save_embeddings(const EmbeddingStore& store,
                            const std::filesystem::path& manifest,
                            const std::filesystem::path& blob) {
  nlohmann::json m;
  m["dim"] = store.dim();
  m["count"] = store.size();
  m["dtype"] = "f32le";
  m["normalized"] = store.normalized();
  m["ids"] = store.ids();
  if (!store.encoder().empty()) m["encoder"] = store.encoder();
  std::ofstream mout(manifest);
  if (!mout) throw IngestError("cannot write " + manifest.string());
  mout << m.dump(2) << '\n';
  std::vector<float> values(store.values().begin(), store.values().end());
  detail::to_little_endian(values);
  std::ofstream bout(blob, std::ios::binary);
  if (!bout) throw IngestError("cannot write " + blob.string());
  bout.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(float)));
}

/// Scales every row to unit L2 norm.
inline EmbeddingStore l2_normalize(const EmbeddingStore& store) {
  std::vector<float> values(store.values().begin(), store.values().end());
  for (std::size_t i = 0; i < store.size(); ++i) {
    double sq = 0;
    for (float v : store.row(i)) sq += static_cast<double>(v) * v;
    if (sq == 0) {
      throw ArgumentError("cannot normalize zero vector '" + store.ids()[i] + "'");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t d = 0; d < store.dim(); ++d) {
      values[i * store.dim() + d] = static_cast<float>(store.row(i)[d] * inv);
    }
  }
  return EmbeddingStore(store.ids(), store.dim(), std::move(values), true,
                        store.encoder());
}

// ---------------------------------------------------------------------------
// Exact search. Distances accumulate in double; ties order by ascending id.

enum class DistanceMetric { euclidean, cosine_distance };

inline double squared_euclidean(std::span<const float> a, std::span<const float> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) throw ArgumentError("cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

struct Neighbor {
  std::string id;
  double distance = 0;

  bool operator==(const Neighbor&) const = default;
};

struct NeighborList {
  std::string query_id;
  std::vector<Neighbor> neighbors;
};

namespace detail {

struct Candidate {
  double distance;
  std::size_t row;
};

// Keeps the k best (distance, id) candidates among \p rows.
template <class DistanceFn>
std::vector<Candidate> top_k_scan(const EmbeddingStore& store,
                                  std::span<const std::size_t> rows,
                                  std::size_t k, DistanceFn&& distance) {
  auto better = [&](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return store.ids()[a.row] < store.ids()[b.row];
  };
  const unsigned threads = rows.size() < 4096 ? 1u : default_threads();
  std::vector<std::vector<Candidate>> partial(std::max(1u, threads));
  parallel_chunks(
      rows.size(),
      [&](std::size_t begin, std::size_t end, std::size_t chunk) {
        auto& heap = partial[chunk];
        heap.reserve(k + 1);
        for (std::size_t i = begin; i < end; ++i) {
          Candidate c{distance(rows[i]), rows[i]};
          if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end(), better);
          } else if (better(c, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), better);
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end(), better);
          }
        }
      },
      threads);
  std::vector<Candidate> merged;
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  const std::size_t keep = std::min(k, merged.size());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep),
                    merged.end(), better);
  merged.resize(keep);
  return merged;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

}  // namespace detail

/// Exact k nearest neighbours of a stored row, excluding the row itself.
/// \p candidates restricts the searched population to the given rows
/// (all rows when empty).
inline NeighborList knn(const EmbeddingStore& store, std::string_view query_id,
                        std::size_t k, DistanceMetric metric,
                        std::span<const std::size_t> candidates = {}) {
  const std::size_t q = store.row_of(query_id);
  std::vector<std::size_t> rows;
  if (candidates.empty()) {
    rows = detail::all_rows(store.size());
  } else {
    rows.assign(candidates.begin(), candidates.end());
  }
  std::erase(rows, q);
  if (k == 0 || k > rows.size()) {
    throw ArgumentError("knn: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(rows.size()) + "]");
  }
  const auto query = store.row(q);
  std::vector<detail::Candidate> best;
  if (metric == DistanceMetric::euclidean) {
    best = detail::top_k_scan(store, rows, k, [&](std::size_t r) {
      return std::sqrt(squared_euclidean(query, store.row(r)));
    });
  } else {
    best = detail::top_k_scan(store, rows, k, [&](std::size_t r) {
      return 1.0 - cosine_similarity(query, store.row(r));
    });
  }
  NeighborList out{std::string(query_id), {}};
  out.neighbors.reserve(best.size());
  for (const auto& c : best) {
    out.neighbors.push_back({store.ids()[c.row], std::max(0.0, c.distance)});
  }
  return out;
}

/// Top-k members of \p pool (row indices) by ascending Euclidean distance
/// to an external query vector.
inline std::vector<Neighbor> rank_by_similarity(const EmbeddingStore& store,
                                                std::span<const float> query,
                                                std::span<const std::size_t> pool,
                                                std::size_t k) {
  if (query.size() != store.dim()) {
    throw ArgumentError("query has dimension " + std::to_string(query.size()) +
                        ", store has " + std::to_string(store.dim()));
  }
  if (k == 0 || k > pool.size()) {
    throw ArgumentError("rank_by_similarity: k=" + std::to_string(k) +
                        " outside [1, " + std::to_string(pool.size()) + "]");
  }
  const auto best = detail::top_k_scan(store, pool, k, [&](std::size_t r) {
    return std::sqrt(squared_euclidean(query, store.row(r)));
  });
  std::vector<Neighbor> out;
  out.reserve(best.size());
  for (const auto& c : best) out.push_back({store.ids()[c.row], c.distance});
  return out;
}

/// Id-based pool overload; unknown ids are an argument error.
inline std::vector<Neighbor> rank_by_similarity(const EmbeddingStore& store,
                                                std::span<const float> query,
                                                std::span<const std::string> pool,
                                                std::size_t k) {
  std::vector<std::size_t> rows;
  rows.reserve(pool.size());
  for (const auto& id : pool) rows.push_back(store.row_of(id));
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rank_by_similarity(store, query, rows, k);
}

}  // namespace genbias
