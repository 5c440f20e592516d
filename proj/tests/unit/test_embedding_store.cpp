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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "genbias/embedding_store.hpp"
#include "genbias/error.hpp"
#include "genbias/parallel.hpp"

using namespace genbias;
using genbias::fx::TempDir;
using genbias::fx::store_of;
using genbias::fx::write_file;

namespace {

void write_blob(const std::filesystem::path& p, const std::vector<float>& v) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

}  // namespace

TEST(LoadEmbeddings, TwoByTwo) {
  TempDir dir("emb");
  write_file(dir / "m.json",
             R"({"dim": 2, "count": 2, "dtype": "f32le", "normalized": false, "ids": ["a", "b"]})");
  write_blob(dir / "b.bin", {1, 2, 3, 4});
  const auto s = load_embeddings(dir / "m.json", dir / "b.bin");
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.dim(), 2u);
  EXPECT_FLOAT_EQ(s.vector("b")[0], 3.0f);
  EXPECT_FALSE(s.normalized());
}

TEST(LoadEmbeddings, ShortBlobRejected) {
  TempDir dir("emb-short");
  write_file(dir / "m.json",
             R"({"dim": 2, "count": 2, "dtype": "f32le", "normalized": false, "ids": ["a", "b"]})");
  write_blob(dir / "b.bin", {1, 2, 3});
  try {
    load_embeddings(dir / "m.json", dir / "b.bin");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(LoadEmbeddings, DuplicateIdAndNonFiniteRejected) {
  TempDir dir("emb-bad");
  write_file(dir / "m.json",
             R"({"dim": 1, "count": 2, "dtype": "f32le", "normalized": false, "ids": ["a", "a"]})");
  write_blob(dir / "b.bin", {1, 2});
  EXPECT_THROW(load_embeddings(dir / "m.json", dir / "b.bin"), IngestError);
  write_file(dir / "m.json",
             R"({"dim": 1, "count": 2, "dtype": "f32le", "normalized": false, "ids": ["a", "b"]})");
  write_blob(dir / "b.bin", {1, std::nanf("")});
  try {
    load_embeddings(dir / "m.json", dir / "b.bin");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(LoadEmbeddings, WrongDtypeOrCount) {
  TempDir dir("emb-dtype");
  write_file(dir / "m.json",
             R"({"dim": 1, "count": 1, "dtype": "f16", "normalized": false, "ids": ["a"]})");
  write_blob(dir / "b.bin", {1});
  EXPECT_THROW(load_embeddings(dir / "m.json", dir / "b.bin"), IngestError);
  write_file(dir / "m.json",
             R"({"dim": 1, "count": 2, "dtype": "f32le", "normalized": false, "ids": ["a"]})");
  EXPECT_THROW(load_embeddings(dir / "m.json", dir / "b.bin"), IngestError);
}

TEST(SaveEmbeddings, RoundTripBitIdentical) {
  Rng rng(5);
  const auto s = fx::random_store(100, 512, rng);
  TempDir dir("emb-rt");
  save_embeddings(s, dir / "m.json", dir / "b.bin");
  const auto back = load_embeddings(dir / "m.json", dir / "b.bin");
  ASSERT_EQ(back.ids(), s.ids());
  ASSERT_EQ(back.values().size(), s.values().size());
  EXPECT_EQ(std::memcmp(back.values().data(), s.values().data(), s.values().size() * 4), 0);
  EXPECT_EQ(back.encoder(), "test");
}

TEST(Normalize, ThreeFourFive) {
  const auto s = l2_normalize(store_of({"a"}, 2, {3, 4}));
  EXPECT_TRUE(s.normalized());
  EXPECT_NEAR(s.row(0)[0], 0.6, 1e-7);
  EXPECT_NEAR(s.row(0)[1], 0.8, 1e-7);
}

TEST(Normalize, IdempotentAndUnitNorm) {
  Rng rng(9);
  const auto once = l2_normalize(fx::random_store(50, 16, rng));
  const auto twice = l2_normalize(once);
  for (std::size_t i = 0; i < once.values().size(); ++i) {
    EXPECT_NEAR(once.values()[i], twice.values()[i], 1e-6);
  }
  for (std::size_t i = 0; i < once.size(); ++i) {
    double sq = 0;
    for (float v : once.row(i)) sq += double(v) * v;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-5);
  }
}

TEST(Normalize, ZeroRowNamed) {
  try {
    l2_normalize(store_of({"a", "zero"}, 2, {1, 0, 0, 0}));
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("zero"), std::string::npos);
  }
}

TEST(Store, NormalizedFlagChecked) {
  EXPECT_THROW(store_of({"a"}, 2, {3, 4}, true), ArgumentError);
  EXPECT_NO_THROW(store_of({"a"}, 2, {0.6f, 0.8f}, true));
}

TEST(Knn, CollinearPoints) {
  const auto s = store_of({"a", "b", "c"}, 1, {0, 1, 3});
  const auto n = knn(s, "b", 2, DistanceMetric::euclidean);
  ASSERT_EQ(n.neighbors.size(), 2u);
  EXPECT_EQ(n.neighbors[0].id, "a");
  EXPECT_DOUBLE_EQ(n.neighbors[0].distance, 1.0);
  EXPECT_EQ(n.neighbors[1].id, "c");
  EXPECT_DOUBLE_EQ(n.neighbors[1].distance, 2.0);
}

TEST(Knn, ExhaustiveSorted) {
  const auto s = store_of({"a", "b", "c", "d"}, 1, {0, 5, 2, 9});
  const auto n = knn(s, "a", 3, DistanceMetric::euclidean);
  std::vector<std::string> ids;
  for (const auto& x : n.neighbors) ids.push_back(x.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"c", "b", "d"}));
}

TEST(Knn, TieBreakByAscendingId) {
  const auto s = store_of({"q", "y", "x"}, 1, {0, 1, 1});
  const auto n = knn(s, "q", 2, DistanceMetric::euclidean);
  EXPECT_EQ(n.neighbors[0].id, "x");
  EXPECT_EQ(n.neighbors[1].id, "y");
}

TEST(Knn, Errors) {
  const auto s = store_of({"a", "b"}, 1, {0, 1});
  EXPECT_THROW(knn(s, "a", 2, DistanceMetric::euclidean), ArgumentError);
  EXPECT_THROW(knn(s, "a", 0, DistanceMetric::euclidean), ArgumentError);
  EXPECT_THROW(knn(s, "zz", 1, DistanceMetric::euclidean), ArgumentError);
}

TEST(Knn, SameAcrossThreadCounts) {
  Rng rng(2);
  const auto s = fx::random_store(700, 8, rng);
  set_default_threads(1);
  const auto one = knn(s, "v3", 40, DistanceMetric::euclidean);
  set_default_threads(7);
  const auto many = knn(s, "v3", 40, DistanceMetric::euclidean);
  set_default_threads(0);
  EXPECT_EQ(one.neighbors, many.neighbors);
}

TEST(RankBySimilarity, ExactMatchFirst) {
  const auto s = store_of({"a", "b", "c"}, 2, {1, 0, 0, 1, 1, 1});
  const std::vector<float> q = {0, 1};
  const std::vector<std::string> pool = {"a", "b", "c"};
  const auto r = rank_by_similarity(s, q, pool, 3);
  EXPECT_EQ(r[0].id, "b");
  EXPECT_DOUBLE_EQ(r[0].distance, 0.0);
}

TEST(RankBySimilarity, PoolOfOne) {
  const auto s = store_of({"a", "b"}, 1, {0, 100});
  const std::vector<float> q = {0};
  const std::vector<std::string> pool = {"b"};
  EXPECT_EQ(rank_by_similarity(s, q, pool, 1)[0].id, "b");
}

TEST(RankBySimilarity, DimensionMismatch) {
  const auto s = store_of({"a"}, 2, {0, 1});
  const std::vector<float> q = {0};
  const std::vector<std::string> pool = {"a"};
  EXPECT_THROW(rank_by_similarity(s, q, pool, 1), ArgumentError);
}

TEST(RankBySimilarity, MatchesFullSortPrefix) {
  Rng rng(11);
  const auto s = fx::random_store(50, 6, rng);
  std::vector<float> q(6);
  for (auto& x : q) x = static_cast<float>(rng.unit());
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < s.size(); ++i) {
    all.emplace_back(std::sqrt(squared_euclidean(q, s.row(i))), s.ids()[i]);
  }
  std::sort(all.begin(), all.end());
  const auto r = rank_by_similarity(s, q, std::vector<std::string>(s.ids().begin(), s.ids().end()), 10);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(r[i].id, all[i].second);
}
