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
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "genbias/corpus.hpp"
#include "genbias/error.hpp"
#include "genbias/retrieval.hpp"

using namespace genbias;
using genbias::fx::real;
using genbias::fx::store_of;

namespace {

Corpus toy_corpus() {
  Corpus c;
  c.add(real("d1", Gender::male, {"red car"}));
  c.add(real("d2", Gender::female, {"red bus"}));
  c.add(real("d3", Gender::male, {"blue car"}));
  c.add(real("d4", Gender::undefined, {"green tree"}));
  c.add(real("d5", Gender::female, {"red car park"}));
  return c;
}

std::vector<std::string> ids_of(const std::vector<Scored>& r) {
  std::vector<std::string> out;
  for (const auto& s : r) out.push_back(s.id);
  return out;
}

}  // namespace

TEST(Tfidf, SharedTermsHaveZeroIdf) {
  Corpus c;
  c.add(real("a", Gender::male, {"dog park"}));
  c.add(real("b", Gender::male, {"park dog"}));
  const auto index = build_tfidf_index(c);
  EXPECT_EQ(index.idf("dog"), 0.0);
  EXPECT_EQ(index.idf("park"), 0.0);
  EXPECT_EQ(index.weight(0, "dog"), 0.0);
  EXPECT_TRUE(index.vectorize("dog park").empty());
}

TEST(Tfidf, IdfLnFour) {
  Corpus c;
  c.add(real("a", Gender::male, {"kite beach"}));
  c.add(real("b", Gender::male, {"beach"}));
  c.add(real("c", Gender::male, {"beach"}));
  c.add(real("d", Gender::male, {"beach"}));
  EXPECT_NEAR(build_tfidf_index(c).idf("kite"), std::log(4.0), 1e-15);
  EXPECT_NEAR(build_tfidf_index(c).idf("kite"), 1.386, 1e-3);
}

TEST(Tfidf, VocabularyHasNoGenderedWords) {
  Corpus c;
  c.add(real("a", Gender::male, {"A man with his dog"}));
  c.add(real("b", Gender::female, {"She rides a horse"}));
  const auto index = build_tfidf_index(neutralize_corpus(c));
  for (const auto& [term, _] : index.vocabulary()) {
    EXPECT_FALSE(c.lexicon().is_gendered(term)) << term;
  }
}

TEST(Tfidf, EmptyCorpusRejected) { EXPECT_THROW(build_tfidf_index(Corpus{}), ArgumentError); }

TEST(Tfidf, HandComputedCosineTable) {
  const auto index = build_tfidf_index(toy_corpus());
  const double a = std::log(5.0 / 3.0), b = std::log(5.0);
  const double r = 1.0 / std::sqrt(2.0);
  const double cos_d2 = r * a / std::sqrt(a * a + b * b);
  const double cos_d5 = r * 2 * a / std::sqrt(2 * a * a + b * b);
  const auto ranked = tfidf_retrieve(index, "red car", 5);
  EXPECT_EQ(ids_of(ranked), (std::vector<std::string>{"d1", "d5", "d2", "d3", "d4"}));
  EXPECT_NEAR(ranked[0].score, 1.0, 1e-12);
  EXPECT_NEAR(ranked[1].score, cos_d5, 1e-12);
  EXPECT_NEAR(ranked[2].score, cos_d2, 1e-12);
  EXPECT_NEAR(ranked[3].score, cos_d2, 1e-12);
  EXPECT_EQ(ranked[4].score, 0.0);
}

TEST(Tfidf, ExcludedImageAbsent) {
  const auto index = build_tfidf_index(toy_corpus());
  const auto ranked = tfidf_retrieve(index, "red car", 4, std::string_view("d1"));
  EXPECT_EQ(ids_of(ranked), (std::vector<std::string>{"d5", "d2", "d3", "d4"}));
  EXPECT_THROW(tfidf_retrieve(index, "red car", 5, std::string_view("d1")), ArgumentError);
}

TEST(Tfidf, NoOverlapGivesIdOrder) {
  const auto index = build_tfidf_index(toy_corpus());
  const auto ranked = tfidf_retrieve(index, "zebra", 5);
  EXPECT_EQ(ids_of(ranked), (std::vector<std::string>{"d1", "d2", "d3", "d4", "d5"}));
  for (const auto& s : ranked) EXPECT_EQ(s.score, 0.0);
}

TEST(Tfidf, ImageScoreIsMaxOverCaptions) {
  Corpus c;
  c.add(real("a", Gender::male, {"zebra herd", "a red kite"}));
  c.add(real("b", Gender::male, {"red bus stop"}));
  c.add(real("c", Gender::male, {"green field"}));
  const auto index = build_tfidf_index(c);
  EXPECT_EQ(index.document_count(), 4u);
  const auto ranked = tfidf_retrieve(index, "zebra herd", 3);
  EXPECT_EQ(ranked[0].id, "a");
  EXPECT_NEAR(ranked[0].score, 1.0, 1e-12);
}

TEST(Random, PoolOfKIsPermutation) {
  const std::vector<std::string> pool = {"c", "a", "b", "d"};
  auto r = random_retrieve(pool, 4, 17);
  std::sort(r.begin(), r.end());
  EXPECT_EQ(r, (std::vector<std::string>{"a", "b", "c", "d"}));
}

TEST(Random, DeterministicPerSeed) {
  std::vector<std::string> pool;
  for (int i = 0; i < 100; ++i) pool.push_back("i" + std::to_string(i));
  EXPECT_EQ(random_retrieve(pool, 10, 5), random_retrieve(pool, 10, 5));
  EXPECT_NE(random_retrieve(pool, 10, 5), random_retrieve(pool, 10, 6));
}

TEST(Random, InputOrderIrrelevant) {
  std::vector<std::string> pool = {"a", "b", "c", "d", "e"};
  std::vector<std::string> shuffled = {"e", "c", "a", "d", "b"};
  EXPECT_EQ(random_retrieve(pool, 3, 8), random_retrieve(shuffled, 3, 8));
}

TEST(Random, UniformOverTwoIds) {
  const std::vector<std::string> pool = {"a", "b"};
  Rng rng(123);
  int a = 0;
  for (int i = 0; i < 10000; ++i) a += random_retrieve(pool, 1, rng)[0] == "a";
  EXPECT_NEAR(a / 10000.0, 0.5, 0.02);
}

TEST(Random, KTooLarge) {
  const std::vector<std::string> pool = {"a"};
  EXPECT_THROW(random_retrieve(pool, 2, 0), ArgumentError);
}

TEST(Embedding, CaptionEqualToImageRanksFirst) {
  const auto caps = store_of({"x#0"}, 2, {0.6f, 0.8f}, true);
  const auto imgs = store_of({"p", "x", "y"}, 2, {1, 0, 0.6f, 0.8f, 0, 1}, true);
  const std::vector<std::string> pool = {"p", "x", "y"};
  const auto r = embedding_retrieve(caps, imgs, "x#0", pool, 3);
  EXPECT_EQ(r[0].id, "x");
  EXPECT_NEAR(r[0].score, 0.0, 1e-7);
  const std::vector<std::string> one = {"p"};
  EXPECT_EQ(embedding_retrieve(caps, imgs, "x#0", one, 1)[0].id, "p");
}

TEST(Embedding, Errors) {
  const auto caps = store_of({"x#0"}, 2, {0.6f, 0.8f}, true);
  const auto caps3 = store_of({"x#0"}, 3, {1, 0, 0}, true);
  const auto imgs = store_of({"x"}, 2, {0.6f, 0.8f}, true);
  const auto raw = store_of({"x"}, 2, {3, 4}, false);
  const std::vector<std::string> pool = {"x"};
  EXPECT_THROW(embedding_retrieve(caps3, imgs, "x#0", pool, 1), ArgumentError);
  EXPECT_THROW(embedding_retrieve(caps, raw, "x#0", pool, 1), ArgumentError);
  EXPECT_THROW(embedding_retrieve(caps, imgs, "nope", pool, 1), ArgumentError);
  const std::vector<std::string> bad = {"zz"};
  EXPECT_THROW(embedding_retrieve(caps, imgs, "x#0", bad, 1), ArgumentError);
}

TEST(Embedding, MatchesBruteForce) {
  Rng rng(4);
  const auto imgs = l2_normalize(fx::random_store(20, 5, rng, "img"));
  const auto caps = l2_normalize(fx::random_store(3, 5, rng, "cap"));
  std::vector<std::string> pool(imgs.ids().begin(), imgs.ids().end());
  for (const auto& qid : caps.ids()) {
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      all.emplace_back(std::sqrt(squared_euclidean(caps.vector(qid), imgs.row(i))), imgs.ids()[i]);
    }
    std::sort(all.begin(), all.end());
    const auto r = embedding_retrieve(caps, imgs, qid, pool, 20);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(r[i].id, all[i].second);
  }
}

TEST(Recall, TargetOnlyPool) {
  RetrievalRun run;
  run.queries = {{"x#0", "x", Gender::male}};
  run.rankings = {{{"x", 0.0}}};
  EXPECT_EQ(recall_at_k(run, 1), 1.0);
}

TEST(Recall, TargetSeventh) {
  RetrievalRun run;
  for (int q = 0; q < 3; ++q) {
    run.queries.push_back({"t#" + std::to_string(q), "t", Gender::female});
    std::vector<Scored> r;
    for (int i = 0; i < 10; ++i) r.push_back({i == 6 ? "t" : "d" + std::to_string(i), double(i)});
    run.rankings.push_back(r);
  }
  EXPECT_EQ(recall_at_k(run, 5), 0.0);
  EXPECT_EQ(recall_at_k(run, 10), 1.0);
  EXPECT_THROW(recall_at_k(run, 11), ArgumentError);
}

TEST(ZeroShot, AlignedPrompt) {
  const auto prompts = store_of({"male", "female"}, 2, {1, 0, 0, 1}, true);
  const auto imgs = store_of({"a", "b", "tie"}, 2, {0, 1, 1, 0, 0.70710678f, 0.70710678f}, true);
  EXPECT_EQ(zero_shot_gender(imgs, prompts, "a"), Gender::female);
  EXPECT_EQ(zero_shot_gender(imgs, prompts, "b"), Gender::male);
  EXPECT_EQ(zero_shot_gender(imgs, prompts, "tie"), Gender::male);
}

TEST(ZeroShot, MissingPromptClass) {
  const auto prompts = store_of({"male"}, 2, {1, 0}, true);
  const auto imgs = store_of({"a"}, 2, {0, 1}, true);
  EXPECT_THROW(zero_shot_gender(imgs, prompts, "a"), ConfigError);
}

TEST(QuerySet, OnePerCaptionOfGenderedImages) {
  Corpus c;
  c.add(real("a", Gender::male, {"A man runs", "He runs fast"}));
  c.add(real("b", Gender::undefined, {"A dog"}));
  const auto qs = build_query_set(c);
  ASSERT_EQ(qs.size(), 2u);
  EXPECT_EQ(qs[0].query.query_id, "a#0");
  EXPECT_EQ(qs[1].query.query_id, "a#1");
  EXPECT_EQ(qs[0].text, "A person runs");
  EXPECT_EQ(qs[1].text, "They runs fast");
  EXPECT_EQ(qs[0].query.gender, Gender::male);
}

TEST(RunJsonl, RoundTrip) {
  RetrievalRun run;
  run.model_tag = "m";
  run.order = ScoreOrder::descending;
  run.queries = {{"a#0", "a", Gender::male}, {"b#0", "b", Gender::undefined}};
  run.rankings = {{{"x", 0.9}, {"y", 0.1}}, {{"y", 0.5}, {"x", 0.25}}};
  std::stringstream ss;
  write_run_jsonl(ss, run);
  const auto back = read_run_jsonl(ss, "m");
  ASSERT_EQ(back.queries.size(), 2u);
  EXPECT_EQ(back.queries[1].gender, Gender::undefined);
  EXPECT_EQ(back.rankings[1][1].id, "x");
  EXPECT_EQ(back.rankings[1][1].score, 0.25);
}

TEST(RunJsonl, RaggedRejected) {
  std::stringstream ss(
      "{\"query_id\":\"a\",\"source_image_id\":\"a\",\"gender\":\"male\",\"ranking\":[[\"x\",1]]}\n"
      "{\"query_id\":\"b\",\"source_image_id\":\"b\",\"gender\":\"male\",\"ranking\":[]}\n");
  EXPECT_THROW(read_run_jsonl(ss, "m"), IngestError);
}
