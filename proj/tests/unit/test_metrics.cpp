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
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "genbias/error.hpp"
#include "genbias/metrics.hpp"

using namespace genbias;

namespace {

// Ranking "r0..rn" with labels given as a string of m/f/u.
struct Fixture {
  std::vector<std::string> ranking;
  LabelMap labels;
};

Fixture make(const std::string& pattern) {
  Fixture rk;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const auto id = "r" + std::to_string(i);
    rk.ranking.push_back(id);
    rk.labels[id] = pattern[i] == 'm' ? Gender::male
                    : pattern[i] == 'f' ? Gender::female
                                        : Gender::undefined;
  }
  return rk;
}

RetrievalRun run_of(const std::vector<std::string>& patterns, LabelMap& labels) {
  RetrievalRun run;
  for (std::size_t q = 0; q < patterns.size(); ++q) {
    std::vector<Scored> r;
    for (std::size_t i = 0; i < patterns[q].size(); ++i) {
      const auto id = "q" + std::to_string(q) + "_" + std::to_string(i);
      labels[id] = patterns[q][i] == 'm' ? Gender::male
                   : patterns[q][i] == 'f' ? Gender::female
                                           : Gender::undefined;
      r.push_back({id, 0.0});
    }
    run.queries.push_back({"q" + std::to_string(q), "src", Gender::male});
    run.rankings.push_back(std::move(r));
  }
  return run;
}

}  // namespace

TEST(Delta, AllUndefinedIsZero) {
  const auto rk = make("uuuuu");
  EXPECT_EQ(delta_k(rk.ranking, rk.labels, 5), 0.0);
}

TEST(Delta, AllMaleIsOne) {
  const auto rk = make("mmmmm");
  EXPECT_EQ(delta_k(rk.ranking, rk.labels, 5), 1.0);
}

TEST(Delta, MixedOneThird) {
  const auto rk = make("mmfuu");
  EXPECT_DOUBLE_EQ(delta_k(rk.ranking, rk.labels, 5), 1.0 / 3.0);
}

TEST(Delta, OnlyTopKCounted) {
  const auto rk = make("mmfff");
  EXPECT_EQ(delta_k(rk.ranking, rk.labels, 2), 1.0);
  EXPECT_THROW(delta_k(rk.ranking, rk.labels, 6), ArgumentError);
}

TEST(Bias, OppositeQueriesCancel) {
  LabelMap labels;
  const auto run = run_of({"mmm", "fff"}, labels);
  EXPECT_EQ(bias_at_k(run, labels, 3), 0.0);
}

TEST(Bias, SingleQueryEqualsDelta) {
  LabelMap labels;
  const auto run = run_of({"mmfuu"}, labels);
  EXPECT_DOUBLE_EQ(bias_at_k(run, labels, 5), 1.0 / 3.0);
}

TEST(Bias, EmptyRunRejected) {
  EXPECT_THROW(bias_at_k(RetrievalRun{}, {}, 5), MetricError);
}

TEST(Skew, ParityIsZero) {
  const auto rk = make("mf");
  EXPECT_EQ(skew_at_k(rk.ranking, rk.labels, Gender::male, {0.5, 0.5}, 2), 0.0);
}

TEST(Skew, ThreeToOne) {
  const auto rk = make("mmfm");
  EXPECT_NEAR(skew_at_k(rk.ranking, rk.labels, Gender::male, {0.5, 0.5}, 4), 0.405, 1e-3);
  EXPECT_DOUBLE_EQ(skew_at_k(rk.ranking, rk.labels, Gender::male, {0.5, 0.5}, 4), std::log(1.5));
}

TEST(Skew, AbsentAttributeIsNegativeInfinity) {
  const auto rk = make("mmu");
  EXPECT_EQ(skew_at_k(rk.ranking, rk.labels, Gender::female, {0.5, 0.5}, 3),
            -std::numeric_limits<double>::infinity());
}

TEST(Skew, ZeroDesiredRejected) {
  const auto rk = make("mf");
  EXPECT_THROW(skew_at_k(rk.ranking, rk.labels, Gender::female, {1.0, 0.0}, 2), MetricError);
}

TEST(MaxSkew, ParityIsZero) {
  const auto rk = make("mfuffmm");
  EXPECT_EQ(*max_skew_at_k(rk.ranking, rk.labels, {0.5, 0.5}, 7), 0.0);
}

TEST(MaxSkew, ThreeToOneBalancedDesired) {
  const auto rk = make("mmfm");
  EXPECT_DOUBLE_EQ(*max_skew_at_k(rk.ranking, rk.labels, {0.5, 0.5}, 4), std::log(1.5));
}

TEST(MaxSkew, ThreeToOneSkewedDesired) {
  const auto rk = make("mmfm");
  const double v = *max_skew_at_k(rk.ranking, rk.labels, {0.7, 0.3}, 4);
  EXPECT_DOUBLE_EQ(v, std::max(std::log(0.75 / 0.7), std::log(0.25 / 0.3)));
  EXPECT_NEAR(v, 0.069, 1e-3);
}

TEST(MaxSkew, NoLabeledSkipped) {
  const auto rk = make("uuu");
  EXPECT_FALSE(max_skew_at_k(rk.ranking, rk.labels, {0.5, 0.5}, 3));
  LabelMap labels;
  const auto run = run_of({"uuu", "mmfm"}, labels);
  const auto s = mean_max_skew_at_k(run, labels, {0.5, 0.5}, 3);
  EXPECT_EQ(s.queries_used, 1u);
  EXPECT_DOUBLE_EQ(s.mean, std::log(2.0 / 3.0 / 0.5));
}

TEST(Desired, FromPool) {
  LabelMap labels{{"a", Gender::male}, {"b", Gender::female}, {"c", Gender::undefined}};
  const std::vector<std::string> pool = {"a", "b", "c"};
  const auto d = desired_from_dataset(labels, pool);
  EXPECT_EQ(d.male, 0.5);
  EXPECT_EQ(d.female, 0.5);
  const std::vector<std::string> only_male = {"a", "c"};
  EXPECT_THROW(desired_from_dataset(labels, only_male), MetricError);
}

TEST(Desired, PublishedTrainCounts) {
  LabelMap labels;
  std::vector<std::string> pool;
  for (int i = 0; i < 30541; ++i) {
    labels["m" + std::to_string(i)] = Gender::male;
    pool.push_back("m" + std::to_string(i));
  }
  for (int i = 0; i < 11781; ++i) {
    labels["f" + std::to_string(i)] = Gender::female;
    pool.push_back("f" + std::to_string(i));
  }
  const auto d = desired_from_dataset(labels, pool);
  EXPECT_NEAR(d.male, 0.722, 5e-4);
  EXPECT_DOUBLE_EQ(d.male + d.female, 1.0);
}

TEST(Aggregate, SingleValue) {
  const std::vector<double> v = {0.3};
  const auto a = aggregate_over_seeds(v);
  EXPECT_EQ(a.mean, 0.3);
  EXPECT_EQ(a.std, 0.0);
}

TEST(Aggregate, Symmetric) {
  const std::vector<double> v = {-1, 1};
  const auto a = aggregate_over_seeds(v);
  EXPECT_EQ(a.mean, 0.0);
  EXPECT_EQ(a.std, 1.0);
}

TEST(Aggregate, FiveValues) {
  // mean 0.3, squared deviations 0.04, 0.01, 0, 0.01, 0.04 -> var 0.02.
  const std::vector<double> v = {0.1, 0.2, 0.3, 0.4, 0.5};
  const auto a = aggregate_over_seeds(v);
  EXPECT_NEAR(a.mean, 0.3, 1e-15);
  EXPECT_NEAR(a.std, std::sqrt(0.02), 1e-15);
  EXPECT_EQ(a.n, 5u);
  EXPECT_THROW(aggregate_over_seeds(std::vector<double>{}), ArgumentError);
}

TEST(Reports, CsvAndJsonMirror) {
  BiasReport r;
  r.model_tag = "random";
  r.dataset_tag = "val";
  r.values[{"Bias", 5}] = {0.25, 0.0, 1, 10};
  r.values[{"MaxSkew", 25}] = {0.125, 0.5, 3, 8};
  std::vector<BiasReport> reports = {r};
  std::ostringstream csv;
  write_reports_csv(csv, reports);
  EXPECT_EQ(csv.str(),
            "model,dataset,metric,K,mean,std,n_seeds,n_queries\n"
            "random,val,Bias,5,0.25,0,1,10\n"
            "random,val,MaxSkew,25,0.125,0.5,3,8\n");
  const auto j = reports_to_json(reports);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["metric"], "MaxSkew");
  EXPECT_EQ(j[1]["K"], 25);
  EXPECT_EQ(j[1]["std"], 0.5);
}
