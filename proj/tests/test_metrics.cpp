/*
 * Copyright 2026 The ps-lab Authors.
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

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pslab/metrics.hpp"
#include "pslab/rng.hpp"
#include "oracles.hpp"

namespace pslab {
namespace {

LabeledPoints at_angles(const std::vector<double>& degrees, const std::vector<ClassId>& labels) {
  LabeledPoints out;
  out.points = Matrix(degrees.size(), 2);
  for (std::size_t r = 0; r < degrees.size(); ++r) {
    const double t = degrees[r] * std::numbers::pi / 180.0;
    out.points(r, 0) = std::cos(t);
    out.points(r, 1) = std::sin(t);
  }
  out.labels = labels;
  return out;
}

TEST(Metrics, HandCaseRelevantAtRanksOneAndThree) {
  const LabeledPoints q = at_angles({0.0}, {0});
  const LabeledPoints g = at_angles({10.0, 20.0, 30.0, 40.0}, {0, 1, 0, 1});
  const MetricReport r = evaluate(RetrievalSetup::split(q, g), {1, 2, 3}, true);
  EXPECT_DOUBLE_EQ(r.map_at_r, 0.5);
  EXPECT_DOUBLE_EQ(r.r_precision, 0.5);
  EXPECT_DOUBLE_EQ(r.p_at_1, 1.0);
  EXPECT_DOUBLE_EQ(r.recall_at_k.at(1), 1.0);
  ASSERT_EQ(r.per_query.size(), 1u);
  EXPECT_EQ(r.per_query[0].relevant, 2u);
}

TEST(Metrics, TiesGoToLowerGalleryIndex) {
  const LabeledPoints q = at_angles({0.0}, {1});
  const LabeledPoints g = at_angles({5.0, 5.0, 90.0}, {0, 1, 1});
  const RetrievalSetup s = RetrievalSetup::split(q, g);
  EXPECT_EQ(rank_gallery(s)[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(recall_at_k(s, 1), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k(s, 2), 1.0);
  // Scaling a gallery vector does not break the tie differently.
  LabeledPoints g2 = g;
  for (double& v : g2.points.row(1)) v *= 7.0;
  EXPECT_EQ(rank_gallery(RetrievalSetup::split(q, g2))[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Metrics, QueriesWithoutPositivesAreSkipped) {
  const LabeledPoints set = at_angles({0.0, 10.0, 50.0}, {0, 0, 1});
  const MetricReport r = evaluate(RetrievalSetup::same(set), {1});
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.n_queries, 3u);
  EXPECT_DOUBLE_EQ(r.r_precision, 1.0);
  EXPECT_DOUBLE_EQ(r.map_at_r, 1.0);
  EXPECT_DOUBLE_EQ(r.p_at_1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall_at_k.at(1), 2.0 / 3.0);
}

TEST(Metrics, InvalidInputs) {
  const LabeledPoints set = at_angles({0.0, 10.0}, {0, 0});
  EXPECT_THROW(recall_at_k(RetrievalSetup::same(set), 0), InvalidParameter);
  EXPECT_THROW(recall_at_k(RetrievalSetup::same(set), 2), InvalidParameter);
  EXPECT_NO_THROW(recall_at_k(RetrievalSetup::split(set, set), 2));
  EXPECT_THROW(evaluate(RetrievalSetup::split(LabeledPoints{}, set), {1}), InvalidParameter);
  LabeledPoints three;
  three.points = Matrix(1, 3, 1.0);
  three.labels = {0};
  EXPECT_THROW(evaluate(RetrievalSetup::split(three, set), {1}), ContractError);
  LabeledPoints zero = set;
  zero.points.row(1)[0] = 0.0;
  zero.points.row(1)[1] = 0.0;
  EXPECT_THROW(evaluate(RetrievalSetup::same(zero), {1}), DegenerateInput);
}

TEST(Metrics, MatchesExhaustiveOracleOnSmallSets) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(7);
    const std::size_t classes = 1 + rng.uniform_index(3);
    LabeledPoints set;
    set.points = Matrix(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      // Coarse angles make exact ties common.
      const double t = static_cast<double>(rng.uniform_index(8)) * std::numbers::pi / 4.0;
      const double s = 0.5 + rng.uniform();
      set.points(r, 0) = s * std::cos(t);
      set.points(r, 1) = s * std::sin(t);
      set.labels.push_back(rng.uniform_index(classes));
    }
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k < n; ++k) ks.push_back(k);
    const MetricReport r = evaluate(RetrievalSetup::same(set), ks);
    const oracle::MetricOracle o = oracle::brute_force_metrics(set, n - 1);
    for (std::size_t k : ks) ASSERT_NEAR(r.recall_at_k.at(k), o.recall[k - 1], 1e-12) << trial;
    ASSERT_NEAR(r.p_at_1, o.p1, 1e-12) << trial;
    ASSERT_NEAR(r.r_precision, o.rp, 1e-12) << trial;
    ASSERT_NEAR(r.map_at_r, o.map, 1e-12) << trial;
    ASSERT_EQ(r.skipped, o.skipped) << trial;
  }
}

TEST(Metrics, OrderingProperties) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    LabeledPoints set;
    const std::size_t n = 20;
    set.points = Matrix(n, 3);
    for (double& v : set.points.data()) v = rng.normal();
    for (std::size_t r = 0; r < n; ++r) set.labels.push_back(rng.uniform_index(4));
    const MetricReport r = evaluate(RetrievalSetup::same(set), {1, 2, 4, 8}, true);
    EXPECT_LE(r.map_at_r, r.r_precision + 1e-15);
    EXPECT_DOUBLE_EQ(r.p_at_1, r.recall_at_k.at(1));
    EXPECT_LE(r.recall_at_k.at(1), r.recall_at_k.at(2));
    EXPECT_LE(r.recall_at_k.at(2), r.recall_at_k.at(4));
    EXPECT_LE(r.recall_at_k.at(4), r.recall_at_k.at(8));
    for (const auto& m : r.per_query) EXPECT_LE(m.map_at_r, m.r_precision + 1e-15);
  }
}

TEST(Metrics, ExplicitExclusionMatchesSameSet) {
  Rng rng(13);
  LabeledPoints set;
  set.points = Matrix(15, 2);
  for (double& v : set.points.data()) v = rng.normal();
  for (std::size_t r = 0; r < 15; ++r) set.labels.push_back(rng.uniform_index(3));
  RetrievalSetup ex = RetrievalSetup::split(set, set);
  for (std::size_t q = 0; q < 15; ++q) ex.exclude.push_back(q);
  const MetricReport a = evaluate(RetrievalSetup::same(set), {1, 4});
  const MetricReport b = evaluate(ex, {1, 4});
  EXPECT_EQ(a.recall_at_k, b.recall_at_k);
  EXPECT_EQ(a.map_at_r, b.map_at_r);
  EXPECT_EQ(a.r_precision, b.r_precision);
}

}  // namespace
}  // namespace pslab
