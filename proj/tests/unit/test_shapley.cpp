/* Copyright 2026 The concept-probe Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "concept_probe/error.hpp"
#include "concept_probe/head.hpp"
#include "concept_probe/shapley.hpp"
#include "test_util.hpp"

namespace cp = concept_probe;

namespace {

cp::CoalitionValue additive(std::vector<double> w) {
  return [w](const std::vector<bool>& s) {
    double v = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (s[i]) v += w[i];
    return v;
  };
}

// Worth 1 once any glove of each hand is present: players 0 and 1 are left
// gloves, player 2 is the only right glove, player 3 is a null player.
double glove(const std::vector<bool>& s) { return ((s[0] || s[1]) && s[2]) ? 1.0 : 0.0; }

}  // namespace

TEST(ShapleyExact, AdditiveGameReturnsTheWeights) {
  std::vector<double> w{0.5, -1.0, 2.0, 0.25, 0.0};
  auto r = cp::shapley_exact(additive(w), 5);
  ASSERT_EQ(r.values.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(r.values[i], w[i], 1e-12);
  EXPECT_TRUE(r.exact);
}

TEST(ShapleyExact, GloveGameClosedForm) {
  auto r = cp::shapley_exact(glove, 4);
  EXPECT_NEAR(r.values[0], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(r.values[1], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(r.values[2], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.values[3], 0.0, 1e-12);
  double total = std::accumulate(r.values.begin(), r.values.end(), 0.0);
  EXPECT_NEAR(total, r.v_full - r.v_empty, 1e-12);
}

TEST(ShapleyExact, RejectsTooManyPlayers) {
  EXPECT_THROW(cp::shapley_exact(additive(std::vector<double>(21, 1.0)), 21), cp::Error);
}

TEST(ShapleyMonteCarlo, AdditiveGameIsExactWithZeroError) {
  std::vector<double> w{1.0, 2.0, 3.0};
  auto r = cp::shapley_monte_carlo(additive(w), 3, 50, 7);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.values[i], w[i], 1e-12);
    EXPECT_NEAR(r.std_errors[i], 0.0, 1e-12);
  }
  EXPECT_EQ(r.permutations, 50);
}

TEST(ShapleyMonteCarlo, EfficiencyHoldsPerPermutation) {
  auto r = cp::shapley_monte_carlo(glove, 4, 200, 3);
  double total = std::accumulate(r.values.begin(), r.values.end(), 0.0);
  EXPECT_NEAR(total, r.v_full - r.v_empty, 1e-12);
  EXPECT_EQ(r.values[3], 0.0);
}

TEST(ShapleyMonteCarlo, ConvergesToExactValues) {
  auto exact = cp::shapley_exact(glove, 4);
  auto mc = cp::shapley_monte_carlo(glove, 4, 20000, 11);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(mc.values[i], exact.values[i], 0.02) << i;
}

TEST(ShapleyMonteCarlo, DeterministicForASeed) {
  auto a = cp::shapley_monte_carlo(glove, 4, 100, 5);
  auto b = cp::shapley_monte_carlo(glove, 4, 100, 5);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.std_errors, b.std_errors);
}

TEST(ShapleyCompleteness, CoordinateConceptsOfALinearHead) {
  const int d = 3;
  cp::test::CoordinateModel model(d);
  cp::MatrixF w(2, d);
  w << 4, 0, 0, 0, 4, 0;
  cp::LinearHead head(w, cp::VectorF::Zero(2));
  auto ds = cp::test::random_dataset(200, d, 2, 21);
  auto value = cp::racc_coalition_value(model, head, ds);
  EXPECT_DOUBLE_EQ(value(std::vector<bool>(d, true)), 1.0);
  auto r = cp::shapley_completeness(model, head, ds, 100, 1);
  EXPECT_TRUE(r.exact);
  EXPECT_NEAR(r.values[2], 0.0, 1e-12);
  EXPECT_GT(r.values[0], 0.0);
  EXPECT_GT(r.values[1], 0.0);
}
