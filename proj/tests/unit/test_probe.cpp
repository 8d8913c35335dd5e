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

#include <random>

#include <gtest/gtest.h>

#include "concept_probe/probe.hpp"
#include "test_util.hpp"

namespace cp = concept_probe;

namespace {

struct Problem {
  cp::MatrixD x;
  std::vector<int> y;
};

// Labels depend on features 0 and 3 only.
Problem informative(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Problem p{cp::MatrixD(n, 8), {}};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 8; ++j) p.x(i, j) = nd(rng);
    double s = 2.0 * p.x(i, 0) - 1.5 * p.x(i, 3) + 0.1 * nd(rng);
    p.y.push_back(s > 0.5 ? 2 : (s < -0.5 ? 0 : 1));
  }
  return p;
}

}  // namespace

TEST(L1Logistic, LambdaMaxZeroesEveryWeight) {
  auto p = informative(400, 1);
  double lmax = cp::l1_logistic_lambda_max(p.x, p.y, 3);
  auto at = cp::fit_l1_logistic(p.x, p.y, 3, lmax * 1.0001, {500, 1e-9});
  EXPECT_EQ(at.W.cwiseAbs().maxCoeff(), 0.0);
  auto below = cp::fit_l1_logistic(p.x, p.y, 3, lmax * 0.5, {500, 1e-9});
  EXPECT_GT(below.W.cwiseAbs().maxCoeff(), 0.0);
}

TEST(L1Logistic, UnpenalizedFitSatisfiesStationarity) {
  auto p = informative(300, 2);
  auto m = cp::fit_l1_logistic(p.x, p.y, 3, 0.0, {5000, 1e-12});
  cp::MatrixD logits = (p.x * m.W.transpose()).rowwise() + m.b.transpose();
  cp::MatrixD g = cp::MatrixD::Zero(3, 8);
  cp::VectorD gb = cp::VectorD::Zero(3);
  for (int i = 0; i < 300; ++i) {
    cp::VectorD l = logits.row(i).transpose();
    cp::VectorD pr = (l.array() - l.maxCoeff()).exp();
    pr /= pr.sum();
    pr(p.y[i]) -= 1.0;
    g += pr * p.x.row(i);
    gb += pr;
  }
  EXPECT_LT(gb.cwiseAbs().maxCoeff() / 300, 1e-4);
}

TEST(ProbeSelect, FindsInformativeFeaturesFirst) {
  auto p = informative(600, 3);
  cp::ProbeOptions opts;
  opts.n = 2;
  auto sel = cp::logistic_probe_select(p.x.cast<float>(), p.y, 3, opts);
  ASSERT_EQ(sel.selected.size(), 2u);
  std::vector<int> s = sel.selected;
  std::sort(s.begin(), s.end());
  EXPECT_EQ(s, (std::vector<int>{0, 3}));
  EXPECT_GE(sel.support, 2);
}

TEST(ProbeSelect, NeverSelectsSilentColumnsAndWarnsWhenShort) {
  auto p = informative(300, 4);
  cp::MatrixF z = p.x.cast<float>().cwiseMax(0.0f);
  z.col(5).setZero();
  z.col(6).setZero();
  cp::ProbeOptions opts;
  opts.n = 7;
  auto sel = cp::logistic_probe_select(z, p.y, 3, opts);
  EXPECT_EQ(sel.selected.size(), 6u);
  for (int j : sel.selected) EXPECT_NE(j, 5);
  EXPECT_FALSE(sel.warning.empty());
  EXPECT_EQ(sel.active_features, 6);
}

TEST(ProbeSelect, DeterministicForASeed) {
  auto p = informative(500, 5);
  cp::ProbeOptions opts;
  opts.n = 3;
  opts.max_rows = 200;
  opts.seed = 8;
  auto a = cp::logistic_probe_select(p.x.cast<float>(), p.y, 3, opts);
  auto b = cp::logistic_probe_select(p.x.cast<float>(), p.y, 3, opts);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_EQ(a.lambda, b.lambda);
}
