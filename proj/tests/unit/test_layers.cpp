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

#include <vector>

#include <gtest/gtest.h>

#include "concept_probe/layers.hpp"
#include "concept_probe/optim.hpp"

namespace cp = concept_probe;

TEST(TopK, TiesBreakTowardLowestIndex) {
  std::vector<float> v{1, 3, 3, 0, 3};
  EXPECT_EQ(cp::top_k_indices<float>(v, 2), (std::vector<int>{1, 2}));
  EXPECT_EQ(cp::top_k_indices<float>(v, 5).size(), 5u);
}

TEST(TopK, ActivationClampsRetainedNegatives) {
  cp::MatrixD pre(2, 4);
  pre << 1, -2, 3, 0.5, -1, -2, -3, -4;
  cp::MatrixD mask;
  cp::MatrixD z = cp::topk_activation<double>(pre, 2, &mask);
  cp::MatrixD expect(2, 4);
  expect << 1, 0, 3, 0, 0, 0, 0, 0;
  EXPECT_EQ(z, expect);
  EXPECT_EQ(mask, expect.cwiseSign());
  EXPECT_THROW(cp::topk_activation<double>(pre, 5), cp::ValidationError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  cp::MatrixD logits(3, 4);
  logits << 0.1, -0.3, 2.0, 0.7, 1.5, 1.5, -1, 0, -2, 0.3, 0.2, 0.1;
  std::vector<int> y{2, 0, 3};
  cp::MatrixD g;
  cp::batch_cross_entropy<double>(logits, y, &g);
  std::vector<double> x(logits.data(), logits.data() + logits.size());
  std::vector<double> a(g.data(), g.data() + g.size());
  auto loss = [&](std::span<const double> v) {
    cp::MatrixD l = Eigen::Map<const cp::MatrixD>(v.data(), 3, 4);
    return cp::batch_cross_entropy<double>(l, y);
  };
  EXPECT_LT(cp::finite_diff_gradcheck(loss, x, a).max_rel_error, 1e-7);
}

TEST(CrossEntropy, ExtremeLogitsStayFinite) {
  cp::VectorD l(2);
  l << 1000, -1000;
  EXPECT_NEAR(cp::softmax_cross_entropy<double>(l, 0), 0.0, 1e-12);
  EXPECT_NEAR(cp::softmax_cross_entropy<double>(l, 1), 2000.0, 1e-9);
}

TEST(Linear, BackwardMatchesFiniteDifferences) {
  cp::MatrixD X(3, 2), W(4, 2);
  X << 1, 2, -1, 0.5, 0.3, -0.7;
  W << 0.2, -0.1, 0.5, 0.4, -0.3, 0.8, 1.0, 0.0;
  cp::VectorD b(4);
  b << 0.1, 0.2, 0.3, 0.4;
  cp::MatrixD R(3, 4);
  R << 1, -1, 2, 0.5, 0.3, 0.2, -0.4, 1, 0, 1, 1, -2;
  cp::MatrixD dW = cp::MatrixD::Zero(4, 2);
  cp::VectorD db = cp::VectorD::Zero(4);
  cp::MatrixD dX = cp::linear_backward<double>(X, W, R, dW, db);
  std::vector<double> x(W.data(), W.data() + W.size());
  std::vector<double> a(dW.data(), dW.data() + dW.size());
  auto loss = [&](std::span<const double> v) {
    cp::MatrixD w = Eigen::Map<const cp::MatrixD>(v.data(), 4, 2);
    return cp::linear_forward<double>(X, w, b).cwiseProduct(R).sum();
  };
  EXPECT_LT(cp::finite_diff_gradcheck(loss, x, a).max_rel_error, 1e-8);
  EXPECT_TRUE(dX.isApprox(R * W));
  EXPECT_TRUE(db.isApprox(R.colwise().sum().transpose()));
}

TEST(Adam, FirstStepMovesEachCoordinateByLr) {
  cp::MatrixD v = cp::MatrixD::Zero(1, 3);
  cp::MatrixD g(1, 3);
  g << 2.0, -0.5, 1e-3;
  auto s = cp::AdamState<cp::MatrixD>::like(v);
  cp::adam_step(v, g, s, 0.1);
  EXPECT_NEAR(v(0, 0), -0.1, 1e-6);
  EXPECT_NEAR(v(0, 1), 0.1, 1e-6);
  EXPECT_NEAR(v(0, 2), -0.1, 1e-4);
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(Adam, NonFiniteGradientIsNumerical) {
  cp::MatrixD v = cp::MatrixD::Zero(1, 1);
  cp::MatrixD g = cp::MatrixD::Constant(1, 1, std::nan(""));
  auto s = cp::AdamState<cp::MatrixD>::like(v);
  EXPECT_THROW(cp::adam_step(v, g, s, 0.1), cp::NumericalError);
}

TEST(CosineLr, EndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(cp::cosine_lr(0, 100, 1.0, 0.1), 1.0);
  EXPECT_NEAR(cp::cosine_lr(100, 100, 1.0, 0.1), 0.1, 1e-12);
  EXPECT_NEAR(cp::cosine_lr(50, 100, 1.0, 0.1), 0.55, 1e-12);
}
