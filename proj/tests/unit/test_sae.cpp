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
#include <vector>

#include <gtest/gtest.h>

#include "concept_probe/optim.hpp"
#include "concept_probe/sae.hpp"

namespace cp = concept_probe;

namespace {

cp::MatrixD normal_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  cp::MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Brute-force sparsity loss: per column, sort rows by |z| (stable on index)
// and sum the magnitudes outside the first T.
double sparsity_oracle(const cp::MatrixD& z, double gamma) {
  const int B = static_cast<int>(z.rows());
  const int T = static_cast<int>(std::floor(gamma * B + 1e-9));
  double total = 0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    std::vector<int> order(B);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(z(a, j)) > std::abs(z(b, j)); });
    for (int r = T; r < B; ++r) total += std::abs(z(order[r], j));
  }
  return total;
}

}  // namespace

TEST(SparsityLoss, MatchesSortingOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cp::MatrixD z = normal_matrix(10, 7, seed).cwiseMax(0.0);
    for (double gamma : {0.1, 0.25, 0.5, 0.9}) {
      EXPECT_NEAR(cp::activation_sparsity_loss<double>(z, gamma), sparsity_oracle(z, gamma), 1e-12);
    }
  }
}

TEST(SparsityLoss, GammaOneIsFreeAndTinyGammaIsRejected) {
  cp::MatrixD z = normal_matrix(4, 3, 1).cwiseAbs();
  EXPECT_EQ(cp::activation_sparsity_loss<double>(z, 1.0), 0.0);
  EXPECT_THROW(cp::activation_sparsity_loss<double>(z, 0.1), cp::ValidationError);
}

TEST(SparsityLoss, RowsWithinTopTAreUnpenalized) {
  cp::MatrixD z(4, 1);
  z << 5, 1, 0, 2;
  cp::MatrixD dz = cp::MatrixD::Zero(4, 1);
  EXPECT_DOUBLE_EQ(cp::activation_sparsity_loss<double>(z, 0.5, &dz), 1.0);
  cp::MatrixD expect(4, 1);
  expect << 0, 1, 0, 0;
  EXPECT_EQ(dz, expect);
}

TEST(ReconstructionLoss, NormalizedByBatchVariance) {
  cp::MatrixD h = normal_matrix(6, 3, 2);
  cp::MatrixD mean_only = h.colwise().mean().replicate(6, 1);
  EXPECT_NEAR(cp::reconstruction_loss<double>(h, mean_only), 1.0, 1e-12);
  EXPECT_EQ(cp::reconstruction_loss<double>(h, h), 0.0);
  EXPECT_THROW(cp::reconstruction_loss<double>(h.topRows(1), h.topRows(1)), cp::ValidationError);
}

TEST(AuxLoss, ZeroWithoutDeadLatents) {
  cp::MatrixD r = normal_matrix(5, 4, 3), pre = normal_matrix(5, 6, 4), W = normal_matrix(4, 6, 5);
  EXPECT_EQ(cp::aux_dead_loss<double>(r, pre, std::vector<bool>(6, false), 2, W), 0.0);
}

TEST(LossWeights, LinearDecayOfRecontructionAndSparsity) {
  auto w = cp::loss_weights_at(25, 100, 2.0, 3.0, 4.0, 0.5);
  EXPECT_DOUBLE_EQ(w.recon, 1.5);
  EXPECT_DOUBLE_EQ(w.cls, 3.0);
  EXPECT_DOUBLE_EQ(w.sparse, 3.0);
  EXPECT_DOUBLE_EQ(w.alpha, 0.5);
  EXPECT_DOUBLE_EQ(cp::loss_weights_at(100, 100, 2.0, 3.0, 4.0, 0.5).recon, 0.0);
}

class ObjectiveGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ObjectiveGradient, EveryTermMatchesFiniteDifferences) {
  const std::uint64_t seed = GetParam();
  const int d = 5, m = 9, B = 6, k = 3, nc = 4, C = 3;
  cp::MatrixD h = normal_matrix(B, d, seed);
  cp::VectorD mean = h.colwise().mean().transpose();
  auto init = cp::init_params<double>(d, m, k, nc, C, seed, mean);
  init.sae.b_enc = normal_matrix(m, 1, seed + 100).col(0) * 0.2;
  init.head.W = normal_matrix(C, nc, seed + 200);
  std::vector<int> y{0, 1, 2, 2, 1, 0};
  std::vector<bool> dead(m, false);
  dead[1] = dead[4] = dead[7] = true;
  cp::ObjectiveShape shape{0.5, 2};
  for (const cp::LossWeights w : {cp::LossWeights{1, 0, 0, 0}, cp::LossWeights{0, 0, 1, 0},
                                  cp::LossWeights{0, 0, 0, 1}, cp::LossWeights{0.8, 0, 0.6, 0.4}}) {
    cp::SaeGrads<double> g{cp::SaeParams<double>::zeros_like(init.sae),
                           cp::ClassifierHead<double>::zeros_like(init.head)};
    cp::sae_objective<double>(init.sae, init.head, h, h, y, dead, w, shape, &g);
    std::vector<double> x, a;
    auto push = [](std::vector<double>& v, const auto& blk) {
      v.insert(v.end(), blk.data(), blk.data() + blk.size());
    };
    push(x, init.sae.W_enc), push(x, init.sae.b_enc), push(x, init.sae.W_dec), push(x, init.sae.b_dec);
    push(x, init.head.W), push(x, init.head.b);
    push(a, g.sae.W_enc), push(a, g.sae.b_enc), push(a, g.sae.W_dec), push(a, g.sae.b_dec);
    push(a, g.head.W), push(a, g.head.b);
    auto loss = [&](std::span<const double> v) {
      auto p = init;
      std::size_t o = 0;
      auto pull = [&](auto& blk) {
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o), blk.size(), blk.data());
        o += static_cast<std::size_t>(blk.size());
      };
      pull(p.sae.W_enc), pull(p.sae.b_enc), pull(p.sae.W_dec), pull(p.sae.b_dec);
      pull(p.head.W), pull(p.head.b);
      return cp::sae_objective<double>(p.sae, p.head, h, h, y, dead, w, shape).total;
    };
    EXPECT_LT(cp::finite_diff_gradcheck(loss, x, a).max_rel_error, 1e-6)
        << "weights " << w.recon << "/" << w.cls << "/" << w.sparse;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, ObjectiveGradient, ::testing::Values(1u, 2u, 3u));

TEST(AuxLoss, GradientWithDetachedResidual) {
  cp::MatrixD r = normal_matrix(5, 4, 9), pre = normal_matrix(5, 6, 10), W = normal_matrix(4, 6, 11);
  std::vector<bool> dead{true, false, true, true, false, true};
  cp::MatrixD d_pre = cp::MatrixD::Zero(5, 6), dW = cp::MatrixD::Zero(4, 6);
  cp::aux_dead_loss<double>(r, pre, dead, 2, W, &d_pre, &dW);
  std::vector<double> x(pre.data(), pre.data() + pre.size());
  x.insert(x.end(), W.data(), W.data() + W.size());
  std::vector<double> a(d_pre.data(), d_pre.data() + d_pre.size());
  a.insert(a.end(), dW.data(), dW.data() + dW.size());
  auto loss = [&](std::span<const double> v) {
    cp::MatrixD p = Eigen::Map<const cp::MatrixD>(v.data(), 5, 6);
    cp::MatrixD w = Eigen::Map<const cp::MatrixD>(v.data() + 30, 4, 6);
    return cp::aux_dead_loss<double>(r, p, dead, 2, w);
  };
  EXPECT_LT(cp::finite_diff_gradcheck(loss, x, a).max_rel_error, 1e-6);
}

TEST(Decoder, ProjectedGradientIsTangent) {
  cp::MatrixD W = normal_matrix(6, 4, 12);
  cp::normalize_decoder_columns(W);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(W.col(j).norm(), 1.0, 1e-12);
  cp::MatrixD g = normal_matrix(6, 4, 13);
  cp::project_decoder_grad(W, g);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(W.col(j).dot(g.col(j)), 0.0, 1e-12);
}

TEST(Init, EncoderIsDecoderTransposeAndValidatesWidth) {
  cp::VectorD mean = cp::VectorD::Zero(4);
  auto p = cp::init_params<double>(4, 6, 2, 3, 2, 1, mean);
  EXPECT_TRUE(p.sae.W_enc.isApprox(p.sae.W_dec.transpose()));
  EXPECT_THROW(cp::init_params<double>(4, 2, 2, 3, 2, 1, mean), cp::ValidationError);
  EXPECT_THROW(cp::init_params<double>(4, 6, 7, 3, 2, 1, mean), cp::ValidationError);
}
