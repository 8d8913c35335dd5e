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

#include "concept_probe/fastica.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "concept_probe/error.hpp"

namespace concept_probe {
namespace {

// W <- (W W^T)^{-1/2} W
Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w * w.transpose());
  Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * w;
}

}  // namespace

MatrixD FastIcaResult::sources(const MatrixD& h) const {
  return (h.rowwise() - mean.transpose()) * unmixing.transpose();
}

MatrixD FastIcaResult::reconstruct(const MatrixD& z) const {
  MatrixD out = z * mixing.transpose();
  out.rowwise() += mean.transpose();
  return out;
}

FastIcaResult fastica_fit(const MatrixD& h, int m, const FastIcaOptions& opts) {
  const Eigen::Index n = h.rows(), d = h.cols();
  if (m < 1 || m > d)
    throw ValidationError("fastica_fit: components m=" + std::to_string(m) + " must lie in [1," +
                          std::to_string(d) + "]");
  if (n <= d) throw ValidationError("fastica_fit: needs N > d");

  FastIcaResult r;
  r.mean = h.colwise().mean().transpose();
  MatrixD centered = h.rowwise() - r.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& evals = eig.eigenvalues();  // ascending
  const double top = evals(d - 1);
  int rank = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    if (evals(i) > 1e-10 * std::max(top, 1e-300)) ++rank;
  if (rank < m)
    throw NumericalError("fastica_fit: whitening failed, covariance rank " + std::to_string(rank) +
                         " < " + std::to_string(m) + " components");

  r.whitening.resize(m, d);
  for (int c = 0; c < m; ++c) {
    Eigen::Index src = d - 1 - c;
    r.whitening.row(c) = eig.eigenvectors().col(src).transpose() / std::sqrt(evals(src));
  }
  Eigen::MatrixXd x = r.whitening * centered.transpose();  // m x n, unit covariance

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd w(m, m);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  w = symmetric_decorrelation(w);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::MatrixXd wx = w * x;
    Eigen::MatrixXd g = wx.array().tanh().matrix();
    Eigen::VectorXd g_prime_mean = (1.0 - g.array().square()).rowwise().sum().matrix() * inv_n;
    Eigen::MatrixXd w_new = g * x.transpose() * inv_n - g_prime_mean.asDiagonal() * w;
    w_new = symmetric_decorrelation(w_new);
    double lim = ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    w = w_new;
    r.iterations = it + 1;
    if (lim < opts.tol) {
      r.converged = true;
      break;
    }
  }

  r.rotation = w;
  r.unmixing = w * r.whitening;
  r.mixing = r.unmixing.completeOrthogonalDecomposition().pseudoInverse();
  return r;
}

}  // namespace concept_probe
