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

#include "concept_probe/pca.hpp"

#include <Eigen/Eigenvalues>

#include "concept_probe/error.hpp"

namespace concept_probe {

MatrixD Pca2::project(const MatrixD& points) const {
  if (points.cols() != mean.size()) throw ValidationError("pca project: dimension mismatch");
  return (points.rowwise() - mean.transpose()) * components.transpose();
}

Pca2 pca2_fit(const MatrixD& h) {
  if (h.rows() < 3) throw ValidationError("pca2_fit needs at least 3 rows");
  if (h.cols() < 2) throw ValidationError("pca2_fit needs at least 2 dimensions");
  Pca2 out;
  out.mean = h.colwise().mean().transpose();
  MatrixD centered = h.rowwise() - out.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(h.rows() - 1);
  if (!(cov.trace() > 0.0)) throw NumericalError("pca2_fit: rank-0 covariance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  out.components.resize(2, d);
  out.explained_variance.resize(2);
  for (int c = 0; c < 2; ++c) {
    // Eigenvalues come back ascending.
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.components.row(c) = v.normalized().transpose();
    out.explained_variance(c) = std::max(0.0, eig.eigenvalues()(d - 1 - c));
  }
  return out;
}

}  // namespace concept_probe
