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

#pragma once

#include <cstdint>

#include "concept_probe/linalg.hpp"

namespace concept_probe {

struct FastIcaOptions {
  int max_iter = 1000;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

// Parallel (symmetric) FastICA with the logcosh contrast on unit-variance
// whitened data.
struct FastIcaResult {
  VectorD mean;       // d
  MatrixD whitening;  // m x d, maps centered data to unit covariance
  MatrixD rotation;   // m x m, orthonormal in whitened space
  MatrixD unmixing;   // m x d = rotation * whitening
  MatrixD mixing;     // d x m, pseudo-inverse of unmixing
  int iterations = 0;
  bool converged = false;

  MatrixD sources(const MatrixD& h) const;      // N x m
  MatrixD reconstruct(const MatrixD& z) const;  // N x d
};

// Throws ValidationError when m > d or N <= d, NumericalError when the
// covariance has rank below m (message carries the rank).
FastIcaResult fastica_fit(const MatrixD& h, int m, const FastIcaOptions& opts = {});

}  // namespace concept_probe
