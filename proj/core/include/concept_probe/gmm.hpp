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

#include <span>
#include <vector>

namespace concept_probe {

// Two-component 1-D Gaussian mixture used to split a concept's activation
// column into "activating" (high-mean side) and background.
struct Gmm1D {
  double weights[2] = {0.5, 0.5};
  double means[2] = {0.0, 0.0};  // means[0] <= means[1]
  double variances[2] = {1.0, 1.0};
  double threshold = 0.0;
  bool degenerate = false;  // all values equal; see activating()
  int iterations = 0;
  std::vector<double> log_likelihood_trace;

  bool activating(double value) const { return value > threshold; }
};

struct GmmOptions {
  int max_iter = 200;
  double tol = 1e-8;
  double variance_floor = 1e-8;
};

// EM on the raw values, seeded at the 10th/90th percentiles. The threshold is
// the equal-posterior point between the means (midpoint of the means when the
// quadratic has no root inside). Constant input is degenerate: all-zero input
// activates nothing, any other constant activates everything.
Gmm1D gmm1d_fit_threshold(std::span<const double> values, const GmmOptions& opts = {});

}  // namespace concept_probe
