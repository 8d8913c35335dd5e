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
#include <span>
#include <string>
#include <vector>

#include "concept_probe/linalg.hpp"

namespace concept_probe {

struct LogisticModel {
  MatrixD W;  // C x m
  VectorD b;  // C
};

struct L1LogisticOptions {
  int max_iter = 200;
  double tol = 1e-6;
};

// Multinomial logistic regression with an L1 penalty on W (not on b), fit by
// FISTA. `warm` seeds the iterate when given.
LogisticModel fit_l1_logistic(const MatrixD& x, std::span<const int> labels, int num_classes,
                              double lambda, const L1LogisticOptions& opts = {},
                              const LogisticModel* warm = nullptr);

// Smallest lambda for which the all-zero W is optimal.
double l1_logistic_lambda_max(const MatrixD& x, std::span<const int> labels, int num_classes);

struct ProbeOptions {
  int n = 20;
  int max_rows = 5000;
  int bisect_steps = 12;
  std::uint64_t seed = 0;
  L1LogisticOptions solver;
};

struct ProbeSelection {
  std::vector<int> selected;  // ranked by max-over-classes |weight|
  int active_features = 0;
  double lambda = 0.0;
  int support = 0;  // nonzero features at `lambda`
  std::string warning;
};

// Chooses n latents of `z` for a probe-selected concept set: features are
// standardized, the L1 strength is bisected in log space toward a support of
// n, and the n largest max-over-classes |weight| features are returned.
// Columns that never fire are never selected.
ProbeSelection logistic_probe_select(const MatrixF& z, std::span<const int> labels,
                                     int num_classes, const ProbeOptions& opts = {});

}  // namespace concept_probe
