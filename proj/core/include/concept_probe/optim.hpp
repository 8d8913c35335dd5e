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

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "concept_probe/error.hpp"
#include "concept_probe/linalg.hpp"

namespace concept_probe {

template <typename Plain>
struct ParamTensor {
  Plain value;
  Plain grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Plain>
struct AdamState {
  Plain m;
  Plain v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const Plain& p) {
    AdamState s;
    s.m.setZero(p.rows(), p.cols());
    s.v.setZero(p.rows(), p.cols());
    return s;
  }
};

// Bias-corrected Adam update of `value` from `grad`; zeroes `grad` afterwards.
template <typename Plain>
void adam_step(Plain& value, Plain& grad, AdamState<Plain>& s, double lr) {
  using T = typename Plain::Scalar;
  if (!grad.allFinite()) throw NumericalError("adam_step: non-finite gradient");
  if (s.m.size() != value.size()) s = AdamState<Plain>::like(value);
  ++s.t;
  const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
  s.m = b1 * s.m + (T(1) - b1) * grad;
  s.v = b2 * s.v + (T(1) - b2) * grad.cwiseProduct(grad);
  const T c1 = static_cast<T>(1.0 - std::pow(s.beta1, static_cast<double>(s.t)));
  const T c2 = static_cast<T>(1.0 - std::pow(s.beta2, static_cast<double>(s.t)));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(s.eps);
  value.array() -= step * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  grad.setZero();
}

template <typename Plain>
void adam_step(ParamTensor<Plain>& p, AdamState<Plain>& s, double lr) {
  adam_step(p.value, p.grad, s, lr);
}

// Cosine interpolation from lr0 at step 0 down to lr_min at total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min);

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences of `loss` around `x` with step `epsilon`, compared to
// `analytic` coordinate-wise by |a-n| / max(1e-12, |a|+|n|).
GradcheckResult finite_diff_gradcheck(const std::function<double(std::span<const double>)>& loss,
                                      std::span<const double> x,
                                      std::span<const double> analytic, double epsilon = 1e-6);

}  // namespace concept_probe
