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
#include <numbers>
#include <string>
#include <vector>

#include "concept_probe/optim.hpp"

namespace concept_probe {

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double lr_min) {
  if (total_steps <= 0) throw ValidationError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw ValidationError("cosine_lr: step " + std::to_string(step) + " outside [0," +
                          std::to_string(total_steps) + "]");
  double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

GradcheckResult finite_diff_gradcheck(const std::function<double(std::span<const double>)>& loss,
                                      std::span<const double> x,
                                      std::span<const double> analytic, double epsilon) {
  if (x.size() != analytic.size())
    throw ValidationError("finite_diff_gradcheck: gradient size mismatch");
  std::vector<double> probe(x.begin(), x.end());
  GradcheckResult out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + epsilon;
    double up = loss(probe);
    probe[i] = x[i] - epsilon;
    double down = loss(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericalError("finite_diff_gradcheck: non-finite loss at coordinate " +
                           std::to_string(i));
    double numeric = (up - down) / (2.0 * epsilon);
    double a = analytic[i];
    double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
    if (i == 0 || rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_index = i;
      out.analytic_at_worst = a;
      out.numeric_at_worst = numeric;
    }
  }
  return out;
}

}  // namespace concept_probe
