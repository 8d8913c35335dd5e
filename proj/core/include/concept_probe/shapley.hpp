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
#include <functional>
#include <vector>

#include "concept_probe/concept_model.hpp"
#include "concept_probe/dataset.hpp"
#include "concept_probe/head.hpp"

namespace concept_probe {

// v(S) for a coalition given as a membership mask over m players.
using CoalitionValue = std::function<double(const std::vector<bool>&)>;

struct ShapleyResult {
  std::vector<double> values;
  std::vector<double> std_errors;  // zero for exact enumeration
  double v_full = 0.0;
  double v_empty = 0.0;
  int permutations = 0;
  bool exact = false;
};

// Monte-Carlo permutation estimate. Permutation p draws its order from an RNG
// seeded by (seed, p); results are independent of the thread count.
ShapleyResult shapley_monte_carlo(const CoalitionValue& value, int m, int n_permutations,
                                  std::uint64_t seed);

// Exact Shapley values from all 2^m coalitions; m <= 20.
ShapleyResult shapley_exact(const CoalitionValue& value, int m);

// Recovery accuracy with only the coalition's concepts unmasked.
CoalitionValue racc_coalition_value(const ConceptModel& model, const DownstreamHead& head,
                                    const ActivationDataset& ds);

// Dispatches to exact enumeration for m <= 12, Monte Carlo otherwise.
ShapleyResult shapley_completeness(const ConceptModel& model, const DownstreamHead& head,
                                   const ActivationDataset& ds, int n_permutations,
                                   std::uint64_t seed);

}  // namespace concept_probe
