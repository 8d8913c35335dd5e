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

#include "concept_probe/shapley.hpp"

#include <bit>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "concept_probe/error.hpp"
#include "concept_probe/metrics.hpp"
#include "concept_probe/parallel.hpp"

namespace concept_probe {

ShapleyResult shapley_monte_carlo(const CoalitionValue& value, int m, int n_permutations,
                                  std::uint64_t seed) {
  if (n_permutations < 1) throw ValidationError("shapley: n_permutations must be >= 1");
  if (m < 1) throw ValidationError("shapley: need at least one player");
  ShapleyResult r;
  r.permutations = n_permutations;
  r.v_empty = value(std::vector<bool>(m, false));
  r.v_full = value(std::vector<bool>(m, true));

  // marginals[p * m + j]
  std::vector<double> marginals(static_cast<std::size_t>(n_permutations) * m);
  parallel_for(static_cast<std::size_t>(n_permutations), [&](std::size_t p) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(p)};
    std::mt19937_64 rng(seq);
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> coalition(m, false);
    double prev = r.v_empty;
    for (int q = 0; q < m; ++q) {
      coalition[order[q]] = true;
      double cur = q + 1 == m ? r.v_full : value(coalition);
      marginals[p * m + order[q]] = cur - prev;
      prev = cur;
    }
  });

  r.values.assign(m, 0.0);
  r.std_errors.assign(m, 0.0);
  for (int j = 0; j < m; ++j) {
    double mean = 0.0;
    for (int p = 0; p < n_permutations; ++p) mean += marginals[static_cast<std::size_t>(p) * m + j];
    mean /= n_permutations;
    double var = 0.0;
    for (int p = 0; p < n_permutations; ++p) {
      double dv = marginals[static_cast<std::size_t>(p) * m + j] - mean;
      var += dv * dv;
    }
    r.values[j] = mean;
    if (n_permutations > 1)
      r.std_errors[j] = std::sqrt(var / (n_permutations - 1) / n_permutations);
  }
  return r;
}

ShapleyResult shapley_exact(const CoalitionValue& value, int m) {
  if (m < 1 || m > 20) throw ValidationError("shapley_exact: m must lie in [1, 20]");
  const std::size_t n_sets = std::size_t{1} << m;
  std::vector<double> v(n_sets);
  parallel_for(n_sets, [&](std::size_t mask) {
    std::vector<bool> coalition(m);
    for (int j = 0; j < m; ++j) coalition[j] = (mask >> j) & 1U;
    v[mask] = value(coalition);
  });
  // weight(|S|) = |S|! (m - |S| - 1)! / m!
  std::vector<double> weight(m);
  for (int s = 0; s < m; ++s)
    weight[s] = std::exp(std::lgamma(s + 1.0) + std::lgamma(m - s) - std::lgamma(m + 1.0));
  ShapleyResult r;
  r.exact = true;
  r.values.assign(m, 0.0);
  r.std_errors.assign(m, 0.0);
  r.v_empty = v[0];
  r.v_full = v[n_sets - 1];
  for (int j = 0; j < m; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double acc = 0.0;
    for (std::size_t mask = 0; mask < n_sets; ++mask) {
      if (mask & bit) continue;
      acc += weight[std::popcount(mask)] * (v[mask | bit] - v[mask]);
    }
    r.values[j] = acc;
  }
  return r;
}

CoalitionValue racc_coalition_value(const ConceptModel& model, const DownstreamHead& head,
                                    const ActivationDataset& ds) {
  auto z = std::make_shared<MatrixF>(model.encode(ds.hidden));
  auto original = std::make_shared<std::vector<int>>(
      predict_labels(head_probabilities(head, ds.hidden, ds.sentence_ids)));
  return [&model, &head, &ds, z, original](const std::vector<bool>& coalition) {
    if (coalition.size() != static_cast<std::size_t>(z->cols()))
      throw ValidationError("shapley: coalition size differs from the concept count");
    MatrixF masked = *z;
    for (Eigen::Index j = 0; j < masked.cols(); ++j)
      if (!coalition[j]) masked.col(j).setZero();
    auto pred = predict_labels(head_probabilities(head, model.decode(masked), ds.sentence_ids));
    int same = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) same += pred[i] == (*original)[i];
    return static_cast<double>(same) / static_cast<double>(pred.size());
  };
}

ShapleyResult shapley_completeness(const ConceptModel& model, const DownstreamHead& head,
                                   const ActivationDataset& ds, int n_permutations,
                                   std::uint64_t seed) {
  auto value = racc_coalition_value(model, head, ds);
  if (model.num_concepts() <= 12) return shapley_exact(value, model.num_concepts());
  return shapley_monte_carlo(value, model.num_concepts(), n_permutations, seed);
}

}  // namespace concept_probe
