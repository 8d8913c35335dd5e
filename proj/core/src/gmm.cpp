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

#include "concept_probe/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "concept_probe/error.hpp"

namespace concept_probe {
namespace {

double percentile(std::vector<double> sorted, double q) {
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double log_gauss(double x, double mean, double var) {
  double dx = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + dx * dx / var);
}

double log_sum_exp(double a, double b) {
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Equal-posterior point: log w0 N(x; m0, v0) = log w1 N(x; m1, v1).
double equal_posterior_point(const Gmm1D& g) {
  const double m0 = g.means[0], m1 = g.means[1];
  const double v0 = g.variances[0], v1 = g.variances[1];
  const double mid = 0.5 * (m0 + m1);
  // a x^2 + b x + c = 0
  double a = 0.5 / v1 - 0.5 / v0;
  double b = m0 / v0 - m1 / v1;
  double c = 0.5 * m1 * m1 / v1 - 0.5 * m0 * m0 / v0 + std::log(g.weights[0]) -
             std::log(g.weights[1]) - 0.5 * std::log(v0) + 0.5 * std::log(v1);
  std::vector<double> roots;
  if (std::abs(a) < 1e-300 * std::max(1.0 / v0, 1.0 / v1) || std::abs(a) < 1e-14 * std::abs(b)) {
    if (b != 0.0) roots.push_back(-c / b);
  } else {
    double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      double sq = std::sqrt(disc);
      // Numerically stable pair.
      double q = -0.5 * (b + std::copysign(sq, b));
      roots.push_back(q / a);
      if (q != 0.0) roots.push_back(c / q);
    }
  }
  double best = mid;
  double best_dist = std::numeric_limits<double>::infinity();
  for (double r : roots) {
    if (r > m0 && r < m1 && std::abs(r - mid) < best_dist) {
      best = r;
      best_dist = std::abs(r - mid);
    }
  }
  return best;
}

}  // namespace

Gmm1D gmm1d_fit_threshold(std::span<const double> values, const GmmOptions& opts) {
  if (values.size() < 8)
    throw ValidationError("gmm1d_fit_threshold needs at least 8 values, got " +
                          std::to_string(values.size()));
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("gmm1d_fit_threshold: non-finite value");

  Gmm1D g;
  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) {
    g.degenerate = true;
    g.means[0] = g.means[1] = *mn;
    g.variances[0] = g.variances[1] = opts.variance_floor;
    g.threshold = (*mn == 0.0) ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
    return g;
  }

  const auto n = static_cast<double>(values.size());
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double mean_all = 0.0;
  for (double v : values) mean_all += v;
  mean_all /= n;
  double var_all = 0.0;
  for (double v : values) var_all += (v - mean_all) * (v - mean_all);
  var_all = std::max(var_all / n, opts.variance_floor);

  g.means[0] = percentile(sorted, 0.10);
  g.means[1] = percentile(sorted, 0.90);
  if (g.means[0] == g.means[1]) {
    g.means[0] = sorted.front();
    g.means[1] = sorted.back();
  }
  g.variances[0] = g.variances[1] = var_all;

  std::vector<double> resp(values.size());
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iter; ++it) {
    // E step.
    double ll = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      double l0 = std::log(g.weights[0]) + log_gauss(values[i], g.means[0], g.variances[0]);
      double l1 = std::log(g.weights[1]) + log_gauss(values[i], g.means[1], g.variances[1]);
      double lse = log_sum_exp(l0, l1);
      resp[i] = std::exp(l1 - lse);
      ll += lse;
    }
    g.log_likelihood_trace.push_back(ll);
    g.iterations = it + 1;
    if (std::abs(ll - prev_ll) <= opts.tol * std::max(1.0, std::abs(ll))) break;
    prev_ll = ll;

    // M step.
    double r1 = 0.0, s1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      r1 += resp[i];
      s1 += resp[i] * values[i];
      s0 += (1.0 - resp[i]) * values[i];
    }
    double r0 = n - r1;
    if (r0 <= 0.0 || r1 <= 0.0) break;  // one component absorbed everything
    g.weights[0] = r0 / n;
    g.weights[1] = r1 / n;
    g.means[0] = s0 / r0;
    g.means[1] = s1 / r1;
    double q0 = 0.0, q1 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      double d0 = values[i] - g.means[0], d1 = values[i] - g.means[1];
      q0 += (1.0 - resp[i]) * d0 * d0;
      q1 += resp[i] * d1 * d1;
    }
    g.variances[0] = std::max(q0 / r0, opts.variance_floor);
    g.variances[1] = std::max(q1 / r1, opts.variance_floor);
  }

  if (g.means[0] > g.means[1]) {
    std::swap(g.means[0], g.means[1]);
    std::swap(g.variances[0], g.variances[1]);
    std::swap(g.weights[0], g.weights[1]);
  }
  g.threshold = equal_posterior_point(g);
  return g;
}

}  // namespace concept_probe
