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

#include "concept_probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "concept_probe/error.hpp"

namespace concept_probe {
namespace {

MatrixD onehot(std::span<const int> labels, int num_classes) {
  MatrixD y = MatrixD::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ValidationError("probe: label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

MatrixD row_softmax(MatrixD logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

// Largest eigenvalue of x^T x / n by power iteration.
double gram_norm(const MatrixD& x) {
  VectorD v = VectorD::Ones(x.cols()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    VectorD w = x.transpose() * (x * v) / static_cast<double>(x.rows());
    double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    if (std::abs(nw - lambda) <= 1e-9 * nw) return nw;
    lambda = nw;
  }
  return lambda;
}

double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

int support_size(const MatrixD& w) {
  int s = 0;
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    if (w.col(j).cwiseAbs().maxCoeff() > 0.0) ++s;
  return s;
}

}  // namespace

double l1_logistic_lambda_max(const MatrixD& x, std::span<const int> labels, int num_classes) {
  MatrixD y = onehot(labels, num_classes);
  VectorD freq = y.colwise().mean().transpose();
  MatrixD resid = y.rowwise() - freq.transpose();
  MatrixD g = resid.transpose() * x / static_cast<double>(x.rows());
  return g.cwiseAbs().maxCoeff();
}

LogisticModel fit_l1_logistic(const MatrixD& x, std::span<const int> labels, int num_classes,
                              double lambda, const L1LogisticOptions& opts,
                              const LogisticModel* warm) {
  if (static_cast<std::size_t>(x.rows()) != labels.size())
    throw ValidationError("probe: feature rows and labels differ in length");
  const auto n = static_cast<double>(x.rows());
  MatrixD y = onehot(labels, num_classes);
  // Softmax cross-entropy has curvature at most 1/2 along any direction.
  const double lip = 0.5 * (gram_norm(x) + 1.0);
  const double step = 1.0 / lip;

  LogisticModel cur;
  if (warm) {
    cur = *warm;
  } else {
    cur.W = MatrixD::Zero(num_classes, x.cols());
    cur.b = VectorD::Zero(num_classes);
  }
  LogisticModel mom = cur;
  double t = 1.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    MatrixD logits = x * mom.W.transpose();
    logits.rowwise() += mom.b.transpose();
    MatrixD resid = row_softmax(std::move(logits)) - y;
    MatrixD gw = resid.transpose() * x / n;
    VectorD gb = resid.colwise().sum().transpose() / n;

    LogisticModel next;
    next.W = (mom.W - step * gw).unaryExpr([&](double v) { return soft(v, step * lambda); });
    next.b = mom.b - step * gb;

    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double beta = (t - 1.0) / t_next;
    double change = (next.W - cur.W).norm() + (next.b - cur.b).norm();
    double scale = 1.0 + cur.W.norm() + cur.b.norm();
    mom.W = next.W + beta * (next.W - cur.W);
    mom.b = next.b + beta * (next.b - cur.b);
    cur = std::move(next);
    t = t_next;
    if (change <= opts.tol * scale) break;
  }
  return cur;
}

ProbeSelection logistic_probe_select(const MatrixF& z, std::span<const int> labels,
                                     int num_classes, const ProbeOptions& opts) {
  if (static_cast<std::size_t>(z.rows()) != labels.size())
    throw ValidationError("probe: activations and labels differ in length");
  if (opts.n < 1) throw ValidationError("probe: n must be >= 1");

  std::vector<int> rows(z.rows());
  std::iota(rows.begin(), rows.end(), 0);
  if (static_cast<int>(rows.size()) > opts.max_rows) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(opts.max_rows);
    std::sort(rows.begin(), rows.end());
  }

  std::vector<int> active;
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    if ((z.col(j).array() != 0.0f).any()) active.push_back(static_cast<int>(j));

  ProbeSelection out;
  out.active_features = static_cast<int>(active.size());
  if (active.empty()) throw NumericalError("probe: no latent ever fires");
  if (out.active_features <= opts.n) {
    out.selected = active;
    out.support = out.active_features;
    if (out.active_features < opts.n)
      out.warning = "only " + std::to_string(out.active_features) + " active features for n=" +
                    std::to_string(opts.n);
    return out;
  }

  MatrixD x(rows.size(), active.size());
  std::vector<int> sub_labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sub_labels[i] = labels[rows[i]];
    for (std::size_t q = 0; q < active.size(); ++q) x(i, q) = z(rows[i], active[q]);
  }
  for (Eigen::Index q = 0; q < x.cols(); ++q) {
    double mean = x.col(q).mean();
    x.col(q).array() -= mean;
    double sd = std::sqrt(x.col(q).squaredNorm() / static_cast<double>(x.rows()));
    if (sd > 0) x.col(q) /= sd;
  }

  const double lmax = l1_logistic_lambda_max(x, sub_labels, num_classes);
  double lo = std::log(lmax * 1e-4), hi = std::log(lmax);
  LogisticModel warm;
  warm.W = MatrixD::Zero(num_classes, x.cols());
  warm.b = VectorD::Zero(num_classes);
  // Keep the largest lambda whose support still reaches n.
  LogisticModel best = fit_l1_logistic(x, sub_labels, num_classes, std::exp(lo), opts.solver, &warm);
  double best_lambda = std::exp(lo);
  int best_support = support_size(best.W);
  for (int it = 0; it < opts.bisect_steps && best_support != opts.n; ++it) {
    double mid = 0.5 * (lo + hi);
    LogisticModel fit = fit_l1_logistic(x, sub_labels, num_classes, std::exp(mid), opts.solver, &best);
    int s = support_size(fit.W);
    if (s >= opts.n) {
      lo = mid;
      best = std::move(fit);
      best_lambda = std::exp(mid);
      best_support = s;
    } else {
      hi = mid;
    }
  }

  std::vector<double> score(active.size());
  for (std::size_t q = 0; q < active.size(); ++q)
    score[q] = best.W.col(static_cast<Eigen::Index>(q)).cwiseAbs().maxCoeff();
  std::vector<int> order(active.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return active[a] < active[b];
  });
  for (int q = 0; q < opts.n; ++q) out.selected.push_back(active[order[q]]);
  out.lambda = best_lambda;
  out.support = best_support;
  if (best_support != opts.n)
    out.warning = "support " + std::to_string(best_support) + " at the nearest lambda";
  return out;
}

}  // namespace concept_probe
