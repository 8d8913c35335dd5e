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

// Dense kernels with hand-written backward passes. Templated on the scalar so
// training runs in float and gradient checks in double.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "concept_probe/error.hpp"
#include "concept_probe/linalg.hpp"

namespace concept_probe {

// y = W x + b for every row x of X: Y = X W^T + 1 b^T.
template <typename T>
Mat<T> linear_forward(const Mat<T>& X, const Mat<T>& W, const Vec<T>& b) {
  if (X.cols() != W.cols() || W.rows() != b.size())
    throw ValidationError("linear_map: shape mismatch");
  Mat<T> Y = X * W.transpose();
  Y.rowwise() += b.transpose();
  return Y;
}

// Accumulates dW += dY^T X, db += colsum(dY); returns dX = dY W.
template <typename T>
Mat<T> linear_backward(const Mat<T>& X, const Mat<T>& W, const Mat<T>& dY, Mat<T>& dW,
                       Vec<T>& db) {
  dW.noalias() += dY.transpose() * X;
  db += dY.colwise().sum().transpose();
  return dY * W;
}

// Indices of the k largest entries of v, ties broken by lowest index. The
// returned indices are sorted ascending.
template <typename T>
std::vector<int> top_k_indices(std::span<const T> v, int k) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](int a, int b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
  if (k < static_cast<int>(idx.size())) {
    std::nth_element(idx.begin(), idx.begin() + k, idx.end(), before);
    idx.resize(k);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Keeps the k largest pre-activations of each row, zeroes the rest and clamps
// retained negatives to 0. `mask` (same shape) receives 1 where the output is
// a retained positive entry, which is exactly where gradient passes.
template <typename T>
Mat<T> topk_activation(const Mat<T>& pre, int k, Mat<T>* mask = nullptr) {
  if (k < 1 || k > pre.cols())
    throw ValidationError("topk_activation: k=" + std::to_string(k) + " outside [1," +
                          std::to_string(pre.cols()) + "]");
  Mat<T> out = Mat<T>::Zero(pre.rows(), pre.cols());
  if (mask) mask->setZero(pre.rows(), pre.cols());
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    std::span<const T> row(pre.row(i).data(), static_cast<std::size_t>(pre.cols()));
    for (int j : top_k_indices(row, k)) {
      if (row[j] > T(0)) {
        out(i, j) = row[j];
        if (mask) (*mask)(i, j) = T(1);
      }
    }
  }
  return out;
}

template <typename T>
Vec<T> topk_activation(const Vec<T>& v, int k) {
  Mat<T> row = v.transpose();
  return topk_activation<T>(row, k).row(0).transpose();
}

template <typename T>
Vec<T> softmax(const Vec<T>& logits) {
  Vec<T> p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

// Row-wise softmax.
template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits) {
  Mat<T> p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto shifted = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    p.row(i) = shifted / shifted.sum();
  }
  return p;
}

// -log softmax(logits)[target]; grad (optional) = softmax - onehot.
template <typename T>
T softmax_cross_entropy(const Vec<T>& logits, int target, Vec<T>* grad = nullptr) {
  if (target < 0 || target >= logits.size())
    throw ValidationError("softmax_cross_entropy: target " + std::to_string(target) +
                          " outside [0," + std::to_string(logits.size()) + ")");
  T mx = logits.maxCoeff();
  T lse = mx + std::log((logits.array() - mx).exp().sum());
  if (grad) {
    *grad = (logits.array() - lse).exp();
    (*grad)(target) -= T(1);
  }
  return lse - logits(target);
}

// Mean cross-entropy over rows; dlogits (optional) is the gradient of the mean.
template <typename T>
T batch_cross_entropy(const Mat<T>& logits, std::span<const int> targets,
                      Mat<T>* dlogits = nullptr) {
  const Eigen::Index n = logits.rows();
  if (static_cast<std::size_t>(n) != targets.size())
    throw ValidationError("batch_cross_entropy: target count mismatch");
  if (dlogits) dlogits->resize(n, logits.cols());
  T total = 0;
  Vec<T> g;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec<T> row = logits.row(i).transpose();
    total += softmax_cross_entropy<T>(row, targets[i], dlogits ? &g : nullptr);
    if (dlogits) dlogits->row(i) = g.transpose() / static_cast<T>(n);
  }
  return total / static_cast<T>(n);
}

}  // namespace concept_probe
