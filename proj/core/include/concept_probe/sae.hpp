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

// TopK sparse autoencoder with a joint classifier on the leading latents and
// the activation-rate sparsity penalty. Every loss has a hand-written backward
// pass; the whole objective is templated so it can be gradient-checked in
// double while training runs in float.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "concept_probe/error.hpp"
#include "concept_probe/layers.hpp"
#include "concept_probe/linalg.hpp"

namespace concept_probe {

template <typename T>
struct SaeParams {
  Mat<T> W_enc;  // m x d
  Vec<T> b_enc;  // m
  Mat<T> W_dec;  // d x m, unit-norm columns
  Vec<T> b_dec;  // d
  int k = 1;

  int latent_dim() const { return static_cast<int>(W_enc.rows()); }
  int input_dim() const { return static_cast<int>(W_enc.cols()); }

  template <typename U>
  SaeParams<U> cast() const {
    return {W_enc.template cast<U>(), b_enc.template cast<U>(), W_dec.template cast<U>(),
            b_dec.template cast<U>(), k};
  }

  static SaeParams zeros_like(const SaeParams& p) {
    return {Mat<T>::Zero(p.W_enc.rows(), p.W_enc.cols()), Vec<T>::Zero(p.b_enc.size()),
            Mat<T>::Zero(p.W_dec.rows(), p.W_dec.cols()), Vec<T>::Zero(p.b_dec.size()), p.k};
  }
};

// g_theta: a single affine map from z_class (the first n_class latents) to
// class logits.
template <typename T>
struct ClassifierHead {
  Mat<T> W;  // C x n_class
  Vec<T> b;  // C

  int n_class() const { return static_cast<int>(W.cols()); }
  int num_classes() const { return static_cast<int>(W.rows()); }

  template <typename U>
  ClassifierHead<U> cast() const {
    return {W.template cast<U>(), b.template cast<U>()};
  }
  static ClassifierHead zeros_like(const ClassifierHead& h) {
    return {Mat<T>::Zero(h.W.rows(), h.W.cols()), Vec<T>::Zero(h.b.size())};
  }
};

template <typename T>
struct SaeInit {
  SaeParams<T> sae;
  ClassifierHead<T> head;
};

// Decoder columns random then unit-normalized, encoder tied to the decoder
// transpose, b_enc = 0, b_dec = dataset mean, classifier near zero.
template <typename T>
SaeInit<T> init_params(int d, int m, int k, int n_class, int num_classes, std::uint64_t seed,
                       const Vec<T>& dataset_mean) {
  if (m < n_class)
    throw ValidationError("init_params: latent width m=" + std::to_string(m) +
                          " is smaller than n_class=" + std::to_string(n_class));
  if (k < 1 || k > m) throw ValidationError("init_params: k must lie in [1, m]");
  if (dataset_mean.size() != d) throw ValidationError("init_params: dataset mean has wrong size");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  SaeInit<T> out;
  auto& p = out.sae;
  p.k = k;
  p.W_dec.resize(d, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < d; ++i) p.W_dec(i, j) = static_cast<T>(normal(rng));
    p.W_dec.col(j).normalize();
  }
  p.W_enc = p.W_dec.transpose();
  p.b_enc = Vec<T>::Zero(m);
  p.b_dec = dataset_mean;
  out.head.W.resize(num_classes, n_class);
  for (Eigen::Index i = 0; i < out.head.W.size(); ++i)
    out.head.W.data()[i] = static_cast<T>(0.01 * normal(rng));
  out.head.b = Vec<T>::Zero(num_classes);
  return out;
}

template <typename T>
Mat<T> sae_pre_activations(const Mat<T>& h, const SaeParams<T>& p) {
  return linear_forward<T>(h, p.W_enc, p.b_enc);
}

// z = TopK(W_enc h + b_enc), row-wise.
template <typename T>
Mat<T> encode(const Mat<T>& h, const SaeParams<T>& p, Mat<T>* mask = nullptr) {
  return topk_activation<T>(sae_pre_activations(h, p), p.k, mask);
}

// h_hat = W_dec z + b_dec, row-wise.
template <typename T>
Mat<T> decode(const Mat<T>& z, const SaeParams<T>& p) {
  return linear_forward<T>(z, p.W_dec, p.b_dec);
}

// sum_i ||h_i - h_hat_i||^2 / sum_i ||h_i - mean(h)||^2. d_hhat receives the
// gradient with respect to h_hat.
template <typename T>
T reconstruction_loss(const Mat<T>& h, const Mat<T>& h_hat, Mat<T>* d_hhat = nullptr) {
  if (h.rows() < 2) throw ValidationError("reconstruction_loss: batch size must be >= 2");
  Vec<T> mean = h.colwise().mean().transpose();
  T denom = (h.rowwise() - mean.transpose()).squaredNorm();
  if (!(denom > T(0))) throw NumericalError("reconstruction_loss: zero-variance batch");
  Mat<T> r = h - h_hat;
  if (d_hhat) *d_hhat = r * (T(-2) / denom);
  return r.squaredNorm() / denom;
}

// Auxiliary dead-latent loss: reconstruct the (detached) main residual using
// only the top-k_aux dead latents of each row, normalized by the residual's
// own variance. Accumulates into d_pre and dW_dec when given.
template <typename T>
T aux_dead_loss(const Mat<T>& residual, const Mat<T>& pre, const std::vector<bool>& dead_mask,
                int k_aux, const Mat<T>& W_dec, Mat<T>* d_pre = nullptr, Mat<T>* dW_dec = nullptr,
                T weight = T(1)) {
  std::vector<int> dead;
  for (std::size_t j = 0; j < dead_mask.size(); ++j)
    if (dead_mask[j]) dead.push_back(static_cast<int>(j));
  const int kk = std::min<int>(k_aux, static_cast<int>(dead.size()));
  if (kk <= 0 || residual.rows() < 1) return T(0);
  Vec<T> mean = residual.colwise().mean().transpose();
  T denom = (residual.rowwise() - mean.transpose()).squaredNorm();
  if (!(denom > T(0))) return T(0);

  const Eigen::Index B = pre.rows(), m = pre.cols();
  Mat<T> z_aux = Mat<T>::Zero(B, m);
  std::vector<T> row(dead.size());
  for (Eigen::Index i = 0; i < B; ++i) {
    for (std::size_t q = 0; q < dead.size(); ++q) row[q] = pre(i, dead[q]);
    for (int q : top_k_indices<T>(std::span<const T>(row), kk))
      if (row[q] > T(0)) z_aux(i, dead[q]) = row[q];
  }
  Mat<T> e_hat = z_aux * W_dec.transpose();
  Mat<T> diff = residual - e_hat;
  T loss = diff.squaredNorm() / denom;
  if (d_pre || dW_dec) {
    Mat<T> d_ehat = diff * (T(-2) * weight / denom);
    if (dW_dec) dW_dec->noalias() += d_ehat.transpose() * z_aux;
    if (d_pre) {
      Mat<T> dz = d_ehat * W_dec;
      for (Eigen::Index i = 0; i < B; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
          if (z_aux(i, j) > T(0)) (*d_pre)(i, j) += dz(i, j);
    }
  }
  return loss;
}

// Mean cross-entropy of head(z[:, :n_class]) against the classifier's own
// predicted labels. Accumulates into dz (first n_class columns) and head_grad.
template <typename T>
T classifier_loss(const Mat<T>& z, const ClassifierHead<T>& head, std::span<const int> labels,
                  Mat<T>* dz = nullptr, ClassifierHead<T>* head_grad = nullptr,
                  T weight = T(1)) {
  const int nc = head.n_class();
  if (nc > z.cols()) throw ValidationError("classifier_loss: n_class exceeds latent width");
  for (int y : labels)
    if (y < 0 || y >= head.num_classes())
      throw ValidationError("classifier_loss: label " + std::to_string(y) + " out of range");
  Mat<T> zc = z.leftCols(nc);
  Mat<T> logits = linear_forward<T>(zc, head.W, head.b);
  Mat<T> dlogits;
  T loss = batch_cross_entropy<T>(logits, labels, (dz || head_grad) ? &dlogits : nullptr);
  if (dz || head_grad) {
    dlogits *= weight;
    if (head_grad) {
      head_grad->W.noalias() += dlogits.transpose() * zc;
      head_grad->b += dlogits.colwise().sum().transpose();
    }
    if (dz) dz->leftCols(nc) += dlogits * head.W;
  }
  return loss;
}

// Rows in the top-T of each column by |z| (ties to the lowest row index).
// Entry (i, j) is true when row i belongs to I_j.
template <typename T>
std::vector<std::vector<bool>> top_t_row_sets(const Mat<T>& z, int t) {
  const Eigen::Index B = z.rows(), m = z.cols();
  std::vector<std::vector<bool>> keep(static_cast<std::size_t>(m), std::vector<bool>(B, false));
  std::vector<T> col(B);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < B; ++i) col[i] = std::abs(z(i, j));
    for (int i : top_k_indices<T>(std::span<const T>(col), std::min<int>(t, B))) keep[j][i] = true;
  }
  return keep;
}

// sum_j sum_{i not in I_j} |z_ij| with T = floor(gamma B); index sets are
// constants for the backward pass, which adds weight * sign(z) outside them.
template <typename T>
T activation_sparsity_loss(const Mat<T>& z, double gamma, Mat<T>* dz = nullptr,
                           T weight = T(1)) {
  const Eigen::Index B = z.rows();
  const auto t = static_cast<int>(std::floor(gamma * static_cast<double>(B) + 1e-9));
  if (t < 1) throw ValidationError("activation_sparsity_loss: T = floor(gamma B) is 0");
  if (t >= B) return T(0);
  auto keep = top_t_row_sets(z, t);
  T loss = 0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < B; ++i) {
      if (keep[j][i]) continue;
      T v = z(i, j);
      loss += std::abs(v);
      if (dz && v != T(0)) (*dz)(i, j) += weight * (v > T(0) ? T(1) : T(-1));
    }
  }
  return loss;
}

struct LossWeights {
  double recon = 1.0;   // lambda1(step)
  double alpha = 0.0;   // auxiliary weight inside the reconstruction term
  double cls = 0.0;     // lambda2
  double sparse = 0.0;  // lambda3(step)
};

// lambda1 and lambda3 decay linearly per step from their initial values to 0
// at total_steps; lambda2 is constant.
inline LossWeights loss_weights_at(std::int64_t step, std::int64_t total_steps, double lambda1,
                                   double lambda2, double lambda3, double alpha) {
  double frac = total_steps > 0 ? 1.0 - static_cast<double>(step) / static_cast<double>(total_steps)
                                : 1.0;
  frac = std::clamp(frac, 0.0, 1.0);
  return {lambda1 * frac, alpha, lambda2, lambda3 * frac};
}

struct LossBreakdown {
  double recon = 0, aux = 0, cls = 0, sparse = 0, total = 0;
};

struct ObjectiveShape {
  double gamma = 1.0;
  int k_aux = 0;
};

template <typename T>
struct SaeGrads {
  SaeParams<T> sae;
  ClassifierHead<T> head;
};

// Full objective
//   L = lambda1 (recon + alpha aux) + lambda2 class + lambda3 sparse
// on one batch. `encoder_input` may carry augmentation noise; `target` is the
// clean batch. Terms with zero weight are skipped. Gradients accumulate into
// `grads` when given; `z_out` receives the batch latents.
template <typename T>
LossBreakdown sae_objective(const SaeParams<T>& p, const ClassifierHead<T>& head,
                            const Mat<T>& encoder_input, const Mat<T>& target,
                            std::span<const int> labels, const std::vector<bool>& dead_mask,
                            const LossWeights& w, const ObjectiveShape& shape,
                            SaeGrads<T>* grads = nullptr, Mat<T>* z_out = nullptr) {
  const bool backward = grads != nullptr;
  Mat<T> pre = sae_pre_activations(encoder_input, p);
  Mat<T> mask;
  Mat<T> z = topk_activation<T>(pre, p.k, &mask);
  Mat<T> h_hat = decode(z, p);

  LossBreakdown out;
  Mat<T> d_hhat;
  out.recon = reconstruction_loss<T>(target, h_hat, backward ? &d_hhat : nullptr);
  Mat<T> dz, d_pre;
  if (backward) {
    dz = Mat<T>::Zero(z.rows(), z.cols());
    d_pre = Mat<T>::Zero(z.rows(), z.cols());
  }
  const T recon_w = static_cast<T>(w.recon);
  if (backward && recon_w != T(0)) {
    d_hhat *= recon_w;
    dz += linear_backward<T>(z, p.W_dec, d_hhat, grads->sae.W_dec, grads->sae.b_dec);
  }
  if (w.alpha != 0.0 && w.recon != 0.0 && shape.k_aux > 0) {
    Mat<T> residual = target - h_hat;
    out.aux = aux_dead_loss<T>(residual, pre, dead_mask, shape.k_aux, p.W_dec,
                               backward ? &d_pre : nullptr,
                               backward ? &grads->sae.W_dec : nullptr,
                               static_cast<T>(w.recon * w.alpha));
  }
  if (w.cls != 0.0) {
    out.cls = classifier_loss<T>(z, head, labels, backward ? &dz : nullptr,
                                 backward ? &grads->head : nullptr, static_cast<T>(w.cls));
  }
  if (w.sparse != 0.0 && shape.gamma < 1.0) {
    out.sparse = activation_sparsity_loss<T>(z, shape.gamma, backward ? &dz : nullptr,
                                             static_cast<T>(w.sparse));
  }
  out.total = w.recon * (out.recon + w.alpha * out.aux) + w.cls * out.cls + w.sparse * out.sparse;

  if (backward) {
    d_pre += dz.cwiseProduct(mask);
    grads->sae.W_enc.noalias() += d_pre.transpose() * encoder_input;
    grads->sae.b_enc += d_pre.colwise().sum().transpose();
  }
  if (z_out) *z_out = std::move(z);
  return out;
}

// Removes from each decoder-column gradient its component along the column,
// so a step moves along the unit sphere to first order.
template <typename T>
void project_decoder_grad(const Mat<T>& W_dec, Mat<T>& grad) {
  for (Eigen::Index j = 0; j < W_dec.cols(); ++j) {
    T dot = W_dec.col(j).dot(grad.col(j));
    grad.col(j) -= dot * W_dec.col(j);
  }
}

template <typename T>
void normalize_decoder_columns(Mat<T>& W_dec) {
  for (Eigen::Index j = 0; j < W_dec.cols(); ++j) {
    T n = W_dec.col(j).norm();
    if (n > T(0)) W_dec.col(j) /= n;
  }
}

}  // namespace concept_probe
