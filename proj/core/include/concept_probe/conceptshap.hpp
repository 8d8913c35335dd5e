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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_probe/concept_model.hpp"
#include "concept_probe/dataset.hpp"
#include "concept_probe/layers.hpp"
#include "concept_probe/linalg.hpp"
#include "concept_probe/probe.hpp"

namespace concept_probe {

template <typename T>
struct ConceptShapParams {
  Mat<T> concepts;  // m x d, unit rows
  Mat<T> W1;        // hidden x m
  Vec<T> b1;
  Mat<T> W2;  // d x hidden
  Vec<T> b2;
  double beta = 0.3;

  int num_concepts() const { return static_cast<int>(concepts.rows()); }
  template <typename U>
  ConceptShapParams<U> cast() const {
    return {concepts.template cast<U>(), W1.template cast<U>(), b1.template cast<U>(),
            W2.template cast<U>(), b2.template cast<U>(), beta};
  }
  static ConceptShapParams zeros_like(const ConceptShapParams& p) {
    return {Mat<T>::Zero(p.concepts.rows(), p.concepts.cols()), Mat<T>::Zero(p.W1.rows(), p.W1.cols()),
            Vec<T>::Zero(p.b1.size()), Mat<T>::Zero(p.W2.rows(), p.W2.cols()),
            Vec<T>::Zero(p.b2.size()), p.beta};
  }
};

template <typename T>
Mat<T> unit_rows(const Mat<T>& x) {
  Mat<T> u = x;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    T n = u.row(i).norm();
    if (n > T(0)) u.row(i) /= n;
  }
  return u;
}

// z_k = s_k if s_k > beta else 0, with s = unit(x) . c_k.
template <typename T>
Mat<T> conceptshap_scores(const Mat<T>& x, const ConceptShapParams<T>& p, Mat<T>* s_out = nullptr) {
  Mat<T> s = unit_rows(x) * p.concepts.transpose();
  Mat<T> z = s.unaryExpr([&](T v) { return v > static_cast<T>(p.beta) ? v : T(0); });
  if (s_out) *s_out = std::move(s);
  return z;
}

// Two-layer ReLU map from concept scores back to (normalized) hidden space.
template <typename T>
Mat<T> conceptshap_decode(const Mat<T>& z, const ConceptShapParams<T>& p, Mat<T>* hidden = nullptr) {
  Mat<T> a = linear_forward<T>(z, p.W1, p.b1).cwiseMax(T(0));
  Mat<T> out = linear_forward<T>(a, p.W2, p.b2);
  if (hidden) *hidden = std::move(a);
  return out;
}

struct ConceptShapLoss {
  double completeness = 0, alignment = 0, diversity = 0, total = 0;
};

// One batch of CE(surrogate(MLP(z)), y) + lambda1 alignment + lambda2
// diversity. `neighbor_mean` row k is the mean unit state over the current
// top-K neighbours of concept k.
template <typename T>
ConceptShapLoss conceptshap_objective(const ConceptShapParams<T>& p, const Mat<T>& x,
                                      std::span<const int> labels, const Mat<T>& sur_W,
                                      const Vec<T>& sur_b, const Mat<T>& neighbor_mean,
                                      double lambda1, double lambda2,
                                      ConceptShapParams<T>* grads = nullptr) {
  Mat<T> u = unit_rows(x);
  Mat<T> s = u * p.concepts.transpose();
  const T beta = static_cast<T>(p.beta);
  Mat<T> z = s.unaryExpr([&](T v) { return v > beta ? v : T(0); });
  Mat<T> pre = linear_forward<T>(z, p.W1, p.b1);
  Mat<T> a = pre.cwiseMax(T(0));
  Mat<T> h_hat = linear_forward<T>(a, p.W2, p.b2);
  Mat<T> logits = linear_forward<T>(h_hat, sur_W, sur_b);
  Mat<T> dlogits;
  ConceptShapLoss out;
  out.completeness = batch_cross_entropy<T>(logits, labels, grads ? &dlogits : nullptr);
  const T m = static_cast<T>(p.num_concepts());
  out.alignment = -static_cast<double>(p.concepts.cwiseProduct(neighbor_mean).sum() / m);
  Vec<T> csum = p.concepts.colwise().sum().transpose();
  out.diversity = static_cast<double>(csum.squaredNorm() - p.concepts.squaredNorm());
  out.total = out.completeness + lambda1 * out.alignment + lambda2 * out.diversity;
  if (grads) {
    Mat<T> d_hhat = dlogits * sur_W;
    Mat<T> d_a = linear_backward<T>(a, p.W2, d_hhat, grads->W2, grads->b2);
    Mat<T> d_pre = d_a.cwiseProduct(pre.unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
    Mat<T> d_z = linear_backward<T>(z, p.W1, d_pre, grads->W1, grads->b1);
    Mat<T> d_s = d_z.cwiseProduct(s.unaryExpr([&](T v) { return v > beta ? T(1) : T(0); }));
    grads->concepts.noalias() += d_s.transpose() * u;
    grads->concepts -= static_cast<T>(lambda1) / m * neighbor_mean;
    grads->concepts += static_cast<T>(2.0 * lambda2) * ((-p.concepts).rowwise() + csum.transpose());
  }
  return out;
}

struct ConceptShapConfig {
  int m = 20;
  int hidden = 512;
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  int neighbors = 64;
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 128;
  double beta_start = 0.3;
  double beta_step = 0.05;
  double racc_floor = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const ConceptShapConfig& c);
void merge_json(ConceptShapConfig& c, const nlohmann::json& j);

class ConceptShapModel final : public ConceptModel {
 public:
  ConceptShapModel(ConceptShapParams<float> params, NormalizationStats norm);

  std::string method() const override { return "conceptshap"; }
  int input_dim() const override { return static_cast<int>(params_.concepts.cols()); }
  int num_concepts() const override { return params_.num_concepts(); }
  MatrixF encode(const MatrixF& h) const override;
  MatrixF decode(const MatrixF& z) const override;
  MatrixF directions() const override;
  const std::vector<int>& selected_indices() const override { return selected_; }
  Container to_container() const override;

  const ConceptShapParams<float>& params() const { return params_; }
  const NormalizationStats& norm() const { return norm_; }
  // Same model with a different threshold.
  ConceptShapModel with_beta(double beta) const;

 private:
  ConceptShapParams<float> params_;
  NormalizationStats norm_;
  std::vector<int> selected_;
};

std::unique_ptr<ConceptModel> conceptshap_from_container(const Container& c);

struct ConceptShapTrial {
  double beta = 0;
  double val_racc = 0;
  double final_loss = 0;
};

struct ConceptShapResult {
  std::unique_ptr<ConceptShapModel> model;
  std::vector<ConceptShapTrial> trace;
  double surrogate_agreement = 0;  // surrogate argmax vs stored predictions
  bool floor_met = false;

  nlohmann::json trace_json() const;
};

// Distils a linear surrogate from (h, predicted label), then trains one model
// per beta of the grid (beta_start, beta_start - beta_step, ... >= 0) until
// `validation_racc` of a trained model reaches the floor. Without a floor hit
// the best model is returned and floor_met is false.
ConceptShapResult conceptshap_train(const ActivationDataset& train,
                                    const std::function<double(const ConceptModel&)>& validation_racc,
                                    const ConceptShapConfig& config);

// Trains at one fixed beta against a given surrogate (normalized space).
std::unique_ptr<ConceptShapModel> conceptshap_train_fixed(const ActivationDataset& train,
                                                          const NormalizationStats& norm,
                                                          const LogisticModel& surrogate,
                                                          double beta, const ConceptShapConfig& config,
                                                          double* final_loss = nullptr);

}  // namespace concept_probe
