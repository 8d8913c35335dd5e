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

#include "concept_probe/conceptshap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "concept_probe/error.hpp"
#include "concept_probe/optim.hpp"
#include "concept_probe/parallel.hpp"

namespace concept_probe {
namespace {

// Mean unit state over the top-K training rows of each concept by u . c_k.
MatrixF neighbor_means(const MatrixF& u, const MatrixF& concepts, int k) {
  const Eigen::Index n = u.rows(), m = concepts.rows();
  const int kk = static_cast<int>(std::min<Eigen::Index>(k, n));
  MatrixF sims = u * concepts.transpose();
  MatrixF out = MatrixF::Zero(m, u.cols());
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    std::vector<float> col(sims.col(j).data(), sims.col(j).data() + n);
    for (int i : top_k_indices<float>(std::span<const float>(col), kk)) out.row(j) += u.row(i);
    out.row(j) /= static_cast<float>(kk);
  });
  return out;
}

}  // namespace

void ConceptShapConfig::validate() const {
  auto fail = [](const std::string& f, const std::string& msg) {
    throw ValidationError("conceptshap." + f + ": " + msg);
  };
  if (m < 1) fail("m", "must be >= 1");
  if (hidden < 1) fail("hidden", "must be >= 1");
  if (lambda1 < 0) fail("lambda1", "must be >= 0");
  if (lambda2 < 0) fail("lambda2", "must be >= 0");
  if (neighbors < 1) fail("neighbors", "must be >= 1");
  if (!(lr > 0)) fail("lr", "must be > 0");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (beta_start < 0) fail("beta_start", "must be >= 0");
  if (!(beta_step > 0)) fail("beta_step", "must be > 0");
  if (racc_floor < 0 || racc_floor > 1) fail("racc_floor", "must lie in [0, 1]");
}

nlohmann::json to_json(const ConceptShapConfig& c) {
  return {{"m", c.m},
          {"hidden", c.hidden},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"neighbors", c.neighbors},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"beta_start", c.beta_start},
          {"beta_step", c.beta_step},
          {"racc_floor", c.racc_floor},
          {"seed", c.seed}};
}

void merge_json(ConceptShapConfig& c, const nlohmann::json& j) {
  c.m = j.value("m", c.m);
  c.hidden = j.value("hidden", c.hidden);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.neighbors = j.value("neighbors", c.neighbors);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_step = j.value("beta_step", c.beta_step);
  c.racc_floor = j.value("racc_floor", c.racc_floor);
  c.seed = j.value("seed", c.seed);
}

ConceptShapModel::ConceptShapModel(ConceptShapParams<float> params, NormalizationStats norm)
    : params_(std::move(params)), norm_(std::move(norm)) {
  if (params_.beta < 0) throw ValidationError("conceptshap: beta must be >= 0");
  if (params_.concepts.cols() != norm_.mu.size())
    throw ValidationError("conceptshap: concept width differs from the input width");
  selected_.resize(params_.concepts.rows());
  std::iota(selected_.begin(), selected_.end(), 0);
}

MatrixF ConceptShapModel::encode(const MatrixF& h) const {
  if (h.cols() != input_dim()) throw ValidationError("conceptshap: input dimension mismatch");
  return conceptshap_scores<float>(norm_.apply(h), params_);
}

MatrixF ConceptShapModel::decode(const MatrixF& z) const {
  if (z.cols() != num_concepts()) throw ValidationError("conceptshap: concept dimension mismatch");
  return norm_.invert(conceptshap_decode<float>(z, params_));
}

MatrixF ConceptShapModel::directions() const { return params_.concepts.transpose(); }

ConceptShapModel ConceptShapModel::with_beta(double beta) const {
  ConceptShapParams<float> p = params_;
  p.beta = beta;
  return ConceptShapModel(std::move(p), norm_);
}

Container ConceptShapModel::to_container() const {
  Container c;
  c.kind = kCheckpointKind;
  c.metadata = {{"method", "conceptshap"}, {"beta", params_.beta}, {"norm_scale", norm_.scale}};
  c.add(matrix_tensor("concepts", params_.concepts));
  c.add(matrix_tensor("mlp.W1", params_.W1));
  c.add(vector_tensor("mlp.b1", params_.b1));
  c.add(matrix_tensor("mlp.W2", params_.W2));
  c.add(vector_tensor("mlp.b2", params_.b2));
  c.add(vector_tensor("norm.mu", norm_.mu));
  return c;
}

std::unique_ptr<ConceptModel> conceptshap_from_container(const Container& c) {
  ConceptShapParams<float> p;
  p.concepts = tensor_matrix(c, "concepts");
  const auto m = p.concepts.rows(), d = p.concepts.cols();
  p.W1 = tensor_matrix(c, "mlp.W1", -1, m);
  p.b1 = tensor_vector(c, "mlp.b1", p.W1.rows());
  p.W2 = tensor_matrix(c, "mlp.W2", d, p.W1.rows());
  p.b2 = tensor_vector(c, "mlp.b2", d);
  p.beta = c.metadata.at("beta").get<double>();
  NormalizationStats norm;
  norm.mu = tensor_vector(c, "norm.mu", d);
  norm.scale = c.metadata.at("norm_scale").get<float>();
  return std::make_unique<ConceptShapModel>(std::move(p), std::move(norm));
}

nlohmann::json ConceptShapResult::trace_json() const {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : trace)
    trials.push_back({{"beta", t.beta}, {"val_racc", t.val_racc}, {"final_loss", t.final_loss}});
  return {{"trials", trials},
          {"accepted_beta", model ? nlohmann::json(model->params().beta) : nlohmann::json()},
          {"floor_met", floor_met},
          {"surrogate_agreement", surrogate_agreement}};
}

std::unique_ptr<ConceptShapModel> conceptshap_train_fixed(const ActivationDataset& train,
                                                          const NormalizationStats& norm,
                                                          const LogisticModel& surrogate,
                                                          double beta, const ConceptShapConfig& cfg,
                                                          double* final_loss) {
  cfg.validate();
  const int n = train.size(), d = train.dim();
  if (cfg.batch_size > n) throw ValidationError("conceptshap.batch_size: larger than the dataset");
  MatrixF x = norm.apply(train.hidden);
  MatrixF u = unit_rows<float>(x);
  MatrixF sur_W = surrogate.W.cast<float>();
  VectorF sur_b = surrogate.b.cast<float>();

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  ConceptShapParams<float> p;
  p.beta = beta;
  // Concepts start at distinct random training states.
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  p.concepts.resize(cfg.m, d);
  for (int k = 0; k < cfg.m; ++k) p.concepts.row(k) = u.row(rows[k % n]);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c, double sd) {
    MatrixF w(r, c);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(sd * normal(rng));
    return w;
  };
  p.W1 = gaussian(cfg.hidden, cfg.m, std::sqrt(2.0 / cfg.m));
  p.b1 = VectorF::Zero(cfg.hidden);
  p.W2 = gaussian(d, cfg.hidden, std::sqrt(1.0 / cfg.hidden));
  p.b2 = VectorF::Zero(d);

  auto grads = ConceptShapParams<float>::zeros_like(p);
  auto s_c = AdamState<MatrixF>::like(p.concepts);
  auto s_w1 = AdamState<MatrixF>::like(p.W1);
  auto s_b1 = AdamState<VectorF>::like(p.b1);
  auto s_w2 = AdamState<MatrixF>::like(p.W2);
  auto s_b2 = AdamState<VectorF>::like(p.b2);

  double last = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MatrixF nbar = neighbor_means(u, p.concepts, cfg.neighbors);
    double epoch_loss = 0.0;
    auto batches = iterate_batches(n, cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch),
                                   BatchMode::kTraining);
    for (const auto& batch : batches) {
      MatrixF xb = gather_rows(x, batch);
      std::vector<int> yb(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) yb[i] = train.pred_labels[batch[i]];
      ConceptShapLoss loss = conceptshap_objective<float>(p, xb, yb, sur_W, sur_b, nbar, cfg.lambda1,
                                                          cfg.lambda2, &grads);
      if (!std::isfinite(loss.total))
        throw NumericalError("conceptshap: non-finite loss in epoch " + std::to_string(epoch));
      epoch_loss += loss.total;
      adam_step(p.concepts, grads.concepts, s_c, cfg.lr);
      adam_step(p.W1, grads.W1, s_w1, cfg.lr);
      adam_step(p.b1, grads.b1, s_b1, cfg.lr);
      adam_step(p.W2, grads.W2, s_w2, cfg.lr);
      adam_step(p.b2, grads.b2, s_b2, cfg.lr);
      p.concepts = unit_rows<float>(p.concepts);
    }
    last = epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches.size()));
  }
  if (final_loss) *final_loss = last;
  return std::make_unique<ConceptShapModel>(std::move(p), norm);
}

ConceptShapResult conceptshap_train(const ActivationDataset& train,
                                    const std::function<double(const ConceptModel&)>& validation_racc,
                                    const ConceptShapConfig& cfg) {
  cfg.validate();
  train.validate();
  NormalizationStats norm = compute_norm_stats(train.hidden);
  MatrixD x = norm.apply(train.hidden).cast<double>();
  L1LogisticOptions solver;
  solver.max_iter = 500;
  LogisticModel surrogate = fit_l1_logistic(x, train.pred_labels, train.num_classes, 0.0, solver);

  ConceptShapResult out;
  {
    MatrixD logits = x * surrogate.W.transpose();
    logits.rowwise() += surrogate.b.transpose();
    int agree = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index best;
      logits.row(i).maxCoeff(&best);
      agree += best == train.pred_labels[i];
    }
    out.surrogate_agreement = static_cast<double>(agree) / static_cast<double>(logits.rows());
  }

  const int steps = static_cast<int>(std::floor(cfg.beta_start / cfg.beta_step + 1e-9));
  double best_racc = -1.0;
  for (int s = 0; s <= steps; ++s) {
    double beta = std::max(0.0, cfg.beta_start - s * cfg.beta_step);
    ConceptShapTrial trial;
    trial.beta = beta;
    auto model = conceptshap_train_fixed(train, norm, surrogate, beta, cfg, &trial.final_loss);
    trial.val_racc = validation_racc(*model);
    out.trace.push_back(trial);
    if (trial.val_racc > best_racc) {
      best_racc = trial.val_racc;
      out.model = std::move(model);
    }
    if (trial.val_racc >= cfg.racc_floor) {
      out.floor_met = true;
      break;
    }
  }
  return out;
}

}  // namespace concept_probe
