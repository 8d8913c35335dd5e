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

#include "concept_probe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "concept_probe/optim.hpp"

namespace concept_probe {

int TrainConfig::latent_dim(int d) const {
  return d_sae > 0 ? d_sae : std::max(1, static_cast<int>(std::lround(expansion * d)));
}

std::int64_t TrainConfig::total_steps() const {
  return std::max<std::int64_t>(1, token_budget / std::max(1, batch_size));
}

void TrainConfig::validate(int d) const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("train." + field + ": " + why);
  };
  const int m = latent_dim(d);
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma", "must lie in (0, 1]");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) fail("lambda", "loss weights must be >= 0");
  if (alpha < 0) fail("alpha", "must be >= 0");
  if (batch_size < 2) fail("batch_size", "must be >= 2");
  if (std::floor(gamma * batch_size + 1e-9) < 1) fail("gamma", "gamma * batch_size must be >= 1");
  if (k < 1 || k > m) fail("k", "must lie in [1, d_sae]");
  if (n_class < 1 || n_class > m) fail("n_class", "must lie in [1, d_sae]");
  if (token_budget < batch_size) fail("token_budget", "must cover at least one batch");
  if (!(lr > 0) || lr_min < 0 || lr_min > lr) fail("lr", "need 0 <= lr_min <= lr, lr > 0");
  if (noise_frac < 0) fail("noise_frac", "must be >= 0");
  if (dead_window < 1) fail("dead_window", "must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"k", c.k},
          {"d_sae", c.d_sae},
          {"expansion", c.expansion},
          {"gamma", c.gamma},
          {"n_class", c.n_class},
          {"joint_classifier", c.joint_classifier},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"lambda3", c.lambda3},
          {"alpha", c.alpha},
          {"noise_frac", c.noise_frac},
          {"batch_size", c.batch_size},
          {"token_budget", c.token_budget},
          {"lr", c.lr},
          {"lr_min", c.lr_min},
          {"dead_window", c.dead_window},
          {"k_aux", c.k_aux},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

void merge_json(TrainConfig& c, const nlohmann::json& j) {
  c.k = j.value("k", c.k);
  c.d_sae = j.value("d_sae", c.d_sae);
  c.expansion = j.value("expansion", c.expansion);
  c.gamma = j.value("gamma", c.gamma);
  c.n_class = j.value("n_class", c.n_class);
  c.joint_classifier = j.value("joint_classifier", c.joint_classifier);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.lambda3 = j.value("lambda3", c.lambda3);
  c.alpha = j.value("alpha", c.alpha);
  c.noise_frac = j.value("noise_frac", c.noise_frac);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.token_budget = j.value("token_budget", c.token_budget);
  c.lr = j.value("lr", c.lr);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.dead_window = j.value("dead_window", c.dead_window);
  c.k_aux = j.value("k_aux", c.k_aux);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
}

DeadFeatureTracker::DeadFeatureTracker(int m, int window) : steps_(m, 0), window_(window) {}

void DeadFeatureTracker::update(const MatrixF& z) {
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    bool fired = (z.col(j).array() > 0.0f).any();
    steps_[j] = fired ? 0 : steps_[j] + 1;
  }
}

std::vector<bool> DeadFeatureTracker::dead_mask() const {
  std::vector<bool> out(steps_.size());
  for (std::size_t j = 0; j < steps_.size(); ++j) out[j] = steps_[j] >= window_;
  return out;
}

int DeadFeatureTracker::dead_count() const {
  return static_cast<int>(std::count_if(steps_.begin(), steps_.end(),
                                        [&](int s) { return s >= window_; }));
}

std::vector<double> activation_rates(const MatrixF& z) {
  std::vector<double> out(z.cols(), 0.0);
  if (z.rows() == 0) return out;
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    out[j] = static_cast<double>((z.col(j).array() > 0.0f).count()) / static_cast<double>(z.rows());
  return out;
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& rec : r.curve)
    curve.push_back({{"step", rec.step},
                     {"lr", rec.lr},
                     {"recon", rec.loss.recon},
                     {"aux", rec.loss.aux},
                     {"class", rec.loss.cls},
                     {"sparse", rec.loss.sparse},
                     {"total", rec.loss.total}});
  return {{"steps", r.steps},
          {"dead_features", r.dead_features},
          {"final_recon", r.final_recon},
          {"activation_rate", r.activation_rate},
          {"activation_histogram", r.activation_histogram},
          {"curve", curve}};
}

TrainedSae train_sae(const ActivationDataset& ds, const TrainConfig& config) {
  const int d = ds.dim();
  config.validate(d);
  const int m = config.latent_dim(d);
  const int batch = config.batch_size;
  if (batch > ds.size())
    throw ValidationError("train.batch_size: " + std::to_string(batch) + " exceeds N=" +
                          std::to_string(ds.size()));

  TrainedSae out;
  out.config = config;
  out.norm = compute_norm_stats(ds.hidden);
  const MatrixF x = out.norm.apply(ds.hidden);
  const VectorF x_mean = x.colwise().mean().transpose();

  const int n_class = config.n_class;
  auto init = init_params<float>(d, m, config.k, n_class, ds.num_classes, config.seed, x_mean);
  SaeParams<float>& p = init.sae;
  ClassifierHead<float>& head = init.head;

  SaeGrads<float> grads{SaeParams<float>::zeros_like(p), ClassifierHead<float>::zeros_like(head)};
  auto s_wenc = AdamState<Mat<float>>::like(p.W_enc);
  auto s_benc = AdamState<Vec<float>>::like(p.b_enc);
  auto s_wdec = AdamState<Mat<float>>::like(p.W_dec);
  auto s_bdec = AdamState<Vec<float>>::like(p.b_dec);
  auto s_wcls = AdamState<Mat<float>>::like(head.W);
  auto s_bcls = AdamState<Vec<float>>::like(head.b);

  DeadFeatureTracker tracker(m, config.dead_window);
  const ObjectiveShape shape{config.gamma, config.k_aux > 0 ? config.k_aux : 2 * config.k};
  const double lambda2 = config.joint_classifier ? config.lambda2 : 0.0;
  const std::int64_t total = config.total_steps();

  std::mt19937_64 noise_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<float> normal;
  std::vector<int> labels(batch);

  std::int64_t step = 0;
  for (std::uint64_t epoch = 0; step < total; ++epoch) {
    for (const auto& rows : iterate_batches(ds.size(), batch, config.seed, epoch,
                                            BatchMode::kTraining)) {
      if (step >= total) break;
      MatrixF target = gather_rows(x, rows);
      for (int i = 0; i < batch; ++i) labels[i] = ds.pred_labels[rows[i]];
      MatrixF input = target;
      if (config.noise_frac > 0.0) {
        VectorF mu = target.colwise().mean().transpose();
        VectorF sd = ((target.rowwise() - mu.transpose()).array().square().colwise().sum() /
                      static_cast<float>(batch))
                         .sqrt()
                         .transpose();
        sd *= static_cast<float>(config.noise_frac);
        for (int i = 0; i < batch; ++i)
          for (int c = 0; c < d; ++c) input(i, c) += sd(c) * normal(noise_rng);
      }

      LossWeights w = loss_weights_at(step, total, config.lambda1, lambda2, config.lambda3,
                                      config.alpha);
      MatrixF z;
      LossBreakdown loss = sae_objective<float>(p, head, input, target, labels,
                                                tracker.dead_mask(), w, shape, &grads, &z);
      if (!std::isfinite(loss.total))
        throw NumericalError("training diverged: non-finite loss at step " + std::to_string(step));

      double lr = cosine_lr(step, total, config.lr, config.lr_min);
      project_decoder_grad(p.W_dec, grads.sae.W_dec);
      adam_step(p.W_enc, grads.sae.W_enc, s_wenc, lr);
      adam_step(p.b_enc, grads.sae.b_enc, s_benc, lr);
      adam_step(p.W_dec, grads.sae.W_dec, s_wdec, lr);
      adam_step(p.b_dec, grads.sae.b_dec, s_bdec, lr);
      if (lambda2 != 0.0) {
        adam_step(head.W, grads.head.W, s_wcls, lr);
        adam_step(head.b, grads.head.b, s_bcls, lr);
      }
      normalize_decoder_columns(p.W_dec);
      tracker.update(z);

      if (config.log_every > 0 && (step % config.log_every == 0 || step + 1 == total))
        out.report.curve.push_back({step, lr, loss});
      ++step;
    }
  }

  out.report.steps = step;
  out.report.dead_features = tracker.dead_count();
  MatrixF z_all = encode<float>(x, p);
  out.report.activation_rate = activation_rates(z_all);
  out.report.activation_histogram.assign(10, 0);
  for (double r : out.report.activation_rate)
    ++out.report.activation_histogram[std::min(9, static_cast<int>(r * 10.0))];
  out.report.final_recon = reconstruction_loss<float>(x, decode<float>(z_all, p));
  out.sae = std::move(p);
  out.head = std::move(head);
  return out;
}

}  // namespace concept_probe
