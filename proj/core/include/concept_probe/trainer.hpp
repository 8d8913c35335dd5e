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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_probe/dataset.hpp"
#include "concept_probe/sae.hpp"

namespace concept_probe {

struct TrainConfig {
  int k = 10;
  int d_sae = 0;           // latent width m; 0 means expansion * d
  double expansion = 2.0;  // used when d_sae == 0
  double gamma = 0.1;
  int n_class = 20;
  bool joint_classifier = true;  // false: lambda2 is forced to 0 (plain SAE)
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 0.003;  // the sparsity term sums over batch entries
  double alpha = 1.0 / 32.0;
  double noise_frac = 0.2;
  int batch_size = 500;
  std::int64_t token_budget = 10'000'000;  // sentence-state presentations
  double lr = 5e-5;
  double lr_min = 5e-7;
  int dead_window = 200;
  int k_aux = 0;  // 0 means 2k, further capped by the dead count
  std::uint64_t seed = 0;
  int log_every = 50;

  int latent_dim(int d) const;
  std::int64_t total_steps() const;
  // Throws ValidationError naming the offending field.
  void validate(int d) const;
};

nlohmann::json to_json(const TrainConfig& c);
void merge_json(TrainConfig& c, const nlohmann::json& j);

// Counts batches since each latent last fired.
class DeadFeatureTracker {
 public:
  DeadFeatureTracker(int m, int window);

  void update(const MatrixF& z);
  std::vector<bool> dead_mask() const;
  int dead_count() const;
  const std::vector<int>& steps_since_fire() const { return steps_; }

 private:
  std::vector<int> steps_;
  int window_;
};

struct LossRecord {
  std::int64_t step = 0;
  double lr = 0;
  LossBreakdown loss;
};

struct TrainReport {
  std::vector<LossRecord> curve;
  std::int64_t steps = 0;
  int dead_features = 0;
  std::vector<double> activation_rate;     // per latent, on the training set
  std::vector<int> activation_histogram;   // 10 bins over [0,1]
  double final_recon = 0.0;                // full-latent loss on training set
};

nlohmann::json to_json(const TrainReport& r);

struct TrainedSae {
  SaeParams<float> sae;
  ClassifierHead<float> head;
  NormalizationStats norm;
  TrainConfig config;
  TrainReport report;
};

// Normalizes `ds` with its own statistics, then runs the ClassifSAE loop:
// noisy encoder input, clean target, scheduled loss weights, Adam with cosine
// learning rate, projected decoder gradients and renormalized columns. The
// result is a deterministic function of (ds, config).
TrainedSae train_sae(const ActivationDataset& ds, const TrainConfig& config);

// Activation rate (fraction of rows with z > 0) per latent.
std::vector<double> activation_rates(const MatrixF& z);

}  // namespace concept_probe
