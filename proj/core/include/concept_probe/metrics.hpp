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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_probe/concept_model.hpp"
#include "concept_probe/dataset.hpp"
#include "concept_probe/gmm.hpp"
#include "concept_probe/head.hpp"
#include "concept_probe/linalg.hpp"

namespace concept_probe {

// Label probabilities of `head` on model-space rows of `h` for the sentences
// of `ds` (row-aligned).
MatrixF head_probabilities(const DownstreamHead& head, const MatrixF& h,
                           const std::vector<std::string>& sentence_ids);

// Fraction of sentences whose prediction on the concept reconstruction equals
// the prediction on the original state.
double recovery_accuracy(const ConceptModel& model, const DownstreamHead& head,
                         const ActivationDataset& ds);

MatrixF ablate_feature(const MatrixF& z, int j);

// Per-sentence outcome of ablating one concept. Rows where z_j == 0 are
// untouched by construction and carry zero effects.
struct AblationEffects {
  std::vector<int> activating;  // rows with z_j != 0
  std::vector<double> tvd;      // N
  std::vector<int> flip;        // N, 1 when the predicted label changes
  std::vector<int> correct_before;
  std::vector<int> correct_after;
};

struct CausalMetrics {
  int index = 0;
  int n_active = 0;
  double rate = 0.0;  // n_active / N
  double dacc_global = 0.0, dflip_global = 0.0, tvd_global = 0.0;
  std::optional<double> dacc_cond, dflip_cond, tvd_cond;
};

// Reusable evaluation state: concept codes and head outputs on the full
// reconstruction.
struct ReconstructionPass {
  MatrixF z;        // N x m_sel
  MatrixF probs;    // N x C on decode(z)
  std::vector<int> pred;
};

ReconstructionPass reconstruction_pass(const ConceptModel& model, const DownstreamHead& head,
                                       const ActivationDataset& ds);

AblationEffects ablation_effects(const ConceptModel& model, const DownstreamHead& head,
                                 const ActivationDataset& ds, const ReconstructionPass& pass,
                                 int j);
CausalMetrics summarize_effects(const AblationEffects& e, int j, int n);
CausalMetrics causal_metrics(const ConceptModel& model, const DownstreamHead& head,
                             const ActivationDataset& ds, const ReconstructionPass& pass, int j);

struct ActivatingSet {
  int index = 0;
  std::vector<int> members;
  double threshold = 0.0;
  bool degenerate = false;
  double rate() const;
  int n_total = 0;
};

// GMM split of |z_j|; members are the high-mean side.
ActivatingSet activating_sentences(std::span<const float> column, int index,
                                   const GmmOptions& opts = {});

struct ConceptSimResult {
  std::optional<double> score;  // absent when fewer than 2 members
  int n_members = 0;
  int n_used = 0;  // after the pair cap
};

// Mean pairwise cosine over the unordered pairs of `members`. Sets larger than
// `cap` are replaced by a seeded uniform subsample of size `cap`.
ConceptSimResult concept_sim(std::span<const int> members, const MatrixF& embeddings,
                             int cap = 2000, std::uint64_t seed = 0);

// sum_j C(N_j,2) score_j / sum_j C(N_j,2) over defined scores.
double concept_sim_aggregate(std::span<const std::optional<double>> scores,
                             std::span<const int> sizes);

struct SentenceSimCurve {
  std::vector<std::optional<double>> values;  // index k = shared concepts, 0..p
  int padded_sentences = 0;  // sentences with fewer than p nonzero activations
  std::int64_t pairs_used = 0;
};

SentenceSimCurve sentence_sim(const MatrixF& z, const MatrixF& embeddings, int p = 5,
                              std::int64_t pair_cap = 1'000'000, std::uint64_t seed = 0);

struct MetricsOptions {
  std::uint64_t seed = 0;
  int concept_sim_cap = 2000;
  std::int64_t sentence_pair_cap = 1'000'000;
  int sentence_sim_p = 5;
  GmmOptions gmm;
};

struct ConceptRow {
  int index = 0;
  int native_index = 0;
  CausalMetrics causal;
  double gmm_rate = 0.0;
  double gmm_threshold = 0.0;
  int gmm_members = 0;
  ConceptSimResult concept_sim;
};

struct MetricsReport {
  std::string method;
  int n_sentences = 0;
  double racc = 0.0;
  std::vector<ConceptRow> concepts;
  // Plain means over concepts; conditional means skip undefined entries.
  double mean_dacc_global = 0, mean_abs_dacc_global = 0, mean_dflip_global = 0, mean_tvd_global = 0;
  std::optional<double> mean_dacc_cond, mean_abs_dacc_cond, mean_dflip_cond, mean_tvd_cond;
  double mean_rate = 0, max_rate = 0;
  double mean_gmm_rate = 0;
  std::optional<double> concept_sim;
  std::optional<SentenceSimCurve> sentence_sim;
  MetricsOptions options;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Full metric suite. Interpretability metrics are computed only when
// `embeddings` is given (row-aligned with `ds`).
MetricsReport evaluate(const ConceptModel& model, const DownstreamHead& head,
                       const ActivationDataset& ds, const EmbeddingDataset* embeddings,
                       const MetricsOptions& opts = {});

// Markdown table with one column per report, one row per headline metric.
std::string render_metrics_table(std::span<const MetricsReport> reports);

}  // namespace concept_probe
