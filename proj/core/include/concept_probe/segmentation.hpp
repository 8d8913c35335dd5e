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
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_probe/concept_model.hpp"
#include "concept_probe/dataset.hpp"
#include "concept_probe/gmm.hpp"
#include "concept_probe/head.hpp"
#include "concept_probe/linalg.hpp"

namespace concept_probe {

struct ClassScoreTable {
  int num_classes = 0;
  std::vector<double> mean_abs;        // zbar per concept
  MatrixD scores;                      // concepts x classes, s_c(j)
  std::vector<double> class_fraction;  // |D_c| / |D|
  std::vector<int> segment;            // argmax class per concept, -1 when dead
  std::vector<std::vector<int>> segments;  // per class, ranked by zbar descending
  std::vector<int> majority_label;     // over GMM-activating sentences, -1 when empty
  std::vector<bool> dead;
  std::vector<bool> tied;              // argmax tie resolved to the lowest class
  std::vector<bool> label_disagreement;  // segment != majority_label

  int num_concepts() const { return static_cast<int>(mean_abs.size()); }
  nlohmann::json to_json() const;
};

// Scores from concept activations `z` grouped by `labels` (the predicted
// labels by default).
ClassScoreTable class_scores(const MatrixF& z, std::span<const int> labels, int num_classes,
                             const GmmOptions& gmm = {});

struct SweepLevel {
  double percent = 0.0;
  double mean_dacc_global = 0.0;        // averaged over non-empty segments
  double mean_class_accuracy = 0.0;     // accuracy on D_c after ablating F_c, averaged over c
  std::vector<double> dacc_global;      // per class (NaN for skipped)
  std::vector<double> class_accuracy;   // per class (NaN for skipped)
  std::vector<int> ablated;             // concepts ablated per class
};

struct SweepResult {
  std::vector<SweepLevel> levels;
  std::vector<int> skipped_classes;  // empty segments
  std::vector<double> class_accuracy_before;
  int monotonicity_violations = 0;   // increases of mean ΔAcc between successive levels

  nlohmann::json to_json() const;
};

// For each class c and level p, ablates the top ceil(p |F_c| / 100) concepts
// of F_c by zbar and measures the change in gold-label accuracy over all
// sentences, plus the accuracy on the sentences of D_c.
SweepResult segment_ablation_sweep(const ConceptModel& model, const DownstreamHead& head,
                                   const ActivationDataset& ds, const ClassScoreTable& table,
                                   std::span<const int> group_labels,
                                   std::span<const double> levels = std::vector<double>{25, 50, 70, 100});

struct PcaExportOptions {
  int sample = 2000;
  std::uint64_t seed = 0;
};

// 2-D PCA bundle: sampled states with predicted labels, concept endpoints
// (directions scaled by zbar), class prototypes, per-concept radius and class
// colour fractions.
nlohmann::json pca_export(const ActivationDataset& ds, const ConceptModel& model,
                          const ClassScoreTable& table, const PcaExportOptions& opts = {});

}  // namespace concept_probe
