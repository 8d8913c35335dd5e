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

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_probe/concept_model.hpp"
#include "concept_probe/dataset.hpp"
#include "concept_probe/head.hpp"
#include "concept_probe/run_config.hpp"

namespace concept_probe {

using LoadedContainer =
    std::variant<ActivationDataset, EmbeddingDataset, std::unique_ptr<DownstreamHead>>;

// Dispatches on the manifest kind.
LoadedContainer load_container(const std::filesystem::path& dir);

// SHA-1 over the sorted relative file names and contents of every input
// (files or directories).
std::string content_hash(const std::vector<std::filesystem::path>& inputs);

struct TrainedMethod {
  std::unique_ptr<ConceptModel> model;
  nlohmann::json info;
};

// Trains one method on `train`. `val` drives the z_class post-filter and the
// ConceptShap threshold search; `head` is required for ConceptShap only.
TrainedMethod train_method(const std::string& method, const ActivationDataset& train,
                           const ActivationDataset& val, const DownstreamHead* head,
                           const RunConfig& cfg);

struct GridCell {
  double d_sae_factor = 1.0;
  double gamma = 0.1;
  std::string selection = "joint";  // or "probe"

  std::string name() const;
};

std::vector<GridCell> grid_cells(const GridSpec& spec);

// Training config of one cell: d_sae = round(factor d), the cell's gamma, the
// joint classifier on or off (probe cells keep the sparsity loss), n_class
// capped by d_sae.
TrainConfig grid_train_config(const RunConfig& cfg, const GridCell& cell, int d);

TrainedMethod train_grid_cell(const GridCell& cell, const ActivationDataset& train,
                              const ActivationDataset& val, const RunConfig& cfg);

// Markdown table: one row per (d_sae, gamma), columns for probe and joint
// selection, each reporting RAcc, mean conditional TVD and max act. rate.
std::string render_grid_report(const nlohmann::json& grid);

// Subcommands. Each writes its artifacts plus run.json under cfg.output and
// returns normally on success; failures are thrown.
void run_validate(const RunConfig& cfg, std::ostream& log);
void run_synth(const RunConfig& cfg, std::ostream& log);
void run_train(const RunConfig& cfg, std::ostream& log);
void run_eval(const RunConfig& cfg, std::ostream& log);
void run_sweep(const RunConfig& cfg, std::ostream& log);
void run_pca_export(const RunConfig& cfg, std::ostream& log);
void run_report(const RunConfig& cfg, std::ostream& log);

inline const std::vector<std::string> kSubcommands{"validate", "synth", "train", "eval",
                                                   "sweep", "pca-export", "report"};
void run_subcommand(std::string_view name, const RunConfig& cfg, std::ostream& log);

}  // namespace concept_probe
