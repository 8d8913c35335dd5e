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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_probe/conceptshap.hpp"
#include "concept_probe/error.hpp"
#include "concept_probe/fastica.hpp"
#include "concept_probe/metrics.hpp"
#include "concept_probe/probe.hpp"
#include "concept_probe/segmentation.hpp"
#include "concept_probe/synth.hpp"
#include "concept_probe/trainer.hpp"

namespace concept_probe {

// A schema violation located by a JSON pointer into the run config.
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : ValidationError("config " + pointer + ": " + message), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

struct GridSpec {
  std::vector<double> d_sae_factors{0.25, 1.0, 2.0};
  std::vector<double> gammas{1.0, 0.1};
  std::vector<std::string> selections{"probe", "joint"};
};

inline const std::vector<std::string> kMethods{"classifsae", "sae", "ica", "conceptshap"};

struct RunConfig {
  std::string method = "classifsae";
  std::uint64_t seed = 0;
  std::filesystem::path output = "concept_probe_out";
  std::filesystem::path activations, embeddings, head, checkpoint;
  double train_fraction = 0.8;
  TrainConfig train;
  ProbeOptions probe;
  int ica_components = 20;
  FastIcaOptions ica;
  ConceptShapConfig conceptshap;
  MetricsOptions metrics;
  std::vector<double> sweep_levels{25, 50, 70, 100};
  bool group_by_gold = false;
  PcaExportOptions pca;
  SynthSpec synth;
  std::optional<GridSpec> grid;
  std::vector<std::filesystem::path> report_inputs;

  // Re-derives every component seed from the master seed.
  void derive_seeds();
  std::filesystem::path checkpoint_dir() const;
  nlohmann::json to_json() const;
};

std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

// Validates `j` against the run-config schema (throwing ConfigError with a
// JSON pointer) and resolves relative paths against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace concept_probe
