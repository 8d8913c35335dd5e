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

#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "concept_probe/error.hpp"
#include "concept_probe/pipeline.hpp"
#include "concept_probe/run_config.hpp"

namespace cp = concept_probe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> method;
};

cp::RunConfig resolve_config(const Flags& flags) {
  nlohmann::json j = nlohmann::json::object();
  std::filesystem::path base;
  if (!flags.config.empty()) {
    std::ifstream in(flags.config);
    if (!in) throw cp::ValidationError("cannot open config " + flags.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw cp::ValidationError("config " + flags.config + " is not valid JSON: " + e.what());
    }
    base = std::filesystem::path(flags.config).parent_path();
  }
  if (!j.is_object()) throw cp::ConfigError("", "expected an object");
  if (flags.seed) j["seed"] = *flags.seed;
  if (flags.method) j["method"] = *flags.method;
  cp::RunConfig cfg = cp::parse_run_config(j, base);
  if (flags.out) cfg.output = *flags.out;
  return cfg;
}

const char* describe(const std::string& name) {
  if (name == "validate") return "Check containers, alignment and head agreement";
  if (name == "synth") return "Write a planted-concept synthetic dataset";
  if (name == "train") return "Train one method or the ablation grid";
  if (name == "eval") return "Compute completeness, causality and interpretability metrics";
  if (name == "sweep") return "Class-score segmentation and segment-ablation sweep";
  if (name == "pca-export") return "Export 2-D PCA coordinates for plotting";
  if (name == "report") return "Render a Markdown report from metrics files";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised sparse-autoencoder concept extraction and evaluation"};
  app.set_help_all_flag("--help-all");
  app.require_subcommand(1);
  Flags flags;
  for (const auto& name : cp::kSubcommands) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", flags.config, "JSON run config");
    sub->add_option("--seed", flags.seed, "Master seed (overrides the config)");
    sub->add_option("--out", flags.out, "Output directory (overrides the config)");
    sub->add_option("--method", flags.method, "classifsae, sae, ica or conceptshap");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    cp::RunConfig cfg = resolve_config(flags);
    cp::run_subcommand(name, cfg, std::cerr);
  } catch (const cp::ValidationError& e) {
    std::cerr << "concept-probe " << name << ": " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "concept-probe " << name << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
