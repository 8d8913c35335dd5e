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

#include "concept_probe/run_config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace concept_probe {
namespace {

enum class Kind { kObject, kInt, kNumber, kBool, kString, kNumberArray, kStringArray };

struct Field {
  std::string key;
  Kind kind;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;
  bool hi_open = false;
  std::vector<std::string> choices{};
  std::vector<Field> children{};
};

Field num(std::string key, double lo, double hi, bool lo_open = false, bool hi_open = false) {
  return {std::move(key), Kind::kNumber, lo, hi, lo_open, hi_open};
}
Field integer(std::string key, double lo, double hi = std::numeric_limits<double>::infinity()) {
  return {std::move(key), Kind::kInt, lo, hi};
}
Field boolean(std::string key) { return {std::move(key), Kind::kBool}; }
Field str(std::string key, std::vector<std::string> choices = {}) {
  Field f{std::move(key), Kind::kString};
  f.choices = std::move(choices);
  return f;
}
Field object(std::string key, std::vector<Field> children) {
  Field f{std::move(key), Kind::kObject};
  f.children = std::move(children);
  return f;
}

const double kInf = std::numeric_limits<double>::infinity();

const std::vector<Field>& schema() {
  static const std::vector<Field> s = [] {
    Field levels{"levels", Kind::kNumberArray, 0, 100};
    Field factors{"d_sae_factors", Kind::kNumberArray, 0, kInf, true};
    Field gammas{"gammas", Kind::kNumberArray, 0, 1, true};
    Field selections{"selections", Kind::kStringArray};
    selections.choices = {"probe", "joint"};
    return std::vector<Field>{
        str("method", kMethods),
        integer("seed", 0),
        str("output"),
        str("checkpoint"),
        object("data", {str("activations"), str("embeddings"), str("head")}),
        object("split", {num("train_fraction", 0, 1, true, true)}),
        object("train",
               {integer("k", 1), integer("d_sae", 0), num("expansion", 0, kInf, true),
                num("gamma", 0, 1, true), integer("n_class", 1), boolean("joint_classifier"),
                num("lambda1", 0, kInf), num("lambda2", 0, kInf), num("lambda3", 0, kInf),
                num("alpha", 0, kInf), num("noise_frac", 0, kInf), integer("batch_size", 2),
                integer("token_budget", 1), num("lr", 0, kInf, true), num("lr_min", 0, kInf),
                integer("dead_window", 1), integer("k_aux", 0), integer("log_every", 1)}),
        object("probe", {integer("n", 1), integer("max_rows", 1), integer("bisect_steps", 0)}),
        object("ica", {integer("m", 1), integer("max_iter", 1), num("tol", 0, kInf, true)}),
        object("conceptshap",
               {integer("m", 1), integer("hidden", 1), num("lambda1", 0, kInf),
                num("lambda2", 0, kInf), integer("neighbors", 1), num("lr", 0, kInf, true),
                integer("epochs", 1), integer("batch_size", 1), num("beta_start", 0, kInf),
                num("beta_step", 0, kInf, true), num("racc_floor", 0, 1)}),
        object("metrics", {integer("concept_sim_cap", 2), integer("sentence_pair_cap", 1),
                           integer("sentence_sim_p", 1)}),
        object("sweep", {levels, str("group_by", {"predicted", "gold"})}),
        object("pca", {integer("sample", 1)}),
        object("synth",
               {integer("d", 2), integer("m_true", 1), integer("n", 2), integer("k_true", 1),
                integer("num_classes", 2), integer("relevant_per_class", 1), num("noise", 0, kInf),
                integer("embed_dim", 1), num("head_scale", 0, kInf, true),
                num("code_min", 0, kInf, true), num("code_max", 0, kInf, true),
                num("offset_norm", 0, kInf)}),
        object("grid", {factors, gammas, selections}),
        {"report", Kind::kObject, 0, 0, false, false, {}, {{"inputs", Kind::kStringArray}}},
    };
  }();
  return s;
}

std::string range_text(const Field& f) {
  std::ostringstream os;
  os << (f.lo_open ? "(" : "[") << f.lo << ", " << f.hi << (f.hi_open ? ")" : "]");
  return os.str();
}

void check_number(const Field& f, double v, const std::string& ptr) {
  bool ok = std::isfinite(v) && (f.lo_open ? v > f.lo : v >= f.lo) && (f.hi_open ? v < f.hi : v <= f.hi);
  if (!ok) throw ConfigError(ptr, "must lie in " + range_text(f));
}

void check_choice(const Field& f, const std::string& v, const std::string& ptr) {
  if (f.choices.empty()) return;
  for (const auto& c : f.choices)
    if (c == v) return;
  std::string all;
  for (const auto& c : f.choices) all += (all.empty() ? "" : ", ") + c;
  throw ConfigError(ptr, "'" + v + "' is not one of {" + all + "}");
}

void check_object(const nlohmann::json& j, const std::vector<Field>& fields, const std::string& ptr) {
  if (!j.is_object()) throw ConfigError(ptr.empty() ? "/" : ptr, "must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string p = ptr + "/" + key;
    const Field* f = nullptr;
    for (const auto& cand : fields)
      if (cand.key == key) f = &cand;
    if (!f) throw ConfigError(p, "unknown key");
    switch (f->kind) {
      case Kind::kObject:
        check_object(value, f->children, p);
        break;
      case Kind::kInt:
        if (!value.is_number_integer()) throw ConfigError(p, "must be an integer");
        check_number(*f, value.get<double>(), p);
        break;
      case Kind::kNumber:
        if (!value.is_number()) throw ConfigError(p, "must be a number");
        check_number(*f, value.get<double>(), p);
        break;
      case Kind::kBool:
        if (!value.is_boolean()) throw ConfigError(p, "must be a boolean");
        break;
      case Kind::kString:
        if (!value.is_string()) throw ConfigError(p, "must be a string");
        check_choice(*f, value.get<std::string>(), p);
        break;
      case Kind::kNumberArray:
        if (!value.is_array() || value.empty()) throw ConfigError(p, "must be a non-empty array");
        for (std::size_t i = 0; i < value.size(); ++i) {
          if (!value[i].is_number()) throw ConfigError(p + "/" + std::to_string(i), "must be a number");
          check_number(*f, value[i].get<double>(), p + "/" + std::to_string(i));
        }
        break;
      case Kind::kStringArray:
        if (!value.is_array()) throw ConfigError(p, "must be an array");
        for (std::size_t i = 0; i < value.size(); ++i) {
          if (!value[i].is_string()) throw ConfigError(p + "/" + std::to_string(i), "must be a string");
          check_choice(*f, value[i].get<std::string>(), p + "/" + std::to_string(i));
        }
        break;
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
  // FNV-1a over the component name, mixed with the master seed by splitmix64.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : component) h = (h ^ c) * 1099511628211ULL;
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void RunConfig::derive_seeds() {
  train.seed = derive_seed(seed, "train");
  probe.seed = derive_seed(seed, "probe");
  ica.seed = derive_seed(seed, "ica");
  conceptshap.seed = derive_seed(seed, "conceptshap");
  metrics.seed = derive_seed(seed, "metrics");
  pca.seed = derive_seed(seed, "pca");
  synth.seed = derive_seed(seed, "synth");
}

std::filesystem::path RunConfig::checkpoint_dir() const {
  return checkpoint.empty() ? output / "checkpoint" : checkpoint;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {
      {"method", method},
      {"seed", seed},
      {"output", output.string()},
      {"checkpoint", checkpoint_dir().string()},
      {"data",
       {{"activations", activations.string()},
        {"embeddings", embeddings.string()},
        {"head", head.string()}}},
      {"split", {{"train_fraction", train_fraction}}},
      {"train", concept_probe::to_json(train)},
      {"probe", {{"n", probe.n}, {"max_rows", probe.max_rows}, {"bisect_steps", probe.bisect_steps},
                 {"seed", probe.seed}}},
      {"ica", {{"m", ica_components}, {"max_iter", ica.max_iter}, {"tol", ica.tol}, {"seed", ica.seed}}},
      {"conceptshap", concept_probe::to_json(conceptshap)},
      {"metrics",
       {{"seed", metrics.seed},
        {"concept_sim_cap", metrics.concept_sim_cap},
        {"sentence_pair_cap", metrics.sentence_pair_cap},
        {"sentence_sim_p", metrics.sentence_sim_p}}},
      {"sweep", {{"levels", sweep_levels}, {"group_by", group_by_gold ? "gold" : "predicted"}}},
      {"pca", {{"sample", pca.sample}, {"seed", pca.seed}}},
      {"synth", concept_probe::to_json(synth)},
  };
  if (grid)
    j["grid"] = {{"d_sae_factors", grid->d_sae_factors},
                 {"gammas", grid->gammas},
                 {"selections", grid->selections}};
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& p : report_inputs) inputs.push_back(p.string());
  j["report"] = {{"inputs", inputs}};
  return j;
}

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  check_object(j, schema(), "");
  RunConfig c;
  c.method = j.value("method", c.method);
  c.seed = j.value("seed", c.seed);
  if (j.contains("output")) c.output = resolve(base_dir, j["output"].get<std::string>());
  if (j.contains("checkpoint")) c.checkpoint = resolve(base_dir, j["checkpoint"].get<std::string>());
  if (j.contains("data")) {
    const auto& d = j["data"];
    if (d.contains("activations")) c.activations = resolve(base_dir, d["activations"].get<std::string>());
    if (d.contains("embeddings")) c.embeddings = resolve(base_dir, d["embeddings"].get<std::string>());
    if (d.contains("head")) c.head = resolve(base_dir, d["head"].get<std::string>());
  }
  if (j.contains("split")) c.train_fraction = j["split"].value("train_fraction", c.train_fraction);
  if (j.contains("train")) merge_json(c.train, j["train"]);
  if (c.train.lr_min > c.train.lr) throw ConfigError("/train/lr_min", "must not exceed lr");
  if (std::floor(c.train.gamma * c.train.batch_size + 1e-9) < 1)
    throw ConfigError("/train/gamma", "gamma * batch_size must be >= 1");
  if (c.train.token_budget < c.train.batch_size)
    throw ConfigError("/train/token_budget", "must cover at least one batch");
  if (c.train.d_sae > 0 && c.train.k > c.train.d_sae) throw ConfigError("/train/k", "must not exceed d_sae");
  if (j.contains("probe")) {
    const auto& p = j["probe"];
    c.probe.n = p.value("n", c.probe.n);
    c.probe.max_rows = p.value("max_rows", c.probe.max_rows);
    c.probe.bisect_steps = p.value("bisect_steps", c.probe.bisect_steps);
  }
  if (j.contains("ica")) {
    const auto& p = j["ica"];
    c.ica_components = p.value("m", c.ica_components);
    c.ica.max_iter = p.value("max_iter", c.ica.max_iter);
    c.ica.tol = p.value("tol", c.ica.tol);
  }
  if (j.contains("conceptshap")) merge_json(c.conceptshap, j["conceptshap"]);
  if (j.contains("metrics")) {
    const auto& p = j["metrics"];
    c.metrics.concept_sim_cap = p.value("concept_sim_cap", c.metrics.concept_sim_cap);
    c.metrics.sentence_pair_cap = p.value("sentence_pair_cap", c.metrics.sentence_pair_cap);
    c.metrics.sentence_sim_p = p.value("sentence_sim_p", c.metrics.sentence_sim_p);
  }
  if (j.contains("sweep")) {
    const auto& p = j["sweep"];
    if (p.contains("levels")) c.sweep_levels = p["levels"].get<std::vector<double>>();
    c.group_by_gold = p.value("group_by", std::string("predicted")) == "gold";
  }
  if (j.contains("pca")) c.pca.sample = j["pca"].value("sample", c.pca.sample);
  if (j.contains("synth")) merge_json(c.synth, j["synth"]);
  if (c.synth.code_max < c.synth.code_min)
    throw ConfigError("/synth/code_max", "must be >= code_min");
  if (j.contains("grid")) {
    GridSpec g;
    const auto& p = j["grid"];
    if (p.contains("d_sae_factors")) g.d_sae_factors = p["d_sae_factors"].get<std::vector<double>>();
    if (p.contains("gammas")) g.gammas = p["gammas"].get<std::vector<double>>();
    if (p.contains("selections")) g.selections = p["selections"].get<std::vector<std::string>>();
    c.grid = g;
  }
  if (j.contains("report") && j["report"].contains("inputs"))
    for (const auto& p : j["report"]["inputs"]) c.report_inputs.push_back(resolve(base_dir, p.get<std::string>()));
  c.derive_seeds();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

}  // namespace concept_probe
