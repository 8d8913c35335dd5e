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

#include "concept_probe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "concept_probe/conceptshap.hpp"
#include "concept_probe/error.hpp"
#include "concept_probe/metrics.hpp"
#include "concept_probe/probe.hpp"
#include "concept_probe/segmentation.hpp"
#include "concept_probe/synth.hpp"

namespace concept_probe {
namespace fs = std::filesystem;
namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

void require_path(const fs::path& p, const char* pointer, const char* what) {
  if (p.empty()) throw ConfigError(pointer, std::string(what) + " is required for this subcommand");
  if (!fs::exists(p)) throw ConfigError(pointer, "path does not exist: " + p.string());
}

void write_run_json(const RunConfig& cfg, std::string_view sub, const std::vector<fs::path>& inputs,
                    const fs::path& dir) {
  nlohmann::json paths = nlohmann::json::array();
  for (const auto& p : inputs) paths.push_back(p.string());
  write_json(dir / "run.json", {{"subcommand", std::string(sub)},
                                {"config", cfg.to_json()},
                                {"inputs", paths},
                                {"inputs_sha1", content_hash(inputs)}});
}

DatasetSplit load_split(const RunConfig& cfg) {
  require_path(cfg.activations, "/data/activations", "an activations container");
  ActivationDataset ds = load_activations(cfg.activations);
  return split_dataset(ds, SplitSpec{cfg.train_fraction, derive_seed(cfg.seed, "split")});
}

std::unique_ptr<DownstreamHead> load_required_head(const RunConfig& cfg) {
  require_path(cfg.head, "/data/head", "a head container");
  return load_head(cfg.head);
}

std::vector<int> group_labels(const ActivationDataset& ds, bool gold) {
  return gold ? ds.gold_labels : ds.pred_labels;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.method = j.value("method", std::string("?"));
  r.n_sentences = j.value("n_sentences", 0);
  r.racc = j.value("racc", 0.0);
  const auto& a = j.at("aggregate");
  auto get = [&](const char* k) -> std::optional<double> {
    if (!a.contains(k) || a[k].is_null()) return std::nullopt;
    return a[k].get<double>();
  };
  r.mean_dacc_global = get("dacc_global").value_or(0);
  r.mean_dflip_global = get("dflip_global").value_or(0);
  r.mean_tvd_global = get("tvd_global").value_or(0);
  r.mean_dacc_cond = get("dacc_cond");
  r.mean_dflip_cond = get("dflip_cond");
  r.mean_tvd_cond = get("tvd_cond");
  r.mean_rate = get("mean_act_rate").value_or(0);
  r.max_rate = get("max_act_rate").value_or(0);
  r.concept_sim = get("concept_sim");
  r.concepts.resize(j.at("concepts").size());
  return r;
}

nlohmann::json cell_summary(const GridCell& cell, int d_sae, const MetricsReport& r) {
  return {{"name", cell.name()},
          {"d_sae_factor", cell.d_sae_factor},
          {"d_sae", d_sae},
          {"gamma", cell.gamma},
          {"selection", cell.selection},
          {"racc", r.racc},
          {"mean_tvd_cond", opt(r.mean_tvd_cond)},
          {"mean_tvd_global", r.mean_tvd_global},
          {"mean_act_rate", r.mean_rate},
          {"max_act_rate", r.max_rate},
          {"concepts", r.concepts.size()}};
}

}  // namespace

LoadedContainer load_container(const fs::path& dir) {
  Container c = read_container(dir);
  if (c.kind == kActivationsKind) return activations_from_container(c);
  if (c.kind == kEmbeddingsKind) return embeddings_from_container(c);
  if (c.kind == kLinearHeadKind || c.kind == kNeoXHeadKind) return head_from_container(c);
  throw ValidationError("container " + dir.string() + " has unsupported kind '" + c.kind + "'");
}

std::string content_hash(const std::vector<fs::path>& inputs) {
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& in : inputs) {
    if (in.empty() || !fs::exists(in)) continue;
    if (fs::is_regular_file(in)) {
      files.emplace_back(in.filename().string(), in);
      continue;
    }
    for (const auto& e : fs::recursive_directory_iterator(in))
      if (e.is_regular_file() && e.path().filename() != "run.json")
        files.emplace_back((in.filename() / fs::relative(e.path(), in)).generic_string(), e.path());
  }
  std::sort(files.begin(), files.end());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1) throw Error("SHA-1 unavailable");
  std::vector<char> buf(1 << 16);
  for (const auto& [name, path] : files) {
    std::string header = name + '\0' + std::to_string(fs::file_size(path)) + '\0';
    EVP_DigestUpdate(ctx, header.data(), header.size());
    std::ifstream in(path, std::ios::binary);
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

TrainedMethod train_method(const std::string& method, const ActivationDataset& train,
                           const ActivationDataset& val, const DownstreamHead* head,
                           const RunConfig& cfg) {
  TrainedMethod out;
  if (method == "classifsae" || method == "sae") {
    TrainConfig tc = cfg.train;
    tc.joint_classifier = method == "classifsae";
    if (method == "sae") tc.lambda2 = tc.lambda3 = 0.0;
    TrainedSae trained = train_sae(train, tc);
    std::vector<int> selected;
    if (method == "classifsae") {
      selected = postfilter_z_class(trained.sae, trained.norm, tc.n_class, val.hidden);
      out.info["postfilter_kept"] = selected.size();
    } else {
      MatrixF z = encode<float>(trained.norm.apply(train.hidden), trained.sae);
      ProbeSelection sel = logistic_probe_select(z, train.pred_labels, train.num_classes, cfg.probe);
      selected = sel.selected;
      out.info["probe"] = {{"lambda", sel.lambda}, {"support", sel.support},
                           {"active_features", sel.active_features}, {"warning", sel.warning}};
    }
    out.info["train_report"] = to_json(trained.report);
    out.info["selected"] = selected;
    out.model = std::make_unique<SaeConceptModel>(method, std::move(trained), std::move(selected));
  } else if (method == "ica") {
    int m = std::min(cfg.ica_components, train.dim());
    auto model = train_ica_model(train, m, cfg.ica);
    out.info = {{"iterations", model->ica().iterations}, {"converged", model->ica().converged},
                {"components", m}};
    out.model = std::move(model);
  } else if (method == "conceptshap") {
    if (!head) throw ConfigError("/data/head", "ConceptShap needs the downstream head");
    auto racc = [&](const ConceptModel& m) { return recovery_accuracy(m, *head, val); };
    ConceptShapResult r = conceptshap_train(train, racc, cfg.conceptshap);
    out.info = r.trace_json();
    out.model = std::move(r.model);
  } else {
    throw ConfigError("/method", "unknown method '" + method + "'");
  }
  return out;
}

std::string GridCell::name() const {
  std::ostringstream os;
  os << "dsae" << d_sae_factor << "_gamma" << gamma << "_" << selection;
  return os.str();
}

std::vector<GridCell> grid_cells(const GridSpec& spec) {
  std::vector<GridCell> cells;
  for (double f : spec.d_sae_factors)
    for (double g : spec.gammas)
      for (const auto& s : spec.selections) cells.push_back({f, g, s});
  return cells;
}

TrainConfig grid_train_config(const RunConfig& cfg, const GridCell& cell, int d) {
  TrainConfig tc = cfg.train;
  tc.d_sae = std::max(1, static_cast<int>(std::lround(cell.d_sae_factor * d)));
  tc.gamma = cell.gamma;
  tc.joint_classifier = cell.selection == "joint";
  if (!tc.joint_classifier) tc.lambda2 = 0.0;
  tc.n_class = std::min(tc.n_class, tc.d_sae);
  tc.k = std::min(tc.k, tc.d_sae);
  return tc;
}

TrainedMethod train_grid_cell(const GridCell& cell, const ActivationDataset& train,
                              const ActivationDataset& val, const RunConfig& cfg) {
  TrainConfig tc = grid_train_config(cfg, cell, train.dim());
  TrainedSae trained = train_sae(train, tc);
  TrainedMethod out;
  std::vector<int> selected;
  if (tc.joint_classifier) {
    selected = postfilter_z_class(trained.sae, trained.norm, tc.n_class, val.hidden);
  } else {
    MatrixF z = encode<float>(trained.norm.apply(train.hidden), trained.sae);
    ProbeOptions po = cfg.probe;
    po.n = tc.n_class;
    selected = logistic_probe_select(z, train.pred_labels, train.num_classes, po).selected;
  }
  out.info = {{"cell", cell.name()}, {"d_sae", tc.d_sae}, {"selected", selected},
              {"train_report", to_json(trained.report)}};
  out.model = std::make_unique<SaeConceptModel>(tc.joint_classifier ? "classifsae" : "sae",
                                                std::move(trained), std::move(selected));
  return out;
}

std::string render_grid_report(const nlohmann::json& grid) {
  std::map<std::pair<double, double>, std::map<std::string, nlohmann::json>> rows;
  for (const auto& c : grid.at("cells"))
    rows[{c.at("d_sae_factor").get<double>(), -c.at("gamma").get<double>()}][c.at("selection")] = c;
  auto fmt = [](const nlohmann::json& v, bool pct) {
    if (v.is_null()) return std::string("n/a");
    std::ostringstream os;
    os << std::fixed << std::setprecision(pct ? 2 : 4) << (pct ? 100.0 : 1.0) * v.get<double>();
    return os.str();
  };
  std::ostringstream os;
  os << "| d_sae | gamma | probe RAcc (%) | probe TVD cond | probe max rate (%) | joint RAcc (%) "
        "| joint TVD cond | joint max rate (%) |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  double sum_probe = 0, sum_joint = 0;
  int n_probe = 0, n_joint = 0;
  for (const auto& [key, cols] : rows) {
    const auto& any = cols.begin()->second;
    os << "| " << any.at("d_sae").get<int>() << " (" << key.first << "d) | " << -key.second << " |";
    for (const char* sel : {"probe", "joint"}) {
      auto it = cols.find(sel);
      if (it == cols.end()) {
        os << " n/a | n/a | n/a |";
        continue;
      }
      const auto& c = it->second;
      os << ' ' << fmt(c.at("racc"), true) << " | " << fmt(c.at("mean_tvd_cond"), false) << " | "
         << fmt(c.at("max_act_rate"), true) << " |";
      if (!c.at("mean_tvd_cond").is_null()) {
        double v = c.at("mean_tvd_cond").get<double>();
        if (std::string(sel) == "probe") sum_probe += v, ++n_probe;
        else sum_joint += v, ++n_joint;
      }
    }
    os << '\n';
  }
  os << "\nMean TVD cond: probe " << (n_probe ? sum_probe / n_probe : 0.0) << ", joint "
     << (n_joint ? sum_joint / n_joint : 0.0) << '\n';
  return os.str();
}

void run_validate(const RunConfig& cfg, std::ostream& log) {
  nlohmann::json summary = nlohmann::json::object();
  std::vector<fs::path> inputs;
  std::optional<ActivationDataset> acts;
  if (!cfg.activations.empty()) {
    require_path(cfg.activations, "/data/activations", "activations");
    acts = load_activations(cfg.activations);
    summary["activations"] = {{"N", acts->size()}, {"d", acts->dim()}, {"C", acts->num_classes}};
    inputs.push_back(cfg.activations);
    log << "activations: N=" << acts->size() << " d=" << acts->dim() << " C=" << acts->num_classes << '\n';
  }
  if (!cfg.embeddings.empty()) {
    require_path(cfg.embeddings, "/data/embeddings", "embeddings");
    EmbeddingDataset e = load_embeddings(cfg.embeddings);
    if (acts) e.check_aligned(*acts);
    summary["embeddings"] = {{"N", e.size()}, {"e", e.embeddings.cols()}};
    inputs.push_back(cfg.embeddings);
    log << "embeddings: N=" << e.size() << " e=" << e.embeddings.cols() << '\n';
  }
  if (!cfg.head.empty()) {
    auto head = load_required_head(cfg);
    summary["head"] = {{"d", head->dim()}, {"C", head->num_classes()}, {"context", head->needs_context()}};
    inputs.push_back(cfg.head);
    if (acts) {
      if (head->dim() != acts->dim()) throw ValidationError("head width differs from the activations");
      if (head->num_classes() != acts->num_classes)
        throw ValidationError("head class count differs from the activations");
      auto pred = predict_labels(head->forward_batch(acts->hidden, acts->sentence_ids));
      int agree = 0;
      for (int i = 0; i < acts->size(); ++i) agree += pred[i] == acts->pred_labels[i];
      double rate = static_cast<double>(agree) / acts->size();
      summary["head"]["prediction_agreement"] = rate;
      log << "head reproduces stored predictions on " << 100.0 * rate << "% of sentences\n";
    }
  }
  if (inputs.empty()) throw ConfigError("/data", "nothing to validate");
  fs::create_directories(cfg.output);
  write_json(cfg.output / "validate.json", summary);
  write_run_json(cfg, "validate", inputs, cfg.output);
}

void run_synth(const RunConfig& cfg, std::ostream& log) {
  SynthData data = generate_synth(cfg.synth);
  fs::create_directories(cfg.output);
  write_container(cfg.output / "activations", to_container(data.activations));
  write_container(cfg.output / "embeddings", to_container(data.embeddings));
  write_container(cfg.output / "head", data.head.to_container());
  Container truth;
  truth.kind = "synth_truth";
  truth.metadata = {{"spec", to_json(cfg.synth)},
                    {"concept_class", data.truth.concept_class},
                    {"coherence", data.truth.coherence},
                    {"clean_accuracy", data.truth.clean_accuracy},
                    {"flips", data.truth.flips}};
  truth.add(matrix_tensor("dictionary", data.truth.dictionary));
  truth.add(vector_tensor("offset", data.truth.offset));
  write_container(cfg.output / "truth", truth);
  for (const char* sub : {"activations", "embeddings", "head", "truth"})
    write_run_json(cfg, "synth", {}, cfg.output / sub);
  write_run_json(cfg, "synth", {}, cfg.output);
  log << "synth: wrote N=" << data.activations.size() << " d=" << data.activations.dim()
      << " to " << cfg.output.string() << " (clean head accuracy " << data.truth.clean_accuracy << ")\n";
}

void run_train(const RunConfig& cfg, std::ostream& log) {
  DatasetSplit split = load_split(cfg);
  std::vector<fs::path> inputs{cfg.activations};
  fs::create_directories(cfg.output);
  if (cfg.grid) {
    nlohmann::json infos = nlohmann::json::array();
    for (const auto& cell : grid_cells(*cfg.grid)) {
      log << "train grid cell " << cell.name() << '\n';
      TrainedMethod t = train_grid_cell(cell, split.train, split.val, cfg);
      fs::path dir = cfg.output / "grid" / cell.name();
      save_concept_model(*t.model, dir / "checkpoint");
      write_json(dir / "train_report.json", t.info);
      write_run_json(cfg, "train", inputs, dir / "checkpoint");
      infos.push_back(t.info);
    }
    write_json(cfg.output / "grid_train.json", infos);
    write_run_json(cfg, "train", inputs, cfg.output);
    return;
  }
  std::unique_ptr<DownstreamHead> head;
  if (cfg.method == "conceptshap") {
    head = load_required_head(cfg);
    inputs.push_back(cfg.head);
  }
  TrainedMethod t = train_method(cfg.method, split.train, split.val, head.get(), cfg);
  save_concept_model(*t.model, cfg.checkpoint_dir());
  write_run_json(cfg, "train", inputs, cfg.checkpoint_dir());
  write_json(cfg.output / "train_report.json", t.info);
  write_run_json(cfg, "train", inputs, cfg.output);
  log << "train: " << cfg.method << " with " << t.model->num_concepts() << " concepts -> "
      << cfg.checkpoint_dir().string() << '\n';
}

void run_eval(const RunConfig& cfg, std::ostream& log) {
  DatasetSplit split = load_split(cfg);
  auto head = load_required_head(cfg);
  std::vector<fs::path> inputs{cfg.activations, cfg.head};
  std::optional<EmbeddingDataset> emb;
  if (!cfg.embeddings.empty()) {
    require_path(cfg.embeddings, "/data/embeddings", "embeddings");
    EmbeddingDataset all = load_embeddings(cfg.embeddings);
    emb = subset(all, split.indices.val);
    inputs.push_back(cfg.embeddings);
  }
  const EmbeddingDataset* e = emb ? &*emb : nullptr;
  fs::create_directories(cfg.output);
  if (cfg.grid) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : grid_cells(*cfg.grid)) {
      fs::path dir = cfg.output / "grid" / cell.name();
      auto model = load_concept_model(dir / "checkpoint");
      MetricsReport r = evaluate(*model, *head, split.val, e, cfg.metrics);
      write_json(dir / "metrics.json", r.to_json());
      write_run_json(cfg, "eval", {cfg.activations, cfg.head, dir / "checkpoint"}, dir);
      int d_sae = grid_train_config(cfg, cell, split.val.dim()).d_sae;
      cells.push_back(cell_summary(cell, d_sae, r));
      log << "eval " << cell.name() << ": RAcc " << r.racc << '\n';
    }
    write_json(cfg.output / "grid.json", {{"cells", cells}});
    write_run_json(cfg, "eval", inputs, cfg.output);
    return;
  }
  inputs.push_back(cfg.checkpoint_dir());
  auto model = load_concept_model(cfg.checkpoint_dir());
  MetricsReport r = evaluate(*model, *head, split.val, e, cfg.metrics);
  write_json(cfg.output / "metrics.json", r.to_json());
  write_text(cfg.output / "metrics.csv", r.to_csv());
  write_run_json(cfg, "eval", inputs, cfg.output);
  log << "eval: " << r.method << " RAcc " << r.racc << ", mean TVD cond "
      << r.mean_tvd_cond.value_or(0.0) << '\n';
}

void run_sweep(const RunConfig& cfg, std::ostream& log) {
  DatasetSplit split = load_split(cfg);
  auto head = load_required_head(cfg);
  auto model = load_concept_model(cfg.checkpoint_dir());
  auto labels = group_labels(split.val, cfg.group_by_gold);
  ClassScoreTable table = class_scores(model->encode(split.val.hidden), labels, split.val.num_classes,
                                       cfg.metrics.gmm);
  SweepResult sweep = segment_ablation_sweep(*model, *head, split.val, table, labels, cfg.sweep_levels);
  fs::create_directories(cfg.output);
  write_json(cfg.output / "class_scores.json", table.to_json());
  write_json(cfg.output / "sweep.json", sweep.to_json());
  write_run_json(cfg, "sweep", {cfg.activations, cfg.head, cfg.checkpoint_dir()}, cfg.output);
  for (const auto& l : sweep.levels)
    log << "sweep p=" << l.percent << "%: mean ΔAcc " << l.mean_dacc_global << '\n';
}

void run_pca_export(const RunConfig& cfg, std::ostream& log) {
  DatasetSplit split = load_split(cfg);
  auto model = load_concept_model(cfg.checkpoint_dir());
  auto labels = group_labels(split.val, cfg.group_by_gold);
  ClassScoreTable table = class_scores(model->encode(split.val.hidden), labels, split.val.num_classes,
                                       cfg.metrics.gmm);
  fs::create_directories(cfg.output);
  write_json(cfg.output / "pca.json", pca_export(split.val, *model, table, cfg.pca));
  write_run_json(cfg, "pca-export", {cfg.activations, cfg.checkpoint_dir()}, cfg.output);
  log << "pca-export: " << (cfg.output / "pca.json").string() << '\n';
}

void run_report(const RunConfig& cfg, std::ostream& log) {
  std::vector<fs::path> files;
  for (const auto& p : cfg.report_inputs)
    files.push_back(fs::is_directory(p) ? p / "metrics.json" : p);
  if (files.empty() && fs::exists(cfg.output / "metrics.json")) files.push_back(cfg.output / "metrics.json");
  std::vector<MetricsReport> reports;
  for (const auto& f : files) reports.push_back(report_from_json(read_json(f)));
  std::ostringstream md;
  md << "# concept-probe report\n\n";
  if (!reports.empty()) md << render_metrics_table(reports) << '\n';
  if (fs::exists(cfg.output / "grid.json")) {
    md << "## Ablation grid\n\n" << render_grid_report(read_json(cfg.output / "grid.json")) << '\n';
    files.push_back(cfg.output / "grid.json");
  }
  if (files.empty()) throw ValidationError("report: no metrics.json or grid.json to render");
  write_text(cfg.output / "report.md", md.str());
  write_run_json(cfg, "report", files, cfg.output);
  log << "report: " << (cfg.output / "report.md").string() << '\n';
}

void run_subcommand(std::string_view name, const RunConfig& cfg, std::ostream& log) {
  if (name == "validate") return run_validate(cfg, log);
  if (name == "synth") return run_synth(cfg, log);
  if (name == "train") return run_train(cfg, log);
  if (name == "eval") return run_eval(cfg, log);
  if (name == "sweep") return run_sweep(cfg, log);
  if (name == "pca-export") return run_pca_export(cfg, log);
  if (name == "report") return run_report(cfg, log);
  throw ValidationError("unknown subcommand '" + std::string(name) + "'");
}

}  // namespace concept_probe
