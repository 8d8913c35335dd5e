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

#include "concept_probe/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "concept_probe/error.hpp"
#include "concept_probe/metrics.hpp"
#include "concept_probe/pca.hpp"

namespace concept_probe {
namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

ClassScoreTable class_scores(const MatrixF& z, std::span<const int> labels, int num_classes,
                             const GmmOptions& gmm) {
  const Eigen::Index n = z.rows(), m = z.cols();
  if (static_cast<std::size_t>(n) != labels.size())
    throw ValidationError("class_scores: activations and labels differ in length");
  if (num_classes < 1) throw ValidationError("class_scores: need at least one class");
  ClassScoreTable t;
  t.num_classes = num_classes;
  std::vector<int> count(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ValidationError("class_scores: label out of range");
    ++count[y];
  }
  t.class_fraction.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) t.class_fraction[c] = static_cast<double>(count[c]) / n;

  MatrixD abs_z = z.cast<double>().cwiseAbs();
  MatrixD class_sum = MatrixD::Zero(m, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) class_sum.col(labels[i]) += abs_z.row(i).transpose();

  t.mean_abs.resize(m);
  t.scores = MatrixD::Zero(m, num_classes);
  t.segment.assign(m, -1);
  t.segments.assign(num_classes, {});
  t.majority_label.assign(m, -1);
  t.dead.assign(m, false);
  t.tied.assign(m, false);
  t.label_disagreement.assign(m, false);
  for (Eigen::Index j = 0; j < m; ++j) {
    t.mean_abs[j] = abs_z.col(j).mean();
    if (!(t.mean_abs[j] > 0.0)) {
      t.dead[j] = true;
      continue;
    }
    for (int c = 0; c < num_classes; ++c)
      if (count[c] > 0) t.scores(j, c) = class_sum(j, c) / count[c] / t.mean_abs[j];
    int best = 0;
    for (int c = 1; c < num_classes; ++c)
      if (t.scores(j, c) > t.scores(j, best)) best = c;
    for (int c = best + 1; c < num_classes; ++c)
      if (t.scores(j, c) == t.scores(j, best)) t.tied[j] = true;
    t.segment[j] = best;
    t.segments[best].push_back(static_cast<int>(j));

    if (n >= 8) {
      std::vector<float> col(z.col(j).data(), z.col(j).data() + n);
      ActivatingSet s = activating_sentences(col, static_cast<int>(j), gmm);
      std::vector<int> votes(num_classes, 0);
      for (int i : s.members) ++votes[labels[i]];
      if (!s.members.empty())
        t.majority_label[j] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    t.label_disagreement[j] = t.majority_label[j] >= 0 && t.majority_label[j] != best;
  }
  for (auto& seg : t.segments)
    std::stable_sort(seg.begin(), seg.end(),
                     [&](int a, int b) { return t.mean_abs[a] > t.mean_abs[b]; });
  return t;
}

nlohmann::json ClassScoreTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int j = 0; j < num_concepts(); ++j) {
    std::vector<double> s(scores.cols());
    for (Eigen::Index c = 0; c < scores.cols(); ++c) s[c] = scores(j, c);
    rows.push_back({{"concept", j},
                    {"mean_abs", mean_abs[j]},
                    {"class_scores", s},
                    {"segment", segment[j]},
                    {"majority_label", majority_label[j]},
                    {"dead", static_cast<bool>(dead[j])},
                    {"tied", static_cast<bool>(tied[j])},
                    {"label_disagreement", static_cast<bool>(label_disagreement[j])}});
  }
  return {{"num_classes", num_classes},
          {"class_fraction", class_fraction},
          {"segments", segments},
          {"concepts", rows}};
}

SweepResult segment_ablation_sweep(const ConceptModel& model, const DownstreamHead& head,
                                   const ActivationDataset& ds, const ClassScoreTable& table,
                                   std::span<const int> group_labels,
                                   std::span<const double> levels) {
  const int n = ds.size(), num_classes = table.num_classes;
  if (static_cast<int>(group_labels.size()) != n)
    throw ValidationError("segment_ablation_sweep: group labels are not row-aligned");
  if (table.num_concepts() != model.num_concepts())
    throw ValidationError("segment_ablation_sweep: score table and model disagree on concepts");
  const double nan = std::numeric_limits<double>::quiet_NaN();

  MatrixF z = model.encode(ds.hidden);
  auto before = predict_labels(head_probabilities(head, model.decode(z), ds.sentence_ids));
  std::vector<int> class_size(num_classes, 0), class_correct(num_classes, 0);
  int correct_before = 0;
  for (int i = 0; i < n; ++i) {
    bool ok = before[i] == ds.gold_labels[i];
    correct_before += ok;
    ++class_size[group_labels[i]];
    class_correct[group_labels[i]] += ok;
  }

  SweepResult r;
  for (int c = 0; c < num_classes; ++c) {
    r.class_accuracy_before.push_back(class_size[c] ? static_cast<double>(class_correct[c]) / class_size[c] : nan);
    if (table.segments[c].empty() || class_size[c] == 0) r.skipped_classes.push_back(c);
  }

  for (double p : levels) {
    if (p < 0 || p > 100) throw ValidationError("segment_ablation_sweep: levels must lie in [0, 100]");
    SweepLevel lvl;
    lvl.percent = p;
    lvl.dacc_global.assign(num_classes, nan);
    lvl.class_accuracy.assign(num_classes, nan);
    lvl.ablated.assign(num_classes, 0);
    double sum_dacc = 0.0, sum_acc = 0.0;
    int used = 0;
    for (int c = 0; c < num_classes; ++c) {
      const auto& seg = table.segments[c];
      if (seg.empty() || class_size[c] == 0) continue;
      const int count = static_cast<int>(std::ceil(p * static_cast<double>(seg.size()) / 100.0 - 1e-9));
      MatrixF za = z;
      for (int q = 0; q < count; ++q) za.col(seg[q]).setZero();
      auto after = predict_labels(head_probabilities(head, model.decode(za), ds.sentence_ids));
      int correct = 0, in_class = 0;
      for (int i = 0; i < n; ++i) {
        bool ok = after[i] == ds.gold_labels[i];
        correct += ok;
        if (group_labels[i] == c) in_class += ok;
      }
      lvl.ablated[c] = count;
      lvl.dacc_global[c] = static_cast<double>(correct - correct_before) / n;
      lvl.class_accuracy[c] = static_cast<double>(in_class) / class_size[c];
      sum_dacc += lvl.dacc_global[c];
      sum_acc += lvl.class_accuracy[c];
      ++used;
    }
    if (used > 0) {
      lvl.mean_dacc_global = sum_dacc / used;
      lvl.mean_class_accuracy = sum_acc / used;
    }
    r.levels.push_back(std::move(lvl));
  }
  for (std::size_t q = 1; q < r.levels.size(); ++q)
    if (r.levels[q].mean_dacc_global > r.levels[q - 1].mean_dacc_global) ++r.monotonicity_violations;
  return r;
}

nlohmann::json SweepResult::to_json() const {
  nlohmann::json lv = nlohmann::json::array();
  for (const auto& l : levels) {
    nlohmann::json dacc = nlohmann::json::array(), acc = nlohmann::json::array();
    for (double v : l.dacc_global) dacc.push_back(finite_or_null(v));
    for (double v : l.class_accuracy) acc.push_back(finite_or_null(v));
    lv.push_back({{"percent", l.percent},
                  {"mean_dacc_global", l.mean_dacc_global},
                  {"mean_class_accuracy", l.mean_class_accuracy},
                  {"dacc_global", dacc},
                  {"class_accuracy", acc},
                  {"ablated", l.ablated}});
  }
  nlohmann::json before = nlohmann::json::array();
  for (double v : class_accuracy_before) before.push_back(finite_or_null(v));
  return {{"levels", lv},
          {"skipped_classes", skipped_classes},
          {"class_accuracy_before", before},
          {"monotonicity_violations", monotonicity_violations}};
}

nlohmann::json pca_export(const ActivationDataset& ds, const ConceptModel& model,
                          const ClassScoreTable& table, const PcaExportOptions& opts) {
  const int n = ds.size();
  if (table.num_concepts() != model.num_concepts())
    throw ValidationError("pca_export: score table and model disagree on concepts");
  MatrixD h = ds.hidden.cast<double>();
  Pca2 pca = pca2_fit(h);

  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (opts.sample > 0 && n > opts.sample) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(opts.sample);
    std::sort(rows.begin(), rows.end());
  }
  MatrixD pts(rows.size(), h.cols());
  for (std::size_t q = 0; q < rows.size(); ++q) pts.row(q) = h.row(rows[q]);
  MatrixD proj = pca.project(pts);
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t q = 0; q < rows.size(); ++q)
    points.push_back({{"x", proj(q, 0)}, {"y", proj(q, 1)}, {"label", ds.pred_labels[rows[q]]}});

  nlohmann::json prototypes = nlohmann::json::array();
  for (int c = 0; c < ds.num_classes; ++c) {
    VectorD mean = VectorD::Zero(h.cols());
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      if (ds.pred_labels[i] == c) mean += h.row(i).transpose(), ++cnt;
    if (cnt == 0) continue;
    mean /= cnt;
    MatrixD p = pca.project(mean.transpose());
    prototypes.push_back({{"class", c}, {"x", p(0, 0)}, {"y", p(0, 1)}, {"count", cnt}});
  }

  MatrixD dirs = model.directions().cast<double>();
  double max_abs = 0.0;
  for (double v : table.mean_abs) max_abs = std::max(max_abs, v);
  nlohmann::json concepts = nlohmann::json::array();
  for (int j = 0; j < table.num_concepts(); ++j) {
    VectorD end = pca.components * (dirs.col(j) * table.mean_abs[j]);
    std::vector<double> colour(table.num_classes, 0.0);
    double total = 0.0;
    for (int c = 0; c < table.num_classes; ++c) {
      colour[c] = table.scores(j, c) * table.class_fraction[c];
      total += colour[c];
    }
    if (total > 0)
      for (double& v : colour) v /= total;
    concepts.push_back({{"concept", j},
                        {"native_index", model.selected_indices()[j]},
                        {"x", end(0)},
                        {"y", end(1)},
                        {"radius", max_abs > 0 ? table.mean_abs[j] / max_abs : 0.0},
                        {"mean_abs", table.mean_abs[j]},
                        {"segment", table.segment[j]},
                        {"color_fractions", colour}});
  }
  std::vector<double> comp0(pca.components.row(0).data(), pca.components.row(0).data() + h.cols());
  std::vector<double> comp1(pca.components.row(1).data(), pca.components.row(1).data() + h.cols());
  return {{"pca",
           {{"explained_variance", {pca.explained_variance(0), pca.explained_variance(1)}},
            {"components", {comp0, comp1}}}},
          {"seed", opts.seed},
          {"points", points},
          {"prototypes", prototypes},
          {"concepts", concepts}};
}

}  // namespace concept_probe
