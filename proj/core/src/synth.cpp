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

#include "concept_probe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "concept_probe/error.hpp"

namespace concept_probe {

void SynthSpec::validate() const {
  auto fail = [](const std::string& f, const std::string& msg) {
    throw ValidationError("synth." + f + ": " + msg);
  };
  if (d < 2) fail("d", "must be >= 2");
  if (m_true < 1) fail("m_true", "must be >= 1");
  if (n < 2) fail("n", "must be >= 2");
  if (num_classes < 2) fail("num_classes", "must be >= 2");
  if (relevant_per_class < 1) fail("relevant_per_class", "every class needs a relevant concept");
  if (num_classes * relevant_per_class > m_true) fail("relevant_per_class", "exceeds m_true");
  if (k_true < 1 || k_true > m_true) fail("k_true", "must lie in [1, m_true]");
  if (k_true - 1 > m_true - num_classes * relevant_per_class)
    fail("k_true", "not enough irrelevant concepts for k_true - 1 per sentence");
  if (noise < 0) fail("noise", "must be >= 0");
  if (embed_dim < 1) fail("embed_dim", "must be >= 1");
  if (!(code_min > 0) || code_max < code_min) fail("code_min", "need 0 < code_min <= code_max");
}

nlohmann::json to_json(const SynthSpec& s) {
  return {{"d", s.d},
          {"m_true", s.m_true},
          {"n", s.n},
          {"k_true", s.k_true},
          {"num_classes", s.num_classes},
          {"relevant_per_class", s.relevant_per_class},
          {"noise", s.noise},
          {"embed_dim", s.embed_dim},
          {"head_scale", s.head_scale},
          {"code_min", s.code_min},
          {"code_max", s.code_max},
          {"offset_norm", s.offset_norm},
          {"seed", s.seed}};
}

void merge_json(SynthSpec& s, const nlohmann::json& j) {
  s.d = j.value("d", s.d);
  s.m_true = j.value("m_true", s.m_true);
  s.n = j.value("n", s.n);
  s.k_true = j.value("k_true", s.k_true);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.relevant_per_class = j.value("relevant_per_class", s.relevant_per_class);
  s.noise = j.value("noise", s.noise);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.head_scale = j.value("head_scale", s.head_scale);
  s.code_min = j.value("code_min", s.code_min);
  s.code_max = j.value("code_max", s.code_max);
  s.offset_norm = j.value("offset_norm", s.offset_norm);
  s.seed = j.value("seed", s.seed);
}

std::vector<int> SynthTruth::relevant_concepts() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < concept_class.size(); ++k)
    if (concept_class[k] >= 0) out.push_back(static_cast<int>(k));
  return out;
}

SynthData generate_synth(const SynthSpec& spec) {
  spec.validate();
  const int d = spec.d, m = spec.m_true, n = spec.n, C = spec.num_classes;
  const int n_rel = C * spec.relevant_per_class;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> magnitude(spec.code_min, spec.code_max);

  SynthTruth truth;
  MatrixD dict(d, m);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < d; ++i) dict(i, k) = normal(rng);
    if (m <= d)
      for (int q = 0; q < k; ++q) dict.col(k) -= dict.col(q).dot(dict.col(k)) * dict.col(q);
    dict.col(k).normalize();
  }
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      truth.coherence = std::max(truth.coherence, std::abs(dict.col(a).dot(dict.col(b))));
  truth.dictionary = dict.cast<float>();

  VectorD offset(d);
  for (int i = 0; i < d; ++i) offset(i) = normal(rng);
  offset *= spec.offset_norm / offset.norm();
  truth.offset = offset.cast<float>();

  truth.concept_class.assign(m, -1);
  for (int k = 0; k < n_rel; ++k) truth.concept_class[k] = k / spec.relevant_per_class;
  std::vector<int> irrelevant;
  for (int k = n_rel; k < m; ++k) irrelevant.push_back(k);

  std::vector<int> gold(n);
  MatrixD codes = MatrixD::Zero(n, m);
  std::uniform_int_distribution<int> pick_class(0, C - 1);
  std::uniform_int_distribution<int> pick_rel(0, spec.relevant_per_class - 1);
  for (int i = 0; i < n; ++i) {
    gold[i] = pick_class(rng);
    codes(i, gold[i] * spec.relevant_per_class + pick_rel(rng)) = magnitude(rng);
    std::vector<int> pool = irrelevant;
    for (int q = 0; q < spec.k_true - 1; ++q) {
      std::uniform_int_distribution<int> pick(q, static_cast<int>(pool.size()) - 1);
      std::swap(pool[q], pool[pick(rng)]);
      codes(i, pool[q]) = magnitude(rng);
    }
  }
  truth.codes = codes.cast<float>();

  MatrixD clean = codes * dict.transpose();
  clean.rowwise() += offset.transpose();
  MatrixD states = clean;
  for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] += spec.noise * normal(rng);

  MatrixD w = MatrixD::Zero(C, d);
  for (int k = 0; k < n_rel; ++k) w.row(truth.concept_class[k]) += spec.head_scale * dict.col(k).transpose();
  VectorD b = -(w * offset);
  LinearHead head(w.cast<float>(), b.cast<float>());

  ActivationDataset ds;
  ds.hidden = states.cast<float>();
  ds.num_classes = C;
  ds.gold_labels = gold;
  ds.pred_labels = predict_labels(head.forward_batch(ds.hidden, {}));
  ds.layer_index = 0;
  ds.source_tag = "synth";
  ds.sentence_ids.resize(n);
  for (int i = 0; i < n; ++i) ds.sentence_ids[i] = "s" + std::to_string(i);
  for (int c = 0; c < C; ++c) ds.class_names.push_back("class" + std::to_string(c));

  auto clean_pred = predict_labels(head.forward_batch(clean.cast<float>(), {}));
  int ok = 0;
  for (int i = 0; i < n; ++i) ok += clean_pred[i] == gold[i];
  truth.clean_accuracy = static_cast<double>(ok) / n;

  // Removing a relevant concept's code must change some predictions.
  truth.flips.assign(m, 0);
  for (int k = 0; k < m; ++k) {
    std::vector<int> rows;
    for (int i = 0; i < n; ++i)
      if (codes(i, k) != 0.0) rows.push_back(i);
    if (rows.empty()) continue;
    MatrixF ablated(rows.size(), d);
    for (std::size_t q = 0; q < rows.size(); ++q)
      ablated.row(q) = (states.row(rows[q]) - codes(rows[q], k) * dict.col(k).transpose()).cast<float>();
    auto pred = predict_labels(head.forward_batch(ablated, {}));
    for (std::size_t q = 0; q < rows.size(); ++q) truth.flips[k] += pred[q] != ds.pred_labels[rows[q]];
  }
  for (int k = 0; k < n_rel; ++k)
    if (truth.flips[k] == 0)
      throw NumericalError("synth: relevant concept " + std::to_string(k) + " has no causal effect");

  MatrixD proj(spec.embed_dim, m);
  for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = normal(rng);
  EmbeddingDataset emb;
  emb.encoder = "synth-support-projection";
  emb.sentence_ids = ds.sentence_ids;
  MatrixD support = (codes.array() != 0.0).cast<double>();
  MatrixD e = support * proj.transpose();
  for (int i = 0; i < n; ++i) e.row(i).normalize();
  emb.embeddings = e.cast<float>();

  return {std::move(ds), std::move(emb), std::move(head), std::move(truth)};
}

DictionaryMatch match_dictionary(const MatrixF& learned, const MatrixF& truth) {
  if (learned.cols() == 0 || truth.cols() == 0) throw ValidationError("match_dictionary: empty input");
  if (learned.rows() != truth.rows()) throw ValidationError("match_dictionary: dimension mismatch");
  MatrixD a = learned.cast<double>(), t = truth.cast<double>();
  for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j).normalize();
  for (Eigen::Index j = 0; j < t.cols(); ++j) t.col(j).normalize();
  MatrixD cos = (t.transpose() * a).cwiseAbs();  // truth x learned

  struct Cand {
    double c;
    int ti, li;
  };
  std::vector<Cand> cands;
  for (int ti = 0; ti < cos.rows(); ++ti)
    for (int li = 0; li < cos.cols(); ++li) cands.push_back({cos(ti, li), ti, li});
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.c > y.c; });
  std::vector<bool> t_used(cos.rows(), false), l_used(cos.cols(), false);
  DictionaryMatch out;
  for (const auto& c : cands) {
    if (t_used[c.ti] || l_used[c.li]) continue;
    t_used[c.ti] = l_used[c.li] = true;
    out.truth_index.push_back(c.ti);
    out.learned_index.push_back(c.li);
    out.abs_cos.push_back(c.c);
  }
  out.mean_abs_cos = std::accumulate(out.abs_cos.begin(), out.abs_cos.end(), 0.0) /
                     static_cast<double>(out.abs_cos.size());
  return out;
}

}  // namespace concept_probe
