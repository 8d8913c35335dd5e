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

#include "concept_probe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "concept_probe/error.hpp"
#include "concept_probe/layers.hpp"
#include "concept_probe/parallel.hpp"

namespace concept_probe {
namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  int n = 0;
  for (const auto& x : v)
    if (x) s += *x, ++n;
  if (n == 0) return std::nullopt;
  return s / n;
}

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

std::vector<std::string> subset_ids(const std::vector<std::string>& ids, std::span<const int> rows) {
  std::vector<std::string> out;
  if (ids.empty()) return out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(ids[r]);
  return out;
}

MatrixD unit_embeddings(const MatrixF& e) {
  MatrixD u = e.cast<double>();
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    double n = u.row(i).norm();
    if (!(n > 0)) throw ValidationError("embeddings: row " + std::to_string(i) + " has zero norm");
    u.row(i) /= n;
  }
  return u;
}

}  // namespace

MatrixF head_probabilities(const DownstreamHead& head, const MatrixF& h,
                           const std::vector<std::string>& sentence_ids) {
  return head.forward_batch(h, sentence_ids);
}

double recovery_accuracy(const ConceptModel& model, const DownstreamHead& head,
                         const ActivationDataset& ds) {
  if (ds.size() == 0) throw ValidationError("recovery_accuracy: empty dataset");
  auto original = predict_labels(head_probabilities(head, ds.hidden, ds.sentence_ids));
  auto recon = predict_labels(head_probabilities(head, model.reconstruct(ds.hidden), ds.sentence_ids));
  int same = 0;
  for (std::size_t i = 0; i < original.size(); ++i) same += original[i] == recon[i];
  return static_cast<double>(same) / static_cast<double>(original.size());
}

MatrixF ablate_feature(const MatrixF& z, int j) {
  if (j < 0 || j >= z.cols()) throw ValidationError("ablate_feature: concept index out of range");
  MatrixF out = z;
  out.col(j).setZero();
  return out;
}

ReconstructionPass reconstruction_pass(const ConceptModel& model, const DownstreamHead& head,
                                       const ActivationDataset& ds) {
  ReconstructionPass pass;
  pass.z = model.encode(ds.hidden);
  pass.probs = head_probabilities(head, model.decode(pass.z), ds.sentence_ids);
  pass.pred = predict_labels(pass.probs);
  return pass;
}

AblationEffects ablation_effects(const ConceptModel& model, const DownstreamHead& head,
                                 const ActivationDataset& ds, const ReconstructionPass& pass,
                                 int j) {
  const int n = ds.size();
  AblationEffects e;
  e.tvd.assign(n, 0.0);
  e.flip.assign(n, 0);
  e.correct_before.resize(n);
  for (int i = 0; i < n; ++i) e.correct_before[i] = pass.pred[i] == ds.gold_labels[i];
  e.correct_after = e.correct_before;
  for (int i = 0; i < n; ++i)
    if (pass.z(i, j) != 0.0f) e.activating.push_back(i);
  if (e.activating.empty()) return e;

  MatrixF z_act = ablate_feature(gather_rows(pass.z, e.activating), j);
  MatrixF probs = head_probabilities(head, model.decode(z_act), subset_ids(ds.sentence_ids, e.activating));
  auto pred = predict_labels(probs);
  for (std::size_t q = 0; q < e.activating.size(); ++q) {
    const int i = e.activating[q];
    double l1 = (pass.probs.row(i).cast<double>() - probs.row(q).cast<double>()).cwiseAbs().sum();
    e.tvd[i] = 0.5 * l1;
    e.flip[i] = pred[q] != pass.pred[i];
    e.correct_after[i] = pred[q] == ds.gold_labels[i];
  }
  return e;
}

CausalMetrics summarize_effects(const AblationEffects& e, int j, int n) {
  CausalMetrics c;
  c.index = j;
  c.n_active = static_cast<int>(e.activating.size());
  c.rate = static_cast<double>(c.n_active) / n;
  double dacc = 0.0, flips = 0.0, tvd = 0.0;
  for (int i : e.activating) {
    dacc += e.correct_after[i] - e.correct_before[i];
    flips += e.flip[i];
    tvd += e.tvd[i];
  }
  c.dacc_global = dacc / n;
  c.dflip_global = flips / n;
  c.tvd_global = tvd / n;
  if (c.n_active > 0) {
    c.dacc_cond = dacc / c.n_active;
    c.dflip_cond = flips / c.n_active;
    c.tvd_cond = tvd / c.n_active;
  }
  return c;
}

CausalMetrics causal_metrics(const ConceptModel& model, const DownstreamHead& head,
                             const ActivationDataset& ds, const ReconstructionPass& pass, int j) {
  return summarize_effects(ablation_effects(model, head, ds, pass, j), j, ds.size());
}

double ActivatingSet::rate() const {
  return n_total > 0 ? static_cast<double>(members.size()) / n_total : 0.0;
}

ActivatingSet activating_sentences(std::span<const float> column, int index,
                                   const GmmOptions& opts) {
  std::vector<double> values(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) values[i] = std::abs(static_cast<double>(column[i]));
  Gmm1D g = gmm1d_fit_threshold(values, opts);
  ActivatingSet s;
  s.index = index;
  s.threshold = g.threshold;
  s.degenerate = g.degenerate;
  s.n_total = static_cast<int>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (g.activating(values[i])) s.members.push_back(static_cast<int>(i));
  return s;
}

ConceptSimResult concept_sim(std::span<const int> members, const MatrixF& embeddings, int cap,
                             std::uint64_t seed) {
  ConceptSimResult r;
  r.n_members = static_cast<int>(members.size());
  std::vector<int> used(members.begin(), members.end());
  if (cap >= 2 && static_cast<int>(used.size()) > cap) {
    std::mt19937_64 rng(seed);
    std::shuffle(used.begin(), used.end(), rng);
    used.resize(cap);
  }
  r.n_used = static_cast<int>(used.size());
  if (r.n_used < 2) return r;
  VectorD sum = VectorD::Zero(embeddings.cols());
  for (int i : used) {
    VectorD u = embeddings.row(i).transpose().cast<double>();
    double n = u.norm();
    if (!(n > 0)) throw ValidationError("concept_sim: embedding row " + std::to_string(i) + " has zero norm");
    sum += u / n;
  }
  const double n = r.n_used;
  r.score = (sum.squaredNorm() - n) / (n * (n - 1.0));
  return r;
}

double concept_sim_aggregate(std::span<const std::optional<double>> scores,
                             std::span<const int> sizes) {
  if (scores.size() != sizes.size())
    throw ValidationError("concept_sim_aggregate: scores and sizes differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!scores[j] || sizes[j] < 2) continue;
    double w = 0.5 * static_cast<double>(sizes[j]) * (sizes[j] - 1.0);
    num += w * *scores[j];
    den += w;
  }
  if (!(den > 0)) throw ValidationError("concept_sim_aggregate: no concept has two members");
  return num / den;
}

SentenceSimCurve sentence_sim(const MatrixF& z, const MatrixF& embeddings, int p,
                              std::int64_t pair_cap, std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(z.rows());
  if (p > z.cols()) throw ValidationError("sentence_sim: p exceeds the concept count");
  if (p < 1) throw ValidationError("sentence_sim: p must be >= 1");
  if (embeddings.rows() != n) throw ValidationError("sentence_sim: embeddings are not row-aligned");
  MatrixD u = unit_embeddings(embeddings);

  SentenceSimCurve out;
  std::vector<std::vector<int>> sets(n);
  std::vector<float> mag(z.cols());
  for (std::int64_t i = 0; i < n; ++i) {
    int nonzero = 0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      mag[j] = std::abs(z(i, j));
      nonzero += mag[j] != 0.0f;
    }
    if (nonzero < p) ++out.padded_sentences;
    sets[i] = top_k_indices<float>(std::span<const float>(mag), p);  // sorted ascending
  }
  auto shared = [&](std::int64_t a, std::int64_t b) {
    int s = 0;
    auto ia = sets[a].begin(), ib = sets[b].begin();
    while (ia != sets[a].end() && ib != sets[b].end()) {
      if (*ia == *ib) ++s, ++ia, ++ib;
      else if (*ia < *ib) ++ia;
      else ++ib;
    }
    return s;
  };

  std::vector<double> sum(n * (p + 1), 0.0);
  std::vector<std::int64_t> cnt(n * (p + 1), 0);
  auto add = [&](std::int64_t a, std::int64_t b) {
    int k = shared(a, b);
    double c = u.row(a).dot(u.row(b));
    sum[a * (p + 1) + k] += c;
    cnt[a * (p + 1) + k] += 1;
    sum[b * (p + 1) + k] += c;
    cnt[b * (p + 1) + k] += 1;
  };
  const std::int64_t all_pairs = n * (n - 1) / 2;
  if (all_pairs <= pair_cap) {
    for (std::int64_t a = 0; a < n; ++a)
      for (std::int64_t b = a + 1; b < n; ++b) add(a, b);
    out.pairs_used = all_pairs;
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    for (std::int64_t t = 0; t < pair_cap; ++t) {
      std::int64_t a = pick(rng), b = pick(rng);
      while (b == a) b = pick(rng);
      add(a, b);
    }
    out.pairs_used = pair_cap;
  }
  out.values.assign(p + 1, std::nullopt);
  for (int k = 0; k <= p; ++k) {
    double acc = 0.0;
    std::int64_t m = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      auto c = cnt[i * (p + 1) + k];
      if (c == 0) continue;
      acc += sum[i * (p + 1) + k] / static_cast<double>(c);
      ++m;
    }
    if (m > 0) out.values[k] = acc / static_cast<double>(m);
  }
  return out;
}

MetricsReport evaluate(const ConceptModel& model, const DownstreamHead& head,
                       const ActivationDataset& ds, const EmbeddingDataset* embeddings,
                       const MetricsOptions& opts) {
  ds.validate();
  if (embeddings) embeddings->check_aligned(ds);
  const int n = ds.size(), m = model.num_concepts();
  MetricsReport r;
  r.method = model.method();
  r.n_sentences = n;
  r.options = opts;

  auto original = predict_labels(head_probabilities(head, ds.hidden, ds.sentence_ids));
  ReconstructionPass pass = reconstruction_pass(model, head, ds);
  int same = 0;
  for (int i = 0; i < n; ++i) same += original[i] == pass.pred[i];
  r.racc = static_cast<double>(same) / n;

  r.concepts.resize(m);
  for (int j = 0; j < m; ++j) {
    ConceptRow& row = r.concepts[j];
    row.index = j;
    row.native_index = model.selected_indices()[j];
    row.causal = causal_metrics(model, head, ds, pass, j);
    std::vector<float> col(pass.z.col(j).data(), pass.z.col(j).data() + n);
    if (n >= 8) {
      ActivatingSet s = activating_sentences(col, j, opts.gmm);
      row.gmm_rate = s.rate();
      row.gmm_threshold = s.threshold;
      row.gmm_members = static_cast<int>(s.members.size());
      if (embeddings)
        row.concept_sim = concept_sim(s.members, embeddings->embeddings, opts.concept_sim_cap,
                                      opts.seed + static_cast<std::uint64_t>(j));
    }
  }

  std::vector<double> dacc, adacc, dflip, tvd, rate, grate;
  std::vector<std::optional<double>> dacc_c, adacc_c, dflip_c, tvd_c, sims;
  std::vector<int> sizes;
  for (const auto& row : r.concepts) {
    const auto& c = row.causal;
    dacc.push_back(c.dacc_global);
    adacc.push_back(std::abs(c.dacc_global));
    dflip.push_back(c.dflip_global);
    tvd.push_back(c.tvd_global);
    rate.push_back(c.rate);
    grate.push_back(row.gmm_rate);
    dacc_c.push_back(c.dacc_cond);
    adacc_c.push_back(c.dacc_cond ? std::optional<double>(std::abs(*c.dacc_cond)) : std::nullopt);
    dflip_c.push_back(c.dflip_cond);
    tvd_c.push_back(c.tvd_cond);
    sims.push_back(row.concept_sim.score);
    sizes.push_back(row.concept_sim.n_members);
  }
  r.mean_dacc_global = mean_of(dacc);
  r.mean_abs_dacc_global = mean_of(adacc);
  r.mean_dflip_global = mean_of(dflip);
  r.mean_tvd_global = mean_of(tvd);
  r.mean_dacc_cond = mean_defined(dacc_c);
  r.mean_abs_dacc_cond = mean_defined(adacc_c);
  r.mean_dflip_cond = mean_defined(dflip_c);
  r.mean_tvd_cond = mean_defined(tvd_c);
  r.mean_rate = mean_of(rate);
  r.max_rate = rate.empty() ? 0.0 : *std::max_element(rate.begin(), rate.end());
  r.mean_gmm_rate = mean_of(grate);
  if (embeddings) {
    bool any = false;
    for (std::size_t j = 0; j < sims.size(); ++j) any = any || (sims[j] && sizes[j] >= 2);
    if (any) r.concept_sim = concept_sim_aggregate(sims, sizes);
    if (m >= opts.sentence_sim_p)
      r.sentence_sim = sentence_sim(pass.z, embeddings->embeddings, opts.sentence_sim_p,
                                    opts.sentence_pair_cap, opts.seed);
  }
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : concepts) {
    const auto& c = row.causal;
    rows.push_back({{"concept", row.index},
                    {"native_index", row.native_index},
                    {"n_active", c.n_active},
                    {"act_rate", c.rate},
                    {"gmm_rate", row.gmm_rate},
                    {"gmm_threshold", row.gmm_threshold},
                    {"dacc_global", c.dacc_global},
                    {"dacc_cond", opt_json(c.dacc_cond)},
                    {"dflip_global", c.dflip_global},
                    {"dflip_cond", opt_json(c.dflip_cond)},
                    {"tvd_global", c.tvd_global},
                    {"tvd_cond", opt_json(c.tvd_cond)},
                    {"concept_sim", opt_json(row.concept_sim.score)},
                    {"concept_sim_members", row.concept_sim.n_members},
                    {"concept_sim_used", row.concept_sim.n_used}});
  }
  nlohmann::json j = {{"method", method},
                      {"n_sentences", n_sentences},
                      {"racc", racc},
                      {"concepts", rows},
                      {"aggregate",
                       {{"dacc_global", mean_dacc_global},
                        {"abs_dacc_global", mean_abs_dacc_global},
                        {"dflip_global", mean_dflip_global},
                        {"tvd_global", mean_tvd_global},
                        {"dacc_cond", opt_json(mean_dacc_cond)},
                        {"abs_dacc_cond", opt_json(mean_abs_dacc_cond)},
                        {"dflip_cond", opt_json(mean_dflip_cond)},
                        {"tvd_cond", opt_json(mean_tvd_cond)},
                        {"mean_act_rate", mean_rate},
                        {"max_act_rate", max_rate},
                        {"mean_gmm_rate", mean_gmm_rate},
                        {"concept_sim", opt_json(concept_sim)}}},
                      {"options",
                       {{"seed", options.seed},
                        {"concept_sim_cap", options.concept_sim_cap},
                        {"sentence_pair_cap", options.sentence_pair_cap},
                        {"sentence_sim_p", options.sentence_sim_p}}}};
  if (sentence_sim) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& v : sentence_sim->values) curve.push_back(opt_json(v));
    j["sentence_sim"] = {{"curve", curve},
                         {"padded_sentences", sentence_sim->padded_sentences},
                         {"pairs_used", sentence_sim->pairs_used}};
  }
  return j;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "row,native_index,act_rate,gmm_rate,dacc_global,dacc_cond,dflip_global,dflip_cond,"
        "tvd_global,tvd_cond,concept_sim\n";
  for (const auto& row : concepts) {
    const auto& c = row.causal;
    os << row.index << ',' << row.native_index << ',' << c.rate << ',' << row.gmm_rate << ','
       << c.dacc_global << ',' << opt_str(c.dacc_cond) << ',' << c.dflip_global << ','
       << opt_str(c.dflip_cond) << ',' << c.tvd_global << ',' << opt_str(c.tvd_cond) << ','
       << opt_str(row.concept_sim.score) << '\n';
  }
  os << "mean,," << mean_rate << ',' << mean_gmm_rate << ',' << mean_dacc_global << ','
     << opt_str(mean_dacc_cond) << ',' << mean_dflip_global << ',' << opt_str(mean_dflip_cond)
     << ',' << mean_tvd_global << ',' << opt_str(mean_tvd_cond) << ',' << opt_str(concept_sim)
     << '\n';
  os << "max,," << max_rate << ",,,,,,,,\n";
  os << "racc,," << racc << ",,,,,,,,\n";
  return os.str();
}

std::string render_metrics_table(std::span<const MetricsReport> reports) {
  std::ostringstream os;
  os << std::fixed;
  auto pct = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * v;
    return s.str();
  };
  auto num = [](const std::optional<double>& v, int digits = 4) {
    if (!v) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << *v;
    return s.str();
  };
  os << "| Metric |";
  for (const auto& r : reports) os << ' ' << r.method << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < reports.size(); ++i) os << "---|";
  os << '\n';
  auto line = [&](const std::string& name, auto&& cell) {
    os << "| " << name << " |";
    for (const auto& r : reports) os << ' ' << cell(r) << " |";
    os << '\n';
  };
  line("RAcc (%)", [&](const MetricsReport& r) { return pct(r.racc); });
  line("ΔAcc global (%)", [&](const MetricsReport& r) { return pct(r.mean_dacc_global); });
  line("ΔAcc cond (%)", [&](const MetricsReport& r) {
    return r.mean_dacc_cond ? pct(*r.mean_dacc_cond) : std::string("n/a");
  });
  line("Δf global", [&](const MetricsReport& r) { return num(r.mean_dflip_global); });
  line("Δf cond", [&](const MetricsReport& r) { return num(r.mean_dflip_cond); });
  line("TVD global", [&](const MetricsReport& r) { return num(r.mean_tvd_global); });
  line("TVD cond", [&](const MetricsReport& r) { return num(r.mean_tvd_cond); });
  line("Avg feature act. rate (%)", [&](const MetricsReport& r) { return pct(r.mean_rate); });
  line("Max feature act. rate (%)", [&](const MetricsReport& r) { return pct(r.max_rate); });
  line("ConceptSim", [&](const MetricsReport& r) { return num(r.concept_sim); });
  line("Concepts", [&](const MetricsReport& r) { return std::to_string(r.concepts.size()); });
  return os.str();
}

}  // namespace concept_probe
