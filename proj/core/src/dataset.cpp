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

#include "concept_probe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "concept_probe/error.hpp"

namespace concept_probe {
namespace {

std::vector<float> to_vector(const MatrixF& m) {
  return std::vector<float>(m.data(), m.data() + m.size());
}

MatrixF matrix_from(const Tensor& t, std::string_view what) {
  if (t.shape.size() != 2 || t.dtype == DType::kI32)
    throw ValidationError("tensor '" + t.name + "' must be a 2-D float tensor (" +
                          std::string(what) + ")");
  MatrixF m(t.shape[0], t.shape[1]);
  std::copy(t.floats.begin(), t.floats.end(), m.data());
  return m;
}

std::vector<int> labels_from(const Tensor& t, std::int64_t n) {
  if (t.dtype != DType::kI32 || t.shape.size() != 1 || t.shape[0] != n)
    throw ValidationError("tensor '" + t.name + "' must be i32 of shape [N]");
  return std::vector<int>(t.ints.begin(), t.ints.end());
}

void check_finite_rows(const MatrixF& m, std::string_view what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!m.row(i).allFinite()) {
      std::ostringstream os;
      os << what << " has a non-finite value in row " << i;
      throw ValidationError(os.str());
    }
  }
}

}  // namespace

void ActivationDataset::validate() const {
  const auto n = static_cast<std::size_t>(hidden.rows());
  if (n < 2) throw ValidationError("activation dataset needs N >= 2");
  if (hidden.cols() < 1) throw ValidationError("activation dataset has d = 0");
  if (num_classes < 1) throw ValidationError("activation dataset needs C >= 1");
  check_finite_rows(hidden, "hidden");
  if (pred_labels.size() != n || gold_labels.size() != n)
    throw ValidationError("label arrays must have length N");
  if (sentence_ids.size() != n) throw ValidationError("sentence_ids must have length N");
  auto check = [&](const std::vector<int>& labels, std::string_view what) {
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) {
        std::ostringstream os;
        os << what << "[" << i << "] = " << labels[i] << " is outside [0," << num_classes << ")";
        throw ValidationError(os.str());
      }
    }
  };
  check(pred_labels, "pred_labels");
  check(gold_labels, "gold_labels");
}

void EmbeddingDataset::validate() const {
  check_finite_rows(embeddings, "embeddings");
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    if (!(embeddings.row(i).norm() > 0.0f)) {
      std::ostringstream os;
      os << "embedding row " << i << " has zero norm";
      throw ValidationError(os.str());
    }
  }
  if (!sentence_ids.empty() && sentence_ids.size() != static_cast<std::size_t>(embeddings.rows()))
    throw ValidationError("embedding sentence_ids must have one entry per row");
}

void EmbeddingDataset::check_aligned(const ActivationDataset& ds) const {
  if (size() != ds.size())
    throw ValidationError("embedding rows (" + std::to_string(size()) +
                          ") differ from activation rows (" + std::to_string(ds.size()) + ")");
  if (!sentence_ids.empty() && sentence_ids != ds.sentence_ids)
    throw ValidationError("embedding sentence_ids are not aligned with the activation dataset");
}

Container to_container(const ActivationDataset& ds) {
  Container c;
  c.kind = kActivationsKind;
  c.metadata = {{"d", ds.dim()},
                {"N", ds.size()},
                {"C", ds.num_classes},
                {"layer_index", ds.layer_index},
                {"source_tag", ds.source_tag},
                {"class_names", ds.class_names}};
  if (!ds.label_token_ids.empty()) c.metadata["label_token_ids"] = ds.label_token_ids;
  c.sentence_ids = ds.sentence_ids;
  c.add(Tensor::f32("hidden", {ds.size(), ds.dim()}, to_vector(ds.hidden)));
  c.add(Tensor::i32("pred_labels", {ds.size()}, ds.pred_labels));
  c.add(Tensor::i32("gold_labels", {ds.size()}, ds.gold_labels));
  return c;
}

Container to_container(const EmbeddingDataset& ds) {
  Container c;
  c.kind = kEmbeddingsKind;
  c.metadata = {{"N", ds.size()}, {"e", ds.embeddings.cols()}, {"encoder", ds.encoder}};
  c.sentence_ids = ds.sentence_ids;
  c.add(Tensor::f32("embeddings", {ds.size(), ds.embeddings.cols()}, to_vector(ds.embeddings)));
  return c;
}

ActivationDataset activations_from_container(const Container& c) {
  if (c.kind != kActivationsKind)
    throw ValidationError("expected an activations container, found '" + c.kind + "'");
  ActivationDataset ds;
  ds.hidden = matrix_from(c.at("hidden"), "hidden states");
  ds.pred_labels = labels_from(c.at("pred_labels"), ds.hidden.rows());
  ds.gold_labels = labels_from(c.at("gold_labels"), ds.hidden.rows());
  ds.sentence_ids = c.sentence_ids;
  const auto& md = c.metadata;
  ds.num_classes = md.value("C", 0);
  ds.layer_index = md.value("layer_index", -1);
  ds.source_tag = md.value("source_tag", std::string());
  ds.class_names = md.value("class_names", std::vector<std::string>{});
  ds.label_token_ids = md.value("label_token_ids", std::vector<int>{});
  if (md.contains("d") && md["d"].get<int>() != ds.dim())
    throw ValidationError("manifest d disagrees with tensor 'hidden'");
  if (md.contains("N") && md["N"].get<int>() != ds.size())
    throw ValidationError("manifest N disagrees with tensor 'hidden'");
  ds.validate();
  return ds;
}

EmbeddingDataset embeddings_from_container(const Container& c) {
  if (c.kind != kEmbeddingsKind)
    throw ValidationError("expected an embeddings container, found '" + c.kind + "'");
  EmbeddingDataset ds;
  ds.embeddings = matrix_from(c.at("embeddings"), "sentence embeddings");
  ds.sentence_ids = c.sentence_ids;
  ds.encoder = c.metadata.value("encoder", std::string());
  ds.validate();
  return ds;
}

ActivationDataset load_activations(const std::filesystem::path& dir) {
  return activations_from_container(read_container(dir));
}

EmbeddingDataset load_embeddings(const std::filesystem::path& dir) {
  return embeddings_from_container(read_container(dir));
}

MatrixF NormalizationStats::apply(const MatrixF& h) const {
  return (h.rowwise() - mu.transpose()) * scale;
}

MatrixF NormalizationStats::invert(const MatrixF& x) const {
  return (x / scale).rowwise() + mu.transpose();
}

NormalizationStats NormalizationStats::identity(int d) {
  return {VectorF::Zero(d), 1.0f};
}

NormalizationStats compute_norm_stats(const MatrixF& h) {
  if (h.rows() < 2) throw ValidationError("normalization needs at least 2 rows");
  MatrixD hd = h.cast<double>();
  VectorD mu = hd.colwise().mean().transpose();
  double mean_norm = (hd.rowwise() - mu.transpose()).rowwise().norm().mean();
  if (!(mean_norm > 0.0))
    throw NumericalError("degenerate data: all rows are identical (mean deviation norm 0)");
  NormalizationStats s;
  s.mu = mu.cast<float>();
  s.scale = static_cast<float>(std::sqrt(static_cast<double>(h.cols())) / mean_norm);
  return s;
}

SplitIndices split_indices(int n, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ValidationError("train_fraction must lie in (0,1)");
  int n_train = static_cast<int>(std::floor(spec.train_fraction * n));
  if (n_train == 0 || n_train == n)
    throw ValidationError("train_fraction " + std::to_string(spec.train_fraction) + " on N=" +
                          std::to_string(n) + " yields an empty split");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + n_train);
  out.val.assign(perm.begin() + n_train, perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

MatrixF gather_rows(const MatrixF& m, std::span<const int> rows) {
  MatrixF out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

ActivationDataset subset(const ActivationDataset& ds, std::span<const int> rows) {
  ActivationDataset out;
  out.hidden = gather_rows(ds.hidden, rows);
  out.num_classes = ds.num_classes;
  out.layer_index = ds.layer_index;
  out.source_tag = ds.source_tag;
  out.class_names = ds.class_names;
  out.label_token_ids = ds.label_token_ids;
  for (int r : rows) {
    out.pred_labels.push_back(ds.pred_labels[r]);
    out.gold_labels.push_back(ds.gold_labels[r]);
    out.sentence_ids.push_back(ds.sentence_ids[r]);
  }
  return out;
}

EmbeddingDataset subset(const EmbeddingDataset& ds, std::span<const int> rows) {
  EmbeddingDataset out;
  out.embeddings = gather_rows(ds.embeddings, rows);
  out.encoder = ds.encoder;
  if (!ds.sentence_ids.empty())
    for (int r : rows) out.sentence_ids.push_back(ds.sentence_ids[r]);
  return out;
}

DatasetSplit split_dataset(const ActivationDataset& ds, const SplitSpec& spec) {
  DatasetSplit out;
  out.indices = split_indices(ds.size(), spec);
  out.train = subset(ds, out.indices.train);
  out.val = subset(ds, out.indices.val);
  return out;
}

std::vector<std::vector<int>> iterate_batches(int n, int batch, std::uint64_t seed,
                                              std::uint64_t epoch, BatchMode mode) {
  if (batch < 1 || batch > n)
    throw ValidationError("batch size " + std::to_string(batch) + " must lie in [1, N=" +
                          std::to_string(n) + "]");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += batch) {
    int end = std::min(n, start + batch);
    if (end - start < batch && mode == BatchMode::kTraining) break;
    out.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return out;
}

}  // namespace concept_probe
