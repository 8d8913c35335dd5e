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
#include <span>
#include <string>
#include <vector>

#include "concept_probe/linalg.hpp"
#include "concept_probe/tensor_container.hpp"

namespace concept_probe {

// Sentence-level hidden states with the classifier's predicted labels and the
// gold labels. Immutable once validated.
struct ActivationDataset {
  MatrixF hidden;  // N x d
  std::vector<int> pred_labels;
  std::vector<int> gold_labels;
  std::vector<std::string> sentence_ids;
  int num_classes = 0;
  int layer_index = -1;
  std::string source_tag;
  std::vector<std::string> class_names;
  std::vector<int> label_token_ids;

  int size() const { return static_cast<int>(hidden.rows()); }
  int dim() const { return static_cast<int>(hidden.cols()); }

  // Throws ValidationError on any broken invariant.
  void validate() const;
};

// External sentence-encoder vectors, row-aligned with an ActivationDataset.
struct EmbeddingDataset {
  MatrixF embeddings;  // N x e
  std::vector<std::string> sentence_ids;
  std::string encoder;

  int size() const { return static_cast<int>(embeddings.rows()); }
  void validate() const;
  // Throws unless row count and sentence ids match `ds`.
  void check_aligned(const ActivationDataset& ds) const;
};

inline constexpr std::string_view kActivationsKind = "activations";
inline constexpr std::string_view kEmbeddingsKind = "embeddings";

Container to_container(const ActivationDataset& ds);
Container to_container(const EmbeddingDataset& ds);
ActivationDataset activations_from_container(const Container& c);
EmbeddingDataset embeddings_from_container(const Container& c);

ActivationDataset load_activations(const std::filesystem::path& dir);
EmbeddingDataset load_embeddings(const std::filesystem::path& dir);

// Per-dimension centering plus one isotropic scale so that the mean row norm
// of the normalized data equals sqrt(d).
struct NormalizationStats {
  VectorF mu;
  float scale = 1.0f;

  MatrixF apply(const MatrixF& h) const;
  MatrixF invert(const MatrixF& x) const;
  static NormalizationStats identity(int d);
};

NormalizationStats compute_norm_stats(const MatrixF& h);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
};

SplitIndices split_indices(int n, const SplitSpec& spec);

ActivationDataset subset(const ActivationDataset& ds, std::span<const int> rows);
EmbeddingDataset subset(const EmbeddingDataset& ds, std::span<const int> rows);

struct DatasetSplit {
  ActivationDataset train;
  ActivationDataset val;
  SplitIndices indices;
};

DatasetSplit split_dataset(const ActivationDataset& ds, const SplitSpec& spec);

enum class BatchMode { kTraining, kEvaluation };

// One epoch of a seeded permutation of [0, n) chunked into batches of size
// `batch`. Training mode drops a short final batch; evaluation keeps it.
std::vector<std::vector<int>> iterate_batches(int n, int batch, std::uint64_t seed,
                                              std::uint64_t epoch, BatchMode mode);

MatrixF gather_rows(const MatrixF& m, std::span<const int> rows);

}  // namespace concept_probe
