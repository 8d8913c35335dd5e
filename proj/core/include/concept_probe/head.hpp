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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "concept_probe/dataset.hpp"
#include "concept_probe/linalg.hpp"
#include "concept_probe/tensor_container.hpp"

namespace concept_probe {

struct SentenceContext {
  std::string_view sentence_id;
};

// The frozen remainder f_{>=l} of the classifier. Consumes model-space
// (unnormalized) states and returns label probabilities.
class DownstreamHead {
 public:
  virtual ~DownstreamHead() = default;

  virtual int num_classes() const = 0;
  virtual int dim() const = 0;
  virtual bool needs_context() const = 0;
  virtual VectorF forward(const VectorF& h, const SentenceContext* ctx) const = 0;
  // Rows of `h` with their sentence ids (ignored by context-free heads).
  virtual MatrixF forward_batch(const MatrixF& h, std::span<const std::string> ids) const;
  virtual Container to_container() const = 0;
};

// argmax with ties to the lowest class index.
int predict_label(const VectorF& probs);
std::vector<int> predict_labels(const MatrixF& probs);

class LinearHead final : public DownstreamHead {
 public:
  LinearHead(MatrixF w, VectorF b);

  int num_classes() const override { return static_cast<int>(w_.rows()); }
  int dim() const override { return static_cast<int>(w_.cols()); }
  bool needs_context() const override { return false; }
  VectorF forward(const VectorF& h, const SentenceContext* ctx) const override;
  MatrixF forward_batch(const MatrixF& h, std::span<const std::string> ids) const override;
  Container to_container() const override;

  MatrixF logits(const MatrixF& h) const;
  const MatrixF& weight() const { return w_; }
  const VectorF& bias() const { return b_; }
  // The same functional expressed on normalized inputs x = (h - mu) * scale.
  LinearHead in_normalized_space(const NormalizationStats& stats) const;

 private:
  MatrixF w_;  // C x d
  VectorF b_;  // C
};

// Parallel-residual GPT-NeoX block followed by the final layer norm and the
// label-token rows of the unembedding.
struct NeoXBlockWeights {
  int n_heads = 1;
  int head_dim = 1;
  double rotary_pct = 0.25;
  double rotary_base = 10000.0;
  double layer_norm_eps = 1e-5;
  bool gelu_tanh = false;

  VectorF ln1_w, ln1_b, ln2_w, ln2_b, lnf_w, lnf_b;  // d each
  // Rows in GPT-NeoX order: for head h, rows [3h*hd, 3h*hd+hd) are the
  // query, the next hd the key, the next hd the value.
  MatrixF qkv_w;  // 3d x d
  VectorF qkv_b;  // 3d
  MatrixF dense_w;  // d x d
  VectorF dense_b;
  MatrixF mlp_in_w;  // ff x d
  VectorF mlp_in_b;
  MatrixF mlp_out_w;  // d x ff
  VectorF mlp_out_b;
  MatrixF unembed;  // C x d
  std::vector<int> label_token_ids;

  int dim() const { return n_heads * head_dim; }
  int rotary_dims() const;
};

// Keys are stored already rotated for their positions. Sentence s owns rows
// [offsets[s], offsets[s+1]) of keys/values; its query sits at position
// offsets[s+1] - offsets[s].
struct KvCache {
  MatrixF keys;    // P x d
  MatrixF values;  // P x d
  std::vector<std::int64_t> offsets;
  std::vector<std::string> sentence_ids;
  bool store_f16 = true;

  int slot(std::string_view sentence_id) const;  // throws if unknown
  int position(int slot) const {
    return static_cast<int>(offsets[slot + 1] - offsets[slot]);
  }
  void rebuild_index();

 private:
  std::unordered_map<std::string, int> index_;
};

// Rotates the first rotary_dims coordinates of one head vector in place
// using the half-split (rotate_half) convention.
void apply_rotary(std::span<float> head_vec, int position, int rotary_dims, double base);

class NeoXBlockHead final : public DownstreamHead {
 public:
  NeoXBlockHead(NeoXBlockWeights weights, KvCache cache);

  int num_classes() const override { return static_cast<int>(w_.unembed.rows()); }
  int dim() const override { return w_.dim(); }
  bool needs_context() const override { return true; }
  VectorF forward(const VectorF& h, const SentenceContext* ctx) const override;
  MatrixF forward_batch(const MatrixF& h, std::span<const std::string> ids) const override;
  Container to_container() const override;

  const NeoXBlockWeights& weights() const { return w_; }
  const KvCache& cache() const { return cache_; }

 private:
  VectorF forward_slot(const VectorF& h, int slot) const;

  NeoXBlockWeights w_;
  KvCache cache_;
};

inline constexpr std::string_view kLinearHeadKind = "linear_head";
inline constexpr std::string_view kNeoXHeadKind = "neox_head";

std::unique_ptr<DownstreamHead> head_from_container(const Container& c);
std::unique_ptr<DownstreamHead> load_head(const std::filesystem::path& dir);

}  // namespace concept_probe
