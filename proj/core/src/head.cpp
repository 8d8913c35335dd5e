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

#include "concept_probe/head.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "concept_probe/error.hpp"
#include "concept_probe/layers.hpp"
#include "concept_probe/parallel.hpp"

namespace concept_probe {
namespace {

std::vector<float> flat(const MatrixF& m) { return {m.data(), m.data() + m.size()}; }

VectorF layer_norm(const VectorF& x, const VectorF& w, const VectorF& b, double eps) {
  double mean = x.cast<double>().mean();
  double var = (x.cast<double>().array() - mean).square().mean();
  VectorF y = ((x.cast<double>().array() - mean) / std::sqrt(var + eps)).cast<float>().matrix();
  return y.cwiseProduct(w) + b;
}

float gelu(float x, bool tanh_approx) {
  if (tanh_approx) {
    constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
  }
  return 0.5f * x * (1.0f + std::erf(x / std::numbers::sqrt2_v<float>));
}

}  // namespace

MatrixF DownstreamHead::forward_batch(const MatrixF& h, std::span<const std::string> ids) const {
  if (needs_context() && ids.size() != static_cast<std::size_t>(h.rows()))
    throw ValidationError("head forward: sentence ids are required for every row");
  MatrixF out(h.rows(), num_classes());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    VectorF row = h.row(i).transpose();
    SentenceContext ctx{ids.empty() ? std::string_view() : std::string_view(ids[i])};
    out.row(i) = forward(row, ids.empty() ? nullptr : &ctx).transpose();
  }
  return out;
}

int predict_label(const VectorF& probs) {
  int best = 0;
  for (int c = 1; c < probs.size(); ++c)
    if (probs(c) > probs(best)) best = c;
  return best;
}

std::vector<int> predict_labels(const MatrixF& probs) {
  std::vector<int> out(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
    out[i] = best;
  }
  return out;
}

LinearHead::LinearHead(MatrixF w, VectorF b) : w_(std::move(w)), b_(std::move(b)) {
  if (w_.rows() != b_.size() || w_.rows() < 1)
    throw ValidationError("linear head: W and b disagree on the class count");
  if (!w_.allFinite() || !b_.allFinite()) throw ValidationError("linear head: non-finite weights");
}

MatrixF LinearHead::logits(const MatrixF& h) const {
  if (h.cols() != w_.cols()) throw ValidationError("linear head: input dimension mismatch");
  MatrixF out = h * w_.transpose();
  out.rowwise() += b_.transpose();
  return out;
}

VectorF LinearHead::forward(const VectorF& h, const SentenceContext*) const {
  if (h.size() != w_.cols()) throw ValidationError("linear head: input dimension mismatch");
  return softmax<float>(w_ * h + b_);
}

MatrixF LinearHead::forward_batch(const MatrixF& h, std::span<const std::string>) const {
  return softmax_rows<float>(logits(h));
}

Container LinearHead::to_container() const {
  Container c;
  c.kind = kLinearHeadKind;
  c.metadata = {{"C", num_classes()}, {"d", dim()}};
  c.add(matrix_tensor("W", w_));
  c.add(vector_tensor("b", b_));
  return c;
}

LinearHead LinearHead::in_normalized_space(const NormalizationStats& stats) const {
  // W h + b with h = x / scale + mu.
  MatrixF w = w_ / stats.scale;
  VectorF b = b_ + w_ * stats.mu;
  return LinearHead(std::move(w), std::move(b));
}

int NeoXBlockWeights::rotary_dims() const {
  int r = static_cast<int>(head_dim * rotary_pct);
  return r - (r % 2);
}

void apply_rotary(std::span<float> v, int position, int rotary_dims, double base) {
  const int half = rotary_dims / 2;
  for (int i = 0; i < half; ++i) {
    double inv_freq = 1.0 / std::pow(base, (2.0 * i) / rotary_dims);
    double angle = position * inv_freq;
    auto c = static_cast<float>(std::cos(angle));
    auto s = static_cast<float>(std::sin(angle));
    float x1 = v[i], x2 = v[i + half];
    v[i] = x1 * c - x2 * s;
    v[i + half] = x2 * c + x1 * s;
  }
}

int KvCache::slot(std::string_view sentence_id) const {
  auto it = index_.find(std::string(sentence_id));
  if (it == index_.end())
    throw ValidationError("no KV cache for sentence '" + std::string(sentence_id) + "'");
  return it->second;
}

void KvCache::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < sentence_ids.size(); ++i)
    index_.emplace(sentence_ids[i], static_cast<int>(i));
}

NeoXBlockHead::NeoXBlockHead(NeoXBlockWeights weights, KvCache cache)
    : w_(std::move(weights)), cache_(std::move(cache)) {
  const int d = w_.dim();
  if (w_.qkv_w.rows() != 3 * d || w_.qkv_w.cols() != d)
    throw ValidationError("neox head: qkv weight must be [3d, d]");
  if (cache_.offsets.size() != cache_.sentence_ids.size() + 1)
    throw ValidationError("neox head: cache offsets must have N+1 entries");
  if (cache_.keys.cols() != d || cache_.values.cols() != d ||
      cache_.keys.rows() != cache_.values.rows())
    throw ValidationError("neox head: cache keys/values must be [P, d]");
  if (cache_.offsets.front() != 0 || cache_.offsets.back() != cache_.keys.rows())
    throw ValidationError("neox head: cache offsets do not span the cache rows");
  for (std::size_t i = 0; i + 1 < cache_.offsets.size(); ++i)
    if (cache_.offsets[i + 1] < cache_.offsets[i])
      throw ValidationError("neox head: cache offsets must be non-decreasing");
  cache_.rebuild_index();
}

VectorF NeoXBlockHead::forward(const VectorF& h, const SentenceContext* ctx) const {
  if (ctx == nullptr) throw ValidationError("neox head: a sentence context is required");
  return forward_slot(h, cache_.slot(ctx->sentence_id));
}

MatrixF NeoXBlockHead::forward_batch(const MatrixF& h, std::span<const std::string> ids) const {
  if (ids.size() != static_cast<std::size_t>(h.rows()))
    throw ValidationError("neox head: sentence ids are required for every row");
  MatrixF out(h.rows(), num_classes());
  parallel_for(static_cast<std::size_t>(h.rows()), [&](std::size_t i) {
    VectorF row = h.row(static_cast<Eigen::Index>(i)).transpose();
    out.row(static_cast<Eigen::Index>(i)) = forward_slot(row, cache_.slot(ids[i])).transpose();
  });
  return out;
}

VectorF NeoXBlockHead::forward_slot(const VectorF& x, int slot) const {
  const int d = w_.dim(), hd = w_.head_dim, rot = w_.rotary_dims();
  if (x.size() != d) throw ValidationError("neox head: input dimension mismatch");
  const int t = cache_.position(slot);
  const std::int64_t base_row = cache_.offsets[slot];

  VectorF a_in = layer_norm(x, w_.ln1_w, w_.ln1_b, w_.layer_norm_eps);
  VectorF qkv = w_.qkv_w * a_in + w_.qkv_b;
  VectorF merged(d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> scores(t + 1);
  for (int head = 0; head < w_.n_heads; ++head) {
    float* q = qkv.data() + 3 * head * hd;
    float* k = q + hd;
    const float* v = k + hd;
    apply_rotary({q, static_cast<std::size_t>(hd)}, t, rot, w_.rotary_base);
    apply_rotary({k, static_cast<std::size_t>(hd)}, t, rot, w_.rotary_base);
    Eigen::Map<const VectorF> qv(q, hd), kv(k, hd), vv(v, hd);
    for (int p = 0; p < t; ++p)
      scores[p] = scale * qv.dot(cache_.keys.row(base_row + p).segment(head * hd, hd).transpose());
    scores[t] = scale * qv.dot(kv);
    double mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0.0;
    for (double& s : scores) denom += (s = std::exp(s - mx));
    VectorD acc = VectorD::Zero(hd);
    for (int p = 0; p < t; ++p)
      acc += (scores[p] / denom) *
             cache_.values.row(base_row + p).segment(head * hd, hd).transpose().cast<double>();
    acc += (scores[t] / denom) * vv.cast<double>();
    merged.segment(head * hd, hd) = acc.cast<float>();
  }
  VectorF attn = w_.dense_w * merged + w_.dense_b;

  VectorF m_in = layer_norm(x, w_.ln2_w, w_.ln2_b, w_.layer_norm_eps);
  VectorF hidden = w_.mlp_in_w * m_in + w_.mlp_in_b;
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden(i) = gelu(hidden(i), w_.gelu_tanh);
  VectorF mlp = w_.mlp_out_w * hidden + w_.mlp_out_b;

  VectorF out = x + attn + mlp;
  VectorF logits = w_.unembed * layer_norm(out, w_.lnf_w, w_.lnf_b, w_.layer_norm_eps);
  return softmax<float>(logits);
}

Container NeoXBlockHead::to_container() const {
  const int d = w_.dim();
  Container c;
  c.kind = kNeoXHeadKind;
  c.metadata = {{"d", d},
                {"C", num_classes()},
                {"n_heads", w_.n_heads},
                {"head_dim", w_.head_dim},
                {"rotary_pct", w_.rotary_pct},
                {"rotary_base", w_.rotary_base},
                {"layer_norm_eps", w_.layer_norm_eps},
                {"hidden_act", w_.gelu_tanh ? "gelu_tanh" : "gelu"},
                {"ff", w_.mlp_in_w.rows()},
                {"label_token_ids", w_.label_token_ids}};
  c.sentence_ids = cache_.sentence_ids;
  c.add(vector_tensor("ln1.weight", w_.ln1_w));
  c.add(vector_tensor("ln1.bias", w_.ln1_b));
  c.add(vector_tensor("ln2.weight", w_.ln2_w));
  c.add(vector_tensor("ln2.bias", w_.ln2_b));
  c.add(vector_tensor("ln_f.weight", w_.lnf_w));
  c.add(vector_tensor("ln_f.bias", w_.lnf_b));
  c.add(matrix_tensor("attn.qkv.weight", w_.qkv_w));
  c.add(vector_tensor("attn.qkv.bias", w_.qkv_b));
  c.add(matrix_tensor("attn.dense.weight", w_.dense_w));
  c.add(vector_tensor("attn.dense.bias", w_.dense_b));
  c.add(matrix_tensor("mlp.in.weight", w_.mlp_in_w));
  c.add(vector_tensor("mlp.in.bias", w_.mlp_in_b));
  c.add(matrix_tensor("mlp.out.weight", w_.mlp_out_w));
  c.add(vector_tensor("mlp.out.bias", w_.mlp_out_b));
  c.add(matrix_tensor("unembed", w_.unembed));
  const std::int64_t p = cache_.keys.rows();
  if (cache_.store_f16) {
    c.add(Tensor::f16("cache.keys", {p, d}, flat(cache_.keys)));
    c.add(Tensor::f16("cache.values", {p, d}, flat(cache_.values)));
  } else {
    c.add(Tensor::f32("cache.keys", {p, d}, flat(cache_.keys)));
    c.add(Tensor::f32("cache.values", {p, d}, flat(cache_.values)));
  }
  std::vector<std::int32_t> offsets(cache_.offsets.begin(), cache_.offsets.end());
  std::vector<std::int32_t> positions;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) positions.push_back(offsets[s + 1] - offsets[s]);
  c.add(Tensor::i32("cache.offsets", {static_cast<std::int64_t>(offsets.size())}, offsets));
  c.add(Tensor::i32("cache.positions", {static_cast<std::int64_t>(positions.size())}, positions));
  return c;
}

std::unique_ptr<DownstreamHead> head_from_container(const Container& c) {
  if (c.kind == kLinearHeadKind) {
    const Tensor& w = c.at("W");
    if (w.shape.size() != 2) throw ValidationError("tensor 'W' must be [C, d]");
    return std::make_unique<LinearHead>(tensor_matrix(c, "W", w.shape[0], w.shape[1]),
                                        tensor_vector(c, "b", w.shape[0]));
  }
  if (c.kind != kNeoXHeadKind)
    throw ValidationError("expected a head container, found kind '" + c.kind + "'");
  const auto& md = c.metadata;
  NeoXBlockWeights w;
  w.n_heads = md.at("n_heads").get<int>();
  w.head_dim = md.at("head_dim").get<int>();
  w.rotary_pct = md.value("rotary_pct", 0.25);
  w.rotary_base = md.value("rotary_base", 10000.0);
  w.layer_norm_eps = md.value("layer_norm_eps", 1e-5);
  w.gelu_tanh = md.value("hidden_act", std::string("gelu")) == "gelu_tanh";
  w.label_token_ids = md.value("label_token_ids", std::vector<int>{});
  const int d = w.dim();
  if (md.contains("d") && md["d"].get<int>() != d)
    throw ValidationError("neox head: manifest d != n_heads * head_dim");
  const Tensor& unembed = c.at("unembed");
  const Tensor& mlp_in = c.at("mlp.in.weight");
  if (unembed.shape.size() != 2 || mlp_in.shape.size() != 2)
    throw ValidationError("neox head: unembed and mlp.in.weight must be 2-D");
  const auto classes = unembed.shape[0];
  const auto ff = mlp_in.shape[0];
  w.ln1_w = tensor_vector(c, "ln1.weight", d);
  w.ln1_b = tensor_vector(c, "ln1.bias", d);
  w.ln2_w = tensor_vector(c, "ln2.weight", d);
  w.ln2_b = tensor_vector(c, "ln2.bias", d);
  w.lnf_w = tensor_vector(c, "ln_f.weight", d);
  w.lnf_b = tensor_vector(c, "ln_f.bias", d);
  w.qkv_w = tensor_matrix(c, "attn.qkv.weight", 3 * d, d);
  w.qkv_b = tensor_vector(c, "attn.qkv.bias", 3 * d);
  w.dense_w = tensor_matrix(c, "attn.dense.weight", d, d);
  w.dense_b = tensor_vector(c, "attn.dense.bias", d);
  w.mlp_in_w = tensor_matrix(c, "mlp.in.weight", ff, d);
  w.mlp_in_b = tensor_vector(c, "mlp.in.bias", ff);
  w.mlp_out_w = tensor_matrix(c, "mlp.out.weight", d, ff);
  w.mlp_out_b = tensor_vector(c, "mlp.out.bias", d);
  w.unembed = tensor_matrix(c, "unembed", classes, d);
  if (!w.label_token_ids.empty() && static_cast<std::int64_t>(w.label_token_ids.size()) != classes)
    throw ValidationError("neox head: label_token_ids count differs from unembed rows");

  KvCache cache;
  const Tensor& keys = c.at("cache.keys");
  if (keys.shape.size() != 2) throw ValidationError("tensor 'cache.keys' must be [P, d]");
  cache.store_f16 = keys.dtype == DType::kF16;
  cache.keys = tensor_matrix(c, "cache.keys", keys.shape[0], d);
  cache.values = tensor_matrix(c, "cache.values", keys.shape[0], d);
  const Tensor& offsets = c.at("cache.offsets");
  if (offsets.dtype != DType::kI32) throw ValidationError("tensor 'cache.offsets' must be i32");
  cache.offsets.assign(offsets.ints.begin(), offsets.ints.end());
  cache.sentence_ids = c.sentence_ids;
  if (const Tensor* pos = c.find("cache.positions")) {
    for (std::size_t i = 0; i < pos->ints.size() && i + 1 < cache.offsets.size(); ++i)
      if (pos->ints[i] != cache.offsets[i + 1] - cache.offsets[i])
        throw ValidationError("neox head: cache/position mismatch for sentence '" +
                              cache.sentence_ids.at(i) + "'");
  }
  return std::make_unique<NeoXBlockHead>(std::move(w), std::move(cache));
}

std::unique_ptr<DownstreamHead> load_head(const std::filesystem::path& dir) {
  return head_from_container(read_container(dir));
}

}  // namespace concept_probe
