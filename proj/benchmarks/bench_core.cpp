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

#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "concept_probe/head.hpp"
#include "concept_probe/layers.hpp"
#include "concept_probe/metrics.hpp"
#include "concept_probe/sae.hpp"

namespace cp = concept_probe;

namespace {

cp::MatrixF random_matrix(int rows, int cols, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, scale);
  cp::MatrixF m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

cp::VectorF random_vector(int n, std::uint64_t seed, float scale) {
  return random_matrix(n, 1, seed, scale).col(0);
}

void BM_TopK(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  cp::MatrixF pre = random_matrix(500, m, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cp::topk_activation<float>(pre, 6));
  state.SetItemsProcessed(state.iterations() * pre.rows());
}
BENCHMARK(BM_TopK)->Arg(128)->Arg(1024);

void BM_SaeObjectiveStep(benchmark::State& state) {
  const int d = 64, m = static_cast<int>(state.range(0)), B = 500, C = 4, n_class = 16;
  cp::MatrixF x = random_matrix(B, d, 2);
  cp::VectorF mean = x.colwise().mean().transpose();
  auto init = cp::init_params<float>(d, m, 6, n_class, C, 3, mean);
  std::vector<int> labels(B);
  for (int i = 0; i < B; ++i) labels[i] = i % C;
  std::vector<bool> dead(m, false);
  for (int j = 0; j < m; j += 4) dead[j] = true;
  cp::LossWeights w{1.0, 1.0 / 32.0, 1.0, 0.003};
  cp::ObjectiveShape shape{0.1, 12};
  for (auto _ : state) {
    auto grads = cp::SaeGrads<float>{cp::SaeParams<float>::zeros_like(init.sae),
                                     cp::ClassifierHead<float>::zeros_like(init.head)};
    benchmark::DoNotOptimize(
        cp::sae_objective<float>(init.sae, init.head, x, x, labels, dead, w, shape, &grads));
  }
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_SaeObjectiveStep)->Arg(128)->Arg(512);

cp::NeoXBlockHead make_neox(int sentences, int prefix) {
  cp::NeoXBlockWeights w;
  w.n_heads = 4;
  w.head_dim = 16;
  const int d = 64, ff = 256, C = 4;
  std::uint64_t s = 10;
  w.ln1_w = random_vector(d, s++, 0.1f).array() + 1.0f, w.ln1_b = random_vector(d, s++, 0.1f);
  w.ln2_w = random_vector(d, s++, 0.1f).array() + 1.0f, w.ln2_b = random_vector(d, s++, 0.1f);
  w.lnf_w = random_vector(d, s++, 0.1f).array() + 1.0f, w.lnf_b = random_vector(d, s++, 0.1f);
  w.qkv_w = random_matrix(3 * d, d, s++, 0.1f), w.qkv_b = random_vector(3 * d, s++, 0.1f);
  w.dense_w = random_matrix(d, d, s++, 0.1f), w.dense_b = random_vector(d, s++, 0.1f);
  w.mlp_in_w = random_matrix(ff, d, s++, 0.1f), w.mlp_in_b = random_vector(ff, s++, 0.1f);
  w.mlp_out_w = random_matrix(d, ff, s++, 0.1f), w.mlp_out_b = random_vector(d, s++, 0.1f);
  w.unembed = random_matrix(C, d, s++, 1.0f);
  w.label_token_ids = {1, 2, 3, 4};
  cp::KvCache cache;
  cache.keys = random_matrix(sentences * prefix, d, s++);
  cache.values = random_matrix(sentences * prefix, d, s++);
  for (int i = 0; i <= sentences; ++i) cache.offsets.push_back(static_cast<std::int64_t>(i) * prefix);
  for (int i = 0; i < sentences; ++i) cache.sentence_ids.push_back("s" + std::to_string(i));
  return cp::NeoXBlockHead(std::move(w), std::move(cache));
}

void BM_NeoXForwardBatch(benchmark::State& state) {
  const int sentences = 256, prefix = static_cast<int>(state.range(0));
  auto head = make_neox(sentences, prefix);
  cp::MatrixF h = random_matrix(sentences, 64, 50);
  std::vector<std::string> ids = head.cache().sentence_ids;
  for (auto _ : state) benchmark::DoNotOptimize(head.forward_batch(h, ids));
  state.SetItemsProcessed(state.iterations() * sentences);
}
BENCHMARK(BM_NeoXForwardBatch)->Arg(16)->Arg(128);

void BM_ConceptSim(benchmark::State& state) {
  cp::MatrixF e = random_matrix(20000, 64, 60);
  std::vector<int> members(static_cast<std::size_t>(state.range(0)));
  std::iota(members.begin(), members.end(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(cp::concept_sim(members, e));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(members.size()));
}
BENCHMARK(BM_ConceptSim)->Arg(1000)->Arg(10000);

void BM_SentenceSim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  cp::MatrixF z = cp::topk_activation<float>(random_matrix(n, 20, 70), 5);
  cp::MatrixF e = random_matrix(n, 64, 71);
  for (auto _ : state) benchmark::DoNotOptimize(cp::sentence_sim(z, e, 5));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SentenceSim)->Arg(500)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
