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

#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "concept_probe/error.hpp"
#include "concept_probe/synth.hpp"

namespace cp = concept_probe;

namespace {

cp::SynthSpec small_spec() {
  cp::SynthSpec s;
  s.d = 24;
  s.m_true = 10;
  s.n = 800;
  s.num_classes = 3;
  s.relevant_per_class = 2;
  s.embed_dim = 12;
  s.seed = 9;
  return s;
}

}  // namespace

TEST(SynthSpec, DefaultsAreValid) { EXPECT_NO_THROW(cp::SynthSpec{}.validate()); }

TEST(SynthSpec, RejectsInconsistentCounts) {
  auto s = small_spec();
  s.k_true = 11;
  EXPECT_THROW(s.validate(), cp::ValidationError);
  s = small_spec();
  s.relevant_per_class = 4;
  EXPECT_THROW(s.validate(), cp::ValidationError);
  s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(s.validate(), cp::ValidationError);
}

TEST(SynthSpec, JsonRoundTrip) {
  auto s = small_spec();
  s.noise = 0.125;
  cp::SynthSpec back;
  cp::merge_json(back, cp::to_json(s));
  EXPECT_EQ(cp::to_json(back), cp::to_json(s));
}

TEST(Synth, CodesHaveThePlantedStructure) {
  auto s = small_spec();
  auto data = cp::generate_synth(s);
  const auto& t = data.truth;
  ASSERT_EQ(t.codes.rows(), s.n);
  ASSERT_EQ(t.codes.cols(), s.m_true);
  for (int j = 0; j < s.m_true; ++j) EXPECT_NEAR(t.dictionary.col(j).norm(), 1.0f, 1e-5f);
  for (int i = 0; i < s.n; ++i) {
    int active = 0, relevant = 0;
    for (int j = 0; j < s.m_true; ++j) {
      float v = t.codes(i, j);
      if (v == 0.0f) continue;
      ++active;
      EXPECT_GE(v, s.code_min - 1e-6);
      EXPECT_LE(v, s.code_max + 1e-6);
      if (t.concept_class[j] >= 0) {
        ++relevant;
        EXPECT_EQ(t.concept_class[j], data.activations.gold_labels[i]);
      }
    }
    EXPECT_EQ(active, s.k_true);
    EXPECT_EQ(relevant, 1);
  }
  EXPECT_EQ(t.relevant_concepts().size(), static_cast<std::size_t>(s.num_classes * s.relevant_per_class));
}

TEST(Synth, PredictionsComeFromTheHeadAndRelevantConceptsAreCausal) {
  auto data = cp::generate_synth(small_spec());
  auto logits = data.head.forward_batch(data.activations.hidden, {});
  for (int i = 0; i < data.activations.size(); ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    EXPECT_EQ(data.activations.pred_labels[i], static_cast<int>(arg));
  }
  for (int k : data.truth.relevant_concepts()) EXPECT_GT(data.truth.flips[k], 0);
  EXPECT_GT(data.truth.clean_accuracy, 0.9);
}

TEST(Synth, EmbeddingsDependOnlyOnTheCodeSupport) {
  auto data = cp::generate_synth(small_spec());
  const auto& e = data.embeddings.embeddings;
  std::map<std::vector<bool>, int> first;
  int shared = 0;
  for (int i = 0; i < e.rows(); ++i) {
    EXPECT_NEAR(e.row(i).norm(), 1.0f, 1e-5f);
    std::vector<bool> support;
    for (int j = 0; j < data.truth.codes.cols(); ++j) support.push_back(data.truth.codes(i, j) != 0.0f);
    auto [it, inserted] = first.emplace(support, i);
    if (!inserted) {
      ++shared;
      EXPECT_LT((e.row(i) - e.row(it->second)).norm(), 1e-6f);
    }
  }
  EXPECT_GT(shared, 0);
}

TEST(Synth, DeterministicForASeed) {
  auto a = cp::generate_synth(small_spec());
  auto b = cp::generate_synth(small_spec());
  EXPECT_EQ(a.activations.hidden, b.activations.hidden);
  EXPECT_EQ(a.embeddings.embeddings, b.embeddings.embeddings);
  auto s = small_spec();
  s.seed = 10;
  EXPECT_NE(cp::generate_synth(s).activations.hidden, a.activations.hidden);
}

TEST(MatchDictionary, RecoversAPermutationWithSignFlips) {
  auto data = cp::generate_synth(small_spec());
  const auto& truth = data.truth.dictionary;
  std::vector<int> perm{3, 0, 7, 1, 9, 2, 5, 4, 8, 6};
  cp::MatrixF learned(truth.rows(), truth.cols());
  for (int q = 0; q < truth.cols(); ++q) learned.col(q) = (q % 2 ? -1.0f : 1.0f) * truth.col(perm[q]);
  auto m = cp::match_dictionary(learned, truth);
  ASSERT_EQ(m.abs_cos.size(), 10u);
  EXPECT_NEAR(m.mean_abs_cos, 1.0, 1e-5);
  for (std::size_t p = 0; p < m.truth_index.size(); ++p)
    EXPECT_EQ(perm[m.learned_index[p]], m.truth_index[p]);
}

TEST(MatchDictionary, PairsMinOfTheTwoSizes) {
  auto data = cp::generate_synth(small_spec());
  cp::MatrixF three = data.truth.dictionary.leftCols(3);
  EXPECT_EQ(cp::match_dictionary(three, data.truth.dictionary).abs_cos.size(), 3u);
  EXPECT_EQ(cp::match_dictionary(data.truth.dictionary, three).abs_cos.size(), 3u);
}
