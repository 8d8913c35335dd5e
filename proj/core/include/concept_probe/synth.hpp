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
#include <vector>

#include <nlohmann/json.hpp>

#include "concept_probe/dataset.hpp"
#include "concept_probe/head.hpp"
#include "concept_probe/linalg.hpp"

namespace concept_probe {

struct SynthSpec {
  int d = 64;
  int m_true = 16;
  int n = 20000;
  int k_true = 3;
  int num_classes = 4;
  int relevant_per_class = 2;  // concepts [0, C * r) are class-relevant
  double noise = 0.05;
  int embed_dim = 64;
  double head_scale = 4.0;
  double code_min = 0.5;
  double code_max = 1.5;
  double offset_norm = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SynthSpec& s);
void merge_json(SynthSpec& s, const nlohmann::json& j);

struct SynthTruth {
  MatrixF dictionary;  // d x m_true, unit columns
  MatrixF codes;       // n x m_true, non-negative, k_true nonzeros per row
  std::vector<int> concept_class;  // class of each concept, -1 when irrelevant
  VectorF offset;
  double coherence = 0.0;         // max |cos| between distinct columns
  std::vector<int> flips;         // per concept: prediction flips when its code is removed
  double clean_accuracy = 0.0;    // head on noise-free states vs gold labels

  std::vector<int> relevant_concepts() const;
};

struct SynthData {
  ActivationDataset activations;
  EmbeddingDataset embeddings;
  LinearHead head;
  SynthTruth truth;
};

// Planted sparse dictionary, superposed states, the exact linear head that
// reads the class-relevant concepts, and embeddings from the code support.
SynthData generate_synth(const SynthSpec& spec);

struct DictionaryMatch {
  std::vector<int> truth_index;
  std::vector<int> learned_index;
  std::vector<double> abs_cos;
  double mean_abs_cos = 0.0;
};

// Greedy maximum-|cosine| matching between columns; min(a, b) pairs.
DictionaryMatch match_dictionary(const MatrixF& learned, const MatrixF& truth);

}  // namespace concept_probe
