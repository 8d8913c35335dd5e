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
#include <random>
#include <string>

#include "concept_probe/concept_model.hpp"
#include "concept_probe/dataset.hpp"
#include "concept_probe/linalg.hpp"

namespace concept_probe::test {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("concept_probe_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline MatrixF random_matrix(int rows, int cols, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, scale);
  MatrixF m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline ActivationDataset random_dataset(int n, int d, int classes, std::uint64_t seed) {
  ActivationDataset ds;
  ds.hidden = random_matrix(n, d, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_int_distribution<int> label(0, classes - 1);
  for (int i = 0; i < n; ++i) {
    ds.pred_labels.push_back(label(rng));
    ds.gold_labels.push_back(label(rng));
    ds.sentence_ids.push_back("s" + std::to_string(i));
  }
  ds.num_classes = classes;
  return ds;
}

// Concepts are the raw coordinates: encode and decode are the identity.
class CoordinateModel final : public ConceptModel {
 public:
  explicit CoordinateModel(int d) : d_(d) {
    for (int j = 0; j < d; ++j) selected_.push_back(j);
  }
  std::string method() const override { return "coordinates"; }
  int input_dim() const override { return d_; }
  int num_concepts() const override { return d_; }
  MatrixF encode(const MatrixF& h) const override { return h; }
  MatrixF decode(const MatrixF& z) const override { return z; }
  MatrixF directions() const override { return MatrixF::Identity(d_, d_); }
  const std::vector<int>& selected_indices() const override { return selected_; }
  Container to_container() const override { return {}; }

 private:
  int d_;
  std::vector<int> selected_;
};

}  // namespace concept_probe::test
