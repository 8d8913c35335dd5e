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
#include <string>
#include <vector>

#include "concept_probe/dataset.hpp"
#include "concept_probe/fastica.hpp"
#include "concept_probe/linalg.hpp"
#include "concept_probe/sae.hpp"
#include "concept_probe/tensor_container.hpp"
#include "concept_probe/trainer.hpp"

namespace concept_probe {

// Common view over every concept extractor. All maps work on model-space
// (unnormalized) hidden states; any normalization is internal.
class ConceptModel {
 public:
  virtual ~ConceptModel() = default;

  virtual std::string method() const = 0;
  virtual int input_dim() const = 0;
  // m_sel, the number of selected concepts.
  virtual int num_concepts() const = 0;
  // N x d -> N x m_sel.
  virtual MatrixF encode(const MatrixF& h) const = 0;
  // N x m_sel -> N x d. Unselected latents are treated as zero.
  virtual MatrixF decode(const MatrixF& z) const = 0;
  // d x m_sel, unit columns.
  virtual MatrixF directions() const = 0;
  // Positions of the selected concepts in the method's native latent space.
  virtual const std::vector<int>& selected_indices() const = 0;
  virtual Container to_container() const = 0;

  MatrixF reconstruct(const MatrixF& h) const { return decode(encode(h)); }
};

inline constexpr std::string_view kCheckpointKind = "checkpoint";

// Latent j < n_class is kept when its mean |z| over `h` exceeds 1e-6.
// Throws NumericalError when nothing survives.
std::vector<int> postfilter_z_class(const SaeParams<float>& sae, const NormalizationStats& norm,
                                    int n_class, const MatrixF& h);

class SaeConceptModel final : public ConceptModel {
 public:
  SaeConceptModel(std::string method, TrainedSae trained, std::vector<int> selected);

  std::string method() const override { return method_; }
  int input_dim() const override { return trained_.sae.input_dim(); }
  int num_concepts() const override { return static_cast<int>(selected_.size()); }
  MatrixF encode(const MatrixF& h) const override;
  MatrixF decode(const MatrixF& z) const override;
  MatrixF directions() const override;
  const std::vector<int>& selected_indices() const override { return selected_; }
  Container to_container() const override;

  // All m latents, before selection.
  MatrixF encode_full(const MatrixF& h) const;
  const TrainedSae& trained() const { return trained_; }

 private:
  std::string method_;
  TrainedSae trained_;
  std::vector<int> selected_;
};

class IcaConceptModel final : public ConceptModel {
 public:
  explicit IcaConceptModel(FastIcaResult ica);

  std::string method() const override { return "ica"; }
  int input_dim() const override { return static_cast<int>(ica_.mean.size()); }
  int num_concepts() const override { return static_cast<int>(ica_.unmixing.rows()); }
  MatrixF encode(const MatrixF& h) const override;
  MatrixF decode(const MatrixF& z) const override;
  MatrixF directions() const override;
  const std::vector<int>& selected_indices() const override { return selected_; }
  Container to_container() const override;

  const FastIcaResult& ica() const { return ica_; }

 private:
  FastIcaResult ica_;
  std::vector<int> selected_;
};

std::unique_ptr<IcaConceptModel> train_ica_model(const ActivationDataset& ds, int m,
                                                 const FastIcaOptions& opts = {});

std::unique_ptr<ConceptModel> concept_model_from_container(const Container& c);
std::unique_ptr<ConceptModel> load_concept_model(const std::filesystem::path& dir);
void save_concept_model(const ConceptModel& model, const std::filesystem::path& dir);

}  // namespace concept_probe
