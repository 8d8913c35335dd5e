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

#include "concept_probe/concept_model.hpp"

#include <algorithm>

#include "concept_probe/conceptshap.hpp"
#include "concept_probe/error.hpp"

namespace concept_probe {
namespace {

std::vector<std::int32_t> as_i32(const std::vector<int>& v) { return {v.begin(), v.end()}; }

void check_selection(const std::vector<int>& selected, int m) {
  if (selected.empty()) throw ValidationError("concept model: empty concept selection");
  for (int j : selected)
    if (j < 0 || j >= m) throw ValidationError("concept model: selected index out of range");
}

}  // namespace

std::vector<int> postfilter_z_class(const SaeParams<float>& sae, const NormalizationStats& norm,
                                    int n_class, const MatrixF& h) {
  MatrixF z = encode<float>(norm.apply(h), sae);
  std::vector<int> kept;
  const int limit = std::min<int>(n_class, static_cast<int>(z.cols()));
  for (int j = 0; j < limit; ++j) {
    double mean_abs = z.col(j).cast<double>().cwiseAbs().mean();
    if (mean_abs > 1e-6) kept.push_back(j);
  }
  if (kept.empty()) throw NumericalError("postfilter: every z_class latent is dead");
  return kept;
}

SaeConceptModel::SaeConceptModel(std::string method, TrainedSae trained, std::vector<int> selected)
    : method_(std::move(method)), trained_(std::move(trained)), selected_(std::move(selected)) {
  check_selection(selected_, trained_.sae.latent_dim());
}

MatrixF SaeConceptModel::encode_full(const MatrixF& h) const {
  if (h.cols() != input_dim()) throw ValidationError("sae: input dimension mismatch");
  return concept_probe::encode<float>(trained_.norm.apply(h), trained_.sae);
}

MatrixF SaeConceptModel::encode(const MatrixF& h) const {
  MatrixF full = encode_full(h);
  MatrixF out(full.rows(), num_concepts());
  for (int q = 0; q < num_concepts(); ++q) out.col(q) = full.col(selected_[q]);
  return out;
}

MatrixF SaeConceptModel::decode(const MatrixF& z) const {
  if (z.cols() != num_concepts()) throw ValidationError("sae: concept dimension mismatch");
  MatrixF x(z.rows(), input_dim());
  x.rowwise() = trained_.sae.b_dec.transpose();
  for (int q = 0; q < num_concepts(); ++q)
    x.noalias() += z.col(q) * trained_.sae.W_dec.col(selected_[q]).transpose();
  return trained_.norm.invert(x);
}

MatrixF SaeConceptModel::directions() const {
  MatrixF out(input_dim(), num_concepts());
  for (int q = 0; q < num_concepts(); ++q) out.col(q) = trained_.sae.W_dec.col(selected_[q]);
  return out;
}

Container SaeConceptModel::to_container() const {
  Container c;
  c.kind = kCheckpointKind;
  c.metadata = {{"method", method_},
                {"k", trained_.sae.k},
                {"norm_scale", trained_.norm.scale},
                {"config", to_json(trained_.config)},
                {"report", to_json(trained_.report)}};
  c.add(matrix_tensor("W_enc", trained_.sae.W_enc));
  c.add(vector_tensor("b_enc", trained_.sae.b_enc));
  c.add(matrix_tensor("W_dec", trained_.sae.W_dec));
  c.add(vector_tensor("b_dec", trained_.sae.b_dec));
  c.add(matrix_tensor("W_cls", trained_.head.W));
  c.add(vector_tensor("b_cls", trained_.head.b));
  c.add(vector_tensor("norm.mu", trained_.norm.mu));
  c.add(Tensor::i32("selected", {static_cast<std::int64_t>(selected_.size())}, as_i32(selected_)));
  return c;
}

IcaConceptModel::IcaConceptModel(FastIcaResult ica) : ica_(std::move(ica)) {
  selected_.resize(ica_.unmixing.rows());
  for (std::size_t q = 0; q < selected_.size(); ++q) selected_[q] = static_cast<int>(q);
}

MatrixF IcaConceptModel::encode(const MatrixF& h) const {
  if (h.cols() != input_dim()) throw ValidationError("ica: input dimension mismatch");
  return ica_.sources(h.cast<double>()).cast<float>();
}

MatrixF IcaConceptModel::decode(const MatrixF& z) const {
  if (z.cols() != num_concepts()) throw ValidationError("ica: concept dimension mismatch");
  return ica_.reconstruct(z.cast<double>()).cast<float>();
}

MatrixF IcaConceptModel::directions() const {
  MatrixD dirs = ica_.mixing;
  for (Eigen::Index j = 0; j < dirs.cols(); ++j) {
    double n = dirs.col(j).norm();
    if (n > 0) dirs.col(j) /= n;
  }
  return dirs.cast<float>();
}

Container IcaConceptModel::to_container() const {
  Container c;
  c.kind = kCheckpointKind;
  c.metadata = {{"method", "ica"}, {"iterations", ica_.iterations}, {"converged", ica_.converged}};
  c.add(vector_tensor("mean", ica_.mean.cast<float>()));
  c.add(matrix_tensor("whitening", ica_.whitening.cast<float>()));
  c.add(matrix_tensor("rotation", ica_.rotation.cast<float>()));
  c.add(matrix_tensor("unmixing", ica_.unmixing.cast<float>()));
  c.add(matrix_tensor("mixing", ica_.mixing.cast<float>()));
  return c;
}

std::unique_ptr<IcaConceptModel> train_ica_model(const ActivationDataset& ds, int m,
                                                 const FastIcaOptions& opts) {
  ds.validate();
  return std::make_unique<IcaConceptModel>(fastica_fit(ds.hidden.cast<double>(), m, opts));
}

std::unique_ptr<ConceptModel> concept_model_from_container(const Container& c) {
  if (c.kind != kCheckpointKind)
    throw ValidationError("expected a checkpoint container, found kind '" + c.kind + "'");
  const std::string method = c.metadata.value("method", std::string());
  if (method == "classifsae" || method == "sae") {
    TrainedSae t;
    t.sae.W_enc = tensor_matrix(c, "W_enc");
    const auto m = t.sae.W_enc.rows(), d = t.sae.W_enc.cols();
    t.sae.b_enc = tensor_vector(c, "b_enc", m);
    t.sae.W_dec = tensor_matrix(c, "W_dec", d, m);
    t.sae.b_dec = tensor_vector(c, "b_dec", d);
    t.sae.k = c.metadata.at("k").get<int>();
    t.head.W = tensor_matrix(c, "W_cls");
    t.head.b = tensor_vector(c, "b_cls", t.head.W.rows());
    t.norm.mu = tensor_vector(c, "norm.mu", d);
    t.norm.scale = c.metadata.at("norm_scale").get<float>();
    if (c.metadata.contains("config")) merge_json(t.config, c.metadata["config"]);
    return std::make_unique<SaeConceptModel>(method, std::move(t), tensor_ints(c, "selected"));
  }
  if (method == "ica") {
    FastIcaResult r;
    r.mean = tensor_vector(c, "mean").cast<double>();
    const auto d = r.mean.size();
    r.whitening = tensor_matrix(c, "whitening", -1, d).cast<double>();
    const auto m = r.whitening.rows();
    r.rotation = tensor_matrix(c, "rotation", m, m).cast<double>();
    r.unmixing = tensor_matrix(c, "unmixing", m, d).cast<double>();
    r.mixing = tensor_matrix(c, "mixing", d, m).cast<double>();
    r.iterations = c.metadata.value("iterations", 0);
    r.converged = c.metadata.value("converged", false);
    return std::make_unique<IcaConceptModel>(std::move(r));
  }
  if (method == "conceptshap") return conceptshap_from_container(c);
  throw ValidationError("checkpoint: unknown method '" + method + "'");
}

std::unique_ptr<ConceptModel> load_concept_model(const std::filesystem::path& dir) {
  return concept_model_from_container(read_container(dir));
}

void save_concept_model(const ConceptModel& model, const std::filesystem::path& dir) {
  write_container(dir, model.to_container());
}

}  // namespace concept_probe
