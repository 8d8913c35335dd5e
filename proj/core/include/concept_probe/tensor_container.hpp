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

#include <nlohmann/json.hpp>

#include "concept_probe/linalg.hpp"

namespace concept_probe {

enum class DType { kF32, kF16, kI32 };

std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);  // throws ValidationError
std::size_t dtype_size(DType dtype);

// One named tensor. Float payloads (f32 or f16 on disk) are held widened to
// f32; i32 payloads in `ints`. `dtype` is the on-disk type and is preserved
// when the tensor is written back.
struct Tensor {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::int64_t> shape;
  std::vector<float> floats;
  std::vector<std::int32_t> ints;

  std::int64_t numel() const;
  std::int64_t rows() const { return shape.empty() ? 1 : shape.front(); }
  std::int64_t row_size() const;

  static Tensor f32(std::string name, std::vector<std::int64_t> shape,
                    std::vector<float> values);
  static Tensor f16(std::string name, std::vector<std::int64_t> shape,
                    std::vector<float> values);
  static Tensor i32(std::string name, std::vector<std::int64_t> shape,
                    std::vector<std::int32_t> values);
};

// A directory holding manifest.json plus one raw little-endian row-major file
// per tensor.
struct Container {
  std::string kind;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::string> sentence_ids;
  std::vector<Tensor> tensors;

  const Tensor* find(std::string_view name) const;
  const Tensor& at(std::string_view name) const;  // throws ValidationError
  void add(Tensor t);
};

inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kContainerFormat = "concept-probe-container";

void write_container(const std::filesystem::path& dir, const Container& c);

// Reads and validates: every file exists, byte sizes match shapes, dtypes are
// known, float payloads are finite. Errors name the offending tensor.
Container read_container(const std::filesystem::path& dir);

// Matrix helpers for float tensors. A negative expected extent accepts any
// size; mismatches throw ValidationError naming the tensor.
Tensor matrix_tensor(std::string name, const MatrixF& m);
Tensor vector_tensor(std::string name, const VectorF& v);
MatrixF tensor_matrix(const Container& c, std::string_view name, std::int64_t rows = -1,
                      std::int64_t cols = -1);
VectorF tensor_vector(const Container& c, std::string_view name, std::int64_t n = -1);
std::vector<int> tensor_ints(const Container& c, std::string_view name);

// Half-precision conversion (round to nearest even on narrowing).
float half_to_float(std::uint16_t bits);
std::uint16_t float_to_half(float value);

}  // namespace concept_probe
