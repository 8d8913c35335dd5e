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

#include "concept_probe/tensor_container.hpp"

#include <Eigen/Core>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "concept_probe/error.hpp"

namespace concept_probe {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "container IO assumes a little-endian host");

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "f32";
    case DType::kF16: return "f16";
    case DType::kI32: return "i32";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::kF32;
  if (name == "f16") return DType::kF16;
  if (name == "i32") return DType::kI32;
  throw ValidationError("unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::kF16 ? 2 : 4; }

std::int64_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::int64_t Tensor::row_size() const {
  if (shape.size() <= 1) return 1;
  return std::accumulate(shape.begin() + 1, shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

Tensor Tensor::f32(std::string name, std::vector<std::int64_t> shape,
                   std::vector<float> values) {
  Tensor t{std::move(name), DType::kF32, std::move(shape), std::move(values), {}};
  if (t.numel() != static_cast<std::int64_t>(t.floats.size()))
    throw ValidationError("tensor '" + t.name + "': value count does not match shape");
  return t;
}

Tensor Tensor::f16(std::string name, std::vector<std::int64_t> shape,
                   std::vector<float> values) {
  Tensor t = f32(std::move(name), std::move(shape), std::move(values));
  t.dtype = DType::kF16;
  for (float& v : t.floats) v = half_to_float(float_to_half(v));
  return t;
}

Tensor Tensor::i32(std::string name, std::vector<std::int64_t> shape,
                   std::vector<std::int32_t> values) {
  Tensor t{std::move(name), DType::kI32, std::move(shape), {}, std::move(values)};
  if (t.numel() != static_cast<std::int64_t>(t.ints.size()))
    throw ValidationError("tensor '" + t.name + "': value count does not match shape");
  return t;
}

const Tensor* Container::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const Tensor& Container::at(std::string_view name) const {
  if (const Tensor* t = find(name)) return *t;
  throw ValidationError("container of kind '" + kind + "' has no tensor '" +
                        std::string(name) + "'");
}

void Container::add(Tensor t) {
  for (auto& existing : tensors) {
    if (existing.name == t.name) {
      existing = std::move(t);
      return;
    }
  }
  tensors.push_back(std::move(t));
}

float half_to_float(std::uint16_t bits) {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

std::uint16_t float_to_half(float value) {
  return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(value));
}

namespace {

std::string file_name_for(const std::string& tensor_name) {
  std::string out;
  for (char ch : tensor_name)
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-')
               ? ch
               : '_';
  return out + ".bin";
}

void check_finite(const Tensor& t) {
  std::int64_t row = t.row_size();
  for (std::size_t i = 0; i < t.floats.size(); ++i) {
    if (!std::isfinite(t.floats[i])) {
      std::ostringstream os;
      os << "tensor '" << t.name << "' has a non-finite value at row "
         << static_cast<std::int64_t>(i) / row << " (flat index " << i << ")";
      throw ValidationError(os.str());
    }
  }
}

}  // namespace

void write_container(const fs::path& dir, const Container& c) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = kContainerFormat;
  manifest["version"] = 1;
  manifest["kind"] = c.kind;
  manifest["metadata"] = c.metadata;
  if (!c.sentence_ids.empty()) manifest["sentence_ids"] = c.sentence_ids;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& t : c.tensors) {
    std::string file = file_name_for(t.name);
    manifest["tensors"].push_back(
        {{"name", t.name}, {"dtype", dtype_name(t.dtype)}, {"shape", t.shape}, {"file", file}});
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + (dir / file).string() + "' for writing");
    switch (t.dtype) {
      case DType::kF32:
        out.write(reinterpret_cast<const char*>(t.floats.data()),
                  static_cast<std::streamsize>(t.floats.size() * sizeof(float)));
        break;
      case DType::kF16: {
        std::vector<std::uint16_t> half(t.floats.size());
        for (std::size_t i = 0; i < half.size(); ++i) half[i] = float_to_half(t.floats[i]);
        out.write(reinterpret_cast<const char*>(half.data()),
                  static_cast<std::streamsize>(half.size() * 2));
        break;
      }
      case DType::kI32:
        out.write(reinterpret_cast<const char*>(t.ints.data()),
                  static_cast<std::streamsize>(t.ints.size() * sizeof(std::int32_t)));
        break;
    }
    if (!out) throw Error("short write for tensor '" + t.name + "'");
  }
  std::ofstream mf(dir / kManifestName, std::ios::trunc);
  mf << manifest.dump(2) << '\n';
}

Container read_container(const fs::path& dir) {
  fs::path manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path))
    throw ValidationError("missing file: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", std::string()) != kContainerFormat)
    throw ValidationError(manifest_path.string() + ": not a concept-probe container");

  Container c;
  c.kind = manifest.value("kind", std::string());
  c.metadata = manifest.value("metadata", nlohmann::json::object());
  if (manifest.contains("sentence_ids"))
    c.sentence_ids = manifest["sentence_ids"].get<std::vector<std::string>>();
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
    throw ValidationError(manifest_path.string() + ": manifest lists no tensors");

  for (const auto& entry : manifest["tensors"]) {
    Tensor t;
    t.name = entry.at("name").get<std::string>();
    try {
      t.dtype = parse_dtype(entry.at("dtype").get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError("tensor '" + t.name + "': " + e.what());
    }
    t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    for (auto s : t.shape)
      if (s < 0) throw ValidationError("tensor '" + t.name + "': negative dimension");
    fs::path file = dir / entry.at("file").get<std::string>();
    if (!fs::exists(file))
      throw ValidationError("tensor '" + t.name + "': missing file " + file.string());

    std::uintmax_t expected = static_cast<std::uintmax_t>(t.numel()) * dtype_size(t.dtype);
    std::uintmax_t actual = fs::file_size(file);
    if (actual != expected) {
      std::ostringstream os;
      os << "tensor '" << t.name << "': size mismatch, shape implies " << expected
         << " bytes but " << file.filename().string() << " holds " << actual;
      throw ValidationError(os.str());
    }
    std::ifstream in(file, std::ios::binary);
    switch (t.dtype) {
      case DType::kF32:
        t.floats.resize(static_cast<std::size_t>(t.numel()));
        in.read(reinterpret_cast<char*>(t.floats.data()), static_cast<std::streamsize>(expected));
        break;
      case DType::kF16: {
        std::vector<std::uint16_t> half(static_cast<std::size_t>(t.numel()));
        in.read(reinterpret_cast<char*>(half.data()), static_cast<std::streamsize>(expected));
        t.floats.resize(half.size());
        for (std::size_t i = 0; i < half.size(); ++i) t.floats[i] = half_to_float(half[i]);
        break;
      }
      case DType::kI32:
        t.ints.resize(static_cast<std::size_t>(t.numel()));
        in.read(reinterpret_cast<char*>(t.ints.data()), static_cast<std::streamsize>(expected));
        break;
    }
    if (!in) throw ValidationError("tensor '" + t.name + "': short read");
    if (t.dtype != DType::kI32) check_finite(t);
    c.tensors.push_back(std::move(t));
  }
  return c;
}

Tensor matrix_tensor(std::string name, const MatrixF& m) {
  return Tensor::f32(std::move(name), {m.rows(), m.cols()},
                     std::vector<float>(m.data(), m.data() + m.size()));
}

Tensor vector_tensor(std::string name, const VectorF& v) {
  return Tensor::f32(std::move(name), {v.size()},
                     std::vector<float>(v.data(), v.data() + v.size()));
}

MatrixF tensor_matrix(const Container& c, std::string_view name, std::int64_t rows,
                      std::int64_t cols) {
  const Tensor& t = c.at(name);
  bool ok = t.dtype != DType::kI32 && t.shape.size() == 2 && (rows < 0 || t.shape[0] == rows) &&
            (cols < 0 || t.shape[1] == cols);
  if (!ok) {
    std::ostringstream os;
    os << "tensor '" << t.name << "' must be a float matrix [" << (rows < 0 ? "*" : std::to_string(rows))
       << "," << (cols < 0 ? "*" : std::to_string(cols)) << "]";
    throw ValidationError(os.str());
  }
  MatrixF m(t.shape[0], t.shape[1]);
  std::copy(t.floats.begin(), t.floats.end(), m.data());
  return m;
}

VectorF tensor_vector(const Container& c, std::string_view name, std::int64_t n) {
  const Tensor& t = c.at(name);
  if (t.dtype == DType::kI32 || t.shape.size() != 1 || (n >= 0 && t.shape[0] != n)) {
    std::ostringstream os;
    os << "tensor '" << t.name << "' must be a float vector [" << (n < 0 ? "*" : std::to_string(n))
       << "]";
    throw ValidationError(os.str());
  }
  return Eigen::Map<const VectorF>(t.floats.data(), t.shape[0]);
}

std::vector<int> tensor_ints(const Container& c, std::string_view name) {
  const Tensor& t = c.at(name);
  if (t.dtype != DType::kI32) throw ValidationError("tensor '" + t.name + "' must be i32");
  return {t.ints.begin(), t.ints.end()};
}

}  // namespace concept_probe
