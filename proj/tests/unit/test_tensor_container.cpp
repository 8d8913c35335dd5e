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
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "concept_probe/error.hpp"
#include "concept_probe/tensor_container.hpp"
#include "test_util.hpp"

namespace cp = concept_probe;

namespace {

cp::Container sample_container() {
  cp::Container c;
  c.kind = "sample";
  c.metadata = {{"answer", 42}};
  c.sentence_ids = {"a", "b"};
  c.add(cp::Tensor::f32("x", {2, 3}, {1, 2, 3, 4, 5, 6}));
  c.add(cp::Tensor::f16("y", {2}, {0.5f, -1.25f}));
  c.add(cp::Tensor::i32("z", {3}, {7, -8, 9}));
  return c;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(TensorContainer, RoundTripPreservesEveryField) {
  cp::test::TempDir dir;
  cp::write_container(dir.path() / "c", sample_container());
  cp::Container back = cp::read_container(dir.path() / "c");
  EXPECT_EQ(back.kind, "sample");
  EXPECT_EQ(back.metadata["answer"], 42);
  EXPECT_EQ(back.sentence_ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(back.at("x").floats, (std::vector<float>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(back.at("x").shape, (std::vector<std::int64_t>{2, 3}));
  EXPECT_EQ(back.at("y").dtype, cp::DType::kF16);
  EXPECT_EQ(back.at("y").floats, (std::vector<float>{0.5f, -1.25f}));
  EXPECT_EQ(back.at("z").ints, (std::vector<std::int32_t>{7, -8, 9}));
}

TEST(TensorContainer, SerializationIsByteDeterministic) {
  cp::test::TempDir dir;
  cp::write_container(dir.path() / "a", sample_container());
  cp::write_container(dir.path() / "b", sample_container());
  for (const char* f : {"manifest.json", "x.bin", "y.bin", "z.bin"}) {
    if (!std::filesystem::exists(dir.path() / "a" / f)) continue;
    EXPECT_EQ(read_bytes(dir.path() / "a" / f), read_bytes(dir.path() / "b" / f)) << f;
  }
  cp::write_container(dir.path() / "c", cp::read_container(dir.path() / "a"));
  EXPECT_EQ(read_bytes(dir.path() / "a" / "manifest.json"),
            read_bytes(dir.path() / "c" / "manifest.json"));
}

TEST(TensorContainer, TruncatedPayloadNamesTheTensor) {
  cp::test::TempDir dir;
  cp::write_container(dir.path() / "c", sample_container());
  for (const auto& e : std::filesystem::directory_iterator(dir.path() / "c")) {
    if (e.path().filename() == "manifest.json") continue;
    if (e.path().stem().string().find('x') == std::string::npos) continue;
    std::filesystem::resize_file(e.path(), 5);
  }
  try {
    cp::read_container(dir.path() / "c");
    FAIL() << "expected ValidationError";
  } catch (const cp::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos) << e.what();
  }
}

TEST(TensorContainer, NonFiniteValuesAreRejected) {
  cp::test::TempDir dir;
  cp::Container c;
  c.kind = "bad";
  c.add(cp::Tensor::f32("w", {2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}));
  cp::write_container(dir.path() / "c", c);
  try {
    cp::read_container(dir.path() / "c");
    FAIL() << "expected ValidationError";
  } catch (const cp::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("row"), std::string::npos) << e.what();
  }
}

TEST(TensorContainer, MissingManifestIsAValidationError) {
  cp::test::TempDir dir;
  EXPECT_THROW(cp::read_container(dir.path() / "nothing"), cp::ValidationError);
}

TEST(TensorContainer, UnknownDtypeIsRejected) {
  EXPECT_THROW(cp::parse_dtype("f64"), cp::ValidationError);
  EXPECT_EQ(cp::parse_dtype("f16"), cp::DType::kF16);
  EXPECT_EQ(cp::dtype_size(cp::DType::kI32), 4u);
}

TEST(TensorContainer, ShapeCheckedMatrixAccess) {
  cp::Container c = sample_container();
  cp::MatrixF m = cp::tensor_matrix(c, "x", 2, 3);
  EXPECT_EQ(m(1, 0), 4.0f);
  EXPECT_THROW(cp::tensor_matrix(c, "x", 3, 2), cp::ValidationError);
  EXPECT_THROW(cp::tensor_vector(c, "missing"), cp::ValidationError);
  EXPECT_EQ(cp::tensor_ints(c, "z"), (std::vector<int>{7, -8, 9}));
}

TEST(HalfPrecision, ExactValuesAndRounding) {
  EXPECT_EQ(cp::float_to_half(1.0f), 0x3C00);
  EXPECT_EQ(cp::float_to_half(-2.0f), 0xC000);
  EXPECT_EQ(cp::float_to_half(65504.0f), 0x7BFF);
  EXPECT_EQ(cp::half_to_float(0x3555), 0.333251953125f);
  EXPECT_EQ(cp::half_to_float(0x0001), std::ldexp(1.0f, -24));
  // 1 + 2^-11 sits halfway between 1 and 1 + 2^-10: ties to even.
  EXPECT_EQ(cp::float_to_half(1.0f + std::ldexp(1.0f, -11)), 0x3C00);
  EXPECT_EQ(cp::float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)), 0x3C02);
  for (std::uint32_t b = 0; b < 0x7C00; b += 7) {
    auto h = static_cast<std::uint16_t>(b);
    EXPECT_EQ(cp::float_to_half(cp::half_to_float(h)), h);
  }
}
