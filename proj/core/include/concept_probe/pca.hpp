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

#include "concept_probe/linalg.hpp"

namespace concept_probe {

// Two-component PCA of a sample matrix.
struct Pca2 {
  VectorD mean;                // d
  MatrixD components;          // 2 x d, orthonormal rows
  VectorD explained_variance;  // 2, descending

  // (points - mean) projected on the components: P x 2.
  MatrixD project(const MatrixD& points) const;
};

// Components are the top-2 eigenvectors of the sample covariance, each signed
// so that its largest-magnitude coordinate is positive. Throws NumericalError
// on a zero covariance and ValidationError when N < 3.
Pca2 pca2_fit(const MatrixD& h);

}  // namespace concept_probe
