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

#include <stdexcept>
#include <string>

namespace concept_probe {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed inputs: containers, shapes, configs, out-of-range arguments.
// The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Well-formed inputs on which a computation is undefined (zero variance,
// singular covariance, NaN during training). Exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace concept_probe
