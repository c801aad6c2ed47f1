// Copyright 2026 The MITVG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mitvg {

// Base of every error thrown by the library. The CLI maps subclasses onto
// exit codes: NumericError -> 3, everything else -> 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller broke a precondition (non-scalar loss, out-of-range token id, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed or violates a dataset invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

// Binary file has the wrong magic, version, or is truncated.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or parameter during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad configuration value or missing key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mitvg
