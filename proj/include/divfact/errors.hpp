// Copyright 2026 The divfact Authors. All Rights Reserved.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace divfact {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (non-square input, mismatched blocks, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix required to be positive definite is not. `index` is the
/// position of the first pivot that fell below the acceptance threshold.
class DefinitenessError : public Error {
 public:
  DefinitenessError(const std::string& what, std::ptrdiff_t index, double pivot)
      : Error(what + " (pivot " + std::to_string(index) + " = " + std::to_string(pivot) + ")"),
        index_(index),
        pivot_(pivot) {}

  std::ptrdiff_t index() const noexcept { return index_; }
  double pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t index_;
  double pivot_;
};

/// A block that must be inverted is singular; `block` names it.
class SingularityError : public Error {
 public:
  explicit SingularityError(std::string block)
      : Error("singular matrix: " + block), block_(std::move(block)) {}

  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

/// A quantity that is nonnegative in exact arithmetic came out materially
/// negative; the computation cannot be trusted.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (k >= n, bad tolerances, malformed files).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace divfact
