// Copyright 2026 The enkiabc Authors
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

#ifndef ENKIABC_ERRORS_HPP
#define ENKIABC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace enkiabc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition does not hold (e.g. M <= d + 3 for the unbiased density).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A covariance could not be factorized even after the jitter ladder.
class IllConditionedError : public Error {
 public:
  IllConditionedError(const std::string& what, double condition)
      : Error(what + " (condition estimate " + std::to_string(condition) + ")"), condition_(condition) {}

  /// Ratio of largest to smallest absolute eigenvalue (inf when singular).
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// A numeric failure inside an iterative run, tagged with the iteration at which it happened.
class IterationError : public Error {
 public:
  IterationError(const std::string& what, int iteration)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace enkiabc

#endif
