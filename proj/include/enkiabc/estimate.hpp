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

#ifndef ENKIABC_ESTIMATE_HPP
#define ENKIABC_ESTIMATE_HPP

#include <chrono>
#include <cmath>
#include <optional>
#include <string>

#include "enkiabc/gaussian.hpp"

namespace enkiabc {

/// A log-likelihood estimate and how it was produced.
struct LogLikelihoodEstimate {
  double log_value = kLogZero;
  std::string method;
  int T_used = 0;
  std::optional<int> skip_at;
  /// True when the estimate is zero on the natural scale (log_value == kLogZero) or a
  /// numeric failure made it unusable.
  bool degenerate = false;
  int divergent_sims = 0;
  double wall_time = 0.0;

  bool ok() const noexcept { return !degenerate && std::isfinite(log_value); }
};

inline LogLikelihoodEstimate degenerate_estimate(std::string method) {
  LogLikelihoodEstimate e;
  e.method = std::move(method);
  e.degenerate = true;
  return e;
}

/// Sets degenerate when the value is not a finite number, so no NaN escapes silently.
inline LogLikelihoodEstimate& finalize(LogLikelihoodEstimate& e) {
  if (!std::isfinite(e.log_value)) {
    e.degenerate = true;
    if (std::isnan(e.log_value)) {
      e.log_value = kLogZero;
    }
  }
  return e;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace enkiabc

#endif
