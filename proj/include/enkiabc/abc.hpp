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

#ifndef ENKIABC_ABC_HPP
#define ENKIABC_ABC_HPP

#include <cmath>
#include <vector>

#include "enkiabc/estimate.hpp"
#include "enkiabc/gaussian.hpp"
#include "enkiabc/simulators.hpp"

namespace enkiabc {

enum class KernelKind { uniform, gaussian };

/// K_eps(s_obs | s): uniform indicator of d(s_obs, s) < eps, or N(s_obs | s, eps^2 Sigma_s).
struct AbcKernel {
  KernelKind kind = KernelKind::gaussian;
  double epsilon = 1.0;
  DiagScale scale;

  AbcKernel(KernelKind k, double eps, DiagScale sc) : kind(k), epsilon(eps), scale(std::move(sc)) {
    if (!(epsilon > 0.0)) {
      throw PreconditionError("AbcKernel: epsilon must be positive");
    }
  }
};

inline double weighted_euclidean(const Vector& s_obs, const Vector& s, const DiagScale& scale) {
  if (s_obs.size() != s.size() || s.size() != scale.size()) {
    throw DimensionError("weighted_euclidean: length mismatch");
  }
  return ((s_obs - s).array() / scale.sigma().array()).matrix().norm();
}

inline double kernel_logvalue(const AbcKernel& k, const Vector& s_obs, const Vector& s) {
  if (k.kind == KernelKind::uniform) {
    return weighted_euclidean(s_obs, s, k.scale) < k.epsilon ? 0.0 : kLogZero;
  }
  if (s_obs.size() != s.size() || s.size() != k.scale.size()) {
    throw DimensionError("kernel_logvalue: length mismatch");
  }
  // Diagonal covariance eps^2 diag(sigma^2): same value as mvn_logpdf, without a factorization.
  const auto d = static_cast<double>(s.size());
  const double log_det = d * 2.0 * std::log(k.epsilon) + 2.0 * k.scale.sigma().array().log().sum();
  const double quad = ((s_obs - s).array() / (k.epsilon * k.scale.sigma().array())).square().sum();
  return -0.5 * (d * kLog2Pi + log_det + quad);
}

/// log((1/M) sum_j K_eps(s_obs | s^j)) over M fresh simulations at theta.
inline LogLikelihoodEstimate abc_loglik_estimate(const SimulatorModel& model, const ParamVec& theta,
                                                 const Vector& s_obs, const AbcKernel& k, Index sample_size,
                                                 Rng& rng) {
  if (sample_size < 1) {
    throw PreconditionError("abc_loglik_estimate: M must be at least 1");
  }
  Stopwatch clock;
  LogLikelihoodEstimate out;
  out.method = "ABC";
  std::vector<double> terms(static_cast<std::size_t>(sample_size));
  for (Index j = 0; j < sample_size; ++j) {
    const auto draw = model.simulate(theta, rng);
    out.divergent_sims += draw.divergent ? 1 : 0;
    terms[static_cast<std::size_t>(j)] = kernel_logvalue(k, s_obs, draw.values);
  }
  out.log_value = log_mean_exp(terms);
  finalize(out);
  out.wall_time = clock.seconds();
  return out;
}

}  // namespace enkiabc

#endif
