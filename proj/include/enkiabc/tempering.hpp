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

#ifndef ENKIABC_TEMPERING_HPP
#define ENKIABC_TEMPERING_HPP

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "enkiabc/csv.hpp"
#include "enkiabc/ensemble.hpp"
#include "enkiabc/normality.hpp"
#include "enkiabc/simulators.hpp"

/**
 * \file
 * \brief Tolerance and temperature schedules.
 *
 * A decreasing tolerance sequence inf = eps_0 > eps_1 > ... > eps_T = eps is
 * equivalent to the temperatures alpha_t = (eps / eps_t)^2, increasing from 0
 * to 1, with increments 1 / gamma_t = alpha_t - alpha_{t-1}.
 */

namespace enkiabc {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// gamma = eps^-2 (eps_next^-2 - eps_prev^-2)^-1; eps_prev may be infinite.
inline double gamma_from_tolerances(double epsilon, double eps_prev, double eps_next) {
  if (!(epsilon > 0.0) || !(eps_next >= epsilon) || !(eps_prev > eps_next)) {
    throw PreconditionError("gamma_from_tolerances: need eps_prev > eps_next >= eps > 0");
  }
  const double prev_precision = std::isinf(eps_prev) ? 0.0 : 1.0 / (eps_prev * eps_prev);
  const double next_precision = 1.0 / (eps_next * eps_next);
  return 1.0 / (epsilon * epsilon * (next_precision - prev_precision));
}

enum class ScheduleOrigin { closed_form, adaptive, explicit_list };

struct TemperingSchedule {
  std::vector<double> epsilon;  // eps_0 = inf, ..., eps_T
  std::vector<double> alpha;    // 0, ..., 1
  std::vector<double> gamma;    // T increments
  ScheduleOrigin origin = ScheduleOrigin::explicit_list;
  /// Set when the closed form was not applicable (kappa <= eps) and a uniform alpha grid was used.
  bool fallback = false;

  int steps() const noexcept { return static_cast<int>(gamma.size()); }
  double target() const { return epsilon.back(); }

  /// Throws PreconditionError when a structural invariant is violated.
  void validate() const {
    const auto n = gamma.size();
    if (n < 1 || epsilon.size() != n + 1 || alpha.size() != n + 1) {
      throw PreconditionError("schedule: inconsistent lengths");
    }
    if (!std::isinf(epsilon.front()) || alpha.front() != 0.0 || alpha.back() != 1.0) {
      throw PreconditionError("schedule: boundary values must be eps_0 = inf, alpha_0 = 0, alpha_T = 1");
    }
    for (std::size_t t = 1; t <= n; ++t) {
      if (!(epsilon[t] < epsilon[t - 1]) || !(alpha[t] > alpha[t - 1]) || !(gamma[t - 1] > 0.0)) {
        throw PreconditionError("schedule: tolerances must decrease and temperatures increase");
      }
    }
  }
};

/// CSV with columns t, epsilon_t, alpha_t, gamma_t (gamma_0 left empty).
inline void write_schedule_csv(std::ostream& os, const TemperingSchedule& s) {
  os << "t,epsilon_t,alpha_t,gamma_t\n";
  for (std::size_t t = 0; t < s.epsilon.size(); ++t) {
    os << t << ',' << format_double(s.epsilon[t]) << ',' << format_double(s.alpha[t]) << ',';
    if (t > 0) {
      os << format_double(s.gamma[t - 1]);
    }
    os << '\n';
  }
}

/// Builds (alpha, gamma) from an explicit decreasing tolerance list starting at infinity.
inline TemperingSchedule schedule_from_tolerances(std::vector<double> tolerances) {
  if (tolerances.size() < 2 || !std::isinf(tolerances.front())) {
    throw PreconditionError("schedule_from_tolerances: need inf followed by at least one tolerance");
  }
  TemperingSchedule s;
  s.origin = ScheduleOrigin::explicit_list;
  const double eps = tolerances.back();
  s.epsilon = std::move(tolerances);
  s.alpha.resize(s.epsilon.size());
  s.alpha.front() = 0.0;
  for (std::size_t t = 1; t < s.epsilon.size(); ++t) {
    s.alpha[t] = (eps / s.epsilon[t]) * (eps / s.epsilon[t]);
    s.gamma.push_back(gamma_from_tolerances(eps, s.epsilon[t - 1], s.epsilon[t]));
  }
  s.alpha.back() = 1.0;
  s.validate();
  return s;
}

/// alpha(t) = exp(2 log(kappa / eps) t + log r) - r with r = eps^2 / (kappa^2 - eps^2).
inline double closed_form_alpha(double t_frac, double epsilon, double kappa) {
  if (!(t_frac >= 0.0 && t_frac <= 1.0)) {
    throw PreconditionError("closed_form_alpha: t must lie in [0, 1]");
  }
  if (!(epsilon > 0.0) || !(kappa > epsilon)) {
    throw PreconditionError("closed_form_alpha: schedule degenerate, need kappa > eps > 0");
  }
  if (t_frac == 0.0) {
    return 0.0;
  }
  if (t_frac == 1.0) {
    return 1.0;
  }
  const double r = epsilon * epsilon / ((kappa - epsilon) * (kappa + epsilon));
  return std::exp(2.0 * std::log(kappa / epsilon) * t_frac + std::log(r)) - r;
}

/// Fisher information of alpha along the Gaussian tempering path.
inline double tempering_fisher_information(double alpha, double epsilon, double kappa, Index summary_dim) {
  const double e2 = epsilon * epsilon;
  const double k2 = kappa * kappa;
  const double denom = e2 + (k2 - e2) * alpha;
  return (e2 - k2) * (e2 - k2) * static_cast<double>(summary_dim) / (denom * denom);
}

/// Discretised closed-form schedule alpha_t = alpha(t / T); uniform alpha grid when kappa <= eps (1 + 1e-6).
inline TemperingSchedule build_schedule(double epsilon, double kappa, int steps) {
  if (steps < 1) {
    throw PreconditionError("build_schedule: T must be at least 1");
  }
  if (!(epsilon > 0.0)) {
    throw PreconditionError("build_schedule: epsilon must be positive");
  }
  TemperingSchedule s;
  s.origin = ScheduleOrigin::closed_form;
  s.fallback = !(kappa > epsilon * (1.0 + 1e-6));
  const auto n = static_cast<std::size_t>(steps);
  s.alpha.resize(n + 1);
  s.epsilon.resize(n + 1);
  s.alpha[0] = 0.0;
  s.epsilon[0] = kInfinity;
  for (std::size_t t = 1; t <= n; ++t) {
    const double frac = static_cast<double>(t) / static_cast<double>(n);
    s.alpha[t] = s.fallback ? frac : closed_form_alpha(frac, epsilon, kappa);
    s.epsilon[t] = epsilon / std::sqrt(s.alpha[t]);
  }
  s.alpha[n] = 1.0;
  s.epsilon[n] = epsilon;
  for (std::size_t t = 1; t <= n; ++t) {
    s.gamma.push_back(gamma_from_tolerances(epsilon, s.epsilon[t - 1], s.epsilon[t]));
  }
  s.validate();
  return s;
}

/// kappa = mean_i sd_i / sigma_i over the coordinates of the simulations (columns of `sims`).
inline double estimate_kappa(const Matrix& sims, const DiagScale& scale) {
  if (sims.cols() < 2) {
    throw PreconditionError("estimate_kappa: need at least two simulations");
  }
  if (sims.rows() != scale.size()) {
    throw DimensionError("estimate_kappa: scale length mismatch");
  }
  const Vector mean = sims.rowwise().mean();
  const Vector sd =
      ((sims.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(sims.cols() - 1)).cwiseSqrt();
  if (!(sd.maxCoeff() > 0.0)) {
    throw PreconditionError("estimate_kappa: zero sample spread in every coordinate");
  }
  return (sd.array() / scale.sigma().array()).mean();
}

/// (sum w)^2 / sum w^2 from log-weights, in [1, M].
inline double ess_from_log_weights(std::span<const double> log_w) {
  if (log_w.empty()) {
    throw PreconditionError("ess: empty weights");
  }
  double hi = kLogZero;
  for (const double v : log_w) {
    hi = std::max(hi, v);
  }
  if (is_log_zero(hi) || std::isnan(hi)) {
    throw PreconditionError("ess: all weights are zero");
  }
  double s1 = 0.0;
  double s2 = 0.0;
  for (const double v : log_w) {
    const double w = std::exp(v - hi);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

inline double ess(std::span<const double> weights) {
  std::vector<double> log_w;
  log_w.reserve(weights.size());
  for (const double w : weights) {
    if (!(w >= 0.0)) {
      throw PreconditionError("ess: weights must be nonnegative");
    }
    log_w.push_back(w > 0.0 ? std::log(w) : kLogZero);
  }
  return ess_from_log_weights(log_w);
}

/**
 * Next tolerance by bisection so that the incremental weights
 * exp(-(eps^-2 - eps_prev^-2) / 2 * (s_obs - s^j)^T Sigma_s^-1 (s_obs - s^j))
 * have ESS = beta M. Returns eps_final when it already keeps ESS >= beta M.
 */
inline double adaptive_next_epsilon(const Ensemble& e, const Vector& s_obs, double eps_prev, double eps_final,
                                    double beta, const DiagScale& scale) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw PreconditionError("adaptive_next_epsilon: beta must lie in (0, 1)");
  }
  if (!(eps_prev > eps_final) || !(eps_final > 0.0)) {
    throw PreconditionError("adaptive_next_epsilon: need eps_prev > eps_final > 0");
  }
  if (s_obs.size() != e.dim() || scale.size() != e.dim()) {
    throw DimensionError("adaptive_next_epsilon: dimension mismatch");
  }
  const Index m = e.size();
  std::vector<double> dist2(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    dist2[static_cast<std::size_t>(j)] =
        ((s_obs - e.members.col(j)).array() / scale.sigma().array()).square().sum();
  }
  const double prev_precision = std::isinf(eps_prev) ? 0.0 : 1.0 / (eps_prev * eps_prev);
  std::vector<double> log_w(dist2.size());
  auto ess_at = [&](double eps) {
    const double lambda = 1.0 / (eps * eps) - prev_precision;
    for (std::size_t j = 0; j < dist2.size(); ++j) {
      log_w[j] = -0.5 * lambda * dist2[j];
    }
    return ess_from_log_weights(log_w);
  };
  const double target = beta * static_cast<double>(m);
  if (ess_at(eps_final) >= target) {
    return eps_final;
  }
  // Bisect on log(eps); an infinite previous tolerance is bracketed by a finite upper bound
  // at which the weights are flat enough.
  double hi = eps_prev;
  if (std::isinf(hi)) {
    hi = eps_final;
    do {
      hi *= 10.0;
    } while (ess_at(hi) < target && hi < 1e300);
  }
  double lo = eps_final;
  for (int it = 0; it < 100; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (ess_at(mid) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo <= 1e-10 * hi) {
      break;
    }
  }
  return hi;
}

struct SkipPolicy {
  double significance = 0.1;
  bool enabled = false;
};

/**
 * True when the normality test does not reject Gaussianity of the ensemble.
 *
 * Coordinates with exactly zero spread (e.g. a known initial state) are a
 * degenerate Gaussian and are dropped before testing. A test that is not
 * applicable never skips.
 */
inline bool skip_decision(const Ensemble& e, const SkipPolicy& policy) {
  if (!policy.enabled) {
    return false;
  }
  std::vector<Index> keep;
  for (Index i = 0; i < e.dim(); ++i) {
    if (e.members.row(i).maxCoeff() > e.members.row(i).minCoeff()) {
      keep.push_back(i);
    }
  }
  const auto d = static_cast<Index>(keep.size());
  if (d == 0 || e.size() <= d + 1) {
    return false;
  }
  Matrix reduced(d, e.size());
  for (Index r = 0; r < d; ++r) {
    reduced.row(r) = e.members.row(keep[static_cast<std::size_t>(r)]);
  }
  const auto result = hz_normality_test(reduced, policy.significance);
  return result.applicable && !result.reject;
}

}  // namespace enkiabc

#endif
