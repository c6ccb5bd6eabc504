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

#ifndef ENKIABC_ESTIMATORS_HPP
#define ENKIABC_ESTIMATORS_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "enkiabc/estimate.hpp"
#include "enkiabc/gaussian.hpp"
#include "enkiabc/ienki.hpp"

namespace enkiabc {

/// log c_t: ratio of the normalising constants of l^{1/gamma} and N(. | ., gamma Sigma_y).
struct CtConstant {
  double gamma = 1.0;
  Index d_y = 0;
  double log_c = 0.0;

  static CtConstant make(double gamma, const CovarianceMatrix& sigma_y) {
    return make(gamma, sigma_y.dim(), cholesky(sigma_y).log_det());
  }

  static CtConstant make(double gamma, Index d_y, double log_det_sigma_y) {
    if (!(gamma >= 1.0)) {
      throw PreconditionError("CtConstant: gamma must be at least 1");
    }
    const double d = static_cast<double>(d_y);
    const double shrink = 1.0 - 1.0 / gamma;
    return {gamma, d_y, 0.5 * d * std::log(gamma) + shrink * 0.5 * d * kLog2Pi + shrink * 0.5 * log_det_sigma_y};
  }
};

namespace detail {

inline void check_trace(const IenkiTrace& trace, const Vector& y_obs, const CovarianceMatrix& sigma_y) {
  if (trace.gamma.empty() || trace.moments.size() < trace.gamma.size()) {
    throw DimensionError("estimator: trace must hold moments for t = 0 .. T-1");
  }
  if (y_obs.size() != sigma_y.dim() || trace.moments.front().obs_mean().size() != y_obs.size()) {
    throw DimensionError("estimator: observation dimension mismatch");
  }
}

inline std::string ienki_method(const IenkiTrace& trace, const char* estimator) {
  return std::string(1, shifter_prefix(trace.shifter)) + "IEnKI-" + estimator;
}

template <class Fn>
LogLikelihoodEstimate product_form(const IenkiTrace& trace, const CovarianceMatrix& sigma_y, Fn&& predictive,
                                   std::string method) {
  LogLikelihoodEstimate out;
  out.method = std::move(method);
  out.T_used = trace.steps();
  out.skip_at = trace.skip_at;
  out.divergent_sims = trace.divergent_sims;
  try {
    const double log_det = cholesky(sigma_y).log_det();
    double total = 0.0;
    for (std::size_t t = 1; t <= trace.gamma.size(); ++t) {
      const double gamma = trace.gamma[t - 1];
      const double term = predictive(t - 1, gamma);
      if (is_log_zero(term)) {
        total = kLogZero;
        break;
      }
      // gamma = 1 gives log c = 0 exactly, so T = 1 reduces to a single density evaluation.
      total += (gamma == 1.0 ? 0.0 : CtConstant::make(gamma, sigma_y.dim(), log_det).log_c) + term;
    }
    out.log_value = total;
  } catch (const IllConditionedError&) {
    out.degenerate = true;
    out.log_value = kLogZero;
  }
  return finalize(out);
}

}  // namespace detail

/// sum_t [log c_t + log N(y_obs | mu^h_{t-1}, C^{hh}_{t-1} + gamma_t Sigma_y)].
inline LogLikelihoodEstimate direct_log_ml(const IenkiTrace& trace, const Vector& y_obs,
                                           const CovarianceMatrix& sigma_y) {
  detail::check_trace(trace, y_obs, sigma_y);
  return detail::product_form(
      trace, sigma_y,
      [&](std::size_t t, double gamma) {
        const auto& m = trace.moments[t];
        return mvn_logpdf(y_obs, m.obs_mean(), m.obs_cov() + gamma * sigma_y);
      },
      detail::ienki_method(trace, "direct"));
}

inline LogLikelihoodEstimate direct_log_ml(const IenkiTrace& trace) {
  return direct_log_ml(trace, trace.y_obs, trace.sigma_y);
}

/**
 * Product form with each predictive density replaced by the Ghurye-Olkin
 * estimate from the perturbed images y~^j ~ N(h^j, gamma_t Sigma_y), which is
 * unbiased for N(y_obs | mu^h, C^{hh} + gamma_t Sigma_y) given the ensemble.
 */
inline LogLikelihoodEstimate unbiased_log_ml(const IenkiTrace& trace, const Vector& y_obs,
                                             const CovarianceMatrix& sigma_y, Index sample_size) {
  detail::check_trace(trace, y_obs, sigma_y);
  if (sample_size <= y_obs.size() + 3) {
    throw PreconditionError("unbiased_log_ml: requires M > d_y + 3");
  }
  if (trace.perturbed.size() < trace.gamma.size()) {
    throw PreconditionError("unbiased_log_ml: trace lacks perturbed-image moments");
  }
  for (std::size_t t = 0; t < trace.gamma.size(); ++t) {
    if (!trace.perturbed[t]) {
      throw PreconditionError("unbiased_log_ml: trace lacks perturbed-image moments");
    }
  }
  return detail::product_form(
      trace, sigma_y,
      [&](std::size_t t, double) {
        const auto& p = *trace.perturbed[t];
        return ghurye_olkin_logdensity(y_obs, p.mean, p.cov, sample_size);
      },
      detail::ienki_method(trace, "unbiased"));
}

inline LogLikelihoodEstimate unbiased_log_ml(const IenkiTrace& trace) {
  return unbiased_log_ml(trace, trace.y_obs, trace.sigma_y, trace.ensemble_size);
}

/// Trapezoidal sum_t (U_t + U_{t-1}) / (2 gamma_t).
inline LogLikelihoodEstimate path_sampling_log_ml(const IenkiTrace& trace) {
  if (trace.gamma.empty() || trace.U.size() != trace.gamma.size() + 1) {
    throw PreconditionError("path_sampling_log_ml: trace must hold U_t for t = 0 .. T");
  }
  LogLikelihoodEstimate out;
  out.method = detail::ienki_method(trace, "path");
  out.T_used = trace.steps();
  out.skip_at = trace.skip_at;
  out.divergent_sims = trace.divergent_sims;
  double total = 0.0;
  for (std::size_t t = 1; t < trace.U.size(); ++t) {
    total += 0.5 * (trace.U[t] + trace.U[t - 1]) / trace.gamma[t - 1];
  }
  out.log_value = total;
  return finalize(out);
}

/// log N(s_obs | mu^s, C^{ss} + noise_var I); a covariance that cannot be factorised gives a degenerate estimate.
inline LogLikelihoodEstimate synthetic_loglik(const Matrix& sims, const Vector& s_obs,
                                              std::optional<double> noise_var = std::nullopt) {
  if (sims.cols() < 2) {
    throw PreconditionError("synthetic_loglik: need at least two simulations");
  }
  if (sims.rows() != s_obs.size()) {
    throw DimensionError("synthetic_loglik: summary dimension mismatch");
  }
  LogLikelihoodEstimate out;
  out.method = "SL";
  out.T_used = 1;
  const auto m = ensemble_moments(sims);
  try {
    const Index d = s_obs.size();
    const CovarianceMatrix cov =
        noise_var && *noise_var > 0.0 ? m.cov + CovarianceMatrix::scalar(d, *noise_var) : m.cov;
    out.log_value = mvn_logpdf(s_obs, m.mean, cov);
  } catch (const IllConditionedError&) {
    out.degenerate = true;
    out.log_value = kLogZero;
  }
  return finalize(out);
}

inline LogLikelihoodEstimate synthetic_loglik(std::span<const Vector> sims, const Vector& s_obs,
                                              std::optional<double> noise_var = std::nullopt) {
  if (sims.size() < 2) {
    throw PreconditionError("synthetic_loglik: need at least two simulations");
  }
  Matrix x(s_obs.size(), static_cast<Index>(sims.size()));
  for (std::size_t j = 0; j < sims.size(); ++j) {
    if (sims[j].size() != s_obs.size()) {
      throw DimensionError("synthetic_loglik: summary dimension mismatch");
    }
    x.col(static_cast<Index>(j)) = sims[j];
  }
  return synthetic_loglik(x, s_obs, noise_var);
}

/// SL at theta from M fresh simulations.
inline LogLikelihoodEstimate synthetic_loglik(const SimulatorModel& model, const ParamVec& theta,
                                              const Vector& s_obs, Index sample_size, std::optional<double> noise_var,
                                              Rng& rng) {
  const auto batch = simulate_batch(model, theta, sample_size, rng);
  auto out = synthetic_loglik(batch.summaries, s_obs, noise_var);
  out.divergent_sims = batch.divergent;
  return out;
}

}  // namespace enkiabc

#endif
