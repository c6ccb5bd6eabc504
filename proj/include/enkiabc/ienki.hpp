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

#ifndef ENKIABC_IENKI_HPP
#define ENKIABC_IENKI_HPP

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "enkiabc/csv.hpp"
#include "enkiabc/ensemble.hpp"
#include "enkiabc/gaussian.hpp"
#include "enkiabc/simulators.hpp"
#include "enkiabc/tempering.hpp"

/**
 * \file
 * \brief Iterative ensemble Kalman inversion and its ABC specialisation.
 *
 * Each step moves the ensemble from the target tempered at alpha_{t-1} to the
 * one at alpha_t through a Kalman update whose observation noise is inflated
 * by gamma_t. Three shifters are provided: perturbed observations
 * (stochastic), and the two deterministic moment-matching variants
 * (square root and adjustment).
 */

namespace enkiabc {

enum class ShifterKind { stochastic, square_root, adjustment };

inline std::string_view shifter_name(ShifterKind k) {
  switch (k) {
    case ShifterKind::stochastic:
      return "stochastic";
    case ShifterKind::square_root:
      return "square_root";
    case ShifterKind::adjustment:
      return "adjustment";
  }
  return "unknown";
}

/// One-letter method prefix: s, r or a.
inline char shifter_prefix(ShifterKind k) {
  switch (k) {
    case ShifterKind::stochastic:
      return 's';
    case ShifterKind::square_root:
      return 'r';
    case ShifterKind::adjustment:
      return 'a';
  }
  return '?';
}

inline std::optional<ShifterKind> parse_shifter(std::string_view s) {
  if (s == "stochastic" || s == "s") {
    return ShifterKind::stochastic;
  }
  if (s == "square_root" || s == "r") {
    return ShifterKind::square_root;
  }
  if (s == "adjustment" || s == "a") {
    return ShifterKind::adjustment;
  }
  return std::nullopt;
}

/// K = C^{xh} (C^{hh} + gamma Sigma_y)^{-1}, by a Cholesky solve.
inline Matrix kalman_gain(const EnsembleMoments& m, double gamma, const CovarianceMatrix& sigma_y) {
  if (!(gamma > 0.0)) {
    throw PreconditionError("kalman_gain: gamma must be positive");
  }
  if (sigma_y.dim() != m.obs_cov().dim()) {
    throw DimensionError("kalman_gain: noise covariance does not match the observation dimension");
  }
  const Matrix s = m.obs_cov().matrix() + gamma * sigma_y.matrix();
  const auto f = cholesky(s);
  return f.llt.solve(m.state_obs_cov().transpose()).transpose();
}

namespace detail {

inline void check_shift_inputs(const Ensemble& e, const Vector& y_obs) {
  if (y_obs.size() != e.obs_dim()) {
    throw DimensionError("shift: observation length does not match the ensemble");
  }
}

/// Columns h^j + L z^j with L L^T = noise_cov.
inline Matrix perturb_images(const Matrix& images, const CovarianceMatrix& noise_cov, Rng& rng) {
  if (noise_cov.dim() != images.rows()) {
    throw DimensionError("perturb_images: noise covariance dimension mismatch");
  }
  Matrix out = images;
  if (noise_cov.matrix().isZero(0.0)) {
    return out;
  }
  const Matrix l = cholesky(noise_cov).lower();
  Vector z(images.rows());
  for (Index j = 0; j < images.cols(); ++j) {
    for (Index i = 0; i < z.size(); ++i) {
      z[i] = rng.normal();
    }
    out.col(j).noalias() += l * z;
  }
  return out;
}

inline Ensemble shifted(const Ensemble& e, Matrix members) {
  return Ensemble::from_members(std::move(members), e.observation, e.iteration + 1);
}

}  // namespace detail

/**
 * Perturbed-observation shift x^j + K (y_obs - y~^j), y~^j ~ N(h^j, noise_cov).
 *
 * When `perturbed` is given it receives the perturbed images y~^j as columns.
 */
inline Ensemble shift_stochastic(const Ensemble& e, const Matrix& gain, const CovarianceMatrix& noise_cov,
                                 const Vector& y_obs, Rng& rng, Matrix* perturbed = nullptr) {
  detail::check_shift_inputs(e, y_obs);
  if (gain.rows() != e.dim() || gain.cols() != e.obs_dim()) {
    throw DimensionError("shift_stochastic: gain has the wrong shape");
  }
  Matrix tilde = detail::perturb_images(e.images(), noise_cov, rng);
  Matrix innovation = (-tilde).colwise() + y_obs;
  Matrix members = e.members + gain * innovation;
  if (perturbed != nullptr) {
    *perturbed = std::move(tilde);
  }
  return detail::shifted(e, std::move(members));
}

/// Deterministic shift x^j + K (y_obs - mu_h) - Kbar (h^j - mu_h),
/// Kbar = C^{xh} S^{-1/2} (S^{1/2} + (gamma Sigma_y)^{1/2})^{-1}, S = C^{hh} + gamma Sigma_y.
inline Ensemble shift_square_root(const Ensemble& e, const EnsembleMoments& m, double gamma,
                                  const CovarianceMatrix& sigma_y, const Vector& y_obs) {
  detail::check_shift_inputs(e, y_obs);
  const Matrix gain = kalman_gain(m, gamma, sigma_y);
  const Matrix s = m.obs_cov().matrix() + gamma * sigma_y.matrix();
  const Matrix s_root = symmetric_sqrt(s);
  const Matrix r_root = symmetric_sqrt(gamma * sigma_y.matrix());
  // Kbar = C^{xh} B^{-1} with B = (S^{1/2} + R^{1/2}) S^{1/2}.
  const Matrix b = (s_root + r_root) * s_root;
  Eigen::PartialPivLU<Matrix> lu(b.transpose());
  if (!(std::abs(lu.determinant()) > 0.0) || !std::isfinite(lu.determinant())) {
    throw IllConditionedError("shift_square_root: singular square-root factor", condition_estimate(s));
  }
  const Matrix gain_bar = lu.solve(m.state_obs_cov().transpose()).transpose();
  const Matrix dev = e.images().colwise() - m.obs_mean();
  Matrix members = (e.members - gain_bar * dev).colwise() + gain * (y_obs - m.obs_mean());
  return detail::shifted(e, std::move(members));
}

inline Ensemble shift_square_root(const Ensemble& e, double gamma, const CovarianceMatrix& sigma_y,
                                  const Vector& y_obs) {
  return shift_square_root(e, e.moments, gamma, sigma_y, y_obs);
}

/**
 * Deterministic shift mu_x + K (y_obs - mu_h) + A (x^j - mu_x).
 *
 * With Z_x = P W^{1/2} V^T (thin SVD of the scaled state deviations, zero
 * singular values dropped) and Z_h the scaled image deviations,
 * A = P W^{1/2} Q L^{-1/2} Q^T W^{-1/2} P^T where Q L Q^T is the
 * eigendecomposition of V^T (I + Z_h^T (gamma Sigma_y)^{-1} Z_h) V.
 */
inline Ensemble shift_adjustment(const Ensemble& e, const EnsembleMoments& m, double gamma,
                                 const CovarianceMatrix& sigma_y, const Vector& y_obs) {
  detail::check_shift_inputs(e, y_obs);
  const Index n = e.size();
  if (e.dim() >= n) {
    throw PreconditionError("shift_adjustment: requires dimension < ensemble size");
  }
  const Matrix gain = kalman_gain(m, gamma, sigma_y);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n - 1));
  const Matrix zx = (e.members.colwise() - m.mean) * scale;
  const Matrix zh = (e.images().colwise() - m.obs_mean()) * scale;

  Eigen::BDCSVD<Matrix> svd(zx, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? sv[0] * 1e-12 * static_cast<double>(n) : 0.0;
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > cutoff) {
    ++rank;
  }
  Matrix adjust = Matrix::Zero(e.dim(), e.dim());
  if (rank > 0) {
    const Matrix p = svd.matrixU().leftCols(rank);
    const Matrix v = svd.matrixV().leftCols(rank);
    const Vector w_root = sv.head(rank);
    const auto f = cholesky(gamma * sigma_y.matrix());
    const Matrix b = f.llt.matrixL().solve(zh * v);
    const Matrix inner = Matrix::Identity(rank, rank) + b.transpose() * b;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (inner + inner.transpose()));
    if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0)) {
      throw IllConditionedError("shift_adjustment: eigendecomposition failed", condition_estimate(inner));
    }
    const Matrix& q = eig.eigenvectors();
    const Matrix core = q * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
    adjust = p * w_root.asDiagonal() * core * w_root.cwiseInverse().asDiagonal() * p.transpose();
  }
  const Vector new_mean = m.mean + gain * (y_obs - m.obs_mean());
  Matrix members = (adjust * (e.members.colwise() - m.mean)).colwise() + new_mean;
  return detail::shifted(e, std::move(members));
}

inline Ensemble shift_adjustment(const Ensemble& e, double gamma, const CovarianceMatrix& sigma_y,
                                 const Vector& y_obs) {
  return shift_adjustment(e, e.moments, gamma, sigma_y, y_obs);
}

/// Perturbed images and their moments, kept for the unbiased estimator.
struct ShiftOutput {
  Ensemble ensemble;
  std::optional<EnsembleMoments> perturbed;
};

/// One Kalman step with the chosen shifter; `want_perturbed` forces drawing y~^j for deterministic shifters.
inline ShiftOutput shift(const Ensemble& e, ShifterKind kind, double gamma, const CovarianceMatrix& sigma_y,
                         const Vector& y_obs, Rng& rng, bool want_perturbed = false) {
  ShiftOutput out{e, std::nullopt};
  const CovarianceMatrix noise = gamma * sigma_y;
  switch (kind) {
    case ShifterKind::stochastic: {
      Matrix tilde;
      out.ensemble = shift_stochastic(e, kalman_gain(e.moments, gamma, sigma_y), noise, y_obs, rng, &tilde);
      out.perturbed = ensemble_moments(tilde);
      return out;
    }
    case ShifterKind::square_root:
      out.ensemble = shift_square_root(e, gamma, sigma_y, y_obs);
      break;
    case ShifterKind::adjustment:
      out.ensemble = shift_adjustment(e, gamma, sigma_y, y_obs);
      break;
  }
  if (want_perturbed) {
    out.perturbed = ensemble_moments(detail::perturb_images(e.images(), noise, rng));
  }
  return out;
}

/// Record of one IEnKI-ABC run: everything the normalising-constant estimators need.
struct IenkiTrace {
  /// Pre-shift moments at t = 0 .. n-1, plus the final ensemble when the last shift ran.
  std::vector<EnsembleMoments> moments;
  /// U_t = mean_j log N(y_obs | h^j_t, Sigma_y), aligned with `moments`.
  std::vector<double> U;
  /// gamma_1 .. gamma_n actually used; a skip contributes one collapsed value.
  std::vector<double> gamma;
  /// eps_0 = inf, eps_1 .. eps_n.
  std::vector<double> epsilon;
  /// Moments of the perturbed images y~^j at each step (empty entries when not drawn).
  std::vector<std::optional<EnsembleMoments>> perturbed;
  std::optional<int> skip_at;

  Vector y_obs;
  CovarianceMatrix sigma_y;
  ShifterKind shifter = ShifterKind::stochastic;
  Index ensemble_size = 0;
  int divergent_sims = 0;
  std::optional<double> kappa;

  int steps() const noexcept { return static_cast<int>(gamma.size()); }
  double target_epsilon() const { return epsilon.back(); }
  double alpha(std::size_t t) const {
    if (t == 0) {
      return 0.0;
    }
    const double r = target_epsilon() / epsilon.at(t);
    return r * r;
  }
  /// True when moments and U were also recorded after the last shift.
  bool complete() const noexcept { return moments.size() == gamma.size() + 1; }
};

struct IenkiSettings {
  /// Run the shift into the terminal target; not needed for the direct estimator.
  bool final_shift = true;
  /// Draw perturbed images for deterministic shifters too (unbiased estimator input).
  bool perturbed_moments = false;
};

/// Chooses eps_t given the current ensemble, eps_{t-1} and t; must reach the target eventually.
using ToleranceRule = std::function<double(const Ensemble&, double eps_prev, int t)>;

namespace detail {

inline double mean_log_likelihood(const GaussianDensity& lik, const Matrix& images) {
  double acc = 0.0;
  for (Index j = 0; j < images.cols(); ++j) {
    acc += lik.logpdf(images.col(j));
  }
  return acc / static_cast<double>(images.cols());
}

inline IenkiTrace ienki_loop(const Matrix& sims, int divergent, const Vector& s_obs, const DiagScale& scale,
                             double epsilon, const ToleranceRule& next_tolerance, int max_steps,
                             ShifterKind shifter, const std::optional<SkipPolicy>& skip, Rng& rng,
                             const IenkiSettings& settings) {
  if (sims.cols() < 2) {
    throw PreconditionError("ienki_abc_run: M must be at least 2");
  }
  if (s_obs.size() != sims.rows() || scale.size() != sims.rows()) {
    throw DimensionError("ienki_abc_run: summary dimension mismatch");
  }
  if (shifter == ShifterKind::adjustment && sims.rows() >= sims.cols()) {
    throw PreconditionError("ienki_abc_run: the adjustment shifter requires d_s < M");
  }
  IenkiTrace trace;
  trace.y_obs = s_obs;
  trace.sigma_y = (epsilon * epsilon) * scale.covariance();
  trace.shifter = shifter;
  trace.ensemble_size = sims.cols();
  trace.divergent_sims = divergent;
  trace.epsilon.push_back(kInfinity);

  const GaussianDensity lik(s_obs, trace.sigma_y);
  Ensemble e = Ensemble::from_members(sims);
  double eps_prev = kInfinity;
  for (int t = 1;; ++t) {
    try {
      double eps_next = t >= max_steps ? epsilon : next_tolerance(e, eps_prev, t);
      if (!(eps_next < eps_prev) || eps_next < epsilon) {
        throw PreconditionError("tolerance sequence must decrease towards the target");
      }
      trace.moments.push_back(e.moments);
      trace.U.push_back(mean_log_likelihood(lik, e.members));
      if (skip && !trace.skip_at && eps_next > epsilon && skip_decision(e, *skip)) {
        eps_next = epsilon;
        trace.skip_at = t;
      }
      const double gamma = gamma_from_tolerances(epsilon, eps_prev, eps_next);
      trace.gamma.push_back(gamma);
      trace.epsilon.push_back(eps_next);
      const bool last = eps_next == epsilon;
      if (last && !settings.final_shift) {
        trace.perturbed.emplace_back();
        break;
      }
      auto out = shift(e, shifter, gamma, trace.sigma_y, s_obs, rng, settings.perturbed_moments);
      trace.perturbed.push_back(std::move(out.perturbed));
      e = std::move(out.ensemble);
      if (last) {
        trace.moments.push_back(e.moments);
        trace.U.push_back(mean_log_likelihood(lik, e.members));
        break;
      }
      eps_prev = eps_next;
    } catch (const IterationError&) {
      throw;
    } catch (const Error& err) {
      throw IterationError(err.what(), t);
    }
  }
  return trace;
}

}  // namespace detail

/// IEnKI-ABC over a fixed schedule. Images are the members (no observation operator).
inline IenkiTrace ienki_abc_run(const SimulatorModel& model, const ParamVec& theta, const Vector& s_obs,
                                const TemperingSchedule& schedule, ShifterKind shifter, Index ensemble_size,
                                const std::optional<SkipPolicy>& skip, Rng& rng, const IenkiSettings& settings = {}) {
  schedule.validate();
  const auto batch = simulate_batch(model, theta, ensemble_size, rng);
  const auto rule = [&schedule](const Ensemble&, double, int t) {
    return schedule.epsilon.at(static_cast<std::size_t>(t));
  };
  return detail::ienki_loop(batch.summaries, batch.divergent, s_obs, model.scale(), schedule.target(), rule,
                            schedule.steps(), shifter, skip, rng, settings);
}

/// IEnKI-ABC with the closed-form schedule, kappa estimated from the initial simulations.
inline IenkiTrace ienki_abc_run_closed_form(const SimulatorModel& model, const ParamVec& theta,
                                            const Vector& s_obs, double epsilon, int steps, ShifterKind shifter,
                                            Index ensemble_size, const std::optional<SkipPolicy>& skip, Rng& rng,
                                            const IenkiSettings& settings = {}) {
  const auto batch = simulate_batch(model, theta, ensemble_size, rng);
  const double kappa = estimate_kappa(batch.summaries, model.scale());
  const auto schedule = build_schedule(epsilon, kappa, steps);
  const auto rule = [&schedule](const Ensemble&, double, int t) {
    return schedule.epsilon.at(static_cast<std::size_t>(t));
  };
  auto trace = detail::ienki_loop(batch.summaries, batch.divergent, s_obs, model.scale(), epsilon, rule,
                                  schedule.steps(), shifter, skip, rng, settings);
  trace.kappa = kappa;
  return trace;
}

/// IEnKI-ABC with tolerances chosen by ESS bisection at each step (at most max_steps steps).
inline IenkiTrace ienki_abc_run_adaptive(const SimulatorModel& model, const ParamVec& theta, const Vector& s_obs,
                                         double epsilon, double beta, int max_steps, ShifterKind shifter,
                                         Index ensemble_size, const std::optional<SkipPolicy>& skip, Rng& rng,
                                         const IenkiSettings& settings = {}) {
  if (max_steps < 1) {
    throw PreconditionError("ienki_abc_run_adaptive: max_steps must be at least 1");
  }
  const auto batch = simulate_batch(model, theta, ensemble_size, rng);
  const DiagScale& scale = model.scale();
  const auto rule = [&](const Ensemble& e, double eps_prev, int) {
    return adaptive_next_epsilon(e, s_obs, eps_prev, epsilon, beta, scale);
  };
  return detail::ienki_loop(batch.summaries, batch.divergent, s_obs, scale, epsilon, rule, max_steps, shifter, skip,
                            rng, settings);
}

/// CSV with columns iteration, epsilon, alpha, gamma, mean_i, var_i, U_t, skipped.
inline void write_trace_csv(std::ostream& os, const IenkiTrace& trace) {
  if (trace.moments.empty()) {
    throw PreconditionError("write_trace_csv: empty trace");
  }
  const Index d = trace.moments.front().mean.size();
  os << "iteration,epsilon,alpha,gamma";
  for (Index i = 1; i <= d; ++i) {
    os << ",mean_" << i;
  }
  for (Index i = 1; i <= d; ++i) {
    os << ",var_" << i;
  }
  os << ",U_t,skipped\n";
  for (std::size_t t = 0; t < trace.moments.size(); ++t) {
    const auto& m = trace.moments[t];
    os << t << ',' << format_double(trace.epsilon.at(t)) << ',' << format_double(trace.alpha(t)) << ',';
    if (t > 0) {
      os << format_double(trace.gamma.at(t - 1));
    }
    for (Index i = 0; i < d; ++i) {
      os << ',' << format_double(m.mean[i]);
    }
    for (Index i = 0; i < d; ++i) {
      os << ',' << format_double(m.cov(i, i));
    }
    const bool skipped = trace.skip_at && static_cast<std::size_t>(*trace.skip_at) == t;
    os << ',' << format_double(trace.U[t]) << ',' << (skipped ? 1 : 0) << '\n';
  }
}

}  // namespace enkiabc

#endif
