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

#ifndef ENKIABC_FILTERS_HPP
#define ENKIABC_FILTERS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "enkiabc/estimate.hpp"
#include "enkiabc/gaussian.hpp"
#include "enkiabc/ienki.hpp"
#include "enkiabc/simulators.hpp"

/**
 * \file
 * \brief Filtering likelihood estimators for state-space models with
 * linear-Gaussian observations y_k = H x_k + N(0, R), k = 0 .. K-1.
 */

namespace enkiabc {

class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;
  virtual Index state_dim() const = 0;
  /// Draws x_0.
  virtual Vector initial_state(Rng& rng) const = 0;
  /// Draws x_k given x_{k-1} (k >= 1); sets `divergent` when a simulation cap was hit.
  virtual Vector propagate(const Vector& x, std::size_t k, Rng& rng, bool& divergent) const = 0;
  virtual const Matrix& observation_matrix() const = 0;
  virtual const CovarianceMatrix& observation_noise() const = 0;
};

namespace detail {

inline void check_observations(const StateSpaceModel& model, const std::vector<Vector>& ys, Index sample_size) {
  if (sample_size < 2) {
    throw PreconditionError("filter: M must be at least 2");
  }
  if (ys.empty()) {
    throw PreconditionError("filter: no observations");
  }
  const Index d_y = model.observation_matrix().rows();
  if (model.observation_matrix().cols() != model.state_dim() || model.observation_noise().dim() != d_y) {
    throw DimensionError("filter: observation operator and noise disagree with the state");
  }
  for (const auto& y : ys) {
    if (y.size() != d_y) {
      throw DimensionError("filter: observation of the wrong length");
    }
  }
}

/// Multinomial resampling: M indices drawn with probabilities proportional to exp(log_w).
inline std::vector<Index> multinomial_resample(const std::vector<double>& log_w, double max_log_w, Rng& rng) {
  std::vector<double> cum(log_w.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < log_w.size(); ++j) {
    acc += std::exp(log_w[j] - max_log_w);
    cum[j] = acc;
  }
  std::vector<Index> idx(log_w.size());
  for (auto& i : idx) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    i = std::min<Index>(static_cast<Index>(it - cum.begin()), static_cast<Index>(cum.size()) - 1);
  }
  return idx;
}

}  // namespace detail

/**
 * Bootstrap particle filter log-likelihood: propagate, weight by the
 * observation density, multinomial resampling at every step.
 *
 * The estimate is degenerate when every weight at some step is zero in double
 * precision on the natural scale.
 */
inline LogLikelihoodEstimate bootstrap_pf_loglik(const StateSpaceModel& model, const std::vector<Vector>& ys,
                                                 Index sample_size, Rng& rng) {
  detail::check_observations(model, ys, sample_size);
  LogLikelihoodEstimate out;
  out.method = "PF";
  out.T_used = static_cast<int>(ys.size());
  const auto m = static_cast<std::size_t>(sample_size);
  const Matrix& h = model.observation_matrix();
  std::vector<Vector> particles(m);
  for (auto& x : particles) {
    x = model.initial_state(rng);
  }
  std::vector<double> log_w(m);
  double total = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (k > 0) {
      for (auto& x : particles) {
        bool divergent = false;
        x = model.propagate(x, k, rng, divergent);
        out.divergent_sims += divergent ? 1 : 0;
      }
    }
    const GaussianDensity obs(ys[k], model.observation_noise());
    double hi = kLogZero;
    for (std::size_t j = 0; j < m; ++j) {
      log_w[j] = obs.logpdf(h * particles[j]);
      hi = std::max(hi, log_w[j]);
    }
    if (!(std::exp(hi) > 0.0)) {
      out.degenerate = true;
      out.log_value = kLogZero;
      return out;
    }
    total += log_mean_exp(log_w);
    if (k + 1 < ys.size()) {
      const auto idx = detail::multinomial_resample(log_w, hi, rng);
      std::vector<Vector> next(m);
      for (std::size_t j = 0; j < m; ++j) {
        next[j] = particles[static_cast<std::size_t>(idx[j])];
      }
      particles = std::move(next);
    }
  }
  out.log_value = total;
  return finalize(out);
}

struct EnkfOptions {
  /// Ghurye-Olkin increments from perturbed predictive images instead of the plug-in Gaussian.
  bool unbiased_increments = false;
};

/**
 * Ensemble Kalman filter log-likelihood with increments
 * log N(y_k | mu^h, C^{hh} + R) from the predictive ensemble, each update by
 * the selected shifter with gamma = 1.
 */
inline LogLikelihoodEstimate enkf_loglik(const StateSpaceModel& model, const std::vector<Vector>& ys,
                                         Index sample_size, ShifterKind shifter, Rng& rng,
                                         const EnkfOptions& options = {}) {
  detail::check_observations(model, ys, sample_size);
  if (shifter == ShifterKind::adjustment && model.state_dim() >= sample_size) {
    throw PreconditionError("enkf_loglik: the adjustment shifter requires state dimension < M");
  }
  if (options.unbiased_increments && sample_size <= model.observation_matrix().rows() + 3) {
    throw PreconditionError("enkf_loglik: unbiased increments require M > d_y + 3");
  }
  LogLikelihoodEstimate out;
  out.method = std::string(1, shifter_prefix(shifter)) + "EnKF";
  out.T_used = static_cast<int>(ys.size());
  const Matrix& h = model.observation_matrix();
  const CovarianceMatrix& r = model.observation_noise();
  Matrix members(model.state_dim(), sample_size);
  for (Index j = 0; j < sample_size; ++j) {
    members.col(j) = model.initial_state(rng);
  }
  double total = 0.0;
  try {
    for (std::size_t k = 0; k < ys.size(); ++k) {
      if (k > 0) {
        for (Index j = 0; j < sample_size; ++j) {
          bool divergent = false;
          members.col(j) = model.propagate(members.col(j), k, rng, divergent);
          out.divergent_sims += divergent ? 1 : 0;
        }
      }
      Ensemble e = Ensemble::from_members(members, h, static_cast<int>(k));
      auto step = shift(e, shifter, 1.0, r, ys[k], rng, options.unbiased_increments);
      double inc = 0.0;
      if (options.unbiased_increments) {
        inc = ghurye_olkin_logdensity(ys[k], step.perturbed->mean, step.perturbed->cov, sample_size);
      } else {
        inc = mvn_logpdf(ys[k], e.moments.obs_mean(), e.moments.obs_cov() + r);
      }
      if (is_log_zero(inc)) {
        out.degenerate = true;
        out.log_value = kLogZero;
        return out;
      }
      total += inc;
      members = std::move(step.ensemble.members);
    }
  } catch (const IllConditionedError&) {
    out.degenerate = true;
    out.log_value = kLogZero;
    return out;
  }
  out.log_value = total;
  return finalize(out);
}

// ---------------------------------------------------------------------------
// Linear-Gaussian model and its exact Kalman filter

/// x_0 ~ N(m0, P0), x_k = F x_{k-1} + N(0, Q), y_k = H x_k + N(0, R).
class LinearGaussianModel final : public StateSpaceModel {
 public:
  LinearGaussianModel(Vector m0, CovarianceMatrix p0, Matrix f, CovarianceMatrix q, Matrix h, CovarianceMatrix r)
      : m0_(std::move(m0)), p0_(std::move(p0)), f_(std::move(f)), q_(std::move(q)), h_(std::move(h)),
        r_(std::move(r)) {
    const Index d = m0_.size();
    if (p0_.dim() != d || f_.rows() != d || f_.cols() != d || q_.dim() != d || h_.cols() != d ||
        r_.dim() != h_.rows()) {
      throw DimensionError("LinearGaussianModel: inconsistent dimensions");
    }
  }

  /// Scalar model x_k = a x_{k-1} + N(0, q), y_k = x_k + N(0, r), x_0 ~ N(m0, p0).
  static LinearGaussianModel scalar(double m0, double p0, double a, double q, double r) {
    return LinearGaussianModel(Vector::Constant(1, m0), CovarianceMatrix::scalar(1, p0), Matrix::Constant(1, 1, a),
                               CovarianceMatrix::scalar(1, q), Matrix::Identity(1, 1), CovarianceMatrix::scalar(1, r));
  }

  Index state_dim() const override { return m0_.size(); }
  Vector initial_state(Rng& rng) const override { return sample_mvn(m0_, p0_, rng); }
  Vector propagate(const Vector& x, std::size_t, Rng& rng, bool& divergent) const override {
    divergent = false;
    return sample_mvn(f_ * x, q_, rng);
  }
  const Matrix& observation_matrix() const override { return h_; }
  const CovarianceMatrix& observation_noise() const override { return r_; }

  /// Draws (x_k, y_k) for k = 0 .. count-1; returns the observations.
  std::vector<Vector> simulate_observations(std::size_t count, Rng& rng) const {
    std::vector<Vector> ys;
    Vector x = initial_state(rng);
    for (std::size_t k = 0; k < count; ++k) {
      if (k > 0) {
        bool divergent = false;
        x = propagate(x, k, rng, divergent);
      }
      ys.push_back(sample_mvn(h_ * x, r_, rng));
    }
    return ys;
  }

  const Vector& m0() const noexcept { return m0_; }
  const CovarianceMatrix& p0() const noexcept { return p0_; }
  const Matrix& transition() const noexcept { return f_; }
  const CovarianceMatrix& process_noise() const noexcept { return q_; }

 private:
  Vector m0_;
  CovarianceMatrix p0_;
  Matrix f_;
  CovarianceMatrix q_;
  Matrix h_;
  CovarianceMatrix r_;
};

/// Exact log p(y_0, ..., y_{K-1}) by the Kalman filter.
inline double kalman_filter_loglik(const LinearGaussianModel& model, const std::vector<Vector>& ys) {
  Vector m = model.m0();
  Matrix p = model.p0().matrix();
  const Matrix& h = model.observation_matrix();
  double total = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (k > 0) {
      m = model.transition() * m;
      p = model.transition() * p * model.transition().transpose() + model.process_noise().matrix();
    }
    const CovarianceMatrix s(h * p * h.transpose() + model.observation_noise().matrix());
    total += mvn_logpdf(ys[k], h * m, s);
    const auto f = cholesky(s);
    const Matrix gain = f.llt.solve(h * p).transpose();
    m += gain * (ys[k] - h * m);
    p = (Matrix::Identity(p.rows(), p.cols()) - gain * h) * p;
    p = 0.5 * (p + p.transpose()).eval();
  }
  return total;
}

// ---------------------------------------------------------------------------
// Lotka-Volterra as a state-space model

/// Latent (predators, prey) counts observed with N(0, eps^2 I_2) noise.
///
/// Between observation times the state evolves by exact Gillespie simulation.
/// A real-valued input state (an EnKF member) is rounded to the nearest
/// nonnegative integers first.
class LVStateSpaceModel final : public StateSpaceModel {
 public:
  LVStateSpaceModel(const ParamVec& theta, double epsilon, LVState x0 = kLVInitialState,
                    std::vector<double> obs_times = lv_observation_times(), LVLimits limits = {})
      : params_(LVParams::from(theta)), x0_(x0), times_(std::move(obs_times)), limits_(limits),
        h_(Matrix::Identity(2, 2)), r_(CovarianceMatrix::scalar(2, epsilon * epsilon)) {
    if (!(epsilon > 0.0)) {
      throw PreconditionError("LVStateSpaceModel: epsilon must be positive");
    }
  }

  Index state_dim() const override { return 2; }
  Vector initial_state(Rng&) const override { return to_vector(x0_); }
  Vector propagate(const Vector& x, std::size_t k, Rng& rng, bool& divergent) const override {
    if (k == 0 || k >= times_.size()) {
      throw PreconditionError("LVStateSpaceModel: step index out of range");
    }
    LVState s{round_count(x[0]), round_count(x[1])};
    std::uint64_t events = 0;
    divergent = lv_advance(s, times_[k] - times_[k - 1], params_, rng, events, limits_);
    return to_vector(s);
  }
  const Matrix& observation_matrix() const override { return h_; }
  const CovarianceMatrix& observation_noise() const override { return r_; }

  static std::int64_t round_count(double v) {
    if (!std::isfinite(v)) {
      return 0;
    }
    return static_cast<std::int64_t>(std::llround(std::clamp(v, 0.0, 1e15)));
  }
  static Vector to_vector(const LVState& s) {
    return (Vector(2) << static_cast<double>(s.predators), static_cast<double>(s.prey)).finished();
  }

 private:
  LVParams params_;
  LVState x0_;
  std::vector<double> times_;
  LVLimits limits_;
  Matrix h_;
  CovarianceMatrix r_;
};

/// The (predators, prey) pair at each observation time.
inline std::vector<Vector> lv_observations(const LVPath& path) {
  std::vector<Vector> ys;
  ys.reserve(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    ys.push_back((Vector(2) << static_cast<double>(path.predators[k]), static_cast<double>(path.prey[k])).finished());
  }
  return ys;
}

inline LogLikelihoodEstimate bootstrap_pf_loglik(const ParamVec& theta, const LVPath& observed, double epsilon,
                                                 Index sample_size, Rng& rng) {
  const LVStateSpaceModel model(theta, epsilon, kLVInitialState, observed.times);
  return bootstrap_pf_loglik(model, lv_observations(observed), sample_size, rng);
}

inline LogLikelihoodEstimate enkf_loglik(const ParamVec& theta, const LVPath& observed, double epsilon,
                                         Index sample_size, ShifterKind shifter, Rng& rng) {
  const LVStateSpaceModel model(theta, epsilon, kLVInitialState, observed.times);
  return enkf_loglik(model, lv_observations(observed), sample_size, shifter, rng);
}

}  // namespace enkiabc

#endif
