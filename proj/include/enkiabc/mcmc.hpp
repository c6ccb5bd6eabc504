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

#ifndef ENKIABC_MCMC_HPP
#define ENKIABC_MCMC_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "enkiabc/csv.hpp"
#include "enkiabc/estimate.hpp"
#include "enkiabc/gaussian.hpp"
#include "enkiabc/simulators.hpp"

namespace enkiabc {

/// Independent per-component prior with box support.
///
/// `log_uniform` is uniform in log theta on [lower, upper] and the random walk
/// then runs on log theta; `uniform` is flat in theta with a walk on theta.
struct PriorSpec {
  enum class Kind { log_uniform, uniform };

  Kind kind = Kind::log_uniform;
  Vector lower;
  Vector upper;

  static PriorSpec log_uniform(Index dim, double lo, double hi) {
    return make(Kind::log_uniform, Vector::Constant(dim, lo), Vector::Constant(dim, hi));
  }
  static PriorSpec flat(Vector lo, Vector hi) { return make(Kind::uniform, std::move(lo), std::move(hi)); }

  /// The Lotka-Volterra default: log-uniform on [e^-6, e^2] per rate.
  static PriorSpec lotka_volterra() { return log_uniform(3, std::exp(-6.0), std::exp(2.0)); }

  Index dim() const noexcept { return lower.size(); }
  bool log_walk() const noexcept { return kind == Kind::log_uniform; }

  bool contains(const ParamVec& theta) const {
    return theta.size() == dim() && (theta.array() >= lower.array()).all() && (theta.array() <= upper.array()).all();
  }

  /// Log density with respect to Lebesgue measure on theta; kLogZero off the support.
  double log_density(const ParamVec& theta) const {
    if (!contains(theta)) {
      return kLogZero;
    }
    if (kind == Kind::uniform) {
      return -(upper - lower).array().log().sum();
    }
    return -(theta.array().log() + (upper.array().log() - lower.array().log()).log()).sum();
  }

  /// Walk coordinates: log theta or theta.
  Vector to_walk(const ParamVec& theta) const { return log_walk() ? Vector(theta.array().log()) : theta; }
  ParamVec from_walk(const Vector& phi) const { return log_walk() ? ParamVec(phi.array().exp()) : phi; }
  /// log |d theta / d phi| at theta.
  double log_jacobian(const ParamVec& theta) const { return log_walk() ? theta.array().log().sum() : 0.0; }

 private:
  static PriorSpec make(Kind kind, Vector lo, Vector hi) {
    if (lo.size() == 0 || lo.size() != hi.size() || !lo.allFinite() || !hi.allFinite() ||
        !(lo.array() < hi.array()).all()) {
      throw PreconditionError("PriorSpec: bounds must be finite with lower < upper");
    }
    if (kind == Kind::log_uniform && !(lo.array() > 0.0).all()) {
      throw PreconditionError("PriorSpec: log-uniform bounds must be positive");
    }
    PriorSpec p;
    p.kind = kind;
    p.lower = std::move(lo);
    p.upper = std::move(hi);
    return p;
  }
};

using LikelihoodBackend = std::function<LogLikelihoodEstimate(const ParamVec&, Rng&)>;

struct ChainStep {
  ParamVec theta;
  double log_prior = 0.0;
  double log_lik = 0.0;
  bool accepted = false;
};

struct ChainRecord {
  std::vector<ChainStep> steps;
  std::map<std::string, std::string> config;

  std::size_t size() const noexcept { return steps.size(); }
  std::size_t accepted_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) {
      n += s.accepted ? 1 : 0;
    }
    return n;
  }
  double acceptance_rate() const {
    return steps.empty() ? 0.0 : static_cast<double>(accepted_count()) / static_cast<double>(steps.size());
  }
  /// n x d matrix of the sampled parameters.
  Matrix samples() const {
    if (steps.empty()) {
      return {};
    }
    Matrix x(static_cast<Index>(steps.size()), steps.front().theta.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      x.row(static_cast<Index>(i)) = steps[i].theta.transpose();
    }
    return x;
  }
};

/**
 * Pseudo-marginal random-walk Metropolis-Hastings.
 *
 * The likelihood estimate of the current state is cached and never refreshed;
 * a degenerate estimate at the proposal is a certain rejection. Proposals off
 * the prior support are rejected without calling the backend. A degenerate
 * estimate at the initial point is a zero likelihood: the chain starts there
 * and accepts the first proposal whose estimate is not degenerate. Backend
 * exceptions propagate.
 */
inline ChainRecord pm_mh_run(const ParamVec& init, const PriorSpec& prior, const CovarianceMatrix& proposal_cov,
                             const LikelihoodBackend& backend, std::size_t n_iters, Rng& rng) {
  if (n_iters < 1) {
    throw PreconditionError("pm_mh_run: n_iters must be at least 1");
  }
  if (proposal_cov.dim() != prior.dim() || init.size() != prior.dim()) {
    throw DimensionError("pm_mh_run: dimension mismatch between init, prior and proposal");
  }
  double lp = prior.log_density(init);
  if (is_log_zero(lp)) {
    throw PreconditionError("pm_mh_run: prior density is zero at the initial point");
  }
  const auto first = backend(init, rng);
  const bool moves = !proposal_cov.matrix().isZero(0.0);
  Matrix root;
  if (moves) {
    root = cholesky(proposal_cov).lower();
  }

  ChainRecord chain;
  chain.steps.reserve(n_iters);
  ParamVec theta = init;
  double ll = first.ok() ? first.log_value : -std::numeric_limits<double>::infinity();
  Vector z(init.size());
  for (std::size_t it = 0; it < n_iters; ++it) {
    Vector phi = prior.to_walk(theta);
    if (moves) {
      for (Index i = 0; i < z.size(); ++i) {
        z[i] = rng.normal();
      }
      phi += root * z;
    }
    const ParamVec cand = prior.from_walk(phi);
    bool accept = false;
    const double lp_cand = prior.log_density(cand);
    if (!is_log_zero(lp_cand)) {
      const auto est = backend(cand, rng);
      if (est.ok()) {
        const double log_ratio = (lp_cand + prior.log_jacobian(cand)) - (lp + prior.log_jacobian(theta)) +
                                 (est.log_value - ll);
        accept = std::log(rng.uniform_open()) < log_ratio;
        if (accept) {
          theta = cand;
          lp = lp_cand;
          ll = est.log_value;
        }
      }
    }
    chain.steps.push_back({theta, lp, ll, accept});
  }
  return chain;
}

struct MultiEss {
  double value = 0.0;
  /// Too few accepted moves (or too little information) for a reliable value.
  bool below_reporting = false;

  std::string label() const { return below_reporting ? std::string("<50") : format_double(value); }
  /// Orders "<50" below every reported value.
  double rank() const { return below_reporting ? -1.0 : value; }
};

/// Batch-means multivariate ESS of an n x p sample matrix, batch size floor(sqrt n).
inline MultiEss multi_ess(const Matrix& samples) {
  const Index n = samples.rows();
  const Index p = samples.cols();
  if (n < 100 || p < 1) {
    throw PreconditionError("multi_ess: need at least 100 draws of at least one component");
  }
  const auto b = static_cast<Index>(std::floor(std::sqrt(static_cast<double>(n))));
  const Index a = n / b;
  const Index used = a * b;
  const Vector mean = samples.topRows(used).colwise().mean().transpose();
  Matrix batch_cov = Matrix::Zero(p, p);
  for (Index k = 0; k < a; ++k) {
    const Vector d = samples.middleRows(k * b, b).colwise().mean().transpose() - mean;
    batch_cov += d * d.transpose();
  }
  batch_cov *= static_cast<double>(b) / static_cast<double>(a - 1);
  const Vector full_mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - full_mean.transpose();
  const Matrix lambda = centered.transpose() * centered / static_cast<double>(n - 1);

  MultiEss out;
  const double det_l = lambda.determinant();
  const double det_s = batch_cov.determinant();
  if (!(det_l > 0.0) || !(det_s > 0.0)) {
    out.below_reporting = true;
    return out;
  }
  out.value = static_cast<double>(n) * std::exp((std::log(det_l) - std::log(det_s)) / static_cast<double>(p));
  out.below_reporting = out.value < 50.0;
  return out;
}

/// multiESS of a chain; "<50" when fewer than 10 moves were accepted.
inline MultiEss multi_ess(const ChainRecord& chain) {
  if (chain.size() < 100) {
    throw PreconditionError("multi_ess: chain shorter than 100 iterations");
  }
  if (chain.accepted_count() < 10) {
    return {0.0, true};
  }
  return multi_ess(chain.samples());
}

/// Empirical covariance of a pilot chain in walk coordinates, scaled by 2.38^2 / d.
inline CovarianceMatrix pilot_proposal_covariance(const ChainRecord& pilot, const PriorSpec& prior) {
  if (pilot.size() < 2) {
    throw PreconditionError("pilot_proposal_covariance: pilot chain too short");
  }
  const Index d = prior.dim();
  Matrix phi(d, static_cast<Index>(pilot.size()));
  for (std::size_t i = 0; i < pilot.size(); ++i) {
    phi.col(static_cast<Index>(i)) = prior.to_walk(pilot.steps[i].theta);
  }
  const auto m = ensemble_moments(phi);
  return (2.38 * 2.38 / static_cast<double>(d)) * m.cov;
}

/// Chain dump: iter, theta_1..theta_d, log_prior, log_lik, accepted.
inline void write_chain_csv(std::ostream& os, const ChainRecord& chain) {
  const Index d = chain.steps.empty() ? 0 : chain.steps.front().theta.size();
  os << "iter";
  for (Index i = 1; i <= d; ++i) {
    os << ",theta_" << i;
  }
  os << ",log_prior,log_lik,accepted\n";
  for (std::size_t it = 0; it < chain.steps.size(); ++it) {
    const auto& s = chain.steps[it];
    os << it + 1;
    for (Index i = 0; i < d; ++i) {
      os << ',' << format_double(s.theta[i]);
    }
    os << ',' << format_double(s.log_prior) << ',' << format_double(s.log_lik) << ',' << (s.accepted ? 1 : 0)
       << '\n';
  }
}

/// Config echo as "key=value" lines.
inline void write_chain_sidecar(std::ostream& os, const ChainRecord& chain) {
  for (const auto& [k, v] : chain.config) {
    os << k << '=' << v << '\n';
  }
}

}  // namespace enkiabc

#endif
