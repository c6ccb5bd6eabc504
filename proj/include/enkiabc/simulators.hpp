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

#ifndef ENKIABC_SIMULATORS_HPP
#define ENKIABC_SIMULATORS_HPP

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "enkiabc/gaussian.hpp"
#include "enkiabc/rng.hpp"

namespace enkiabc {

using ParamVec = Vector;

/// Per-coordinate summary scales sigma_i (the diagonal of Sigma_s), all strictly positive.
class DiagScale {
 public:
  DiagScale() = default;
  explicit DiagScale(Vector sigma) : sigma_(std::move(sigma)) {
    if (sigma_.size() == 0 || !(sigma_.array() > 0.0).all() || !sigma_.allFinite()) {
      throw PreconditionError("DiagScale: scales must be finite and strictly positive");
    }
  }
  static DiagScale ones(Index d) { return DiagScale(Vector::Ones(d)); }

  const Vector& sigma() const noexcept { return sigma_; }
  Index size() const noexcept { return sigma_.size(); }
  /// Sigma_s = diag(sigma_i^2).
  CovarianceMatrix covariance() const { return CovarianceMatrix::diagonal(sigma_.array().square().matrix()); }

 private:
  Vector sigma_;
};

/// One simulated summary vector; `divergent` marks simulations truncated by a safety cap.
struct SummaryDraw {
  Vector values;
  bool divergent = false;
};

/// Forward model: draw summaries s given parameters theta.
class SimulatorModel {
 public:
  virtual ~SimulatorModel() = default;
  virtual SummaryDraw simulate(const ParamVec& theta, Rng& rng) const = 0;
  virtual Index summary_dim() const = 0;
  virtual const DiagScale& scale() const = 0;
};

/// M independent simulations as the columns of a d_s x M matrix.
struct SimulationBatch {
  Matrix summaries;
  int divergent = 0;
};

inline SimulationBatch simulate_batch(const SimulatorModel& model, const ParamVec& theta, Index count, Rng& rng) {
  SimulationBatch out;
  out.summaries.resize(model.summary_dim(), count);
  for (Index j = 0; j < count; ++j) {
    auto draw = model.simulate(theta, rng);
    if (draw.values.size() != model.summary_dim()) {
      throw DimensionError("simulator returned a summary of the wrong length");
    }
    out.summaries.col(j) = draw.values;
    out.divergent += draw.divergent ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian toy model

/// s ~ N(theta, variance), one-dimensional, unit scale.
class ToyGaussianModel final : public SimulatorModel {
 public:
  explicit ToyGaussianModel(double variance = 1.0) : sd_(std::sqrt(variance)), scale_(DiagScale::ones(1)) {
    if (!(variance >= 0.0)) {
      throw PreconditionError("ToyGaussianModel: variance must be nonnegative");
    }
  }

  SummaryDraw simulate(const ParamVec& theta, Rng& rng) const override {
    if (theta.size() != 1) {
      throw DimensionError("toy model takes a one-dimensional parameter");
    }
    return {Vector::Constant(1, theta[0] + sd_ * rng.normal()), false};
  }
  Index summary_dim() const override { return 1; }
  const DiagScale& scale() const override { return scale_; }

 private:
  double sd_;
  DiagScale scale_;
};

inline SummaryDraw toy_simulate(const ParamVec& theta, Rng& rng) { return ToyGaussianModel{}.simulate(theta, rng); }

/// Exact ABC likelihood of the toy model with a Gaussian kernel: log N(s_obs | theta, 1 + eps^2).
inline double toy_exact_abc_likelihood(const ParamVec& theta, double s_obs, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw PreconditionError("toy_exact_abc_likelihood: epsilon must be positive");
  }
  if (theta.size() != 1) {
    throw DimensionError("toy model takes a one-dimensional parameter");
  }
  const double var = 1.0 + epsilon * epsilon;
  const double r = s_obs - theta[0];
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

// ---------------------------------------------------------------------------
// Lotka-Volterra Markov jump process

/// Predator count x1 and prey count x2.
struct LVState {
  std::int64_t predators = 0;
  std::int64_t prey = 0;
  friend bool operator==(const LVState&, const LVState&) = default;
};

/// Reaction rates: prey birth theta1 x2, predation theta2 x1 x2, predator death theta3 x1.
struct LVParams {
  double birth = 0.0;
  double predation = 0.0;
  double death = 0.0;

  static LVParams from(const ParamVec& theta) {
    if (theta.size() != 3) {
      throw DimensionError("Lotka-Volterra takes three rate parameters");
    }
    if (!(theta.array() > 0.0).all() || !theta.allFinite()) {
      throw PreconditionError("Lotka-Volterra rates must be strictly positive");
    }
    return {theta[0], theta[1], theta[2]};
  }
};

inline constexpr std::array<LVState, 3> kLVIncrements{{{0, 1}, {1, -1}, {-1, 0}}};

/// Hazards of the three reactions at state x.
inline std::array<double, 3> lv_rates(const LVState& x, const LVParams& p) {
  const auto x1 = static_cast<double>(x.predators);
  const auto x2 = static_cast<double>(x.prey);
  return {p.birth * x2, p.predation * x1 * x2, p.death * x1};
}

struct LVLimits {
  std::uint64_t max_events = 1'000'000;
  std::int64_t max_population = 1'000'000;
};

/// A Gillespie event: waiting time and index of the reaction that fired.
struct LVEvent {
  double wait = 0.0;
  int reaction = -1;
};

/// Draws the next event at a frozen state; reaction is -1 when every hazard is zero.
inline LVEvent lv_next_event(const LVState& x, const LVParams& p, Rng& rng) {
  const auto h = lv_rates(x, p);
  const double total = h[0] + h[1] + h[2];
  if (!(total > 0.0)) {
    return {std::numeric_limits<double>::infinity(), -1};
  }
  LVEvent ev;
  ev.wait = rng.exponential(total);
  const double u = rng.uniform() * total;
  ev.reaction = u < h[0] ? 0 : (u < h[0] + h[1] ? 1 : 2);
  return ev;
}

/// Evolves x exactly for `duration` time units. `events` accumulates across calls so the cap
/// applies per path. Returns true when a cap was hit (x then holds the capped state).
inline bool lv_advance(LVState& x, double duration, const LVParams& p, Rng& rng, std::uint64_t& events,
                       const LVLimits& limits = {}) {
  double t = 0.0;
  for (;;) {
    const auto ev = lv_next_event(x, p, rng);
    if (ev.reaction < 0) {
      return false;
    }
    t += ev.wait;
    if (t > duration) {
      return false;
    }
    x.predators += kLVIncrements[static_cast<std::size_t>(ev.reaction)].predators;
    x.prey += kLVIncrements[static_cast<std::size_t>(ev.reaction)].prey;
    if (++events >= limits.max_events || x.predators > limits.max_population || x.prey > limits.max_population) {
      return true;
    }
  }
}

/// Observed trajectory on a fixed time grid.
struct LVPath {
  std::vector<double> times;
  std::vector<std::int64_t> predators;
  std::vector<std::int64_t> prey;
  bool divergent = false;

  std::size_t size() const noexcept { return times.size(); }
  LVState at(std::size_t k) const { return {predators[k], prey[k]}; }
};

inline constexpr LVState kLVInitialState{50, 100};
inline constexpr std::size_t kLVObservationCount = 16;

/// t = 0, 2, 4, ..., 30.
inline std::vector<double> lv_observation_times() {
  std::vector<double> t(kLVObservationCount);
  for (std::size_t k = 0; k < t.size(); ++k) {
    t[k] = 2.0 * static_cast<double>(k);
  }
  return t;
}

inline ParamVec lv_reference_theta() { return (ParamVec(3) << 1.0, 0.005, 0.6).finished(); }

/// Exact stochastic simulation recorded at `obs_times` (the first time is the start).
/// On a cap breach the path is held at the capped state and flagged divergent.
inline LVPath gillespie_lv(const ParamVec& theta, LVState x0, const std::vector<double>& obs_times, Rng& rng,
                           const LVLimits& limits = {}) {
  const auto p = LVParams::from(theta);
  if (x0.predators < 0 || x0.prey < 0) {
    throw PreconditionError("gillespie_lv: initial counts must be nonnegative");
  }
  if (obs_times.empty()) {
    throw PreconditionError("gillespie_lv: empty observation grid");
  }
  LVPath path;
  path.times = obs_times;
  path.predators.reserve(obs_times.size());
  path.prey.reserve(obs_times.size());
  std::uint64_t events = 0;
  LVState x = x0;
  for (std::size_t k = 0; k < obs_times.size(); ++k) {
    if (k > 0) {
      const double dt = obs_times[k] - obs_times[k - 1];
      if (!(dt > 0.0)) {
        throw PreconditionError("gillespie_lv: observation times must increase");
      }
      if (!path.divergent) {
        path.divergent = lv_advance(x, dt, p, rng, events, limits);
      }
    }
    path.predators.push_back(x.predators);
    path.prey.push_back(x.prey);
  }
  return path;
}

/// Time-major interleaving: (x_{0,1}, x_{0,2}, x_{1,1}, x_{1,2}, ...).
inline SummaryDraw lv_summary(const LVPath& path) {
  if (path.size() != kLVObservationCount || path.predators.size() != path.size() || path.prey.size() != path.size()) {
    throw PreconditionError("lv_summary: path must cover the full 16-point grid");
  }
  SummaryDraw out;
  out.values.resize(static_cast<Index>(2 * path.size()));
  for (std::size_t k = 0; k < path.size(); ++k) {
    out.values[static_cast<Index>(2 * k)] = static_cast<double>(path.predators[k]);
    out.values[static_cast<Index>(2 * k + 1)] = static_cast<double>(path.prey[k]);
  }
  out.divergent = path.divergent;
  return out;
}

/// Adds independent N(0, eps^2) noise to every coordinate.
inline Vector gaussian_noise_observe(const Vector& x, double epsilon, Rng& rng) {
  if (!(epsilon > 0.0)) {
    throw PreconditionError("gaussian_noise_observe: epsilon must be positive");
  }
  Vector y = x;
  for (Index i = 0; i < y.size(); ++i) {
    y[i] += epsilon * rng.normal();
  }
  return y;
}

/// Lotka-Volterra summaries as a SimulatorModel; optional Gaussian measurement noise
/// (the synthetic-likelihood observation model).
class LotkaVolterraModel final : public SimulatorModel {
 public:
  explicit LotkaVolterraModel(double noise_sd = 0.0, LVState x0 = kLVInitialState,
                              std::vector<double> obs_times = lv_observation_times())
      : noise_sd_(noise_sd), x0_(x0), times_(std::move(obs_times)),
        scale_(DiagScale::ones(static_cast<Index>(2 * times_.size()))) {}

  SummaryDraw simulate(const ParamVec& theta, Rng& rng) const override {
    auto draw = lv_summary(gillespie_lv(theta, x0_, times_, rng));
    if (noise_sd_ > 0.0) {
      draw.values = gaussian_noise_observe(draw.values, noise_sd_, rng);
    }
    return draw;
  }
  Index summary_dim() const override { return static_cast<Index>(2 * times_.size()); }
  const DiagScale& scale() const override { return scale_; }

  LVState initial_state() const noexcept { return x0_; }
  const std::vector<double>& observation_times() const noexcept { return times_; }

 private:
  double noise_sd_;
  LVState x0_;
  std::vector<double> times_;
  DiagScale scale_;
};

inline constexpr std::uint64_t kObservedDataSeed = 20179;

/// Reference observation: theta* = (1, 0.005, 0.6), x0 = (50, 100), pinned seed.
inline std::pair<LVPath, Vector> make_observed_lv_data(std::uint64_t seed = kObservedDataSeed) {
  Rng rng = Rng::stream(seed, {0x4c56});
  auto path = gillespie_lv(lv_reference_theta(), kLVInitialState, lv_observation_times(), rng);
  auto summary = lv_summary(path).values;
  return {std::move(path), std::move(summary)};
}

/// CSV with header "time,predators,prey".
inline void write_lv_csv(std::ostream& os, const LVPath& path) {
  os << "time,predators,prey\n";
  std::ostringstream line;
  line.precision(17);
  for (std::size_t k = 0; k < path.size(); ++k) {
    line.str("");
    line << path.times[k] << ',' << path.predators[k] << ',' << path.prey[k] << '\n';
    os << line.str();
  }
}

inline LVPath read_lv_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) {
    throw Error("read_lv_csv: empty input");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  if (line != "time,predators,prey") {
    throw Error("read_lv_csv: expected header 'time,predators,prey', got '" + line + "'");
  }
  LVPath path;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") {
      continue;
    }
    std::istringstream fields(line);
    std::string t;
    std::string a;
    std::string b;
    if (!std::getline(fields, t, ',') || !std::getline(fields, a, ',') || !std::getline(fields, b)) {
      throw Error("read_lv_csv: row " + std::to_string(row) + " needs three columns");
    }
    try {
      path.times.push_back(std::stod(t));
      path.predators.push_back(std::stoll(a));
      path.prey.push_back(std::stoll(b));
    } catch (const std::exception&) {
      throw Error("read_lv_csv: row " + std::to_string(row) + " is not numeric");
    }
  }
  return path;
}

}  // namespace enkiabc

#endif
