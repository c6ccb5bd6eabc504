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

#ifndef ENKIABC_EXPERIMENTS_HPP
#define ENKIABC_EXPERIMENTS_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "enkiabc/abc.hpp"
#include "enkiabc/csv.hpp"
#include "enkiabc/estimators.hpp"
#include "enkiabc/filters.hpp"
#include "enkiabc/mcmc.hpp"
#include "enkiabc/simulators.hpp"

/**
 * \file
 * \brief Config-driven studies writing CSV for the plotting scripts.
 *
 * Every random draw of a study comes from a stream keyed by the config seed
 * and the cell indices, so outputs do not depend on the number of workers.
 */

namespace enkiabc {

using json = nlohmann::json;

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct McmcSettings {
  std::size_t iterations = 10'000;
  /// Per-component proposal SD on the log-theta scale.
  double proposal_sd = 0.05;
  std::vector<std::string> backends{"ABC", "SL", "PF", "EnKF", "sIEnKI-ABCskip"};
};

struct ExperimentConfig {
  std::string study;
  std::uint64_t seed = 1;
  int replicates = 1;
  std::vector<double> epsilons;
  std::vector<Index> ensemble_sizes;
  std::vector<int> steps;
  std::vector<std::string> methods;
  double skip_significance = 0.1;
  bool record_timing = false;
  McmcSettings mcmc;

  // Run-time settings; they do not change any output and are not part of the fingerprint.
  int workers = 1;
  std::string out_dir = "out";

  json to_json() const {
    json j;
    j["study"] = study;
    j["seed"] = seed;
    j["replicates"] = replicates;
    j["epsilons"] = epsilons;
    j["ensemble_sizes"] = ensemble_sizes;
    j["steps"] = steps;
    j["methods"] = methods;
    j["skip_significance"] = skip_significance;
    j["record_timing"] = record_timing;
    if (study == "lv_mcmc") {
      j["mcmc"] = {{"iterations", mcmc.iterations}, {"proposal_sd", mcmc.proposal_sd}, {"backends", mcmc.backends}};
    }
    return j;
  }

  /// 64-bit FNV-1a of the canonical JSON, as 16 hex digits.
  std::string fingerprint() const {
    const std::string text = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  void validate() const;
};

inline const std::vector<std::string>& gaussian_methods() {
  static const std::vector<std::string> m{"ABC", "SL", "sIEnKI", "rIEnKI", "aIEnKI"};
  return m;
}

inline const std::vector<std::string>& lv_sd_methods() {
  static const std::vector<std::string> m{"ABC",   "SL",         "PF",             "sEnKF",         "rEnKF",
                                          "aEnKF", "sIEnKI-ABC", "sIEnKI-ABCpath", "sIEnKI-ABCskip"};
  return m;
}

inline const std::vector<std::string>& lv_mcmc_backends() {
  static const std::vector<std::string> m{"ABC", "SL", "PF", "EnKF", "sIEnKI-ABCskip"};
  return m;
}

namespace detail {

inline std::size_t method_rank(const std::vector<std::string>& known, const std::string& m) {
  const auto it = std::find(known.begin(), known.end(), m);
  return static_cast<std::size_t>(it - known.begin());
}

inline void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) {
    throw ConfigError("config field '" + field + "': " + what);
  }
}

template <class T>
T get_field(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) {
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  using detail::require;
  require(study == "gaussian_ml" || study == "lv_sd" || study == "lv_mcmc", "study",
          "must be gaussian_ml, lv_sd or lv_mcmc");
  require(replicates >= 1, "replicates", "must be at least 1");
  require(!epsilons.empty(), "epsilons", "must be nonempty");
  for (const double e : epsilons) {
    require(e > 0.0 && std::isfinite(e), "epsilons", "values must be positive");
  }
  require(!ensemble_sizes.empty(), "ensemble_sizes", "must be nonempty");
  for (const Index m : ensemble_sizes) {
    require(m >= 2, "ensemble_sizes", "values must be at least 2");
  }
  require(!steps.empty(), "steps", "must be nonempty");
  for (const int t : steps) {
    require(t >= 1, "steps", "values must be at least 1");
  }
  require(skip_significance > 0.0 && skip_significance < 1.0, "skip_significance", "must lie in (0, 1)");
  require(workers >= 1, "workers", "must be at least 1");
  if (study == "lv_mcmc") {
    require(mcmc.iterations >= 100, "mcmc.iterations", "must be at least 100");
    require(mcmc.proposal_sd >= 0.0 && std::isfinite(mcmc.proposal_sd), "mcmc.proposal_sd", "must be nonnegative");
    require(!mcmc.backends.empty(), "mcmc.backends", "must be nonempty");
    for (const auto& b : mcmc.backends) {
      require(detail::method_rank(lv_mcmc_backends(), b) < lv_mcmc_backends().size(), "mcmc.backends",
              "unknown backend " + b);
    }
    return;
  }
  require(!methods.empty(), "methods", "must be nonempty");
  const auto& known = study == "gaussian_ml" ? gaussian_methods() : lv_sd_methods();
  for (const auto& m : methods) {
    require(detail::method_rank(known, m) < known.size(), "methods", "unknown method " + m);
  }
}

inline ExperimentConfig config_from_json(const json& j, ExperimentConfig base = {}) {
  if (!j.is_object()) {
    throw ConfigError("config: top level must be an object");
  }
  static const std::vector<std::string> allowed{"study",   "seed",           "replicates",        "epsilons",
                                                "ensemble_sizes", "steps", "methods", "skip_significance",
                                                "record_timing",  "mcmc",  "workers", "out_dir",
                                                "preset"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("config field '" + key + "': unknown key");
    }
  }
  ExperimentConfig c = std::move(base);
  c.study = detail::get_field(j, "study", c.study);
  c.seed = detail::get_field(j, "seed", c.seed);
  c.replicates = detail::get_field(j, "replicates", c.replicates);
  c.epsilons = detail::get_field(j, "epsilons", c.epsilons);
  c.ensemble_sizes = detail::get_field(j, "ensemble_sizes", c.ensemble_sizes);
  c.steps = detail::get_field(j, "steps", c.steps);
  c.methods = detail::get_field(j, "methods", c.methods);
  c.skip_significance = detail::get_field(j, "skip_significance", c.skip_significance);
  c.record_timing = detail::get_field(j, "record_timing", c.record_timing);
  c.workers = detail::get_field(j, "workers", c.workers);
  c.out_dir = detail::get_field(j, "out_dir", c.out_dir);
  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    if (!m.is_object()) {
      throw ConfigError("config field 'mcmc': must be an object");
    }
    for (const auto& [key, _] : m.items()) {
      if (key != "iterations" && key != "proposal_sd" && key != "backends") {
        throw ConfigError("config field 'mcmc." + key + "': unknown key");
      }
    }
    c.mcmc.iterations = detail::get_field(m, "iterations", c.mcmc.iterations);
    c.mcmc.proposal_sd = detail::get_field(m, "proposal_sd", c.mcmc.proposal_sd);
    c.mcmc.backends = detail::get_field(m, "backends", c.mcmc.backends);
  }
  return c;
}

/// Named presets: gaussian-paper, gaussian-desk, lv-sd-paper, lv-sd-desk, lv-mcmc-desk.
inline std::optional<ExperimentConfig> preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "gaussian-paper" || name == "gaussian-desk") {
    c.study = "gaussian_ml";
    c.seed = 2021;
    c.replicates = 100;
    c.epsilons = {0.1, 0.01, 0.001, 0.0001};
    c.ensemble_sizes = {10, 50, 100, 200};
    c.steps = {5, 10, 20, 50, 100, 200};
    c.methods = gaussian_methods();
    if (name == "gaussian-desk") {
      c.replicates = 20;
      c.ensemble_sizes = {50, 200};
      c.steps = {5, 20};
    }
    return c;
  }
  if (name == "lv-sd-paper" || name == "lv-sd-desk") {
    c.study = "lv_sd";
    c.seed = 2022;
    c.replicates = 20;
    c.epsilons = {10.0, 5.0, 2.0, 1.0, 0.5, 0.2, 0.1};
    c.ensemble_sizes = {100};
    c.steps = {100};
    c.methods = lv_sd_methods();
    if (name == "lv-sd-desk") {
      c.replicates = 5;
      c.epsilons = {10.0, 1.0, 0.1};
    }
    return c;
  }
  if (name == "lv-mcmc-desk") {
    c.study = "lv_mcmc";
    c.seed = 2023;
    c.replicates = 1;
    c.epsilons = {10.0, 0.1};
    c.ensemble_sizes = {100};
    c.steps = {100};
    c.skip_significance = 0.01;
    c.mcmc = McmcSettings{};
    return c;
  }
  return std::nullopt;
}

inline std::vector<std::string> preset_names() {
  return {"gaussian-paper", "gaussian-desk", "lv-sd-paper", "lv-sd-desk", "lv-mcmc-desk"};
}

/// Runs fn(i) for i in [0, n) on `workers` threads; the first exception is rethrown after the join.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto count = static_cast<std::size_t>(std::max(1, workers));
  if (count == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(count, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

/// One row of estimates.csv.
struct EstimateRow {
  std::string method;
  std::string shifter;
  std::string estimator;
  double epsilon = 0.0;
  Index M = 0;
  int T = 0;
  int replicate = 0;
  LogLikelihoodEstimate estimate;
  // Sort key: method rank, estimator, grid indices, replicate.
  std::tuple<std::size_t, std::string, std::size_t, std::size_t, int, int> key;
};

struct SummaryRow {
  std::string method;
  std::string shifter;
  std::string estimator;
  double epsilon = 0.0;
  Index M = 0;
  int T = 0;
  int n_ok = 0;
  int n_degenerate = 0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
};

/// Bias, SD and RMSE over non-degenerate replicates (population SD, so RMSE^2 = bias^2 + SD^2).
/// Without an exact value bias and RMSE are NaN.
inline SummaryRow summarize(const std::vector<const EstimateRow*>& rows, std::optional<double> exact) {
  SummaryRow s;
  const auto& head = *rows.front();
  s.method = head.method;
  s.shifter = head.shifter;
  s.estimator = head.estimator;
  s.epsilon = head.epsilon;
  s.M = head.M;
  s.T = head.T;
  std::vector<double> v;
  for (const auto* r : rows) {
    if (r->estimate.ok()) {
      v.push_back(r->estimate.log_value);
    } else {
      ++s.n_degenerate;
    }
  }
  s.n_ok = static_cast<int>(v.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (v.empty()) {
    s.bias = s.sd = s.rmse = nan;
    return s;
  }
  double mean = 0.0;
  for (const double x : v) {
    mean += x;
  }
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (const double x : v) {
    var += (x - mean) * (x - mean);
  }
  var /= static_cast<double>(v.size());
  s.sd = std::sqrt(var);
  if (exact) {
    s.bias = mean - *exact;
    s.rmse = std::sqrt(s.bias * s.bias + var);
  } else {
    s.bias = s.rmse = nan;
  }
  return s;
}

inline void write_estimates_csv(std::ostream& os, const std::vector<EstimateRow>& rows, const std::string& fp,
                                bool timing) {
  os << "method,shifter,estimator,epsilon,M,T,replicate,log_estimate,degenerate,wall_time_s,skip_at,"
        "divergent_sims,config_fingerprint\n";
  for (const auto& r : rows) {
    os << csv_field(r.method) << ',' << r.shifter << ',' << r.estimator << ',' << format_double(r.epsilon) << ','
       << r.M << ',' << r.T << ',' << r.replicate << ',' << format_double(r.estimate.log_value) << ','
       << (r.estimate.degenerate ? 1 : 0) << ',' << format_double(timing ? r.estimate.wall_time : 0.0) << ',';
    if (r.estimate.skip_at) {
      os << *r.estimate.skip_at;
    }
    os << ',' << r.estimate.divergent_sims << ',' << fp << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows, const std::string& fp) {
  os << "method,shifter,estimator,epsilon,M,T,n_ok,bias,sd,rmse,n_degenerate,config_fingerprint\n";
  for (const auto& s : rows) {
    os << csv_field(s.method) << ',' << s.shifter << ',' << s.estimator << ',' << format_double(s.epsilon) << ','
       << s.M << ',' << s.T << ',' << s.n_ok << ',' << format_double(s.bias) << ',' << format_double(s.sd) << ','
       << format_double(s.rmse) << ',' << s.n_degenerate << ',' << fp << '\n';
  }
}

namespace detail {

inline std::vector<SummaryRow> summarize_groups(std::vector<EstimateRow>& rows,
                                                const std::function<std::optional<double>(double)>& exact) {
  std::sort(rows.begin(), rows.end(), [](const EstimateRow& a, const EstimateRow& b) { return a.key < b.key; });
  std::vector<SummaryRow> out;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::vector<const EstimateRow*> group;
    const auto cell = std::make_tuple(std::get<0>(rows[i].key), std::get<1>(rows[i].key), std::get<2>(rows[i].key),
                                      std::get<3>(rows[i].key), std::get<4>(rows[i].key));
    while (i < rows.size() && std::make_tuple(std::get<0>(rows[i].key), std::get<1>(rows[i].key),
                                              std::get<2>(rows[i].key), std::get<3>(rows[i].key),
                                              std::get<4>(rows[i].key)) == cell) {
      group.push_back(&rows[i]);
      ++i;
    }
    out.push_back(summarize(group, exact(group.front()->epsilon)));
  }
  return out;
}

inline void open_for_write(std::ofstream& f, const std::filesystem::path& p) {
  f.open(p, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw Error("cannot open " + p.string() + " for writing");
  }
}

/// Calls fn, turning numeric failures into a degenerate estimate so a sweep never aborts.
template <class Fn>
LogLikelihoodEstimate guarded(const std::string& method, Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    return degenerate_estimate(method);
  }
}

inline constexpr std::uint64_t kGaussianStream = 0x6761;
inline constexpr std::uint64_t kLvSdStream = 0x6c73;
inline constexpr std::uint64_t kLvMcmcStream = 0x6c6d;

inline void write_outputs(const ExperimentConfig& cfg, const std::vector<EstimateRow>& rows,
                          const std::vector<SummaryRow>& summary) {
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  const auto fp = cfg.fingerprint();
  std::ofstream f;
  open_for_write(f, dir / "estimates.csv");
  write_estimates_csv(f, rows, fp, cfg.record_timing);
  f.close();
  open_for_write(f, dir / "summary.csv");
  write_summary_csv(f, summary, fp);
  f.close();
  open_for_write(f, dir / "config.json");
  f << cfg.to_json().dump(2) << '\n';
}

}  // namespace detail

struct StudyResult {
  std::vector<EstimateRow> estimates;
  std::vector<SummaryRow> summary;
};

namespace detail {

inline StudyResult finish_study(const ExperimentConfig& cfg, std::vector<std::vector<EstimateRow>>& cell_rows,
                                const std::function<std::optional<double>(double)>& exact, bool write) {
  StudyResult res;
  for (auto& v : cell_rows) {
    for (auto& r : v) {
      res.estimates.push_back(std::move(r));
    }
  }
  res.summary = summarize_groups(res.estimates, exact);
  if (write) {
    write_outputs(cfg, res.estimates, res.summary);
  }
  return res;
}

}  // namespace detail

/**
 * Gaussian toy study at theta = 0, s_obs = 0 against the exact ABC likelihood.
 *
 * Within a cell (eps, M, replicate) every method starts from the same stream,
 * so all methods and all T share their initial simulations.
 */
inline StudyResult run_gaussian_study(const ExperimentConfig& cfg, bool write = true) {
  cfg.validate();
  const ToyGaussianModel model;
  const ParamVec theta = Vector::Zero(1);
  const Vector s_obs = Vector::Zero(1);
  const auto& E = cfg.epsilons;
  const auto& Ms = cfg.ensemble_sizes;
  const std::size_t n_cells = E.size() * Ms.size() * static_cast<std::size_t>(cfg.replicates);
  std::vector<std::vector<EstimateRow>> cell_rows(n_cells);

  parallel_for(n_cells, cfg.workers, [&](std::size_t cell) {
    const auto rep = static_cast<int>(cell % static_cast<std::size_t>(cfg.replicates));
    const std::size_t mi = (cell / static_cast<std::size_t>(cfg.replicates)) % Ms.size();
    const std::size_t ei = cell / (static_cast<std::size_t>(cfg.replicates) * Ms.size());
    const double eps = E[ei];
    const Index M = Ms[mi];
    auto stream = [&] { return Rng::stream(cfg.seed, {detail::kGaussianStream, ei, mi, static_cast<std::uint64_t>(rep)}); };
    auto& out = cell_rows[cell];
    auto add = [&](const std::string& method, const std::string& shifter, const std::string& estimator, int T,
                   std::size_t ti, LogLikelihoodEstimate est) {
      EstimateRow r;
      r.method = method;
      r.shifter = shifter;
      r.estimator = estimator;
      r.epsilon = eps;
      r.M = M;
      r.T = T;
      r.replicate = rep;
      r.estimate = std::move(est);
      r.key = {detail::method_rank(gaussian_methods(), method), estimator, ei, mi, static_cast<int>(ti), rep};
      out.push_back(std::move(r));
    };
    for (const auto& method : cfg.methods) {
      if (method == "ABC") {
        Rng rng = stream();
        const AbcKernel k(KernelKind::gaussian, eps, model.scale());
        add(method, "none", "mc", 0, 0, detail::guarded(method, [&] {
              Stopwatch w;
              auto e = abc_loglik_estimate(model, theta, s_obs, k, M, rng);
              e.wall_time = w.seconds();
              return e;
            }));
      } else if (method == "SL") {
        Rng rng = stream();
        add(method, "none", "plugin", 1, 0, detail::guarded(method, [&] {
              Stopwatch w;
              auto e = synthetic_loglik(model, theta, s_obs, M, eps * eps, rng);
              e.wall_time = w.seconds();
              return e;
            }));
      } else {
        const ShifterKind shifter = *parse_shifter(std::string_view(method).substr(0, 1));
        for (std::size_t ti = 0; ti < cfg.steps.size(); ++ti) {
          const int T = cfg.steps[ti];
          Rng rng = stream();
          std::optional<IenkiTrace> trace;
          double seconds = 0.0;
          try {
            Stopwatch w;
            trace = ienki_abc_run_closed_form(model, theta, s_obs, eps, T, shifter, M, std::nullopt, rng);
            seconds = w.seconds();
          } catch (const Error&) {
            trace.reset();
          }
          auto direct = trace ? detail::guarded(method, [&] { return direct_log_ml(*trace); })
                              : degenerate_estimate(method);
          auto path = trace ? detail::guarded(method, [&] { return path_sampling_log_ml(*trace); })
                            : degenerate_estimate(method);
          direct.wall_time = path.wall_time = seconds;
          add(method, std::string(shifter_name(shifter)), "direct", T, ti, std::move(direct));
          add(method, std::string(shifter_name(shifter)), "path", T, ti, std::move(path));
        }
      }
    }
  });

  const auto exact = [&](double eps) -> std::optional<double> {
    return toy_exact_abc_likelihood(theta, s_obs[0], eps);
  };
  return detail::finish_study(cfg, cell_rows, exact, write);
}

/// Likelihood estimator at theta for the Lotka-Volterra studies, by method label.
///
/// IEnKI labels use the stochastic shifter and the closed-form schedule; the
/// "skip" variant applies target skipping at `skip_significance`.
inline LikelihoodBackend make_lv_backend(const std::string& method, double epsilon, Index M, int T,
                                         double skip_significance, const LVPath& observed, const Vector& s_obs) {
  auto model = std::make_shared<LotkaVolterraModel>();
  if (method == "ABC") {
    return [=](const ParamVec& theta, Rng& rng) {
      const AbcKernel k(KernelKind::gaussian, epsilon, model->scale());
      return abc_loglik_estimate(*model, theta, s_obs, k, M, rng);
    };
  }
  if (method == "SL") {
    return [=](const ParamVec& theta, Rng& rng) {
      return synthetic_loglik(*model, theta, s_obs, M, epsilon * epsilon, rng);
    };
  }
  if (method == "PF") {
    return [=](const ParamVec& theta, Rng& rng) { return bootstrap_pf_loglik(theta, observed, epsilon, M, rng); };
  }
  if (method == "EnKF" || method == "sEnKF" || method == "rEnKF" || method == "aEnKF") {
    const ShifterKind shifter = method == "EnKF" ? ShifterKind::stochastic : *parse_shifter(method.substr(0, 1));
    return [=](const ParamVec& theta, Rng& rng) {
      auto e = enkf_loglik(theta, observed, epsilon, M, shifter, rng);
      e.method = method;
      return e;
    };
  }
  if (method == "sIEnKI-ABC" || method == "sIEnKI-ABCskip") {
    std::optional<SkipPolicy> skip;
    if (method == "sIEnKI-ABCskip") {
      skip = SkipPolicy{skip_significance, true};
    }
    return [=](const ParamVec& theta, Rng& rng) {
      const auto trace = ienki_abc_run_closed_form(*model, theta, s_obs, epsilon, T, ShifterKind::stochastic, M,
                                                   skip, rng, IenkiSettings{false, false});
      auto e = direct_log_ml(trace);
      e.method = method;
      return e;
    };
  }
  if (method == "sIEnKI-ABCpath") {
    return [=](const ParamVec& theta, Rng& rng) {
      const auto trace = ienki_abc_run_closed_form(*model, theta, s_obs, epsilon, T, ShifterKind::stochastic, M,
                                                   std::nullopt, rng);
      auto e = path_sampling_log_ml(trace);
      e.method = method;
      return e;
    };
  }
  throw ConfigError("unknown Lotka-Volterra method " + method);
}

/// Lotka-Volterra likelihood-estimator spread at theta* over an epsilon grid.
inline StudyResult run_lv_sd_study(const ExperimentConfig& cfg, bool write = true) {
  cfg.validate();
  const auto [observed, s_obs] = make_observed_lv_data();
  const ParamVec theta = lv_reference_theta();
  const auto& E = cfg.epsilons;
  const auto& Ms = cfg.ensemble_sizes;
  const auto& Ts = cfg.steps;
  const auto reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t n_cells = E.size() * Ms.size() * Ts.size() * reps;
  std::vector<std::vector<EstimateRow>> cell_rows(n_cells);

  parallel_for(n_cells, cfg.workers, [&](std::size_t cell) {
    std::size_t rest = cell;
    const auto rep = static_cast<int>(rest % reps);
    rest /= reps;
    const std::size_t ti = rest % Ts.size();
    rest /= Ts.size();
    const std::size_t mi = rest % Ms.size();
    const std::size_t ei = rest / Ms.size();
    for (const auto& method : cfg.methods) {
      const std::size_t rank = detail::method_rank(lv_sd_methods(), method);
      Rng rng = Rng::stream(cfg.seed, {detail::kLvSdStream, rank, ei, mi, ti, static_cast<std::uint64_t>(rep)});
      const auto backend =
          make_lv_backend(method, E[ei], Ms[mi], Ts[ti], cfg.skip_significance, observed, s_obs);
      EstimateRow r;
      r.method = method;
      const bool ienki = method.find("IEnKI") != std::string::npos;
      const bool enkf = method.find("EnKF") != std::string::npos;
      r.shifter = ienki || enkf ? std::string(shifter_name(*parse_shifter(method.substr(0, 1)))) : "none";
      r.estimator = method == "sIEnKI-ABCpath" ? "path" : (ienki ? "direct" : (method == "ABC" ? "mc" : "plugin"));
      if (method == "PF" || enkf) {
        r.estimator = "filter";
      }
      r.epsilon = E[ei];
      r.M = Ms[mi];
      r.T = ienki ? Ts[ti] : 0;
      r.replicate = rep;
      r.estimate = detail::guarded(method, [&] {
        Stopwatch w;
        auto e = backend(theta, rng);
        e.wall_time = w.seconds();
        return e;
      });
      r.key = {rank, r.estimator, ei, mi * Ts.size() + ti, static_cast<int>(ti), rep};
      cell_rows[cell].push_back(std::move(r));
    }
  });
  if (write) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream f;
    detail::open_for_write(f, std::filesystem::path(cfg.out_dir) / "observed.csv");
    write_lv_csv(f, observed);
  }
  return detail::finish_study(cfg, cell_rows, [](double) { return std::optional<double>{}; }, write);
}

struct McmcSummaryRow {
  std::string method;
  double epsilon = 0.0;
  Index M = 0;
  int T = 0;
  std::size_t iterations = 0;
  double acceptance_rate = 0.0;
  MultiEss multiess;
  std::string chain_file;
};

struct McmcStudyResult {
  std::vector<ChainRecord> chains;
  std::vector<McmcSummaryRow> summary;
};

/// Pseudo-marginal MH per backend and epsilon, started at theta*, under the log-uniform prior.
inline McmcStudyResult run_lv_mcmc_study(const ExperimentConfig& cfg, bool write = true) {
  cfg.validate();
  const auto [observed, s_obs] = make_observed_lv_data();
  const ParamVec init = lv_reference_theta();
  const auto prior = PriorSpec::lotka_volterra();
  const auto proposal = CovarianceMatrix::scalar(3, cfg.mcmc.proposal_sd * cfg.mcmc.proposal_sd);
  const Index M = cfg.ensemble_sizes.front();
  const int T = cfg.steps.front();
  const auto& backends = cfg.mcmc.backends;
  const std::size_t n = backends.size() * cfg.epsilons.size();
  McmcStudyResult res;
  res.chains.resize(n);
  res.summary.resize(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const std::size_t bi = i / cfg.epsilons.size();
    const std::size_t ei = i % cfg.epsilons.size();
    const auto& method = backends[bi];
    const double eps = cfg.epsilons[ei];
    const std::size_t rank = detail::method_rank(lv_mcmc_backends(), method);
    Rng rng = Rng::stream(cfg.seed, {detail::kLvMcmcStream, rank, ei});
    const auto backend = make_lv_backend(method, eps, M, T, cfg.skip_significance, observed, s_obs);
    auto chain = pm_mh_run(init, prior, proposal, backend, cfg.mcmc.iterations, rng);
    const bool ienki = method.find("IEnKI") != std::string::npos;
    chain.config = {{"backend", method},
                    {"epsilon", format_double(eps)},
                    {"M", std::to_string(M)},
                    {"T", ienki ? std::to_string(T) : std::string("0")},
                    {"seed", std::to_string(cfg.seed)},
                    {"iterations", std::to_string(cfg.mcmc.iterations)},
                    {"skip_significance", ienki ? format_double(cfg.skip_significance) : std::string("none")},
                    {"prior", "log-uniform(exp(-6), exp(2)) per component"},
                    {"proposal", "N(log theta, " + format_double(cfg.mcmc.proposal_sd) + "^2 I) on log theta"},
                    {"init", "1,0.005,0.6"},
                    {"config_fingerprint", cfg.fingerprint()}};
    auto& s = res.summary[i];
    s.method = method;
    s.epsilon = eps;
    s.M = M;
    s.T = ienki ? T : 0;
    s.iterations = cfg.mcmc.iterations;
    s.acceptance_rate = chain.acceptance_rate();
    s.multiess = multi_ess(chain);
    s.chain_file = "chain_" + method + "_eps_" + format_double(eps) + ".csv";
    res.chains[i] = std::move(chain);
  });
  if (write) {
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir / "chains");
    const auto fp = cfg.fingerprint();
    std::ofstream f;
    for (std::size_t i = 0; i < n; ++i) {
      const auto base = dir / "chains" / res.summary[i].chain_file;
      detail::open_for_write(f, base);
      write_chain_csv(f, res.chains[i]);
      f.close();
      auto side = base;
      side.replace_extension(".txt");
      detail::open_for_write(f, side);
      write_chain_sidecar(f, res.chains[i]);
      f.close();
    }
    detail::open_for_write(f, dir / "mcmc_summary.csv");
    f << "method,epsilon,M,T,iterations,acceptance_rate,multiess,chain_file,config_fingerprint\n";
    for (const auto& s : res.summary) {
      f << csv_field(s.method) << ',' << format_double(s.epsilon) << ',' << s.M << ',' << s.T << ','
        << s.iterations << ',' << format_double(s.acceptance_rate) << ',' << s.multiess.label() << ",chains/"
        << s.chain_file << ',' << fp << '\n';
    }
    f.close();
    detail::open_for_write(f, dir / "config.json");
    f << cfg.to_json().dump(2) << '\n';
  }
  return res;
}

/// Dispatches on cfg.study.
inline void run_study(const ExperimentConfig& cfg) {
  if (cfg.study == "gaussian_ml") {
    run_gaussian_study(cfg);
  } else if (cfg.study == "lv_sd") {
    run_lv_sd_study(cfg);
  } else if (cfg.study == "lv_mcmc") {
    run_lv_mcmc_study(cfg);
  } else {
    throw ConfigError("config field 'study': unknown study " + cfg.study);
  }
}

}  // namespace enkiabc

#endif
