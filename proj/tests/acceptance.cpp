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

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --cli path/to/enkiabc-cli --work-dir dir [--only name]...
//
// Criteria listed in kKnownRed print "FAIL (known, see README)" and do not
// change the exit status.

#include <CLI11.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "enkiabc/enkiabc.hpp"
#include "enkiabc/experiments.hpp"
#include "test_util.hpp"

using namespace enkiabc;
namespace fs = std::filesystem;

namespace {

struct Context {
  std::string cli;
  fs::path work_dir;
  int workers = 1;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double max_seconds;
  std::function<Outcome(const Context&)> run;
};

const std::set<std::string> kKnownRed{"path-sampling-scaling", "kalman-oracles", "lv-mcmc-behaviour"};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

const SummaryRow& find_summary(const StudyResult& r, const std::string& method, const std::string& estimator,
                               double eps, int T) {
  for (const auto& s : r.summary) {
    if (s.method == method && s.estimator == estimator && s.epsilon == eps && s.T == T) {
      return s;
    }
  }
  throw Error("missing summary cell " + method + "/" + estimator);
}

std::vector<double> cell_values(const StudyResult& r, const std::string& method, const std::string& estimator,
                                double eps, int T) {
  std::vector<double> v;
  for (const auto& e : r.estimates) {
    if (e.method == method && e.estimator == estimator && e.epsilon == eps && e.T == T && e.estimate.ok()) {
      v.push_back(e.estimate.log_value);
    }
  }
  return v;
}

ExperimentConfig gaussian_config(std::vector<std::string> methods, std::vector<double> eps, std::vector<int> steps,
                                 int workers) {
  auto c = *preset("gaussian-paper");
  c.methods = std::move(methods);
  c.epsilons = std::move(eps);
  c.ensemble_sizes = {200};
  c.steps = std::move(steps);
  c.replicates = 100;
  c.workers = workers;
  return c;
}

const ParamVec kTheta0 = ParamVec::Zero(1);
const Vector kObs0 = Vector::Zero(1);

Outcome sl_equivalence(const Context&) {
  const ToyGaussianModel model;
  const double eps_grid[] = {0.1, 0.01, 0.001, 0.0001};
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const double eps = eps_grid[seed % 4];
    Rng a(seed);
    Rng b(seed);
    const auto trace =
        ienki_abc_run_closed_form(model, kTheta0, kObs0, eps, 1, ShifterKind::square_root, 200, std::nullopt, a);
    const auto direct = direct_log_ml(trace);
    const auto sl = synthetic_loglik(model, kTheta0, kObs0, 200, eps * eps, b);
    worst = std::max(worst, std::abs(direct.log_value - sl.log_value));
  }
  return {worst < 1e-8, "max |direct - SL| = " + fmt(worst) + " over 100 seeds"};
}

Outcome exact_oracle(const Context&) {
  const ToyGaussianModel model;
  const double exact = std::log(testutil::normal_pdf(0.0, 0.0, std::sqrt(1.01)));
  std::vector<double> v;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    Rng rng = Rng::stream(11, {rep});
    const auto trace =
        ienki_abc_run_closed_form(model, kTheta0, kObs0, 0.1, 5, ShifterKind::square_root, 10000, std::nullopt, rng);
    v.push_back(direct_log_ml(trace).log_value);
  }
  const double mean = testutil::mean(v);
  const double sd = std::sqrt(testutil::variance(v));
  return {std::abs(mean - exact) <= 0.02 && sd < 0.05,
          "mean - exact = " + fmt(mean - exact) + " (tol 0.02), SD = " + fmt(sd) + " (< 0.05)"};
}

Outcome abc_blowup(const Context& ctx) {
  const auto res = run_gaussian_study(gaussian_config({"ABC", "rIEnKI"}, {0.1, 0.001}, {5}, ctx.workers), false);
  const double abc = find_summary(res, "ABC", "mc", 0.001, 0).rmse;
  const double r3 = find_summary(res, "rIEnKI", "direct", 0.001, 5).rmse;
  const double r1 = find_summary(res, "rIEnKI", "direct", 0.1, 5).rmse;
  return {abc / r3 > 10.0 && r3 / r1 < 3.0,
          "RMSE ABC/rIEnKI at 1e-3 = " + fmt(abc / r3) + " (> 10), rIEnKI 1e-3/1e-1 = " + fmt(r3 / r1) + " (< 3)"};
}

Outcome shifter_t(const Context& ctx) {
  const auto res = run_gaussian_study(gaussian_config({"sIEnKI", "rIEnKI"}, {0.01}, {5, 20}, ctx.workers), false);
  const auto s5 = cell_values(res, "sIEnKI", "direct", 0.01, 5);
  const auto s20 = cell_values(res, "sIEnKI", "direct", 0.01, 20);
  const auto r5 = cell_values(res, "rIEnKI", "direct", 0.01, 5);
  const auto r20 = cell_values(res, "rIEnKI", "direct", 0.01, 20);
  const double f = testutil::variance(s20) / testutil::variance(s5);
  const boost::math::fisher_f dist(static_cast<double>(s20.size() - 1), static_cast<double>(s5.size() - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, f));
  const double r = testutil::variance(r20) / testutil::variance(r5);
  return {p < 0.05 && r >= 0.5 && r <= 2.0,
          "sIEnKI var T20/T5 = " + fmt(f) + " (one-sided F p = " + fmt(p) + " < 0.05), rIEnKI ratio = " + fmt(r) +
              " (in [0.5, 2])"};
}

Outcome path_scaling(const Context& ctx) {
  const auto res = run_gaussian_study(gaussian_config({"rIEnKI"}, {0.1, 0.001}, {20, 50, 200}, ctx.workers), false);
  const double a = find_summary(res, "rIEnKI", "path", 0.1, 20).rmse;
  const double b = find_summary(res, "rIEnKI", "path", 0.1, 50).rmse;
  const double c = find_summary(res, "rIEnKI", "path", 0.1, 200).rmse;
  const double small = find_summary(res, "rIEnKI", "path", 0.001, 200).rmse;
  return {a > b && b > c && small > 2.0 * c,
          "RMSE at eps 0.1 for T 20/50/200 = " + fmt(a) + "/" + fmt(b) + "/" + fmt(c) + ", T=200 RMSE 1e-3/1e-1 = " +
              fmt(small / c) + " (> 2)"};
}

Outcome ghurye_olkin(const Context&) {
  const int reps = 100000;
  const Index M = 20;
  Rng rng(31);
  std::vector<double> v(reps);
  Matrix sample(1, M);
  for (auto& x : v) {
    for (Index j = 0; j < M; ++j) {
      sample(0, j) = rng.normal();
    }
    const auto m = ensemble_moments(sample);
    x = std::exp(ghurye_olkin_logdensity(Vector::Zero(1), m.mean, m.cov, M));
  }
  const double truth = testutil::normal_pdf(0.0, 0.0, 1.0);
  const double z = (testutil::mean(v) - truth) / testutil::std_error(v);
  return {std::abs(z) < 3.0, "mean = " + fmt(testutil::mean(v)) + " vs " + fmt(truth) + ", z = " + fmt(z)};
}

Outcome ode_consistency(const Context&) {
  Rng rng(41);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double eps = std::exp(std::log(1e-4) * rng.uniform());
    const double kappa = eps * std::exp(0.1 + 8.0 * rng.uniform());
    const Index d = 1 + static_cast<Index>(rng.uniform() * 50.0);
    const double c = 2.0 * std::sqrt(static_cast<double>(d)) * std::log(kappa / eps);
    const double h = 1e-6;
    for (int i = 1; i <= 1000; ++i) {
      const double t = i / 1001.0;
      const double deriv = (closed_form_alpha(t + h, eps, kappa) - closed_form_alpha(t - h, eps, kappa)) / (2.0 * h);
      const double rhs = c / std::sqrt(tempering_fisher_information(closed_form_alpha(t, eps, kappa), eps, kappa, d));
      worst = std::max(worst, std::abs(deriv / rhs - 1.0));
    }
  }
  return {worst < 1e-6, "max relative error = " + fmt(worst) + " over 20 configurations x 1000 points"};
}

Outcome kalman_oracles(const Context&) {
  const auto scalar = LinearGaussianModel::scalar(0.5, 1.0, 0.9, 0.5, 0.3);
  Rng data_rng(51);
  const auto ys = scalar.simulate_observations(10, data_rng);
  const double exact = kalman_filter_loglik(scalar, ys);
  std::vector<double> ratio(500);
  Rng rng(52);
  for (auto& r : ratio) {
    r = std::exp(bootstrap_pf_loglik(scalar, ys, 1000, rng).log_value - exact);
  }
  const double z = (testutil::mean(ratio) - 1.0) / testutil::std_error(ratio);

  double worst = 0.0;
  for (const auto shifter : {ShifterKind::square_root, ShifterKind::adjustment}) {
    Rng r2(54);
    worst = std::max(worst, std::abs(enkf_loglik(scalar, ys, 1000, shifter, r2).log_value - exact));
  }
  // spread of the single-run error, for the report only
  std::vector<double> spread;
  Rng r3(55);
  for (int rep = 0; rep < 100; ++rep) {
    spread.push_back(enkf_loglik(scalar, ys, 1000, ShifterKind::square_root, r3).log_value - exact);
  }
  return {std::abs(z) < 3.0 && worst < 0.05,
          "PF natural-scale z = " + fmt(z) + " (|z| < 3), EnKF max |delta| = " + fmt(worst) +
              " (< 0.05; replicate SD of delta " + fmt(std::sqrt(testutil::variance(spread))) + ")"};
}

Outcome lv_sd_ordering(const Context& ctx) {
  auto c = *preset("lv-sd-paper");
  c.epsilons = {0.1};
  c.ensemble_sizes = {100};
  c.steps = {100};
  c.replicates = 20;
  c.methods = {"ABC", "PF", "sEnKF", "rEnKF", "aEnKF", "sIEnKI-ABC", "sIEnKI-ABCskip"};
  c.workers = ctx.workers;
  const auto res = run_lv_sd_study(c, false);
  std::map<std::string, const SummaryRow*> by;
  for (const auto& s : res.summary) {
    by[s.method] = &s;
  }
  const double enkf = std::max({by["sEnKF"]->sd, by["rEnKF"]->sd, by["aEnKF"]->sd});
  const double skip = by["sIEnKI-ABCskip"]->sd;
  const double plain = by["sIEnKI-ABC"]->sd;
  const double abc = by["ABC"]->sd;
  const double pf_deg = static_cast<double>(by["PF"]->n_degenerate) / 20.0;
  const bool ok = enkf < skip && skip <= plain && plain < abc && pf_deg >= 0.2;
  return {ok, "SD max EnKF = " + fmt(enkf) + ", skip = " + fmt(skip) + ", sIEnKI = " + fmt(plain) + ", ABC = " +
                  fmt(abc) + (std::isnan(abc) ? " (all degenerate)" : "") + ", PF degenerate " + fmt(100 * pf_deg) +
                  "%"};
}

Outcome lv_mcmc(const Context& ctx) {
  auto c = *preset("lv-mcmc-desk");
  c.epsilons = {0.1};
  c.ensemble_sizes = {100};
  c.steps = {100};
  c.mcmc.iterations = 10000;
  c.mcmc.backends = {"ABC", "SL", "EnKF", "sIEnKI-ABCskip"};
  c.workers = ctx.workers;
  const auto res = run_lv_mcmc_study(c, false);
  std::map<std::string, const McmcSummaryRow*> by;
  for (const auto& s : res.summary) {
    by[s.method] = &s;
  }
  const double acc_enkf = by["EnKF"]->acceptance_rate;
  const double acc_skip = by["sIEnKI-ABCskip"]->acceptance_rate;
  const double acc_abc = by["ABC"]->acceptance_rate;
  const double acc_sl = by["SL"]->acceptance_rate;
  const double ess_enkf = by["EnKF"]->multiess.rank();
  const double ess_skip = by["sIEnKI-ABCskip"]->multiess.rank();
  const double ess_abc = by["ABC"]->multiess.rank();
  const bool ok = acc_enkf > 0.05 && acc_skip > 0.05 && acc_abc < 0.005 && acc_sl < 0.005 && ess_enkf > ess_skip &&
                  ess_skip > ess_abc;
  return {ok, "acceptance EnKF " + fmt(acc_enkf) + ", skip " + fmt(acc_skip) + " (> 0.05); ABC " + fmt(acc_abc) +
                  ", SL " + fmt(acc_sl) + " (< 0.005); multiESS EnKF " + by["EnKF"]->multiess.label() + ", skip " +
                  by["sIEnKI-ABCskip"]->multiess.label() + ", ABC " + by["ABC"]->multiess.label()};
}

Outcome hz_calibration(const Context&) {
  bool ok = true;
  std::string detail;
  for (const Index d : {1, 2, 5}) {
    Rng rng = Rng::stream(61, {static_cast<std::uint64_t>(d)});
    int rejected = 0;
    Matrix sample(d, 100);
    for (int rep = 0; rep < 1000; ++rep) {
      for (Index j = 0; j < sample.cols(); ++j) {
        for (Index i = 0; i < d; ++i) {
          sample(i, j) = rng.normal();
        }
      }
      rejected += hz_normality_test(sample, 0.1).reject ? 1 : 0;
    }
    const double rate = rejected / 1000.0;
    ok = ok && rate >= 0.07 && rate <= 0.13;
    detail += (detail.empty() ? "" : ", ") + std::string("d=") + std::to_string(d) + " rate " + fmt(rate);
  }
  return {ok, detail + " (in [0.07, 0.13])"};
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) {
    return out;
  }
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      std::ifstream f(e.path(), std::ios::binary);
      std::ostringstream s;
      s << f.rdbuf();
      out[fs::relative(e.path(), root).string()] = s.str();
    }
  }
  return out;
}

Outcome cli_determinism(const Context& ctx) {
  if (ctx.cli.empty()) {
    return {false, "no --cli given"};
  }
  struct Run {
    std::string preset;
    std::string command;
    std::string overrides;
  };
  const std::vector<Run> runs{
      {"gaussian-paper", "gaussian-ml", R"("replicates": 2, "ensemble_sizes": [10, 50], "steps": [5, 10, 50])"},
      {"gaussian-desk", "gaussian-ml", R"("replicates": 3)"},
      {"lv-sd-paper", "lv-sd", R"("replicates": 1, "epsilons": [10.0, 0.1], "ensemble_sizes": [20], "steps": [10])"},
      {"lv-sd-desk", "lv-sd", R"("replicates": 1, "ensemble_sizes": [20], "steps": [10])"},
      {"lv-mcmc-desk", "lv-mcmc", R"("ensemble_sizes": [20], "steps": [10], "mcmc": {"iterations": 200})"},
  };
  const fs::path base = ctx.work_dir / "determinism";
  fs::remove_all(base);
  fs::create_directories(base);
  std::size_t files = 0;
  for (const auto& r : runs) {
    const fs::path cfg = base / (r.preset + ".json");
    {
      std::ofstream f(cfg);
      f << "{\"preset\": \"" << r.preset << "\", " << r.overrides << "}\n";
    }
    std::map<std::string, std::string> trees[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path out = base / (r.preset + "_" + std::to_string(k));
      const std::string cmd = "\"" + ctx.cli + "\" " + r.command + " --config \"" + cfg.string() + "\" --out-dir \"" +
                              out.string() + "\" --workers " + std::to_string(k + 1) + " > \"" +
                              (base / (r.preset + ".log")).string() + "\" 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        return {false, r.preset + ": CLI exited with an error"};
      }
      trees[k] = read_tree(out);
    }
    if (trees[0].empty() || trees[0] != trees[1]) {
      return {false, r.preset + ": outputs differ between runs"};
    }
    files += trees[0].size();
  }
  return {true, std::to_string(runs.size()) + " presets, " + std::to_string(files) +
                    " files byte-identical across reruns (workers 1 vs 2)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"enkiabc acceptance suite"};
  Context ctx;
  std::string work_dir = "acceptance_work";
  std::vector<std::string> only;
  app.add_option("--cli", ctx.cli, "path to the enkiabc-cli binary");
  app.add_option("--work-dir", work_dir, "scratch directory");
  app.add_option("--only", only, "run only the named criteria");
  app.add_option("--workers", ctx.workers, "worker threads for study runs");
  ctx.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  CLI11_PARSE(app, argc, argv);
  ctx.work_dir = work_dir;
  fs::create_directories(ctx.work_dir);

  const std::vector<Criterion> criteria{
      {"sl-ienki-equivalence", 5, sl_equivalence},
      {"exact-oracle-consistency", 60, exact_oracle},
      {"abc-blowup-vs-ienki-flatness", 120, abc_blowup},
      {"shifter-T-sensitivity", 120, shifter_t},
      {"path-sampling-scaling", 180, path_scaling},
      {"ghurye-olkin-unbiasedness", 60, ghurye_olkin},
      {"schedule-ode-consistency", 5, ode_consistency},
      {"kalman-oracles", 120, kalman_oracles},
      {"lv-sd-ordering", 900, lv_sd_ordering},
      {"lv-mcmc-behaviour", 3600, lv_mcmc},
      {"hz-calibration", 120, hz_calibration},
      {"cli-determinism", 1e9, cli_determinism},
  };

  int unexpected = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) {
      continue;
    }
    Outcome o;
    Stopwatch w;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = w.seconds();
    const bool in_time = s < c.max_seconds;
    const bool pass = o.pass && in_time;
    std::string verdict = pass ? "PASS" : "FAIL";
    if (!pass && kKnownRed.count(c.name)) {
      verdict = "FAIL (known, see README)";
    } else if (!pass) {
      ++unexpected;
    }
    std::cout << verdict << "  " << c.name << ": " << o.detail << "; " << fmt(s) << " s";
    if (c.max_seconds < 1e8) {
      std::cout << " (limit " << fmt(c.max_seconds) << " s" << (in_time ? "" : ", exceeded") << ")";
    }
    std::cout << std::endl;
  }
  if (unexpected > 0) {
    std::cout << unexpected << " criteria failed" << std::endl;
  }
  return unexpected == 0 ? 0 : 1;
}
