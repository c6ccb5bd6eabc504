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

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "enkiabc/experiments.hpp"

using namespace enkiabc;

namespace {

ExperimentConfig tiny_gaussian() {
  auto c = *preset("gaussian-desk");
  c.replicates = 3;
  c.epsilons = {0.1};
  c.ensemble_sizes = {20};
  c.steps = {5};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("enkiabc_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string validation_message(const ExperimentConfig& c) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, PresetsValidate) {
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    ASSERT_TRUE(c.has_value()) << name;
    EXPECT_NO_THROW(c->validate()) << name;
  }
  EXPECT_FALSE(preset("no-such-preset").has_value());
}

TEST(Config, PresetGrids) {
  const auto g = *preset("gaussian-paper");
  EXPECT_EQ(g.study, "gaussian_ml");
  EXPECT_EQ(g.replicates, 100);
  EXPECT_EQ(g.epsilons, (std::vector<double>{0.1, 0.01, 0.001, 0.0001}));
  EXPECT_EQ(g.ensemble_sizes, (std::vector<Index>{10, 50, 100, 200}));
  EXPECT_EQ(g.steps, (std::vector<int>{5, 10, 20, 50, 100, 200}));
  const auto lv = *preset("lv-sd-paper");
  EXPECT_EQ(lv.epsilons, (std::vector<double>{10.0, 5.0, 2.0, 1.0, 0.5, 0.2, 0.1}));
  EXPECT_EQ(lv.ensemble_sizes, (std::vector<Index>{100}));
  EXPECT_EQ(lv.steps, (std::vector<int>{100}));
  EXPECT_EQ(lv.methods.size(), 9u);
  const auto mc = *preset("lv-mcmc-desk");
  EXPECT_EQ(mc.mcmc.iterations, 10000u);
  EXPECT_EQ(mc.mcmc.backends, lv_mcmc_backends());
}

TEST(Config, ValidationNamesTheField) {
  auto c = tiny_gaussian();
  c.replicates = 0;
  EXPECT_NE(validation_message(c).find("'replicates'"), std::string::npos);
  c = tiny_gaussian();
  c.epsilons = {0.1, -1.0};
  EXPECT_NE(validation_message(c).find("'epsilons'"), std::string::npos);
  c = tiny_gaussian();
  c.epsilons.clear();
  EXPECT_NE(validation_message(c).find("'epsilons'"), std::string::npos);
  c = tiny_gaussian();
  c.ensemble_sizes = {1};
  EXPECT_NE(validation_message(c).find("'ensemble_sizes'"), std::string::npos);
  c = tiny_gaussian();
  c.steps = {0};
  EXPECT_NE(validation_message(c).find("'steps'"), std::string::npos);
  c = tiny_gaussian();
  c.skip_significance = 0.0;
  EXPECT_NE(validation_message(c).find("'skip_significance'"), std::string::npos);
  c = tiny_gaussian();
  c.workers = 0;
  EXPECT_NE(validation_message(c).find("'workers'"), std::string::npos);
  c = tiny_gaussian();
  c.methods = {"PF"};
  EXPECT_NE(validation_message(c).find("'methods'"), std::string::npos);
  c = tiny_gaussian();
  c.study = "weather";
  EXPECT_NE(validation_message(c).find("'study'"), std::string::npos);
  c = *preset("lv-mcmc-desk");
  c.mcmc.iterations = 10;
  EXPECT_NE(validation_message(c).find("'mcmc.iterations'"), std::string::npos);
  c = *preset("lv-mcmc-desk");
  c.mcmc.backends = {"ABC", "Bogus"};
  EXPECT_NE(validation_message(c).find("'mcmc.backends'"), std::string::npos);
}

TEST(Config, JsonOverridesAndUnknownKeys) {
  const auto base = *preset("gaussian-desk");
  const auto c = config_from_json(json{{"replicates", 7}, {"epsilons", {0.5}}}, base);
  EXPECT_EQ(c.replicates, 7);
  EXPECT_EQ(c.epsilons, std::vector<double>{0.5});
  EXPECT_EQ(c.ensemble_sizes, base.ensemble_sizes);
  EXPECT_THROW(config_from_json(json{{"replicate", 7}}, base), ConfigError);
  EXPECT_THROW(config_from_json(json{{"mcmc", {{"iters", 5}}}}, base), ConfigError);
  EXPECT_THROW(config_from_json(json{{"replicates", "many"}}, base), ConfigError);
  EXPECT_THROW(config_from_json(json::array(), base), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  for (const auto& name : preset_names()) {
    const auto c = *preset(name);
    const auto back = config_from_json(c.to_json());
    EXPECT_EQ(back.fingerprint(), c.fingerprint()) << name;
  }
}

TEST(Config, FingerprintIgnoresWorkersAndOutDir) {
  auto a = tiny_gaussian();
  auto b = a;
  b.workers = 8;
  b.out_dir = "/elsewhere";
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 16u);
  b.seed = a.seed + 1;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (const int workers : {1, 3}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) {
      EXPECT_EQ(h.load(), 1);
    }
  }
}

TEST(ParallelFor, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(10, 2, [](std::size_t i) {
                 if (i == 7) {
                   throw Error("boom");
                 }
               }),
               Error);
}

TEST(Summary, RmseDecomposes) {
  std::vector<EstimateRow> rows(5);
  const double vals[] = {-1.0, -1.5, -0.7, -1.2, -0.9};
  std::vector<const EstimateRow*> ptrs;
  for (int i = 0; i < 5; ++i) {
    rows[i].method = "rIEnKI";
    rows[i].estimate.log_value = vals[i];
    ptrs.push_back(&rows[i]);
  }
  rows[4].estimate = degenerate_estimate("rIEnKI");
  const auto s = summarize(ptrs, -1.0);
  EXPECT_EQ(s.n_ok, 4);
  EXPECT_EQ(s.n_degenerate, 1);
  // ok values -1, -1.5, -0.7, -1.2: mean -1.1, population variance 0.085
  EXPECT_NEAR(s.bias, -0.1, 1e-12);
  EXPECT_NEAR(s.sd * s.sd, 0.085, 1e-12);
  EXPECT_NEAR(s.rmse * s.rmse, s.bias * s.bias + s.sd * s.sd, 1e-10);
  const auto none = summarize(ptrs, std::nullopt);
  EXPECT_TRUE(std::isnan(none.bias));
  EXPECT_NEAR(none.sd, s.sd, 1e-15);
}

TEST(GaussianStudy, SmokeRunIsFast) {
  auto c = tiny_gaussian();
  c.replicates = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_gaussian_study(c, false);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(seconds, 1.0);
  // ABC, SL, and three shifters with two estimators each
  EXPECT_EQ(res.estimates.size(), 8u);
  EXPECT_EQ(res.summary.size(), 8u);
  for (const auto& s : res.summary) {
    EXPECT_EQ(s.n_ok + s.n_degenerate, 1);
    EXPECT_NEAR(s.rmse * s.rmse, s.bias * s.bias + s.sd * s.sd, 1e-10);
  }
}

TEST(GaussianStudy, WorkerCountDoesNotChangeResults) {
  auto c = tiny_gaussian();
  const auto a = run_gaussian_study(c, false);
  c.workers = 3;
  const auto b = run_gaussian_study(c, false);
  ASSERT_EQ(a.estimates.size(), b.estimates.size());
  for (std::size_t i = 0; i < a.estimates.size(); ++i) {
    EXPECT_EQ(a.estimates[i].method, b.estimates[i].method);
    EXPECT_EQ(a.estimates[i].estimate.log_value, b.estimates[i].estimate.log_value);
  }
}

TEST(GaussianStudy, SharedInitialSimulationsAcrossMethods) {
  auto c = tiny_gaussian();
  c.replicates = 1;
  c.steps = {1};
  const auto res = run_gaussian_study(c, false);
  // at T = 1 every shifter's direct estimate is the synthetic likelihood of the same draws
  double sl = 0.0;
  for (const auto& r : res.estimates) {
    if (r.method == "SL") {
      sl = r.estimate.log_value;
    }
  }
  for (const auto& r : res.estimates) {
    if (r.estimator == "direct") {
      EXPECT_NEAR(r.estimate.log_value, sl, 1e-10) << r.method;
    }
  }
}

TEST(GaussianStudy, CsvOutputsAreByteIdenticalOnRerun) {
  auto c = tiny_gaussian();
  const auto d1 = scratch("g1");
  const auto d2 = scratch("g2");
  c.out_dir = d1.string();
  run_gaussian_study(c);
  c.out_dir = d2.string();
  c.workers = 2;
  run_gaussian_study(c);
  for (const char* f : {"estimates.csv", "summary.csv"}) {
    const auto a = slurp(d1 / f);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(d2 / f)) << f;
  }
  const auto est = slurp(d1 / "estimates.csv");
  EXPECT_EQ(est.substr(0, est.find('\n')),
            "method,shifter,estimator,epsilon,M,T,replicate,log_estimate,degenerate,wall_time_s,skip_at,"
            "divergent_sims,config_fingerprint");
  EXPECT_NE(est.find(c.fingerprint()), std::string::npos);
  const auto sum = slurp(d1 / "summary.csv");
  EXPECT_EQ(sum.substr(0, sum.find('\n')),
            "method,shifter,estimator,epsilon,M,T,n_ok,bias,sd,rmse,n_degenerate,config_fingerprint");
  const auto cfg = config_from_json(json::parse(slurp(d1 / "config.json")));
  EXPECT_EQ(cfg.fingerprint(), c.fingerprint());
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(LvSdStudy, SmallRunProducesOneRowPerMethod) {
  auto c = *preset("lv-sd-desk");
  c.replicates = 1;
  c.epsilons = {1.0};
  c.ensemble_sizes = {20};
  c.steps = {5};
  const auto res = run_lv_sd_study(c, false);
  ASSERT_EQ(res.estimates.size(), lv_sd_methods().size());
  for (const auto& r : res.estimates) {
    if (r.method == "PF" || r.method.find("EnKF") != std::string::npos) {
      EXPECT_EQ(r.estimator, "filter");
      EXPECT_EQ(r.T, 0);
    }
    if (r.method == "sIEnKI-ABCpath") {
      EXPECT_EQ(r.estimator, "path");
      EXPECT_EQ(r.T, 5);
    }
  }
  for (const auto& s : res.summary) {
    EXPECT_TRUE(std::isnan(s.bias));
  }
}

TEST(LvMcmcStudy, ShortChainsWriteFiles) {
  auto c = *preset("lv-mcmc-desk");
  c.epsilons = {10.0};
  c.ensemble_sizes = {20};
  c.steps = {5};
  c.mcmc.iterations = 100;
  c.mcmc.backends = {"SL", "EnKF"};
  const auto dir = scratch("mcmc");
  c.out_dir = dir.string();
  c.workers = 2;
  const auto res = run_lv_mcmc_study(c);
  ASSERT_EQ(res.summary.size(), 2u);
  for (const auto& s : res.summary) {
    EXPECT_EQ(s.iterations, 100u);
    EXPECT_GE(s.acceptance_rate, 0.0);
    EXPECT_LE(s.acceptance_rate, 1.0);
    EXPECT_TRUE(std::filesystem::exists(dir / "chains" / s.chain_file));
  }
  const auto summary = slurp(dir / "mcmc_summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "method,epsilon,M,T,iterations,acceptance_rate,multiess,chain_file,config_fingerprint");
  std::filesystem::remove_all(dir);
}

TEST(RunStudy, UnknownStudyThrows) {
  auto c = tiny_gaussian();
  c.study = "weather";
  EXPECT_THROW(run_study(c), ConfigError);
}
