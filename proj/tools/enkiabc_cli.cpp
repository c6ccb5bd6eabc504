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

// Experiment runner: enkiabc-cli <gaussian-ml|lv-sd|lv-mcmc|schedule-dump> [options]

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "enkiabc/enkiabc.hpp"
#include "enkiabc/experiments.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
  std::optional<int> replicates;
  bool timing = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON config file (overrides the preset)")->check(CLI::ExistingFile);
  app->add_option("--preset", f.preset, "named preset");
  app->add_option("--seed", f.seed, "root seed");
  app->add_option("--workers", f.workers, "worker threads");
  app->add_option("--out-dir", f.out_dir, "output directory");
  app->add_option("--replicates", f.replicates, "replicates per cell");
  app->add_flag("--timing", f.timing, "record wall-clock times (outputs are then not byte-reproducible)");
}

enkiabc::ExperimentConfig resolve(const std::string& study, const std::string& default_preset,
                                  const CommonFlags& f) {
  const std::string name = f.preset.empty() ? default_preset : f.preset;
  auto cfg = enkiabc::preset(name);
  if (!cfg) {
    throw enkiabc::ConfigError("unknown preset '" + name + "'");
  }
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    enkiabc::json j;
    try {
      j = enkiabc::json::parse(in);
    } catch (const enkiabc::json::parse_error& e) {
      throw enkiabc::ConfigError(f.config + ": " + e.what());
    }
    if (j.contains("preset")) {
      auto base = enkiabc::preset(j.at("preset").get<std::string>());
      if (!base) {
        throw enkiabc::ConfigError(f.config + ": unknown preset '" + j.at("preset").get<std::string>() + "'");
      }
      cfg = std::move(base);
    }
    cfg = enkiabc::config_from_json(j, *cfg);
  }
  if (f.seed) {
    cfg->seed = *f.seed;
  }
  if (f.workers) {
    cfg->workers = *f.workers;
  }
  if (f.out_dir) {
    cfg->out_dir = *f.out_dir;
  }
  if (f.replicates) {
    cfg->replicates = *f.replicates;
  }
  cfg->record_timing = cfg->record_timing || f.timing;
  if (cfg->study != study) {
    throw enkiabc::ConfigError("config field 'study': '" + cfg->study + "' does not match the subcommand");
  }
  cfg->validate();
  return *cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble Kalman inversion estimators of ABC likelihoods"};
  app.require_subcommand(1);

  CommonFlags gauss_flags;
  auto* gauss = app.add_subcommand("gaussian-ml", "Gaussian toy marginal-likelihood study");
  add_common(gauss, gauss_flags);

  CommonFlags sd_flags;
  auto* sd = app.add_subcommand("lv-sd", "Lotka-Volterra likelihood-estimator SD study");
  add_common(sd, sd_flags);

  CommonFlags mcmc_flags;
  std::optional<std::size_t> iterations;
  auto* mcmc = app.add_subcommand("lv-mcmc", "Lotka-Volterra pseudo-marginal MCMC study");
  add_common(mcmc, mcmc_flags);
  mcmc->add_option("--iterations", iterations, "MH iterations per chain");

  double eps = 0.1;
  double kappa = 1.0;
  int steps = 10;
  std::string schedule_out;
  auto* dump = app.add_subcommand("schedule-dump", "Write the closed-form tempering schedule as CSV");
  dump->add_option("--epsilon", eps, "target tolerance")->check(CLI::PositiveNumber);
  dump->add_option("--kappa", kappa, "initial spread relative to the scale")->check(CLI::PositiveNumber);
  dump->add_option("--steps", steps, "number of targets T")->check(CLI::PositiveNumber);
  dump->add_option("--out", schedule_out, "output file (default stdout)");

  app.add_flag_callback(
      "--list-presets",
      [] {
        for (const auto& p : enkiabc::preset_names()) {
          std::cout << p << '\n';
        }
        std::exit(0);
      },
      "print preset names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gauss) {
      const auto cfg = resolve("gaussian_ml", "gaussian-paper", gauss_flags);
      enkiabc::run_gaussian_study(cfg);
      std::cout << "wrote " << cfg.out_dir << "/estimates.csv and summary.csv\n";
    } else if (*sd) {
      const auto cfg = resolve("lv_sd", "lv-sd-paper", sd_flags);
      enkiabc::run_lv_sd_study(cfg);
      std::cout << "wrote " << cfg.out_dir << "/estimates.csv and summary.csv\n";
    } else if (*mcmc) {
      auto cfg = resolve("lv_mcmc", "lv-mcmc-desk", mcmc_flags);
      if (iterations) {
        cfg.mcmc.iterations = *iterations;
        cfg.validate();
      }
      const auto res = enkiabc::run_lv_mcmc_study(cfg);
      for (const auto& s : res.summary) {
        std::cout << s.method << " eps=" << s.epsilon << " acceptance=" << s.acceptance_rate
                  << " multiESS=" << s.multiess.label() << '\n';
      }
    } else if (*dump) {
      const auto schedule = enkiabc::build_schedule(eps, kappa, steps);
      if (schedule.fallback) {
        std::cerr << "warning: kappa <= epsilon, using a uniform temperature grid\n";
      }
      if (schedule_out.empty()) {
        enkiabc::write_schedule_csv(std::cout, schedule);
      } else {
        std::ofstream f(schedule_out, std::ios::binary | std::ios::trunc);
        if (!f) {
          std::cerr << "error: cannot open " << schedule_out << '\n';
          return 1;
        }
        enkiabc::write_schedule_csv(f, schedule);
      }
    }
  } catch (const enkiabc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
