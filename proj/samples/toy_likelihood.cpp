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

// Estimates the ABC likelihood of the Gaussian toy model with IEnKI-ABC and
// compares it with the exact value.

#include <iostream>

#include "enkiabc/enkiabc.hpp"

int main() {
  using namespace enkiabc;
  const ToyGaussianModel model;
  const ParamVec theta = Vector::Zero(1);
  const Vector s_obs = Vector::Zero(1);
  const double eps = 0.01;
  Rng rng = Rng::stream(42, {1});

  const auto trace = ienki_abc_run_closed_form(model, theta, s_obs, eps, 10, ShifterKind::square_root, 200,
                                               std::nullopt, rng);
  const auto direct = direct_log_ml(trace);
  const auto path = path_sampling_log_ml(trace);
  const AbcKernel kernel(KernelKind::gaussian, eps, model.scale());
  const auto abc = abc_loglik_estimate(model, theta, s_obs, kernel, 200, rng);

  std::cout << "exact        " << toy_exact_abc_likelihood(theta, 0.0, eps) << '\n'
            << "rIEnKI direct " << direct.log_value << '\n'
            << "rIEnKI path   " << path.log_value << '\n'
            << "ABC           " << abc.log_value << '\n';
  write_trace_csv(std::cout, trace);
  return 0;
}
