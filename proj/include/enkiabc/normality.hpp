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

#ifndef ENKIABC_NORMALITY_HPP
#define ENKIABC_NORMALITY_HPP

#include <cmath>

#include "enkiabc/gaussian.hpp"

namespace enkiabc {

struct NormalityTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  /// False when the sample covariance is singular; statistic and p_value are then meaningless.
  bool applicable = true;
};

/**
 * Henze-Zirkler test of multivariate normality.
 *
 * Members are the columns of `sample` (d x n). Uses the biased (1/n) sample
 * covariance, smoothing beta = ((2d + 1) n / 4)^{1/(d + 4)} / sqrt(2), and the
 * log-normal approximation of the null distribution with the published first
 * two moments of the statistic.
 */
inline NormalityTestResult hz_normality_test(const Matrix& sample, double significance) {
  const Index d = sample.rows();
  const Index n = sample.cols();
  if (n <= d + 1) {
    throw PreconditionError("hz_normality_test: requires n > d + 1");
  }
  NormalityTestResult out;
  const Vector mean = sample.rowwise().mean();
  const Matrix centered = sample.colwise() - mean;
  const Matrix s = centered * centered.transpose() / static_cast<double>(n);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0) ||
      llt.rcond() < 1e-12) {
    out.applicable = false;
    return out;
  }
  const Matrix y = llt.matrixL().solve(centered);

  const auto dd = static_cast<double>(d);
  const auto nd = static_cast<double>(n);
  const double beta = std::pow((2.0 * dd + 1.0) * nd / 4.0, 1.0 / (dd + 4.0)) / std::numbers::sqrt2;
  const double b2 = beta * beta;

  const Vector sq = y.colwise().squaredNorm().transpose();
  double pair_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double dij = sq[i] + sq[j] - 2.0 * y.col(i).dot(y.col(j));
      pair_sum += std::exp(-0.5 * b2 * std::max(dij, 0.0));
    }
  }
  pair_sum = 2.0 * pair_sum + nd;  // diagonal terms contribute exp(0) each
  double single_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    single_sum += std::exp(-b2 / (2.0 * (1.0 + b2)) * sq[i]);
  }
  out.statistic = pair_sum / nd - 2.0 * std::pow(1.0 + b2, -0.5 * dd) * single_sum +
                  nd * std::pow(1.0 + 2.0 * b2, -0.5 * dd);

  const double a = 1.0 + 2.0 * b2;
  const double b4 = b2 * b2;
  const double b8 = b4 * b4;
  const double w = (1.0 + b2) * (1.0 + 3.0 * b2);
  const double mu = 1.0 - std::pow(a, -0.5 * dd) * (1.0 + dd * b2 / a + dd * (dd + 2.0) * b4 / (2.0 * a * a));
  const double var = 2.0 * std::pow(1.0 + 4.0 * b2, -0.5 * dd) +
                     2.0 * std::pow(a, -dd) *
                         (1.0 + 2.0 * dd * b4 / (a * a) + 3.0 * dd * (dd + 2.0) * b8 / (4.0 * a * a * a * a)) -
                     4.0 * std::pow(w, -0.5 * dd) *
                         (1.0 + 3.0 * dd * b4 / (2.0 * w) + dd * (dd + 2.0) * b8 / (2.0 * w * w));
  const double log_mu = std::log(mu * mu / std::sqrt(var + mu * mu));
  const double log_sd = std::sqrt(std::log((var + mu * mu) / (mu * mu)));
  if (out.statistic <= 0.0) {
    out.p_value = 1.0;
  } else {
    const double z = (std::log(out.statistic) - log_mu) / log_sd;
    out.p_value = 0.5 * std::erfc(z / std::numbers::sqrt2);
  }
  out.reject = out.p_value < significance;
  return out;
}

}  // namespace enkiabc

#endif
