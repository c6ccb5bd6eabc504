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

#ifndef ENKIABC_TESTS_TEST_UTIL_HPP
#define ENKIABC_TESTS_TEST_UTIL_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace testutil {

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (const double v : x) {
    s += v;
  }
  return s / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (const double v : x) {
    s += (v - m) * (v - m);
  }
  return s / static_cast<double>(x.size() - 1);
}

inline double std_error(const std::vector<double>& x) { return std::sqrt(variance(x) / static_cast<double>(x.size())); }

inline double normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<double>(), z); }

inline double normal_pdf(double x, double mean, double sd) {
  return boost::math::pdf(boost::math::normal_distribution<double>(mean, sd), x);
}

/// Asymptotic Kolmogorov survival function Q(lambda).
inline double kolmogorov_sf(double lambda) {
  if (lambda < 1e-3) {
    return 1.0;
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    s += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(s, 0.0, 1.0);
}

/// One-sample KS p-value against a continuous CDF.
inline double ks_pvalue(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double sq = std::sqrt(n);
  return kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
}

/// Pearson chi-square goodness-of-fit p-value.
inline double chi_square_pvalue(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  const boost::math::chi_squared_distribution<double> chi(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(chi, stat));
}

}  // namespace testutil

#endif
