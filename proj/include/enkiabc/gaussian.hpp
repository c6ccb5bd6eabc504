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

#ifndef ENKIABC_GAUSSIAN_HPP
#define ENKIABC_GAUSSIAN_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "enkiabc/errors.hpp"
#include "enkiabc/rng.hpp"

/**
 * \file
 * \brief Dense Gaussian numerics shared by every estimator.
 *
 * Densities are evaluated through a Cholesky factor in log domain. When the
 * plain factorization fails, the jitter ladder adds lambda * mean(diag) * I for
 * lambda in {1e-10, 1e-6, 1e-4}; past that an IllConditionedError is thrown.
 */

namespace enkiabc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Log-domain stand-in for a likelihood or density that is exactly zero.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double x) noexcept { return x == kLogZero; }

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Symmetric matrix; symmetry is enforced on construction by averaging with the transpose.
class CovarianceMatrix {
 public:
  CovarianceMatrix() = default;

  explicit CovarianceMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) {
      throw DimensionError("covariance must be square");
    }
    m_ = 0.5 * (m_ + m_.transpose()).eval();
  }

  static CovarianceMatrix identity(Index d) { return CovarianceMatrix(Matrix::Identity(d, d)); }
  static CovarianceMatrix scalar(Index d, double v) { return CovarianceMatrix(v * Matrix::Identity(d, d)); }
  static CovarianceMatrix diagonal(const Vector& diag) { return CovarianceMatrix(Matrix(diag.asDiagonal())); }

  const Matrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

  friend CovarianceMatrix operator+(const CovarianceMatrix& a, const CovarianceMatrix& b) {
    if (a.dim() != b.dim()) {
      throw DimensionError("covariance dimensions differ");
    }
    return CovarianceMatrix(a.m_ + b.m_);
  }
  friend CovarianceMatrix operator*(double s, const CovarianceMatrix& a) { return CovarianceMatrix(s * a.m_); }

 private:
  Matrix m_;
};

/// Ratio of the extreme absolute eigenvalues of a symmetric matrix.
inline double condition_estimate(const Matrix& a) {
  if (!a.allFinite()) {
    return std::numeric_limits<double>::infinity();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
  const Vector ev = eig.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

/// Lower Cholesky factor plus the jitter that was needed to obtain it.
struct CholeskyFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;

  Index dim() const { return llt.matrixLLT().rows(); }
  Matrix lower() const { return llt.matrixL(); }
  double log_det() const { return 2.0 * llt.matrixLLT().diagonal().array().log().sum(); }

  /// Squared Mahalanobis norm of r under the factored matrix.
  double quad(const Vector& r) const { return llt.matrixL().solve(r).squaredNorm(); }
};

inline CholeskyFactor cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("cholesky: matrix must be square");
  }
  if (!a.allFinite()) {
    throw IllConditionedError("cholesky: non-finite entries", std::numeric_limits<double>::infinity());
  }
  CholeskyFactor f;
  f.llt.compute(a);
  if (f.llt.info() == Eigen::Success) {
    return f;
  }
  const double scale = a.diagonal().mean();
  if (scale > 0.0) {
    for (const double lambda : {1e-10, 1e-6, 1e-4}) {
      const double jitter = lambda * scale;
      f.llt.compute(a + jitter * Matrix::Identity(a.rows(), a.cols()));
      if (f.llt.info() == Eigen::Success) {
        f.jitter = jitter;
        return f;
      }
    }
  }
  throw IllConditionedError("cholesky failed after jitter", condition_estimate(a));
}

inline CholeskyFactor cholesky(const CovarianceMatrix& a) { return cholesky(a.matrix()); }

inline void check_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(what);
  }
}

/// log N(x | mean, cov).
inline double mvn_logpdf(const Vector& x, const Vector& mean, const CovarianceMatrix& cov) {
  check_same_length(x, mean, "mvn_logpdf: x and mean differ in length");
  if (cov.dim() != x.size()) {
    throw DimensionError("mvn_logpdf: covariance dimension mismatch");
  }
  const auto f = cholesky(cov);
  const auto d = static_cast<double>(x.size());
  return -0.5 * (d * kLog2Pi + f.log_det() + f.quad(x - mean));
}

/// A Gaussian with a cached factor, for evaluating the same density at many points.
class GaussianDensity {
 public:
  GaussianDensity(Vector mean, const CovarianceMatrix& cov) : mean_(std::move(mean)), factor_(cholesky(cov)) {
    if (cov.dim() != mean_.size()) {
      throw DimensionError("GaussianDensity: covariance dimension mismatch");
    }
    normalizer_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + factor_.log_det());
  }

  double logpdf(const Vector& x) const { return normalizer_ - 0.5 * factor_.quad(x - mean_); }

  const Vector& mean() const noexcept { return mean_; }
  const CholeskyFactor& factor() const noexcept { return factor_; }

 private:
  Vector mean_;
  CholeskyFactor factor_;
  double normalizer_ = 0.0;
};

/// One draw mean + L z. A zero covariance returns the mean exactly.
inline Vector sample_mvn(const Vector& mean, const CovarianceMatrix& cov, Rng& rng) {
  if (cov.dim() != mean.size()) {
    throw DimensionError("sample_mvn: covariance dimension mismatch");
  }
  if (cov.matrix().isZero(0.0)) {
    return mean;
  }
  const auto f = cholesky(cov);
  Vector z(mean.size());
  for (Index i = 0; i < z.size(); ++i) {
    z[i] = rng.normal();
  }
  return mean + f.llt.matrixL() * z;
}

/// First and second sample moments of an ensemble.
///
/// `mean`/`cov` describe the members; when images h^j are supplied the image
/// moments and the member-image cross-covariance are filled as well.
struct EnsembleMoments {
  Vector mean;
  CovarianceMatrix cov;
  std::optional<Matrix> cross_cov;
  std::optional<Vector> image_mean;
  std::optional<CovarianceMatrix> image_cov;
  Index sample_size = 0;

  const Vector& obs_mean() const { return image_mean ? *image_mean : mean; }
  const CovarianceMatrix& obs_cov() const { return image_cov ? *image_cov : cov; }
  const Matrix& state_obs_cov() const { return cross_cov ? *cross_cov : cov.matrix(); }
};

/// Unbiased (M - 1) sample moments; members are the columns of `members`.
inline EnsembleMoments ensemble_moments(const Matrix& members, const std::optional<Matrix>& images = std::nullopt) {
  const Index m = members.cols();
  if (m < 2) {
    throw PreconditionError("ensemble_moments: need at least two members");
  }
  EnsembleMoments out;
  out.sample_size = m;
  out.mean = members.rowwise().mean();
  const Matrix dx = members.colwise() - out.mean;
  const double norm = 1.0 / static_cast<double>(m - 1);
  out.cov = CovarianceMatrix(norm * dx * dx.transpose());
  if (images) {
    if (images->cols() != m) {
      throw DimensionError("ensemble_moments: images and members differ in count");
    }
    out.image_mean = images->rowwise().mean();
    const Matrix dh = images->colwise() - *out.image_mean;
    out.image_cov = CovarianceMatrix(norm * dh * dh.transpose());
    out.cross_cov = norm * dx * dh.transpose();
  }
  return out;
}

inline EnsembleMoments ensemble_moments(std::span<const Vector> members) {
  if (members.empty()) {
    throw PreconditionError("ensemble_moments: need at least two members");
  }
  Matrix x(members.front().size(), static_cast<Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j) {
    if (members[j].size() != x.rows()) {
      throw DimensionError("ensemble_moments: members differ in length");
    }
    x.col(static_cast<Index>(j)) = members[j];
  }
  return ensemble_moments(x);
}

/// Symmetric PSD square root; negative eigenvalues from rounding are clamped to zero.
inline Matrix symmetric_sqrt(const Matrix& a) {
  if (!a.allFinite()) {
    throw IllConditionedError("symmetric_sqrt: non-finite entries", std::numeric_limits<double>::infinity());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()));
  if (eig.info() != Eigen::Success) {
    throw IllConditionedError("symmetric_sqrt: eigendecomposition failed", condition_estimate(a));
  }
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

/// Numerically stable log(sum(exp(x))); kLogZero when every term is kLogZero.
inline double log_sum_exp(std::span<const double> x) {
  if (x.empty()) {
    return kLogZero;
  }
  const double hi = *std::max_element(x.begin(), x.end());
  if (is_log_zero(hi)) {
    return kLogZero;
  }
  if (!std::isfinite(hi)) {
    return hi;
  }
  double acc = 0.0;
  for (const double v : x) {
    acc += std::exp(v - hi);
  }
  return hi + std::log(acc);
}

inline double log_mean_exp(std::span<const double> x) {
  return log_sum_exp(x) - std::log(static_cast<double>(x.size()));
}

namespace detail {

// log rho(k, v) = -(k v / 2) log 2 - k (k - 1) / 4 log pi - sum_i lgamma((v - i + 1) / 2)
inline double log_rho(Index k, double v) {
  const auto kd = static_cast<double>(k);
  double out = -0.5 * kd * v * std::numbers::ln2 - 0.25 * kd * (kd - 1.0) * std::log(std::numbers::pi);
  for (Index i = 1; i <= k; ++i) {
    out -= std::lgamma(0.5 * (v - static_cast<double>(i) + 1.0));
  }
  return out;
}

}  // namespace detail

/**
 * Log of the Ghurye-Olkin unbiased estimator of N(y | mu, Sigma) given the
 * sample mean and (M - 1)-normalized sample covariance of M draws from
 * N(mu, Sigma). Returns kLogZero when (M - 1) Sigma_hat - (y - mu_hat)(y - mu_hat)^T / (1 - 1/M)
 * is not positive definite.
 */
inline double ghurye_olkin_logdensity(const Vector& y, const Vector& mu_hat, const CovarianceMatrix& sigma_hat,
                                      Index sample_size) {
  check_same_length(y, mu_hat, "ghurye_olkin_logdensity: y and mean differ in length");
  const Index d = y.size();
  if (sigma_hat.dim() != d) {
    throw DimensionError("ghurye_olkin_logdensity: covariance dimension mismatch");
  }
  if (sample_size <= d + 3) {
    throw PreconditionError("ghurye_olkin_logdensity: requires M > d + 3");
  }
  const auto md = static_cast<double>(sample_size);
  const auto dd = static_cast<double>(d);
  const Matrix scatter = (md - 1.0) * sigma_hat.matrix();
  Eigen::LLT<Matrix> llt(scatter);
  if (llt.info() != Eigen::Success) {
    return kLogZero;
  }
  const double log_det_scatter = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  // det(B - v v^T / c) = det(B) (1 - v^T B^{-1} v / c)
  const double shrink = 1.0 - llt.matrixL().solve(y - mu_hat).squaredNorm() / (1.0 - 1.0 / md);
  if (!(shrink > 0.0)) {
    return kLogZero;
  }
  const double log_det_psi = log_det_scatter + std::log(shrink);
  return -0.5 * dd * kLog2Pi + detail::log_rho(d, md - 2.0) - detail::log_rho(d, md - 1.0) -
         0.5 * dd * std::log(1.0 - 1.0 / md) - 0.5 * (md - dd - 2.0) * log_det_scatter +
         0.5 * (md - dd - 3.0) * log_det_psi;
}

}  // namespace enkiabc

#endif
