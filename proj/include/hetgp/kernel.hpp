#pragma once

// Stationary correlation families with per-dimension lengthscales.
//
// Conventions:
//   SquaredExponential  c(x, x') = exp(-sum_k (x_k - x'_k)^2 / theta_k)
//   Matern52            c(x, x') = prod_k (1 + sqrt5 r_k + 5 r_k^2 / 3) exp(-sqrt5 r_k),
//                       r_k = |x_k - x'_k| / theta_k
//
// The squared-exponential lengthscale divides the *squared* distance, the
// Matern lengthscale divides the absolute distance.

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"

namespace hetgp {

enum class KernelFamily { SquaredExponential, Matern52 };

inline std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SquaredExponential:
      return "sqexp";
    case KernelFamily::Matern52:
      return "matern52";
  }
  return "unknown";
}

inline KernelFamily kernel_family_from_string(std::string_view name) {
  if (name == "sqexp" || name == "Gaussian" || name == "SquaredExponential") {
    return KernelFamily::SquaredExponential;
  }
  if (name == "matern52" || name == "Matern5_2" || name == "Matern52") {
    return KernelFamily::Matern52;
  }
  throw ValidationError("unknown kernel family '" + std::string(name) + "'");
}

struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  Eigen::VectorXd lengthscales;

  KernelSpec() = default;
  KernelSpec(KernelFamily f, Eigen::VectorXd theta) : family(f), lengthscales(std::move(theta)) {
    validate();
  }

  Eigen::Index dim() const noexcept { return lengthscales.size(); }

  void validate() const {
    if (lengthscales.size() == 0) {
      throw ValidationError("kernel: empty lengthscale vector");
    }
    for (Eigen::Index k = 0; k < lengthscales.size(); ++k) {
      if (!(lengthscales[k] > 0.0) || !std::isfinite(lengthscales[k])) {
        throw ValidationError("kernel: lengthscales must be positive and finite");
      }
    }
  }
};

namespace detail {

inline constexpr double kSqrt5 = 2.2360679774997896964;

// One-dimensional Matern 5/2 factor at scaled distance r >= 0.
inline double matern52_factor(double r) noexcept {
  const double s = kSqrt5 * r;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

// d/dtheta of the one-dimensional Matern factor, divided by the factor itself.
inline double matern52_dlog_factor(double dist, double theta) noexcept {
  const double r = dist / theta;
  const double s = kSqrt5 * r;
  return (5.0 / 3.0) * r * r * (1.0 + s) / (theta * (1.0 + s + s * s / 3.0));
}

template <typename A, typename B>
double corr_unchecked(const KernelSpec& spec, const Eigen::MatrixBase<A>& x,
                      const Eigen::MatrixBase<B>& xp) {
  const Eigen::Index d = spec.dim();
  if (spec.family == KernelFamily::SquaredExponential) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = x(k) - xp(k);
      s += diff * diff / spec.lengthscales[k];
    }
    return std::exp(-s);
  }
  double c = 1.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    c *= matern52_factor(std::abs(x(k) - xp(k)) / spec.lengthscales[k]);
  }
  return c;
}

}  // namespace detail

/// Correlation between two points, in (0, 1].
template <typename A, typename B>
double corr(const KernelSpec& spec, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
  spec.validate();
  if (x.size() != spec.dim() || xp.size() != spec.dim()) {
    throw ValidationError("corr: point dimension does not match kernel dimension");
  }
  return detail::corr_unchecked(spec, x, xp);
}

/// Cross-correlation matrix between the rows of X1 and the rows of X2.
inline Eigen::MatrixXd corr_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X1,
                                   const Eigen::MatrixXd& X2) {
  spec.validate();
  if (X1.cols() != spec.dim() || X2.cols() != spec.dim()) {
    throw ValidationError("corr_matrix: input column count does not match kernel dimension");
  }
  Eigen::MatrixXd C(X1.rows(), X2.rows());
  for (Eigen::Index j = 0; j < X2.rows(); ++j) {
    for (Eigen::Index i = 0; i < X1.rows(); ++i) {
      C(i, j) = detail::corr_unchecked(spec, X1.row(i), X2.row(j));
    }
  }
  return C;
}

/// Symmetric correlation matrix of X with itself (unit diagonal).
inline Eigen::MatrixXd corr_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X) {
  spec.validate();
  if (X.cols() != spec.dim()) {
    throw ValidationError("corr_matrix: input column count does not match kernel dimension");
  }
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd C(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    C(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = detail::corr_unchecked(spec, X.row(i), X.row(j));
      C(i, j) = v;
      C(j, i) = v;
    }
  }
  return C;
}

/// Elementwise derivative of corr_matrix(spec, X) with respect to lengthscale k.
///
/// If the correlation matrix is already at hand it can be passed in to avoid
/// recomputing it.
inline Eigen::MatrixXd corr_matrix_dtheta(const KernelSpec& spec, const Eigen::MatrixXd& X,
                                          Eigen::Index k, const Eigen::MatrixXd* C = nullptr) {
  spec.validate();
  if (X.cols() != spec.dim()) {
    throw ValidationError("corr_matrix_dtheta: input column count does not match kernel dimension");
  }
  if (k < 0 || k >= spec.dim()) {
    throw ValidationError("corr_matrix_dtheta: lengthscale index out of range");
  }
  Eigen::MatrixXd local;
  if (C == nullptr) {
    local = corr_matrix(spec, X);
    C = &local;
  }
  const Eigen::Index n = X.rows();
  const double theta = spec.lengthscales[k];
  Eigen::MatrixXd dC = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double diff = X(i, k) - X(j, k);
      double v;
      if (spec.family == KernelFamily::SquaredExponential) {
        v = (*C)(i, j) * diff * diff / (theta * theta);
      } else {
        v = (*C)(i, j) * detail::matern52_dlog_factor(std::abs(diff), theta);
      }
      dC(i, j) = v;
      dC(j, i) = v;
    }
  }
  return dC;
}

}  // namespace hetgp
