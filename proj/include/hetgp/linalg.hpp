#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"

namespace hetgp {

/// Cholesky factorization of a symmetric positive definite matrix with a
/// bounded jitter fallback.
///
/// If the plain factorization fails, 1e-8 * mean(diag) is added to the
/// diagonal and the attempt repeated, doubling the jitter up to six times.
class SpdFactor {
 public:
  static constexpr double kBaseJitter = 1e-8;
  static constexpr int kMaxJitterRetries = 6;

  SpdFactor() = default;

  explicit SpdFactor(const Eigen::MatrixXd& A) { compute(A); }

  void compute(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols() || A.rows() == 0) {
      throw ValidationError("SpdFactor: matrix must be square and non-empty");
    }
    if (!A.allFinite()) {
      throw FactorizationError("SpdFactor: matrix has non-finite entries");
    }
    jitter_ = 0.0;
    llt_.compute(A);
    if (llt_.info() == Eigen::Success && diag_positive()) {
      return;
    }
    const double base = kBaseJitter * A.diagonal().mean();
    double jitter = base > 0.0 ? base : kBaseJitter;
    for (int attempt = 0; attempt <= kMaxJitterRetries; ++attempt) {
      Eigen::MatrixXd B = A;
      B.diagonal().array() += jitter;
      llt_.compute(B);
      if (llt_.info() == Eigen::Success && diag_positive()) {
        jitter_ = jitter;
        return;
      }
      jitter *= 2.0;
    }
    throw FactorizationError("SpdFactor: Cholesky failed after maximum jitter retries");
  }

  Eigen::Index size() const { return llt_.matrixLLT().rows(); }

  /// Jitter that was added to the diagonal (0 if none was needed).
  double jitter() const noexcept { return jitter_; }

  template <typename Rhs>
  auto solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }

  Eigen::MatrixXd inverse() const {
    return llt_.solve(Eigen::MatrixXd::Identity(size(), size()));
  }

  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

  /// Lower-triangular factor L with A = L L^T.
  Eigen::MatrixXd lower() const { return llt_.matrixL(); }

 private:
  bool diag_positive() const {
    const auto d = llt_.matrixLLT().diagonal();
    return (d.array() > 0.0).all() && d.allFinite();
  }

  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Trace of A * B for symmetric B without forming the product.
inline double trace_of_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  return A.cwiseProduct(B.transpose()).sum();
}

}  // namespace hetgp
