#pragma once

// Dense full-N reference computations. These build the N x N covariance
// explicitly and cost O(N^3); they exist to cross-check the unique-n path.

#include <cmath>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"
#include "hetgp/hom.hpp"
#include "hetgp/kernel.hpp"
#include "hetgp/linalg.hpp"

namespace hetgp::dense {

struct DenseTerms {
  double quad = 0.0;     // Y' (C_N + Lambda_N)^-1 Y
  double log_det = 0.0;  // log|C_N + Lambda_N|
  double nu_hat = 0.0;
  double nll = 0.0;
};

inline DenseTerms terms(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        const KernelSpec& kernel, const Eigen::VectorXd& lambdaN) {
  if (X.rows() != Y.size() || lambdaN.size() != Y.size() || Y.size() == 0) {
    throw ValidationError("dense: X, Y and lambda sizes disagree");
  }
  Eigen::MatrixXd K = corr_matrix(kernel, X);
  K.diagonal() += lambdaN;
  const SpdFactor chol(K);
  DenseTerms t;
  const double N = static_cast<double>(Y.size());
  t.quad = Y.dot(chol.solve(Y));
  t.log_det = chol.log_det();
  t.nu_hat = t.quad / N;
  t.nll = 0.5 * N * detail::kLog2Pi + 0.5 * N * std::log(t.nu_hat) + 0.5 * t.log_det + 0.5 * N;
  return t;
}

/// Negative concentrated log-likelihood on the raw data with per-observation
/// nuggets lambdaN.
inline double dense_nll(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        const KernelSpec& kernel, const Eigen::VectorXd& lambdaN) {
  return terms(X, Y, kernel, lambdaN).nll;
}

/// Homoskedastic version with a constant nugget g.
inline double dense_nll(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        const KernelSpec& kernel, double g) {
  return dense_nll(X, Y, kernel, Eigen::VectorXd::Constant(Y.size(), g));
}

/// Full-N predictive mean and epistemic variance; nugs is left at zero.
inline Predictions dense_predict(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                 const KernelSpec& kernel, const Eigen::VectorXd& lambdaN,
                                 const Eigen::MatrixXd& Xnew) {
  Eigen::MatrixXd K = corr_matrix(kernel, X);
  K.diagonal() += lambdaN;
  const SpdFactor chol(K);
  const Eigen::VectorXd alpha = chol.solve(Y);
  const double nu = Y.dot(alpha) / static_cast<double>(Y.size());
  const Eigen::MatrixXd c = corr_matrix(kernel, X, Xnew);
  const Eigen::MatrixXd Kc = chol.solve(c);
  Predictions p;
  p.mean = c.transpose() * alpha;
  p.sd2 = (nu * (1.0 - (c.array() * Kc.array()).colwise().sum())).matrix().transpose();
  p.sd2 = p.sd2.cwiseMax(0.0);
  p.nugs = Eigen::VectorXd::Zero(Xnew.rows());
  return p;
}

/// Expand per-site nuggets to per-observation nuggets following mult.
inline Eigen::VectorXd expand_lambda(const Eigen::VectorXd& lambda_n, const Eigen::VectorXi& mult) {
  Eigen::VectorXd out(mult.sum());
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < mult.size(); ++i) {
    out.segment(row, mult[i]).setConstant(lambda_n[i]);
    row += mult[i];
  }
  return out;
}

}  // namespace hetgp::dense
