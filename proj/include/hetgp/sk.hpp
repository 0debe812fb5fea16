#pragma once

// Stochastic kriging baseline: empirical replicate variances plugged into the
// kriging equations, with a separate interpolating GP for the variance map.
//
//   K = nu C_n + diag(sigma2_hat / a)
//   -log L = 1/2 Ybar' K^-1 Ybar + 1/2 log|K| + n/2 log 2 pi
//
// minimized over (theta, log nu).

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"
#include "hetgp/hom.hpp"
#include "hetgp/kernel.hpp"
#include "hetgp/linalg.hpp"
#include "hetgp/optim.hpp"
#include "hetgp/repdesign.hpp"

namespace hetgp {

/// Bias-adjusted per-site variances a_i s_i^2 / (a_i - 1).
inline Eigen::VectorXd sk_sigma2(const ReplicatedDesign& design) {
  design.validate();
  if ((design.mult.array() < 2).any()) {
    throw ValidationError("SK requires replication: every site needs at least 2 replicates");
  }
  const Eigen::ArrayXd a = design.mult_d().array();
  return (a * design.S2.array() / (a - 1.0)).matrix();
}

class SKModel {
 public:
  static SKModel build(ReplicatedDesign design, KernelSpec kernel, double nu, HomModel variance_gp) {
    SKModel m(std::move(variance_gp));
    m.sigma2_hat_ = sk_sigma2(design);
    m.kernel_ = std::move(kernel);
    m.nu_ = nu;
    Eigen::MatrixXd K = nu * corr_matrix(m.kernel_, design.X0);
    K.diagonal() += (m.sigma2_hat_.array() / design.mult_d().array()).matrix();
    m.chol_.compute(K);
    m.alpha_ = m.chol_.solve(design.Z0);
    m.design_ = std::move(design);
    return m;
  }

  const KernelSpec& kernel() const noexcept { return kernel_; }
  double nu() const noexcept { return nu_; }
  const Eigen::VectorXd& sigma2_hat() const noexcept { return sigma2_hat_; }
  const HomModel& variance_gp() const noexcept { return variance_gp_; }
  const ReplicatedDesign& design() const noexcept { return design_; }
  const OptResult& opt_result() const noexcept { return opt_; }
  void set_opt_result(OptResult r) { opt_ = std::move(r); }

  Predictions predict(const Eigen::MatrixXd& Xnew) const {
    if (Xnew.cols() != design_.dim()) {
      throw ValidationError("sk_predict: Xnew dimension does not match the model");
    }
    const Eigen::MatrixXd c = nu_ * corr_matrix(kernel_, design_.X0, Xnew);
    Predictions p;
    p.mean = c.transpose() * alpha_;
    const Eigen::MatrixXd Kc = chol_.solve(c);
    p.sd2 = (nu_ - (c.array() * Kc.array()).colwise().sum()).matrix().transpose();
    p.sd2 = p.sd2.cwiseMax(0.0);
    p.nugs = variance_gp_.predict(Xnew).mean.cwiseMax(0.0);
    return p;
  }

 private:
  explicit SKModel(HomModel variance_gp) : variance_gp_(std::move(variance_gp)) {}

  KernelSpec kernel_;
  double nu_ = 0.0;
  Eigen::VectorXd sigma2_hat_, alpha_;
  ReplicatedDesign design_;
  SpdFactor chol_;
  HomModel variance_gp_;
  OptResult opt_;
};

namespace detail {

// Value and gradient over (theta, log nu).
inline double sk_value(const KernelSpec& kernel, double log_nu, const Eigen::VectorXd& noise,
                       const ReplicatedDesign& design, Eigen::VectorXd* grad) {
  const double nu = std::exp(log_nu);
  const Eigen::MatrixXd C = corr_matrix(kernel, design.X0);
  Eigen::MatrixXd K = nu * C;
  K.diagonal() += noise;
  const SpdFactor chol(K);
  const Eigen::VectorXd alpha = chol.solve(design.Z0);
  const double n = static_cast<double>(design.n());
  const double f = 0.5 * design.Z0.dot(alpha) + 0.5 * chol.log_det() + 0.5 * n * kLog2Pi;
  if (grad != nullptr) {
    const Eigen::Index d = design.dim();
    const Eigen::MatrixXd Ki = chol.inverse();
    grad->resize(d + 1);
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::MatrixXd dC = corr_matrix_dtheta(kernel, design.X0, k, &C);
      (*grad)[k] = nu * (-0.5 * alpha.dot(dC * alpha) + 0.5 * trace_of_product(Ki, dC));
    }
    (*grad)[d] = nu * (-0.5 * alpha.dot(C * alpha) + 0.5 * trace_of_product(Ki, C));
  }
  return f;
}

}  // namespace detail

/// Negative pre-averaged log-likelihood of the SK model.
inline double sk_nll(const KernelSpec& kernel, double nu, const ReplicatedDesign& design) {
  const Eigen::VectorXd noise = sk_sigma2(design).cwiseQuotient(design.mult_d());
  if (!(nu > 0.0)) {
    throw ValidationError("sk_nll: nu must be positive");
  }
  return detail::sk_value(kernel, std::log(nu), noise, design, nullptr);
}

/// Fit the SK mean GP over (theta, nu) within the lengthscale part of bounds,
/// then an interpolating variance GP on (X0, sigma2_hat).
inline SKModel sk_fit(const ReplicatedDesign& design, const HomBounds& bounds,
                      const HomSettings& settings = {}) {
  const Eigen::VectorXd sigma2 = sk_sigma2(design);
  const Eigen::Index d = design.dim();
  bounds.validate(d);
  const Eigen::VectorXd noise = sigma2.cwiseQuotient(design.mult_d());
  const KernelFamily family = settings.family;

  double scale = detail::sample_variance(design.Z0);
  if (!(scale > 0.0)) {
    scale = std::max(noise.mean(), 1.0);
  }
  OptProblem prob;
  prob.lower.resize(d + 1);
  prob.upper.resize(d + 1);
  prob.lower.head(d) = bounds.theta_lower;
  prob.upper.head(d) = bounds.theta_upper;
  prob.lower[d] = std::log(scale) - std::log(1e4);
  prob.upper[d] = std::log(scale) + std::log(1e4);
  prob.max_iter = settings.optim.max_iter;
  prob.tol_f = settings.optim.tol_f;
  prob.tol_g = settings.optim.tol_g;
  prob.objective = [&design, &noise, d, family](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
    return detail::sk_value(KernelSpec(family, p.head(d)), p[d], noise, design, grad);
  };
  Eigen::VectorXd x0(d + 1);
  const auto [theta0, g0] = default_hom_init(design, family, bounds);
  x0.head(d) = settings.theta_init.value_or(theta0);
  x0[d] = std::log(scale);

  OptResult res;
  try {
    res = minimize(prob, x0);
  } catch (const ValidationError& e) {
    throw ConvergenceError(std::string("sk_fit: ") + e.what(), x0,
                           std::numeric_limits<double>::quiet_NaN());
  }
  if (res.status == OptStatus::LineSearchFail && res.iterations == 0) {
    throw ConvergenceError("sk_fit: optimizer made no progress", res.x_opt, res.f_opt);
  }

  const ReplicatedDesign vdesign = unreplicated(design.X0, sigma2);
  HomSettings vs;
  vs.family = family;
  vs.optim = settings.optim;
  vs.fix_g = true;
  vs.g_init = std::sqrt(std::numeric_limits<double>::epsilon());
  HomModel vgp = hom_fit(vdesign, default_hom_bounds(vdesign, family), vs);

  SKModel m = SKModel::build(design, KernelSpec(family, res.x_opt.head(d)), std::exp(res.x_opt[d]),
                             std::move(vgp));
  m.set_opt_result(std::move(res));
  return m;
}

inline SKModel sk_fit(const ReplicatedDesign& design, const HomSettings& settings = {}) {
  return sk_fit(design, default_hom_bounds(design, settings.family), settings);
}

inline Predictions sk_predict(const SKModel& model, const Eigen::MatrixXd& Xnew) {
  return model.predict(Xnew);
}

}  // namespace hetgp
