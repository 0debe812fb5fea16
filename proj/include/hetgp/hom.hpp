#pragma once

// Homoskedastic GP on the unique-n representation of a replicated design.
//
// With K_N + Sigma_N = nu (C_N + Lambda_N), the concentrated negative
// log-likelihood is evaluated through
//
//   Upsilon_n = C_n + A_n^-1 Lambda_n
//   nu_hat_N  = N^-1 (sum_i a_i s_i^2 / lambda_i + Ybar' Upsilon_n^-1 Ybar)
//   -log L    = N/2 log nu_hat_N + 1/2 sum_i [(a_i - 1) log lambda_i + log a_i]
//               + 1/2 log|Upsilon_n| + N/2 (1 + log 2 pi)
//
// which is exactly the full-N value but costs O(n^3) instead of O(N^3).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"
#include "hetgp/kernel.hpp"
#include "hetgp/linalg.hpp"
#include "hetgp/optim.hpp"
#include "hetgp/repdesign.hpp"

namespace hetgp {

/// Predictive summary at one location.
struct Prediction {
  double mean = 0.0;
  double sd2 = 0.0;   // epistemic variance of the latent f
  double nugs = 0.0;  // noise variance r(x)

  double total_var() const noexcept { return sd2 + nugs; }
};

/// Predictions at m locations, stored column-wise.
struct Predictions {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd2;
  Eigen::VectorXd nugs;

  Eigen::Index size() const noexcept { return mean.size(); }
  Prediction at(Eigen::Index i) const { return {mean[i], sd2[i], nugs[i]}; }
  Eigen::VectorXd total_var() const { return sd2 + nugs; }
};

/// Box for the homoskedastic hyperparameters.
struct HomBounds {
  Eigen::VectorXd theta_lower;
  Eigen::VectorXd theta_upper;
  double g_lower = 0.0;
  double g_upper = 0.0;

  void validate(Eigen::Index d) const {
    if (theta_lower.size() != d || theta_upper.size() != d) {
      throw ValidationError("bounds: lengthscale bounds must have one entry per input dimension");
    }
    if (!(theta_lower.array() > 0.0).all() || !(theta_lower.array() < theta_upper.array()).all()) {
      throw ValidationError("bounds: require 0 < theta_lower < theta_upper");
    }
    if (!(g_lower > 0.0) || !(g_lower < g_upper)) {
      throw ValidationError("bounds: require 0 < g_lower < g_upper");
    }
  }
};

struct OptSettings {
  int max_iter = 100;
  double tol_f = 1e-8;
  double tol_g = 1e-5;
};

struct HomSettings {
  KernelFamily family = KernelFamily::SquaredExponential;
  OptSettings optim;
  std::optional<Eigen::VectorXd> theta_init;
  std::optional<double> g_init;
  /// Hold g at its initial value and fit lengthscales only.
  bool fix_g = false;
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

// Positive floor on quadratic forms entering a log.
inline constexpr double kTinyQuad = 1e-300;

inline Eigen::VectorXd column_ranges(const Eigen::MatrixXd& X) {
  Eigen::VectorXd r = X.colwise().maxCoeff() - X.colwise().minCoeff();
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    if (!(r[k] > 0.0)) {
      r[k] = 1.0;
    }
  }
  return r;
}

// Lengthscale that corresponds to a squared-distance fraction `frac` of the
// column range under each family's convention.
inline Eigen::VectorXd lengthscale_for(KernelFamily family, const Eigen::VectorXd& range,
                                       double frac) {
  if (family == KernelFamily::SquaredExponential) {
    return frac * range.array().square();
  }
  return std::sqrt(frac) * range.array();
}

inline double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) {
    return 0.0;
  }
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

/// Mean-field likelihood pieces for given C_n and per-site lambda.
struct MeanField {
  SpdFactor chol;          // Upsilon_n
  Eigen::VectorXd alpha;   // Upsilon_n^-1 Ybar
  double quad = 0.0;       // N nu_hat_N
  double nu_hat = 0.0;
  double nll = 0.0;        // -log L including constants

  MeanField(const ReplicatedDesign& design, const Eigen::MatrixXd& C,
            const Eigen::VectorXd& lambda) {
    const Eigen::VectorXd a = design.mult_d();
    Eigen::MatrixXd U = C;
    U.diagonal().array() += lambda.array() / a.array();
    chol.compute(U);
    alpha = chol.solve(design.Z0);
    quad = std::max(design.replicate_ss(lambda) + design.Z0.dot(alpha), kTinyQuad);
    const double N = static_cast<double>(design.N);
    nu_hat = quad / N;
    const double rep_det =
        ((a.array() - 1.0) * lambda.array().log() + a.array().log()).sum();
    nll = 0.5 * N * std::log(nu_hat) + 0.5 * rep_det + 0.5 * chol.log_det() +
          0.5 * N * (1.0 + kLog2Pi);
  }

  /// d(-log L)/d theta_k given dC_n/d theta_k and Upsilon_n^-1.
  double dlengthscale(const Eigen::MatrixXd& dC, const Eigen::MatrixXd& Ui) const {
    return -0.5 * alpha.dot(dC * alpha) / nu_hat + 0.5 * trace_of_product(Ui, dC);
  }

  /// d(-log L)/d lambda_i for every site.
  Eigen::VectorXd dlambda(const ReplicatedDesign& design, const Eigen::VectorXd& lambda,
                          const Eigen::MatrixXd& Ui) const {
    const Eigen::ArrayXd a = design.mult_d().array();
    const Eigen::ArrayXd lam = lambda.array();
    const Eigen::ArrayXd data_term =
        a * design.S2.array() / lam.square() + alpha.array().square() / a;
    return (-0.5 * data_term / nu_hat + 0.5 * (a - 1.0) / lam +
            0.5 * Ui.diagonal().array() / a)
        .matrix();
  }
};

}  // namespace detail

/// Default box: theta spans [1%, 200%] of the squared column range (converted
/// to each family's convention); g spans [sqrt(eps), 100].
inline HomBounds default_hom_bounds(const ReplicatedDesign& design, KernelFamily family) {
  design.validate();
  const Eigen::VectorXd range = detail::column_ranges(design.X0);
  HomBounds b;
  b.theta_lower = detail::lengthscale_for(family, range, 1e-2);
  b.theta_upper = detail::lengthscale_for(family, range, 2.0);
  b.g_lower = std::sqrt(std::numeric_limits<double>::epsilon());
  b.g_upper = 1e2;
  return b;
}

/// Default starting point: theta at 10% of the squared column range; g from
/// the replicate variances relative to var(Z0) when replicates exist, else 0.1.
inline std::pair<Eigen::VectorXd, double> default_hom_init(const ReplicatedDesign& design,
                                                           KernelFamily family,
                                                           const HomBounds& bounds) {
  const Eigen::VectorXd range = detail::column_ranges(design.X0);
  Eigen::VectorXd theta = detail::lengthscale_for(family, range, 0.1);
  theta = theta.cwiseMax(bounds.theta_lower).cwiseMin(bounds.theta_upper);
  double g = 0.1;
  const double vz = detail::sample_variance(design.Z0);
  if (design.has_replicates() && vz > 0.0) {
    double s = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < design.n(); ++i) {
      if (design.mult[i] > 1) {
        s += design.S2[i] * design.mult[i] / (design.mult[i] - 1.0);
        ++count;
      }
    }
    if (count > 0 && s > 0.0) {
      g = (s / count) / vz;
    }
  }
  g = std::clamp(g, bounds.g_lower, bounds.g_upper);
  return {theta, g};
}

namespace detail {

inline void check_hom_args(const KernelSpec& kernel, double g, const ReplicatedDesign& design) {
  design.validate();
  if (kernel.dim() != design.dim()) {
    throw ValidationError("hom_nll: kernel dimension does not match design");
  }
  if (!(g > 0.0)) {
    throw ValidationError("hom_nll: nugget must be positive");
  }
}

// Value and, when grad is non-null, gradient over (theta, g).
inline double hom_value(const KernelSpec& kernel, double g, const ReplicatedDesign& design,
                        Eigen::VectorXd* grad) {
  const Eigen::Index d = design.dim();
  const Eigen::MatrixXd C = corr_matrix(kernel, design.X0);
  const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(design.n(), g);
  const MeanField mf(design, C, lambda);
  if (grad != nullptr) {
    const Eigen::MatrixXd Ui = mf.chol.inverse();
    grad->resize(d + 1);
    for (Eigen::Index k = 0; k < d; ++k) {
      (*grad)[k] = mf.dlengthscale(corr_matrix_dtheta(kernel, design.X0, k, &C), Ui);
    }
    (*grad)[d] = mf.dlambda(design, lambda, Ui).sum();
  }
  return mf.nll;
}

}  // namespace detail

/// Negative concentrated log-likelihood of the homoskedastic model.
inline double hom_nll(const KernelSpec& kernel, double g, const ReplicatedDesign& design) {
  detail::check_hom_args(kernel, g, design);
  return detail::hom_value(kernel, g, design, nullptr);
}

/// Analytic gradient of hom_nll with respect to (theta_1..theta_d, g).
inline Eigen::VectorXd hom_nll_grad(const KernelSpec& kernel, double g,
                                    const ReplicatedDesign& design) {
  detail::check_hom_args(kernel, g, design);
  Eigen::VectorXd grad;
  detail::hom_value(kernel, g, design, &grad);
  return grad;
}

/// Fitted homoskedastic GP. Immutable once built.
class HomModel {
 public:
  /// Assemble a model (and its caches) at given hyperparameters.
  static HomModel build(ReplicatedDesign design, KernelSpec kernel, double g) {
    design.validate();
    kernel.validate();
    if (kernel.dim() != design.dim()) {
      throw ValidationError("HomModel: kernel dimension does not match design");
    }
    if (!(g > 0.0)) {
      throw ValidationError("HomModel: nugget must be positive");
    }
    HomModel m;
    const Eigen::MatrixXd C = corr_matrix(kernel, design.X0);
    const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(design.n(), g);
    detail::MeanField mf(design, C, lambda);
    m.nll_ = mf.nll;
    m.nu_hat_ = mf.nu_hat;
    m.alpha_ = std::move(mf.alpha);
    m.chol_ = std::move(mf.chol);
    m.kernel_ = std::move(kernel);
    m.design_ = std::move(design);
    m.g_ = g;
    return m;
  }

  const KernelSpec& kernel() const noexcept { return kernel_; }
  double g() const noexcept { return g_; }
  double nu_hat() const noexcept { return nu_hat_; }
  const ReplicatedDesign& design() const noexcept { return design_; }

  /// Negative log-likelihood at the stored parameters (constants included).
  double nll() const noexcept { return nll_; }
  double log_likelihood() const noexcept { return -nll_; }

  const OptResult& opt_result() const noexcept { return opt_; }
  void set_opt_result(OptResult r) { opt_ = std::move(r); }

  Predictions predict(const Eigen::MatrixXd& Xnew) const {
    if (Xnew.cols() != design_.dim()) {
      throw ValidationError("hom_predict: Xnew dimension does not match the model");
    }
    const Eigen::MatrixXd c = corr_matrix(kernel_, design_.X0, Xnew);  // n x m
    Predictions p;
    p.mean = c.transpose() * alpha_;
    const Eigen::MatrixXd Uc = chol_.solve(c);
    p.sd2 = (nu_hat_ * (1.0 - (c.array() * Uc.array()).colwise().sum())).matrix().transpose();
    p.sd2 = p.sd2.cwiseMax(0.0);
    p.nugs = Eigen::VectorXd::Constant(Xnew.rows(), nu_hat_ * g_);
    return p;
  }

 private:
  HomModel() = default;

  KernelSpec kernel_;
  double g_ = 0.0;
  double nu_hat_ = 0.0;
  double nll_ = 0.0;
  ReplicatedDesign design_;
  SpdFactor chol_;
  Eigen::VectorXd alpha_;
  OptResult opt_;
};

inline Predictions hom_predict(const HomModel& model, const Eigen::MatrixXd& Xnew) {
  return model.predict(Xnew);
}

/// Maximum-likelihood fit of (theta, g) by bound-constrained L-BFGS with
/// analytic gradients. OptResult::x_opt holds (log theta, log g).
inline HomModel hom_fit(const ReplicatedDesign& design, const HomBounds& bounds,
                        const HomSettings& settings = {}) {
  design.validate();
  const Eigen::Index d = design.dim();
  bounds.validate(d);
  auto [theta0, g0] = default_hom_init(design, settings.family, bounds);
  if (settings.theta_init) {
    if (settings.theta_init->size() != d) {
      throw ValidationError("hom_fit: theta_init has the wrong length");
    }
    theta0 = *settings.theta_init;
  }
  if (settings.g_init) {
    g0 = *settings.g_init;
  }
  if (!(theta0.array() > 0.0).all() || !(g0 > 0.0)) {
    throw ValidationError("hom_fit: initial lengthscales and nugget must be positive");
  }
  const bool fix_g = settings.fix_g;
  const Eigen::Index np = fix_g ? d : d + 1;

  // The search runs over (log theta, log g); the box maps exactly.
  OptProblem prob;
  prob.lower.resize(np);
  prob.upper.resize(np);
  prob.lower.head(d) = bounds.theta_lower.array().log().matrix();
  prob.upper.head(d) = bounds.theta_upper.array().log().matrix();
  if (!fix_g) {
    prob.lower[d] = std::log(bounds.g_lower);
    prob.upper[d] = std::log(bounds.g_upper);
  }
  prob.max_iter = settings.optim.max_iter;
  prob.tol_f = settings.optim.tol_f;
  prob.tol_g = settings.optim.tol_g;
  const KernelFamily family = settings.family;
  prob.objective = [&design, d, fix_g, g0, family](const Eigen::VectorXd& p,
                                                   Eigen::VectorXd* grad) {
    const Eigen::VectorXd theta = p.head(d).array().exp().matrix();
    const KernelSpec k(family, theta);
    const double g = fix_g ? g0 : std::exp(p[d]);
    if (grad == nullptr) {
      return detail::hom_value(k, g, design, nullptr);
    }
    Eigen::VectorXd full;
    const double f = detail::hom_value(k, g, design, &full);
    full.head(d) = full.head(d).cwiseProduct(theta);
    full[d] *= g;
    *grad = full.head(grad->size());
    return f;
  };

  Eigen::VectorXd x0(np);
  x0.head(d) = theta0.array().log().matrix();
  if (!fix_g) {
    x0[d] = std::log(g0);
  }
  OptResult res;
  try {
    res = minimize(prob, x0);
  } catch (const ValidationError& e) {
    throw ConvergenceError(std::string("hom_fit: ") + e.what(), x0,
                           std::numeric_limits<double>::quiet_NaN());
  }
  if (res.status == OptStatus::LineSearchFail && res.iterations == 0) {
    throw ConvergenceError("hom_fit: optimizer made no progress", res.x_opt, res.f_opt);
  }
  HomModel model =
      HomModel::build(design, KernelSpec(family, res.x_opt.head(d).array().exp().matrix()),
                      fix_g ? g0 : std::exp(res.x_opt[d]));
  model.set_opt_result(std::move(res));
  return model;
}

inline HomModel hom_fit(const ReplicatedDesign& design, const HomSettings& settings = {}) {
  return hom_fit(design, default_hom_bounds(design, settings.family), settings);
}

}  // namespace hetgp
