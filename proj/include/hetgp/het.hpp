#pragma once

// Heteroskedastic GP with GP-smoothed latent log-variances.
//
// Per-site nuggets are derived from free latents Delta_n through a GP
// smoother on the unique inputs:
//
//   Upsilon_(g) = C_(g) + g A_n^-1
//   log Lambda_n = C_(g) Upsilon_(g)^-1 Delta_n
//
// and all unknowns (theta, phi, g, Delta_n) are chosen by maximizing the
// concentrated joint log-likelihood: the mean-field term of the
// homoskedastic model with Lambda_n in place of g, plus the concentrated
// Gaussian log-density of Delta_n under the latent GP.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"
#include "hetgp/hom.hpp"
#include "hetgp/kernel.hpp"
#include "hetgp/linalg.hpp"
#include "hetgp/optim.hpp"
#include "hetgp/repdesign.hpp"

namespace hetgp {

/// How the noise lengthscales phi relate to the mean-field lengthscales theta.
enum class PhiMode {
  /// phi is free but bounded below by the lengthscales of the priming fit.
  LowerBoundTheta,
  /// phi is free within the lengthscale box.
  Free,
  /// phi = k * theta with a scalar k >= 1 optimized instead of phi.
  ScaledTheta,
};

struct HetParams {
  Eigen::VectorXd theta;
  Eigen::VectorXd phi;
  double g = 0.0;
  Eigen::VectorXd delta;
};

struct HetBounds {
  Eigen::VectorXd theta_lower, theta_upper;
  Eigen::VectorXd phi_lower, phi_upper;
  double g_lower = 0.0;
  double g_upper = 1e2;
  Eigen::VectorXd delta_lower, delta_upper;
  double k_lower = 1.0;
  double k_upper = 10.0;
};

struct HetSettings {
  KernelFamily family = KernelFamily::SquaredExponential;
  OptSettings optim;
  PhiMode phi_mode = PhiMode::LowerBoundTheta;
  /// Compare against the priming homoskedastic fit and fall back to it when
  /// its likelihood is higher.
  bool compare_hom = true;
  /// Box for the priming fit and for theta; defaults from the design.
  std::optional<HomBounds> mean_bounds;
  /// Upper bound on the smoothing nugget g (lower bound is 0).
  double g_upper = 1e2;
  /// Latent box is [min(delta0) - margin, max(delta0) + margin].
  double delta_margin = 5.0;
};

/// Output of the priming stage: starting point, search box and the priming
/// homoskedastic fit.
struct HetInit {
  HetParams params;
  /// Floored log residual variances log(s_i^2 + (ybar_i - mu_i)^2).
  Eigen::VectorXd delta0;
  HetBounds bounds;
  std::optional<HomModel> hom;
  std::optional<HomModel> noise_hom;
};

namespace detail {

inline void check_het_args(const KernelSpec& theta, const KernelSpec& phi, double g,
                           const Eigen::VectorXd& delta, const ReplicatedDesign& design) {
  design.validate();
  theta.validate();
  phi.validate();
  if (theta.dim() != design.dim() || phi.dim() != design.dim()) {
    throw ValidationError("het: kernel dimension does not match design");
  }
  if (delta.size() != design.n()) {
    throw ValidationError("het: latent vector length must equal the number of unique sites");
  }
  if (!delta.allFinite()) {
    throw ValidationError("het: non-finite latent values");
  }
  if (!(g >= 0.0) || !std::isfinite(g)) {
    throw ValidationError("het: smoothing nugget must be non-negative");
  }
}

/// Latent-GP smoother pieces shared by the objective, its gradient and the model.
struct Smoother {
  Eigen::MatrixXd Cg;
  SpdFactor chol;        // Upsilon_(g)
  Eigen::VectorXd beta;  // Upsilon_(g)^-1 Delta
  Eigen::VectorXd log_lambda;

  Smoother(const KernelSpec& phi, double g, const Eigen::VectorXd& delta,
           const ReplicatedDesign& design)
      : Cg(corr_matrix(phi, design.X0)) {
    Eigen::MatrixXd U = Cg;
    U.diagonal().array() += g / design.mult_d().array();
    chol.compute(U);
    beta = chol.solve(delta);
    // With g = 0 the smoother is the identity; avoid the round trip through a
    // possibly jittered factorization.
    log_lambda = g == 0.0 ? delta : Eigen::VectorXd(Cg * beta);
  }
};

struct HetEval {
  Smoother smoother;
  Eigen::MatrixXd Cn;
  Eigen::VectorXd lambda;
  MeanField mf;
  double nu_g = 0.0;
  double penalty = 0.0;  // -log density of Delta under the latent GP, concentrated
  double nll = 0.0;

  HetEval(const KernelSpec& theta, const KernelSpec& phi, double g, const Eigen::VectorXd& delta,
          const ReplicatedDesign& design)
      : smoother(phi, g, delta, design),
        Cn(corr_matrix(theta, design.X0)),
        lambda(smoother.log_lambda.array().exp().matrix()),
        mf(design, Cn, lambda) {
    const double n = static_cast<double>(design.n());
    nu_g = std::max(delta.dot(smoother.beta) / n, kTinyQuad);
    penalty = 0.5 * n * std::log(nu_g) + 0.5 * smoother.chol.log_det() + 0.5 * n * (1.0 + kLog2Pi);
    nll = mf.nll + penalty;
  }

  /// Gradient over (theta, phi, g, delta).
  Eigen::VectorXd gradient(const KernelSpec& theta, const KernelSpec& phi,
                           const ReplicatedDesign& design) const {
    const Eigen::Index d = design.dim();
    const Eigen::Index n = design.n();
    const Eigen::ArrayXd a = design.mult_d().array();
    const Eigen::MatrixXd Ui = mf.chol.inverse();
    const Eigen::MatrixXd Ugi = smoother.chol.inverse();
    const Eigen::VectorXd& beta = smoother.beta;

    Eigen::VectorXd grad(2 * d + 1 + n);
    for (Eigen::Index k = 0; k < d; ++k) {
      grad[k] = mf.dlengthscale(corr_matrix_dtheta(theta, design.X0, k, &Cn), Ui);
    }

    // Sensitivity of the mean-field term to log Lambda_n.
    const Eigen::VectorXd w = mf.dlambda(design, lambda, Ui).cwiseProduct(lambda);
    // log Lambda = C_g Ug^-1 Delta, so the pull-back of w through the smoother
    // is (C_g Ug^-1)' w = Ug^-1 C_g w.
    const Eigen::VectorXd u = Ugi * (smoother.Cg * w);

    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::MatrixXd dCg = corr_matrix_dtheta(phi, design.X0, k, &smoother.Cg);
      const Eigen::VectorXd dCg_beta = dCg * beta;
      grad[d + k] = (w - u).dot(dCg_beta) - 0.5 * beta.dot(dCg_beta) / nu_g +
                    0.5 * trace_of_product(Ugi, dCg);
    }

    const Eigen::ArrayXd beta_over_a = beta.array() / a;
    grad[2 * d] = -(u.array() * beta_over_a).sum() -
                  0.5 * (beta.array() * beta_over_a).sum() / nu_g +
                  0.5 * (Ugi.diagonal().array() / a).sum();

    grad.tail(n) = u + beta / nu_g;
    return grad;
  }
};

}  // namespace detail

/// Smoothed log-nuggets C_(g) (C_(g) + g A_n^-1)^-1 delta at the design sites.
inline Eigen::VectorXd smooth_latents(const Eigen::VectorXd& delta, const KernelSpec& phi, double g,
                                      const ReplicatedDesign& design) {
  design.validate();
  phi.validate();
  if (phi.dim() != design.dim() || delta.size() != design.n()) {
    throw ValidationError("smooth_latents: dimension mismatch");
  }
  if (!(g >= 0.0)) {
    throw ValidationError("smooth_latents: g must be non-negative");
  }
  return detail::Smoother(phi, g, delta, design).log_lambda;
}

/// Negative concentrated joint log-likelihood (mean field plus latent GP).
inline double het_njll(const KernelSpec& theta, const KernelSpec& phi, double g,
                       const Eigen::VectorXd& delta, const ReplicatedDesign& design) {
  detail::check_het_args(theta, phi, g, delta, design);
  return detail::HetEval(theta, phi, g, delta, design).nll;
}

/// Mean-field (unpenalized) log-likelihood log L at the induced Lambda_n.
inline double het_mean_loglik(const KernelSpec& theta, const KernelSpec& phi, double g,
                              const Eigen::VectorXd& delta, const ReplicatedDesign& design) {
  detail::check_het_args(theta, phi, g, delta, design);
  return -detail::HetEval(theta, phi, g, delta, design).mf.nll;
}

/// Analytic gradient of het_njll, ordered (theta, phi, g, delta).
inline Eigen::VectorXd het_njll_grad(const KernelSpec& theta, const KernelSpec& phi, double g,
                                     const Eigen::VectorXd& delta,
                                     const ReplicatedDesign& design) {
  detail::check_het_args(theta, phi, g, delta, design);
  return detail::HetEval(theta, phi, g, delta, design).gradient(theta, phi, design);
}

/// Fitted heteroskedastic GP. When `fallback()` is true the priming
/// homoskedastic model won the final likelihood comparison and predictions
/// come from it.
class HetModel {
 public:
  static HetModel build(ReplicatedDesign design, KernelSpec theta, KernelSpec phi, double g,
                        Eigen::VectorXd delta) {
    detail::check_het_args(theta, phi, g, delta, design);
    detail::HetEval ev(theta, phi, g, delta, design);
    HetModel m;
    m.njll_ = ev.nll;
    m.mean_loglik_ = -ev.mf.nll;
    m.nu_hat_ = ev.mf.nu_hat;
    m.nu_g_ = ev.nu_g;
    m.log_lambda_ = ev.smoother.log_lambda;
    m.beta_ = ev.smoother.beta;
    m.alpha_ = ev.mf.alpha;
    m.chol_ = std::move(ev.mf.chol);
    m.chol_g_ = std::move(ev.smoother.chol);
    m.kernel_mean_ = std::move(theta);
    m.kernel_noise_ = std::move(phi);
    m.g_ = g;
    m.delta_ = std::move(delta);
    m.design_ = std::move(design);
    return m;
  }

  const KernelSpec& kernel_mean() const noexcept { return kernel_mean_; }
  const KernelSpec& kernel_noise() const noexcept { return kernel_noise_; }
  double g() const noexcept { return g_; }
  const Eigen::VectorXd& delta() const noexcept { return delta_; }
  const Eigen::VectorXd& log_lambda() const noexcept { return log_lambda_; }
  double nu_hat() const noexcept { return nu_hat_; }
  double nu_g() const noexcept { return nu_g_; }
  const ReplicatedDesign& design() const noexcept { return design_; }

  /// Negative joint log-likelihood at the stored parameters.
  double njll() const noexcept { return njll_; }
  double joint_loglik() const noexcept { return -njll_; }
  /// Unpenalized mean-field log-likelihood.
  double mean_loglik() const noexcept { return mean_loglik_; }

  bool fallback() const noexcept { return hom_.has_value() && fallback_; }
  const std::optional<HomModel>& hom() const noexcept { return hom_; }
  void set_hom(HomModel hom, bool fallback) {
    hom_ = std::move(hom);
    fallback_ = fallback;
  }

  const OptResult& opt_result() const noexcept { return opt_; }
  void set_opt_result(OptResult r) { opt_ = std::move(r); }

  Predictions predict(const Eigen::MatrixXd& Xnew) const {
    if (fallback()) {
      return hom_->predict(Xnew);
    }
    if (Xnew.cols() != design_.dim()) {
      throw ValidationError("het_predict: Xnew dimension does not match the model");
    }
    const Eigen::MatrixXd c = corr_matrix(kernel_mean_, design_.X0, Xnew);
    const Eigen::MatrixXd cg = corr_matrix(kernel_noise_, design_.X0, Xnew);
    Predictions p;
    p.mean = c.transpose() * alpha_;
    const Eigen::MatrixXd Uc = chol_.solve(c);
    p.sd2 = (nu_hat_ * (1.0 - (c.array() * Uc.array()).colwise().sum())).matrix().transpose();
    p.sd2 = p.sd2.cwiseMax(0.0);
    p.nugs = nu_hat_ * (cg.transpose() * beta_).array().exp().matrix();
    return p;
  }

 private:
  HetModel() = default;

  KernelSpec kernel_mean_, kernel_noise_;
  double g_ = 0.0;
  Eigen::VectorXd delta_, log_lambda_, beta_, alpha_;
  double nu_hat_ = 0.0, nu_g_ = 0.0, njll_ = 0.0, mean_loglik_ = 0.0;
  ReplicatedDesign design_;
  SpdFactor chol_, chol_g_;
  std::optional<HomModel> hom_;
  bool fallback_ = false;
  OptResult opt_;
};

inline Predictions het_predict(const HetModel& model, const Eigen::MatrixXd& Xnew) {
  return model.predict(Xnew);
}

/// Priming stage: a homoskedastic fit supplies theta and residual-based
/// latents; a second homoskedastic fit on the latents supplies g and phi.
inline HetInit het_init(const ReplicatedDesign& design, const HetSettings& settings = {}) {
  design.validate();
  const Eigen::Index d = design.dim();
  const HomBounds mb = settings.mean_bounds.value_or(default_hom_bounds(design, settings.family));
  mb.validate(d);

  HomSettings hs;
  hs.family = settings.family;
  hs.optim = settings.optim;
  HetInit init;
  init.hom = hom_fit(design, mb, hs);
  const HomModel& hom = *init.hom;
  const Eigen::VectorXd theta0 = hom.kernel().lengthscales;

  // (1/a_i) sum_j (mu_i - y_ij)^2 = s_i^2 + (ybar_i - mu_i)^2
  const Eigen::VectorXd mu = hom.predict(design.X0).mean;
  const double floor = std::log(std::numeric_limits<double>::epsilon());
  Eigen::VectorXd delta0 =
      (design.S2.array() + (design.Z0 - mu).array().square()).log().matrix();
  delta0 = delta0.cwiseMax(floor);
  // Latents live on the scaled-nugget scale lambda = tau^2 / nu.
  const Eigen::VectorXd latent0 = (delta0.array() - std::log(hom.nu_hat())).matrix();

  HetBounds b;
  b.theta_lower = mb.theta_lower;
  b.theta_upper = mb.theta_upper;
  b.phi_upper = mb.theta_upper;
  b.phi_lower = mb.theta_lower;
  if (settings.phi_mode == PhiMode::LowerBoundTheta) {
    b.phi_lower = theta0.cwiseMax(mb.theta_lower).cwiseMin(0.999 * mb.theta_upper);
  }
  b.g_lower = 0.0;
  b.g_upper = settings.g_upper;
  b.delta_lower = Eigen::VectorXd::Constant(design.n(), latent0.minCoeff() - settings.delta_margin);
  b.delta_upper = Eigen::VectorXd::Constant(design.n(), latent0.maxCoeff() + settings.delta_margin);

  // Noise process: homoskedastic GP on the initial latents.
  const ReplicatedDesign noise_design = unreplicated(design.X0, latent0);
  HomBounds nb = mb;
  nb.theta_lower = b.phi_lower;
  nb.g_upper = std::max(settings.g_upper, 2.0 * nb.g_lower);
  HomSettings ns = hs;
  ns.theta_init = theta0.cwiseMax(nb.theta_lower).cwiseMin(nb.theta_upper);
  init.noise_hom = hom_fit(noise_design, nb, ns);

  init.params.theta = theta0;
  init.params.phi =
      init.noise_hom->kernel().lengthscales.cwiseMax(b.phi_lower).cwiseMin(b.phi_upper);
  init.params.g = std::clamp(init.noise_hom->g(), b.g_lower, b.g_upper);
  // Start from the noise fit's smoothed latents so that moving g towards 0
  // does not expose the raw residual spikes.
  init.params.delta = init.noise_hom->predict(design.X0).mean;
  if (settings.phi_mode == PhiMode::ScaledTheta) {
    const Eigen::VectorXd ratio = init.params.phi.cwiseQuotient(theta0);
    const double k = std::clamp(ratio.mean(), b.k_lower, b.k_upper);
    init.params.phi = k * theta0;
  }
  init.bounds = std::move(b);
  init.delta0 = std::move(delta0);
  return init;
}

namespace detail {

// Packing of (log theta, log phi or k, g, delta) into the optimizer vector.
struct HetPacking {
  Eigen::Index d, n;
  bool scaled;

  Eigen::Index size() const { return d + (scaled ? 1 : d) + 1 + n; }
  Eigen::Index g_index() const { return d + (scaled ? 1 : d); }

  Eigen::VectorXd pack(const HetParams& p) const {
    Eigen::VectorXd x(size());
    x.head(d) = p.theta.array().log().matrix();
    if (scaled) {
      x[d] = p.phi[0] / p.theta[0];
    } else {
      x.segment(d, d) = p.phi.array().log().matrix();
    }
    x[g_index()] = p.g;
    x.tail(n) = p.delta;
    return x;
  }

  HetParams unpack(const Eigen::VectorXd& x) const {
    HetParams p;
    p.theta = x.head(d).array().exp().matrix();
    p.phi = scaled ? Eigen::VectorXd(x[d] * p.theta)
                   : Eigen::VectorXd(x.segment(d, d).array().exp().matrix());
    p.g = x[g_index()];
    p.delta = x.tail(n);
    return p;
  }

  void box(const HetBounds& b, Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
    lo.resize(size());
    hi.resize(size());
    lo.head(d) = b.theta_lower.array().log().matrix();
    hi.head(d) = b.theta_upper.array().log().matrix();
    if (scaled) {
      lo[d] = b.k_lower;
      hi[d] = b.k_upper;
    } else {
      lo.segment(d, d) = b.phi_lower.array().log().matrix();
      hi.segment(d, d) = b.phi_upper.array().log().matrix();
    }
    lo[g_index()] = b.g_lower;
    hi[g_index()] = b.g_upper;
    lo.tail(n) = b.delta_lower;
    hi.tail(n) = b.delta_upper;
  }

  // Chain rule from the (theta, phi, g, delta) gradient to the packed one.
  Eigen::VectorXd pull_back(const Eigen::VectorXd& full, const HetParams& p) const {
    Eigen::VectorXd out(size());
    const auto dtheta = full.head(d);
    const auto dphi = full.segment(d, d);
    if (scaled) {
      const double k = p.phi[0] / p.theta[0];
      out.head(d) = (dtheta + k * dphi).cwiseProduct(p.theta);
      out[d] = dphi.dot(p.theta);
    } else {
      out.head(d) = dtheta.cwiseProduct(p.theta);
      out.segment(d, d) = dphi.cwiseProduct(p.phi);
    }
    out[g_index()] = full[2 * d];
    out.tail(n) = full.tail(n);
    return out;
  }
};

}  // namespace detail

/// Joint maximum-likelihood fit from an explicit starting point and box.
inline HetModel het_fit_from(const ReplicatedDesign& design, const HetParams& start,
                             const HetBounds& bounds, const HetSettings& settings = {},
                             const std::optional<HomModel>& hom = std::nullopt) {
  design.validate();
  const Eigen::Index d = design.dim();
  const detail::HetPacking packing{d, design.n(), settings.phi_mode == PhiMode::ScaledTheta};
  const KernelFamily family = settings.family;

  OptProblem prob;
  packing.box(bounds, prob.lower, prob.upper);
  prob.max_iter = settings.optim.max_iter;
  prob.tol_f = settings.optim.tol_f;
  prob.tol_g = settings.optim.tol_g;
  prob.objective = [&design, &packing, family](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const HetParams p = packing.unpack(x);
    const KernelSpec theta(family, p.theta);
    const KernelSpec phi(family, p.phi);
    const detail::HetEval ev(theta, phi, p.g, p.delta, design);
    if (grad != nullptr) {
      *grad = packing.pull_back(ev.gradient(theta, phi, design), p);
    }
    return ev.nll;
  };

  OptResult res;
  const Eigen::VectorXd x0 = packing.pack(start);
  try {
    res = minimize(prob, x0);
  } catch (const ValidationError& e) {
    throw ConvergenceError(std::string("het_fit: ") + e.what(), x0,
                           std::numeric_limits<double>::quiet_NaN());
  }
  if (res.status == OptStatus::LineSearchFail && res.iterations == 0) {
    throw ConvergenceError("het_fit: optimizer made no progress", res.x_opt, res.f_opt);
  }
  const HetParams best = packing.unpack(res.x_opt);
  HetModel model = HetModel::build(design, KernelSpec(family, best.theta),
                                   KernelSpec(family, best.phi), best.g, best.delta);
  model.set_opt_result(std::move(res));
  if (hom) {
    // Ties go to the heteroskedastic model.
    const bool use_hom = settings.compare_hom && hom->log_likelihood() > model.mean_loglik();
    model.set_hom(*hom, use_hom);
  }
  return model;
}

/// Priming stage followed by the joint fit and the homoskedastic comparison.
inline HetModel het_fit(const ReplicatedDesign& design, const HetSettings& settings = {}) {
  const HetInit init = het_init(design, settings);
  return het_fit_from(design, init.params, init.bounds, settings, init.hom);
}

}  // namespace hetgp
