#pragma once

// Experiment harness shared by the command-line tool and the acceptance
// binary: cross-validation on the motorcycle data, the unique-n versus full-N
// timing study, random-initialization study, SIR variance recovery, the
// homoskedastic fallback study and the Woodbury identity suite.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetgp/dense.hpp"
#include "hetgp/het.hpp"
#include "hetgp/hom.hpp"
#include "hetgp/metrics.hpp"
#include "hetgp/repdesign.hpp"
#include "hetgp/rng.hpp"
#include "hetgp/sims.hpp"
#include "hetgp/sk.hpp"

namespace hetgp::bench {

/// Seed for a named sub-experiment and index.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::uint64_t s = seed ^ (tag * 0xD1B54A32D192ED03ULL);
  s = splitmix64(s) ^ index;
  return splitmix64(s);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Ranks with ties averaged (1-based).
inline Eigen::VectorXd ranks(const Eigen::VectorXd& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) {
    return v[static_cast<Eigen::Index>(a)] < v[static_cast<Eigen::Index>(b)];
  });
  Eigen::VectorXd r(v.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[static_cast<Eigen::Index>(idx[j + 1])] == v[static_cast<Eigen::Index>(idx[i])]) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      r[static_cast<Eigen::Index>(idx[k])] = avg;
    }
    i = j + 1;
  }
  return r;
}

inline double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValidationError("spearman: need two vectors of equal length >= 2");
  }
  const Eigen::VectorXd ra = ranks(a).array() - ranks(a).mean();
  const Eigen::VectorXd rb = ranks(b).array() - ranks(b).mean();
  const double den = std::sqrt(ra.squaredNorm() * rb.squaredNorm());
  return den > 0.0 ? ra.dot(rb) / den : 0.0;
}

// ---------------------------------------------------------------------------
// Cross-validation on raw (X, Y)

struct SplitScores {
  int split = 0;
  double het_nlpd = 0.0, het_nmse = 0.0, het_score = 0.0;
  double hom_nlpd = 0.0, hom_nmse = 0.0, hom_score = 0.0;
  bool fallback = false;
};

struct CvSummary {
  std::vector<SplitScores> splits;
  double het_nlpd_mean = 0.0, het_nlpd_sd = 0.0;
  double het_nmse_mean = 0.0, het_nmse_sd = 0.0;
  double hom_nlpd_mean = 0.0, hom_nlpd_sd = 0.0;
  double hom_nmse_mean = 0.0, hom_nmse_sd = 0.0;
  int fallbacks = 0;
};

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (const double x : v) {
    s += (x - m) * (x - m);
  }
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

/// Random (1 - test_frac, test_frac) partitions; split s uses stream s of seed.
inline CvSummary cross_validate(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, int splits,
                                std::uint64_t seed, const HetSettings& settings,
                                double test_frac = 0.1) {
  if (splits < 1) {
    throw ValidationError("cross_validate: splits must be positive");
  }
  const Eigen::Index N = X.rows();
  const auto n_test = static_cast<Eigen::Index>(std::lround(test_frac * static_cast<double>(N)));
  if (n_test < 2 || n_test >= N) {
    throw ValidationError("cross_validate: test fraction leaves an empty fold");
  }
  HomSettings hs;
  hs.family = settings.family;
  hs.optim = settings.optim;

  CvSummary out;
  std::vector<double> hn, hm, wn, wm;
  for (int s = 0; s < splits; ++s) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(s));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(N));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = N - 1; i > 0; --i) {
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    }
    Eigen::MatrixXd Xte(n_test, X.cols()), Xtr(N - n_test, X.cols());
    Eigen::VectorXd Yte(n_test), Ytr(N - n_test);
    for (Eigen::Index i = 0; i < N; ++i) {
      const Eigen::Index r = idx[static_cast<std::size_t>(i)];
      if (i < n_test) {
        Xte.row(i) = X.row(r);
        Yte[i] = Y[r];
      } else {
        Xtr.row(i - n_test) = X.row(r);
        Ytr[i - n_test] = Y[r];
      }
    }
    const ReplicatedDesign d = find_reps(Xtr, Ytr);
    const HetModel het = het_fit(d, settings);
    const HomModel hom = *het.hom();
    const EvalSet eh = EvalSet::from(Yte, het.predict(Xte));
    const EvalSet ew = EvalSet::from(Yte, hom.predict(Xte));
    SplitScores sc;
    sc.split = s;
    sc.het_nlpd = nlpd(eh);
    sc.het_nmse = nmse(eh);
    sc.het_score = score(eh);
    sc.hom_nlpd = nlpd(ew);
    sc.hom_nmse = nmse(ew);
    sc.hom_score = score(ew);
    sc.fallback = het.fallback();
    out.fallbacks += sc.fallback ? 1 : 0;
    hn.push_back(sc.het_nlpd);
    hm.push_back(sc.het_nmse);
    wn.push_back(sc.hom_nlpd);
    wm.push_back(sc.hom_nmse);
    out.splits.push_back(sc);
  }
  std::tie(out.het_nlpd_mean, out.het_nlpd_sd) = mean_sd(hn);
  std::tie(out.het_nmse_mean, out.het_nmse_sd) = mean_sd(hm);
  std::tie(out.hom_nlpd_mean, out.hom_nlpd_sd) = mean_sd(wn);
  std::tie(out.hom_nmse_mean, out.hom_nmse_sd) = mean_sd(wm);
  return out;
}

// ---------------------------------------------------------------------------
// Unique-n versus forced full-N homoskedastic fit

struct RawData {
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;
};

/// n LHS sites on [-2, 4]^2, a_i ~ Unif{1..max_reps}, y = x1 exp(-x1^2 - x2^2)
/// plus N(0, 0.01^2) noise; rows grouped by site.
inline RawData woodbury_data(std::uint64_t seed, Eigen::Index n = 100, int max_reps = 50) {
  Rng rng(sub_seed(seed, 1, 0));
  const Eigen::MatrixXd Xbar = lhs(n, Eigen::Vector2d(-2.0, -2.0), Eigen::Vector2d(4.0, 4.0), rng);
  std::vector<int> a(static_cast<std::size_t>(n));
  Eigen::Index N = 0;
  for (auto& ai : a) {
    ai = static_cast<int>(rng.uniform_int(1, max_reps));
    N += ai;
  }
  RawData out{Eigen::MatrixXd(N, 2), Eigen::VectorXd(N)};
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = test_fn("gramacy2d", Xbar.row(i).transpose());
    for (int j = 0; j < a[static_cast<std::size_t>(i)]; ++j, ++row) {
      out.X.row(row) = Xbar.row(i);
      out.Y[row] = f + rng.normal(0.0, noise_sd("gramacy2d", Xbar.row(i).transpose()));
    }
  }
  return out;
}

struct WoodburyResult {
  Eigen::Index n = 0, N = 0;
  Eigen::VectorXd theta_unique, theta_full;
  double g_unique = 0.0, g_full = 0.0;
  double time_unique = 0.0, time_full = 0.0;

  double speedup() const { return time_full / std::max(time_unique, 1e-12); }
};

/// Bounds: theta in [sqrt(eps), 10]; g in the default box.
inline HomBounds woodbury_bounds(const ReplicatedDesign& d, KernelFamily family) {
  HomBounds b = default_hom_bounds(d, family);
  b.theta_lower = Eigen::VectorXd::Constant(d.dim(), std::sqrt(std::numeric_limits<double>::epsilon()));
  b.theta_upper = Eigen::VectorXd::Constant(d.dim(), 10.0);
  return b;
}

inline WoodburyResult woodbury_bench(std::uint64_t seed, KernelFamily family = KernelFamily::SquaredExponential,
                                     bool run_full = true) {
  const RawData raw = woodbury_data(seed);
  WoodburyResult out;
  auto t0 = std::chrono::steady_clock::now();
  const ReplicatedDesign unique = find_reps(raw.X, raw.Y);
  const HomBounds bounds = woodbury_bounds(unique, family);
  // Both paths start from the same point inside the same box.
  HomSettings hs;
  hs.family = family;
  std::tie(hs.theta_init, hs.g_init) = default_hom_init(unique, family, bounds);
  const HomModel mu = hom_fit(unique, bounds, hs);
  out.time_unique = seconds_since(t0);
  out.n = unique.n();
  out.N = unique.N;
  out.theta_unique = mu.kernel().lengthscales;
  out.g_unique = mu.g();
  if (run_full) {
    t0 = std::chrono::steady_clock::now();
    const ReplicatedDesign full = unreplicated(raw.X, raw.Y);
    const HomModel mf = hom_fit(full, bounds, hs);
    out.time_full = seconds_since(t0);
    out.theta_full = mf.kernel().lengthscales;
    out.g_full = mf.g();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization study

struct InitStudy {
  double default_loglik = 0.0;
  double default_mean_loglik = 0.0;
  double default_nu_g = 0.0;
  std::vector<double> random_loglik;  // NaN where the fit failed
  std::vector<double> random_mean_loglik;
  std::vector<double> random_nu_g;

  // Random fits with a higher joint value but a worse mean-field fit.
  int winners_with_worse_fit() const {
    int c = 0;
    for (std::size_t r = 0; r < random_loglik.size(); ++r) {
      if (random_loglik[r] > default_loglik && random_mean_loglik[r] < default_mean_loglik) {
        ++c;
      }
    }
    return c;
  }

  int beaten_or_tied() const {
    int c = 0;
    for (const double v : random_loglik) {
      if (!(v > default_loglik + 1e-8 * std::abs(default_loglik))) {
        ++c;
      }
    }
    return c;
  }
};

/// Final joint log-likelihood from the default start versus `restarts`
/// starting points drawn uniformly over the search box (log scale for
/// lengthscales, [0, 1] for g).
inline InitStudy init_study(const ReplicatedDesign& design, int restarts, std::uint64_t seed,
                            const HetSettings& settings = {}) {
  const HetInit init = het_init(design, settings);
  InitStudy out;
  const HetModel def = het_fit_from(design, init.params, init.bounds, settings);
  out.default_loglik = def.joint_loglik();
  out.default_mean_loglik = def.mean_loglik();
  out.default_nu_g = def.nu_g();
  const HetBounds& b = init.bounds;
  const Eigen::Index d = design.dim();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(sub_seed(seed, 2, static_cast<std::uint64_t>(r)));
    HetParams p;
    p.theta.resize(d);
    p.phi.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      p.theta[k] = std::exp(rng.uniform(std::log(b.theta_lower[k]), std::log(b.theta_upper[k])));
      p.phi[k] = std::exp(rng.uniform(std::log(b.phi_lower[k]), std::log(b.phi_upper[k])));
    }
    p.g = rng.uniform(0.0, std::min(1.0, b.g_upper));
    p.delta.resize(design.n());
    for (Eigen::Index i = 0; i < design.n(); ++i) {
      p.delta[i] = rng.uniform(b.delta_lower[i], b.delta_upper[i]);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double ll = nan, mll = nan, nu_g = nan;
    try {
      const HetModel m = het_fit_from(design, p, b, settings);
      ll = m.joint_loglik();
      mll = m.mean_loglik();
      nu_g = m.nu_g();
    } catch (const Error&) {
    }
    out.random_loglik.push_back(ll);
    out.random_mean_loglik.push_back(mll);
    out.random_nu_g.push_back(nu_g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SIR variance recovery

struct SirStudyConfig {
  SirParams params;
  int grid = 15;
  double s_lo = 1200.0, s_hi = 1800.0, i_lo = 0.0, i_hi = 200.0;
  int reference_reps = 1000;
  int boundary_reps = 100;
};

struct SirStudy {
  Eigen::MatrixXd grid_x;      // raw (S, I) on the training grid
  Eigen::VectorXi train_reps;
  Eigen::VectorXd ref_mean, ref_sd;        // training grid
  Eigen::VectorXd het_sd, sk_sd, het_mean, sk_mean;
  Eigen::MatrixXd holdout_x;
  Eigen::VectorXd holdout_mean, holdout_var;
  double het_score = 0.0, sk_score = 0.0;
  double het_spearman = 0.0, sk_spearman = 0.0;
  double boundary_ratio = 0.0;  // max het sd at I = 0 over max het sd
  bool het_fallback = false;
};

inline Eigen::MatrixXd sir_scale(const SirStudyConfig& c, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd u(x.rows(), 2);
  u.col(0) = (x.col(0).array() - c.s_lo) / (c.s_hi - c.s_lo);
  u.col(1) = (x.col(1).array() - c.i_lo) / (c.i_hi - c.i_lo);
  return u;
}

inline std::vector<double> sir_draws(const SirParams& p, const SirState& s, int reps,
                                     std::uint64_t seed) {
  std::vector<double> out(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
    out[static_cast<std::size_t>(r)] = static_cast<double>(sir_run(p, s, rng));
  }
  return out;
}

inline SirState sir_state(const SirParams& p, double S, double I) {
  SirState s;
  s.S = std::llround(S);
  s.I = std::llround(I);
  s.R = p.M - s.S - s.I;
  return s;
}

inline SirStudy sir_study(std::uint64_t seed, const SirStudyConfig& c = {},
                          KernelFamily family = KernelFamily::Matern52) {
  const int g = c.grid;
  SirStudy out;
  out.grid_x.resize(g * g, 2);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      out.grid_x(i * g + j, 0) = c.s_lo + (c.s_hi - c.s_lo) * i / (g - 1.0);
      out.grid_x(i * g + j, 1) = c.i_lo + (c.i_hi - c.i_lo) * j / (g - 1.0);
    }
  }
  // Replicate counts: 50% x 5, 25% x 10, 15% x 50, 10% x 100, shuffled over
  // the interior; the I = 0 boundary always gets boundary_reps.
  const Eigen::Index m = out.grid_x.rows();
  std::vector<Eigen::Index> interior;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (out.grid_x(k, 1) > c.i_lo) {
      interior.push_back(k);
    }
  }
  Rng rng(sub_seed(seed, 3, 0));
  for (std::size_t i = interior.size(); i-- > 1;) {
    std::swap(interior[i], interior[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
  }
  out.train_reps = Eigen::VectorXi::Constant(m, c.boundary_reps);
  const double cuts[] = {0.5, 0.75, 0.9, 1.0};
  const int counts[] = {5, 10, 50, 100};
  for (std::size_t i = 0; i < interior.size(); ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(interior.size());
    int k = 0;
    while (q > cuts[k]) {
      ++k;
    }
    out.train_reps[interior[i]] = counts[k];
  }

  const Eigen::Index N = out.train_reps.sum();
  Eigen::MatrixXd X(N, 2);
  Eigen::VectorXd Y(N);
  out.ref_mean.resize(m);
  out.ref_sd.resize(m);
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const SirState s = sir_state(c.params, out.grid_x(k, 0), out.grid_x(k, 1));
    const auto draws = sir_draws(c.params, s, out.train_reps[k], sub_seed(seed, 4, static_cast<std::uint64_t>(k)));
    for (const double v : draws) {
      X.row(row) = out.grid_x.row(k);
      Y[row++] = v;
    }
    const McSummary ref = sir_mc(c.params, s, c.reference_reps, sub_seed(seed, 5, static_cast<std::uint64_t>(k)));
    out.ref_mean[k] = ref.mean;
    out.ref_sd[k] = std::sqrt(ref.var);
  }

  const int h = g - 1;
  out.holdout_x.resize(h * h, 2);
  out.holdout_mean.resize(h * h);
  out.holdout_var.resize(h * h);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < h; ++j) {
      const Eigen::Index k = i * h + j;
      out.holdout_x(k, 0) = c.s_lo + (c.s_hi - c.s_lo) * (i + 0.5) / (g - 1.0);
      out.holdout_x(k, 1) = c.i_lo + (c.i_hi - c.i_lo) * (j + 0.5) / (g - 1.0);
      const SirState s = sir_state(c.params, out.holdout_x(k, 0), out.holdout_x(k, 1));
      const McSummary ref = sir_mc(c.params, s, c.reference_reps, sub_seed(seed, 6, static_cast<std::uint64_t>(k)));
      out.holdout_mean[k] = ref.mean;
      out.holdout_var[k] = ref.var;
    }
  }

  // Both models have a zero-mean prior; fit to centered responses.
  const double offset = Y.mean();
  const ReplicatedDesign design = find_reps(sir_scale(c, X), (Y.array() - offset).matrix());
  HetSettings hs;
  hs.family = family;
  const HetModel het = het_fit(design, hs);
  out.het_fallback = het.fallback();
  HomSettings ss;
  ss.family = family;
  const SKModel sk = sk_fit(design, ss);

  const Eigen::MatrixXd U = sir_scale(c, out.grid_x);
  auto shifted = [offset](Predictions p) {
    p.mean.array() += offset;
    return p;
  };
  const Predictions ph = shifted(het.predict(U));
  const Predictions ps = shifted(sk.predict(U));
  out.het_sd = ph.nugs.cwiseSqrt();
  out.sk_sd = ps.nugs.cwiseSqrt();
  out.het_mean = ph.mean;
  out.sk_mean = ps.mean;
  out.het_spearman = spearman(out.het_sd, out.ref_sd);
  out.sk_spearman = spearman(out.sk_sd, out.ref_sd);
  double boundary_max = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (out.grid_x(k, 1) <= c.i_lo) {
      boundary_max = std::max(boundary_max, out.het_sd[k]);
    }
  }
  out.boundary_ratio = boundary_max / out.het_sd.maxCoeff();

  // Expected score under the reference distribution at each held-out site:
  // E[-(y - mu)^2 / v - log v] = -((m - mu)^2 + s^2) / v - log v.
  auto expected_score = [&out](const Predictions& p) {
    const Eigen::ArrayXd v = p.total_var().array().max(std::numeric_limits<double>::min());
    return (-((out.holdout_mean - p.mean).array().square() + out.holdout_var.array()) / v - v.log())
        .mean();
  };
  const Eigen::MatrixXd Uh = sir_scale(c, out.holdout_x);
  out.het_score = expected_score(shifted(het.predict(Uh)));
  out.sk_score = expected_score(shifted(sk.predict(Uh)));
  return out;
}

// ---------------------------------------------------------------------------
// Homoskedastic fallback study

struct FallbackRun {
  bool fallback = false;
  double het_nlpd = 0.0, hom_nlpd = 0.0;
};

/// Data from a zero-mean GP on [0, 1] (squared exponential, theta = 0.05,
/// nu = 1, nugget g = 0.1): n sites with `reps` replicates each, plus
/// `n_test` held-out noisy observations at fresh inputs.
inline FallbackRun fallback_run(std::uint64_t seed, Eigen::Index n = 40, int reps = 2,
                                Eigen::Index n_test = 100) {
  Rng rng(sub_seed(seed, 7, 0));
  const Eigen::Index m = n + n_test;
  Eigen::MatrixXd X(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    X(i, 0) = rng.uniform();
  }
  const KernelSpec k(KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(1, 0.05));
  const double g = 0.1;
  const SpdFactor chol(corr_matrix(k, X));
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    z[i] = rng.normal();
  }
  const Eigen::VectorXd f = chol.lower() * z;
  const double sd = std::sqrt(g);
  Eigen::MatrixXd Xtr(n * reps, 1);
  Eigen::VectorXd Ytr(n * reps);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < reps; ++j) {
      Xtr(i * reps + j, 0) = X(i, 0);
      Ytr[i * reps + j] = f[i] + sd * rng.normal();
    }
  }
  Eigen::VectorXd Yte(n_test);
  for (Eigen::Index i = 0; i < n_test; ++i) {
    Yte[i] = f[n + i] + sd * rng.normal();
  }
  const Eigen::MatrixXd Xte = X.bottomRows(n_test);
  const ReplicatedDesign d = find_reps(Xtr, Ytr);
  const HetModel het = het_fit(d);
  FallbackRun out;
  out.fallback = het.fallback();
  out.het_nlpd = nlpd(EvalSet::from(Yte, het.predict(Xte)));
  out.hom_nlpd = nlpd(EvalSet::from(Yte, het.hom()->predict(Xte)));
  return out;
}

// ---------------------------------------------------------------------------
// Woodbury identity suite

struct IdentityCheck {
  int instance = 0;
  std::string family;
  std::string quantity;
  double rel_error = 0.0;
  bool pass = false;
};

/// Random small replicated instance with site-grouped raw rows.
struct SmallInstance {
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;
  ReplicatedDesign design;
  KernelSpec kernel;
  Eigen::VectorXd lambda;  // per site
  Eigen::MatrixXd Xnew;
};

inline SmallInstance small_instance(Rng& rng, KernelFamily family) {
  SmallInstance s;
  const auto n = static_cast<Eigen::Index>(rng.uniform_int(1, 8));
  const auto d = static_cast<Eigen::Index>(rng.uniform_int(1, 2));
  std::vector<int> a(static_cast<std::size_t>(n));
  Eigen::Index N = 0;
  for (auto& ai : a) {
    ai = static_cast<int>(rng.uniform_int(1, 4));
    N += ai;
  }
  s.X.resize(N, d);
  s.Y.resize(N);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      x[k] = rng.uniform();
    }
    for (int j = 0; j < a[static_cast<std::size_t>(i)]; ++j, ++row) {
      s.X.row(row) = x.transpose();
      s.Y[row] = rng.normal();
    }
  }
  s.design = find_reps(s.X, s.Y);
  Eigen::VectorXd theta(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    theta[k] = std::exp(rng.uniform(std::log(0.1), std::log(2.0)));
  }
  s.kernel = KernelSpec(family, theta);
  s.lambda.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.lambda[i] = std::exp(rng.uniform(std::log(0.01), std::log(2.0)));
  }
  s.Xnew.resize(5, d);
  for (Eigen::Index i = 0; i < s.Xnew.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      s.Xnew(i, k) = rng.uniform(-0.25, 1.25);
    }
  }
  return s;
}

/// Unique-n likelihood, quadratic form, log-determinant, predictive mean and
/// variance against the dense full-N computation.
inline std::vector<IdentityCheck> identity_suite(std::uint64_t seed, int instances = 100,
                                                 double tol = 1e-10) {
  std::vector<IdentityCheck> out;
  for (int t = 0; t < instances; ++t) {
    Rng rng(sub_seed(seed, 8, static_cast<std::uint64_t>(t)));
    const KernelFamily family = (t % 2 == 0) ? KernelFamily::SquaredExponential : KernelFamily::Matern52;
    const SmallInstance s = small_instance(rng, family);
    const ReplicatedDesign& D = s.design;
    const Eigen::VectorXd lamN = dense::expand_lambda(s.lambda, D.mult);
    const Eigen::MatrixXd C = corr_matrix(s.kernel, D.X0);
    const detail::MeanField mf(D, C, s.lambda);
    const dense::DenseTerms dt = dense::terms(s.X, s.Y, s.kernel, lamN);
    const Eigen::ArrayXd a = D.mult_d().array();
    const double log_det_unique =
        mf.chol.log_det() + ((a - 1.0) * s.lambda.array().log() + a.log()).sum();

    auto add = [&](const std::string& q, double err) {
      IdentityCheck c;
      c.instance = t;
      c.family = std::string(to_string(family));
      c.quantity = q;
      c.rel_error = err;
      c.pass = err < tol;
      out.push_back(c);
    };
    add("quad_form", relative_error(mf.quad, dt.quad));
    add("log_det", relative_error(log_det_unique, dt.log_det));
    add("nll", relative_error(mf.nll, dt.nll));

    // Predictions through the same caches the models use.
    const Eigen::MatrixXd c = corr_matrix(s.kernel, D.X0, s.Xnew);
    const Eigen::VectorXd mean = c.transpose() * mf.alpha;
    const Eigen::MatrixXd Uc = mf.chol.solve(c);
    const Eigen::VectorXd sd2 =
        (mf.nu_hat * (1.0 - (c.array() * Uc.array()).colwise().sum())).matrix().transpose();
    const Predictions dp = dense::dense_predict(s.X, s.Y, s.kernel, lamN, s.Xnew);
    double em = 0.0, ev = 0.0;
    for (Eigen::Index i = 0; i < s.Xnew.rows(); ++i) {
      em = std::max(em, relative_error(mean[i], dp.mean[i]));
      ev = std::max(ev, relative_error(sd2[i], dp.sd2[i]));
    }
    add("pred_mean", em);
    add("pred_var", ev);
  }
  return out;
}

}  // namespace hetgp::bench
