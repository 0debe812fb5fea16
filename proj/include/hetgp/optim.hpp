#pragma once

// Bound-constrained limited-memory BFGS.
//
// Each iteration builds an L-BFGS direction on the free variables (those not
// held at a bound by the sign of their gradient), then backtracks along the
// projected path P(x + t d) until the Armijo condition holds. Iterates always
// lie inside the box and the accepted objective sequence is non-increasing.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"

namespace hetgp {

/// Objective callback. Must return f(x); when grad is non-null it must also
/// write the gradient into *grad (already sized).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptProblem {
  Objective objective;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int max_iter = 100;
  double tol_f = 1e-8;
  double tol_g = 1e-5;
  int memory = 5;

  Eigen::Index dimension() const noexcept { return lower.size(); }

  void validate() const {
    if (!objective) {
      throw ValidationError("optim: objective is empty");
    }
    if (lower.size() == 0 || lower.size() != upper.size()) {
      throw ValidationError("optim: bound vectors must be non-empty and of equal length");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (!(lower[i] <= upper[i])) {
        throw ValidationError("optim: lower bound exceeds upper bound");
      }
    }
    if (max_iter < 1 || !(tol_f > 0.0) || !(tol_g > 0.0) || memory < 1) {
      throw ValidationError("optim: max_iter, tolerances and memory must be positive");
    }
  }
};

enum class OptStatus { Converged, MaxIter, LineSearchFail };

inline std::string_view to_string(OptStatus s) {
  switch (s) {
    case OptStatus::Converged:
      return "converged";
    case OptStatus::MaxIter:
      return "max_iter";
    case OptStatus::LineSearchFail:
      return "line_search_fail";
  }
  return "unknown";
}

struct OptResult {
  Eigen::VectorXd x_opt;
  double f_opt = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  OptStatus status = OptStatus::MaxIter;
  double grad_norm = std::numeric_limits<double>::infinity();
};

namespace detail {

inline Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

/// Inf-norm of P(x - g) - x.
inline double projected_grad_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                  const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return (project(x - g, lo, hi) - x).lpNorm<Eigen::Infinity>();
}

}  // namespace detail

/// Minimize problem.objective over the box starting from x0 (projected into
/// the box if needed).
inline OptResult minimize(const OptProblem& problem, const Eigen::VectorXd& x0) {
  problem.validate();
  const Eigen::Index n = problem.dimension();
  if (x0.size() != n) {
    throw ValidationError("optim: x0 dimension does not match the bounds");
  }
  const auto& lo = problem.lower;
  const auto& hi = problem.upper;

  OptResult res;
  Eigen::VectorXd x = detail::project(x0, lo, hi);
  Eigen::VectorXd g(n);
  double f = problem.objective(x, &g);
  res.evaluations = 1;
  if (!std::isfinite(f) || !g.allFinite()) {
    throw ValidationError("optim: objective or gradient is not finite at the starting point");
  }

  // Evaluate at a trial point; failures in the objective count as +inf.
  auto try_eval = [&](const Eigen::VectorXd& xt, Eigen::VectorXd& gt) {
    ++res.evaluations;
    try {
      const double ft = problem.objective(xt, &gt);
      if (!std::isfinite(ft) || !gt.allFinite()) {
        return std::numeric_limits<double>::infinity();
      }
      return ft;
    } catch (const FactorizationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::deque<Eigen::VectorXd> S, Y;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 40;

  res.status = OptStatus::MaxIter;
  int iter = 0;
  for (; iter < problem.max_iter; ++iter) {
    if (detail::projected_grad_norm(x, g, lo, hi) <= problem.tol_g) {
      res.status = OptStatus::Converged;
      break;
    }

    // Variables held at a bound by their gradient.
    Eigen::VectorXd free_mask(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = x[i] <= lo[i] && g[i] > 0.0;
      const bool at_hi = x[i] >= hi[i] && g[i] < 0.0;
      free_mask[i] = (at_lo || at_hi) ? 0.0 : 1.0;
    }

    auto lbfgs_direction = [&]() {
      Eigen::VectorXd q = g.cwiseProduct(free_mask);
      const std::size_t m = S.size();
      std::vector<double> alpha(m), rho(m);
      std::vector<bool> use(m, false);
      double gamma = 0.0;
      for (std::size_t jj = m; jj-- > 0;) {
        const Eigen::VectorXd s = S[jj].cwiseProduct(free_mask);
        const Eigen::VectorXd y = Y[jj].cwiseProduct(free_mask);
        const double sy = s.dot(y);
        const double yy = y.squaredNorm();
        if (!(sy > 1e-10 * yy) || yy == 0.0) {
          continue;
        }
        use[jj] = true;
        rho[jj] = 1.0 / sy;
        if (gamma == 0.0) {
          gamma = sy / yy;
        }
        alpha[jj] = rho[jj] * s.dot(q);
        q -= alpha[jj] * y;
      }
      if (gamma == 0.0) {
        return Eigen::VectorXd(-q);
      }
      Eigen::VectorXd r = gamma * q;
      for (std::size_t jj = 0; jj < m; ++jj) {
        if (!use[jj]) {
          continue;
        }
        const Eigen::VectorXd s = S[jj].cwiseProduct(free_mask);
        const Eigen::VectorXd y = Y[jj].cwiseProduct(free_mask);
        const double beta = rho[jj] * y.dot(r);
        r += (alpha[jj] - beta) * s;
      }
      return Eigen::VectorXd(-r.cwiseProduct(free_mask));
    };

    bool accepted = false;
    Eigen::VectorXd x_new, g_new(n);
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Eigen::VectorXd d;
      const bool steepest = S.empty() || attempt == 1;
      if (steepest) {
        d = -g.cwiseProduct(free_mask);
        // First step (or restart): cap the initial move at unit length.
        const double dn = d.lpNorm<Eigen::Infinity>();
        if (dn > 1.0) {
          d /= dn;
        }
      } else {
        d = lbfgs_direction();
        if (!(g.dot(d) < 0.0)) {
          continue;
        }
      }
      if (d.lpNorm<Eigen::Infinity>() == 0.0) {
        break;
      }
      double t = 1.0;
      for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        x_new = detail::project(x + t * d, lo, hi);
        const Eigen::VectorXd step = x_new - x;
        if (step.lpNorm<Eigen::Infinity>() == 0.0) {
          break;
        }
        f_new = try_eval(x_new, g_new);
        const double slope = g.dot(step);
        if (std::isfinite(f_new) && f_new <= f + kArmijo * slope) {
          accepted = true;
          break;
        }
        // Safeguarded quadratic interpolation along the (unprojected) ray.
        double t_next = 0.5 * t;
        const double dd = g.dot(d) * t;
        if (std::isfinite(f_new) && dd < 0.0) {
          const double denom = 2.0 * (f_new - f - dd);
          if (denom > 0.0) {
            t_next = std::clamp(-dd * t / denom, 0.1 * t, 0.5 * t);
          }
        }
        t = t_next;
      }
      if (!accepted) {
        S.clear();
        Y.clear();
      }
    }

    if (!accepted) {
      res.status = OptStatus::LineSearchFail;
      break;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    if (s.dot(y) > 1e-10 * y.squaredNorm()) {
      S.push_back(s);
      Y.push_back(y);
      if (static_cast<int>(S.size()) > problem.memory) {
        S.pop_front();
        Y.pop_front();
      }
    }
    const double decrease = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    if (decrease <= problem.tol_f * std::max({std::abs(f), std::abs(f + decrease), 1.0})) {
      res.status = OptStatus::Converged;
      ++iter;
      break;
    }
  }

  res.x_opt = x;
  res.f_opt = f;
  res.iterations = iter;
  res.grad_norm = detail::projected_grad_norm(x, g, lo, hi);
  if (res.status == OptStatus::MaxIter && res.grad_norm <= problem.tol_g) {
    res.status = OptStatus::Converged;
  }
  return res;
}

}  // namespace hetgp
