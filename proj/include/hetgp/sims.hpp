#pragma once

// Data generators: SIR epidemic simulator, test functions, space-filling
// designs and the motorcycle data loader.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hetgp/csv.hpp"
#include "hetgp/errors.hpp"
#include "hetgp/repdesign.hpp"
#include "hetgp/rng.hpp"

namespace hetgp {

struct SirParams {
  double beta = 0.5;
  double gamma = 0.5;
  std::int64_t M = 2000;

  void validate() const {
    if (!(beta >= 0.0) || !(gamma >= 0.0) || M < 1) {
      throw ValidationError("sir: require beta, gamma >= 0 and M >= 1");
    }
  }
};

struct SirState {
  std::int64_t S = 0;
  std::int64_t I = 0;
  std::int64_t R = 0;
};

/// One Gillespie trajectory run until no infected remain; returns S0 - S_final.
///
/// Channels: infection (S, I) -> (S - 1, I + 1) at rate beta S I / M and
/// recovery (I, R) -> (I - 1, R + 1) at rate gamma I.
inline std::int64_t sir_run(const SirParams& p, SirState s, Rng& rng) {
  p.validate();
  if (s.S < 0 || s.I < 0 || s.R < 0 || s.S + s.I + s.R > p.M) {
    throw ValidationError("sir: invalid state");
  }
  const std::int64_t S0 = s.S;
  double t = 0.0;
  while (s.I > 0) {
    const double infect = p.beta * static_cast<double>(s.S) * static_cast<double>(s.I) /
                          static_cast<double>(p.M);
    const double recover = p.gamma * static_cast<double>(s.I);
    const double total = infect + recover;
    if (!(total > 0.0)) {
      break;
    }
    t += rng.exponential(total);
    if (rng.uniform() * total < infect) {
      --s.S;
      ++s.I;
    } else {
      --s.I;
      ++s.R;
    }
  }
  return S0 - s.S;
}

inline std::int64_t sir_run(const SirParams& p, const SirState& s, std::uint64_t seed) {
  Rng rng(seed);
  return sir_run(p, s, rng);
}

struct McSummary {
  double mean = 0.0;
  double var = 0.0;  // bias-unadjusted
};

/// Monte Carlo mean and variance of new infections; replicate r uses stream r
/// of `seed`.
inline McSummary sir_mc(const SirParams& p, const SirState& s, int replicates, std::uint64_t seed) {
  if (replicates < 1) {
    throw ValidationError("sir_mc: replicates must be positive");
  }
  std::vector<double> draws(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
    draws[static_cast<std::size_t>(r)] = static_cast<double>(sir_run(p, s, rng));
  }
  McSummary out;
  out.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / replicates;
  for (const double v : draws) {
    out.var += (v - out.mean) * (v - out.mean);
  }
  out.var /= replicates;
  return out;
}

/// Test functions by name: gramacy2d on [-2, 4]^2, branin_noisy on [0, 1]^2,
/// jump1d on [0, 1]. jump1d is a stand-in reconstruction for demos.
inline double test_fn(std::string_view name, const Eigen::VectorXd& x) {
  constexpr double pi = std::numbers::pi;
  auto in_box = [&x](double lo, double hi) {
    return (x.array() >= lo).all() && (x.array() <= hi).all();
  };
  if (name == "gramacy2d") {
    if (x.size() != 2 || !in_box(-2.0, 4.0)) {
      throw ValidationError("gramacy2d: x must lie in [-2, 4]^2");
    }
    return x[0] * std::exp(-x[0] * x[0] - x[1] * x[1]);
  }
  if (name == "branin_noisy") {
    if (x.size() != 2 || !in_box(0.0, 1.0)) {
      throw ValidationError("branin_noisy: x must lie in [0, 1]^2");
    }
    const double u = 15.0 * x[0] - 5.0;
    const double v = 15.0 * x[1];
    const double b = 5.1 / (4.0 * pi * pi);
    const double c = 5.0 / pi;
    const double q = v - b * u * u + c * u - 6.0;
    return q * q + 10.0 * (1.0 - 1.0 / (8.0 * pi)) * std::cos(u) + 10.0;
  }
  if (name == "jump1d") {
    if (x.size() != 1 || !in_box(0.0, 1.0)) {
      throw ValidationError("jump1d: x must lie in [0, 1]");
    }
    const double s = std::sin(8.0 * pi * x[0]);
    return x[0] <= 0.5 ? s : s + 2.0;
  }
  throw ValidationError("unknown test function: " + std::string(name));
}

/// Generative noise standard deviation of a test function.
inline double noise_sd(std::string_view name, const Eigen::VectorXd& x) {
  constexpr double pi = std::numbers::pi;
  test_fn(name, x);
  if (name == "gramacy2d") {
    return 0.01;
  }
  if (name == "branin_noisy") {
    const double v = 2.0 + 2.0 * std::sin(pi * x[0]) * std::cos(3.0 * pi * x[1]) +
                     5.0 * (x[0] * x[0] + x[1] * x[1]);
    return std::sqrt(v);
  }
  return 1.0;
}

/// Latin hypercube sample of n points in the box [lower, upper].
inline Eigen::MatrixXd lhs(Eigen::Index n, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, Rng& rng) {
  if (n < 1 || lower.size() != upper.size() || lower.size() == 0) {
    throw ValidationError("lhs: invalid size or bounds");
  }
  const Eigen::Index d = lower.size();
  Eigen::MatrixXd X(n, d);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (Eigen::Index i = n - 1; i > 0; --i) {
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + rng.uniform()) /
                       static_cast<double>(n);
      X(i, k) = lower[k] + (upper[k] - lower[k]) * u;
    }
  }
  return X;
}

inline constexpr Eigen::Index kMotorcycleN = 133;

/// Load the motorcycle CSV (time, acceleration) and collapse replicates.
inline ReplicatedDesign load_motorcycle(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.data.cols() != 2) {
    throw ValidationError(path + ": expected two columns (time, acceleration)");
  }
  if (t.data.rows() != kMotorcycleN) {
    std::cerr << "warning: " << path << " has " << t.data.rows() << " rows, expected "
              << kMotorcycleN << "\n";
  }
  const auto [X, Y] = split_xy(t);
  return find_reps(X, Y);
}

}  // namespace hetgp
