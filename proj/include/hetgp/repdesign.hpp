#pragma once

// Unique-n sufficient statistics of a replicated design.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"

namespace hetgp {

/// Collapsed representation of a dataset with replicated inputs.
///
/// Only the sufficient statistics of the raw responses are kept: per-site
/// means (Z0), replicate counts (mult) and raw, bias-unadjusted variances
/// s_i^2 = (1/a_i) sum_j (y_ij - ybar_i)^2 (S2).
struct ReplicatedDesign {
  Eigen::MatrixXd X0;  // n x d unique inputs
  Eigen::VectorXd Z0;  // n per-site means
  Eigen::VectorXi mult;
  Eigen::VectorXd S2;
  Eigen::Index N = 0;

  Eigen::Index n() const noexcept { return X0.rows(); }
  Eigen::Index dim() const noexcept { return X0.cols(); }

  Eigen::VectorXd mult_d() const { return mult.cast<double>(); }

  bool has_replicates() const { return N > n(); }

  void validate() const {
    const Eigen::Index n = X0.rows();
    if (n == 0 || X0.cols() == 0) {
      throw ValidationError("design: empty design");
    }
    if (Z0.size() != n || mult.size() != n || S2.size() != n) {
      throw ValidationError("design: X0, Z0, mult and S2 sizes disagree");
    }
    if (!X0.allFinite() || !Z0.allFinite() || !S2.allFinite()) {
      throw ValidationError("design: non-finite values");
    }
    Eigen::Index total = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mult[i] < 1) {
        throw ValidationError("design: replicate counts must be >= 1");
      }
      if (S2[i] < 0.0 || (mult[i] == 1 && S2[i] != 0.0)) {
        throw ValidationError("design: S2 must be >= 0 and zero at unreplicated sites");
      }
      total += mult[i];
    }
    if (total != N) {
      throw ValidationError("design: replicate counts do not sum to N");
    }
  }

  /// Sum over sites of a_i * s_i^2 / lambda_i: the replicate correction term
  /// Y' Lambda_N^-1 Y - Ybar' A_n Lambda_n^-1 Ybar.
  double replicate_ss(const Eigen::VectorXd& lambda) const {
    return (mult_d().array() * S2.array() / lambda.array()).sum();
  }
};

namespace detail {

inline void check_raw(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y) {
  if (X.rows() == 0 || Y.size() == 0) {
    throw ValidationError("find_reps: empty input");
  }
  if (X.rows() != Y.size()) {
    throw ValidationError("find_reps: X row count does not match Y length");
  }
  if (X.cols() == 0) {
    throw ValidationError("find_reps: X has no columns");
  }
  if (!X.allFinite() || !Y.allFinite()) {
    throw ValidationError("find_reps: non-finite values");
  }
}

// Bitwise key for exact row matching; -0.0 and 0.0 are merged.
inline std::vector<std::uint64_t> row_key(const Eigen::MatrixXd& X, Eigen::Index i) {
  std::vector<std::uint64_t> key(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    double v = X(i, k) == 0.0 ? 0.0 : X(i, k);
    std::memcpy(&key[static_cast<std::size_t>(k)], &v, sizeof v);
  }
  return key;
}

inline ReplicatedDesign collapse(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                 const std::vector<Eigen::Index>& site_of,
                                 const std::vector<Eigen::Index>& first_row) {
  const auto n = static_cast<Eigen::Index>(first_row.size());
  ReplicatedDesign out;
  out.N = X.rows();
  out.X0.resize(n, X.cols());
  out.Z0 = Eigen::VectorXd::Zero(n);
  out.S2 = Eigen::VectorXd::Zero(n);
  out.mult = Eigen::VectorXi::Zero(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    out.X0.row(s) = X.row(first_row[static_cast<std::size_t>(s)]);
  }
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const Eigen::Index s = site_of[static_cast<std::size_t>(r)];
    out.Z0[s] += Y[r];
    out.mult[s] += 1;
  }
  out.Z0.array() /= out.mult.cast<double>().array();
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const Eigen::Index s = site_of[static_cast<std::size_t>(r)];
    const double e = Y[r] - out.Z0[s];
    out.S2[s] += e * e;
  }
  for (Eigen::Index s = 0; s < n; ++s) {
    out.S2[s] = out.mult[s] > 1 ? out.S2[s] / out.mult[s] : 0.0;
  }
  return out;
}

}  // namespace detail

/// Detect replicated rows of X and collapse (X, Y) to unique-n statistics.
///
/// Rows equal within dedup_tol in every coordinate are merged into the site
/// of their first appearance; dedup_tol = 0 means exact equality. Sites are
/// ordered by first appearance.
inline ReplicatedDesign find_reps(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                  double dedup_tol = 0.0) {
  detail::check_raw(X, Y);
  if (!(dedup_tol >= 0.0) || !std::isfinite(dedup_tol)) {
    throw ValidationError("find_reps: dedup_tol must be a non-negative finite number");
  }
  std::vector<Eigen::Index> site_of(static_cast<std::size_t>(X.rows()));
  std::vector<Eigen::Index> first_row;
  if (dedup_tol == 0.0) {
    std::map<std::vector<std::uint64_t>, Eigen::Index> seen;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      auto [it, inserted] =
          seen.try_emplace(detail::row_key(X, r), static_cast<Eigen::Index>(first_row.size()));
      if (inserted) {
        first_row.push_back(r);
      }
      site_of[static_cast<std::size_t>(r)] = it->second;
    }
  } else {
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      Eigen::Index site = -1;
      for (std::size_t s = 0; s < first_row.size(); ++s) {
        if (((X.row(r) - X.row(first_row[s])).array().abs() <= dedup_tol).all()) {
          site = static_cast<Eigen::Index>(s);
          break;
        }
      }
      if (site < 0) {
        site = static_cast<Eigen::Index>(first_row.size());
        first_row.push_back(r);
      }
      site_of[static_cast<std::size_t>(r)] = site;
    }
  }
  return detail::collapse(X, Y, site_of, first_row);
}

/// Treat every row as its own site, bypassing replicate detection. This is
/// the "forced full-N" representation.
inline ReplicatedDesign unreplicated(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y) {
  detail::check_raw(X, Y);
  ReplicatedDesign out;
  out.X0 = X;
  out.Z0 = Y;
  out.mult = Eigen::VectorXi::Ones(X.rows());
  out.S2 = Eigen::VectorXd::Zero(X.rows());
  out.N = X.rows();
  return out;
}

/// Site inputs repeated mult_i times (in site order) together with the
/// per-site means repeated alongside.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> expand(const ReplicatedDesign& design) {
  design.validate();
  Eigen::MatrixXd X(design.N, design.dim());
  Eigen::VectorXd Y(design.N);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < design.n(); ++i) {
    for (int j = 0; j < design.mult[i]; ++j, ++row) {
      X.row(row) = design.X0.row(i);
      Y[row] = design.Z0[i];
    }
  }
  return {std::move(X), std::move(Y)};
}

/// Full-N responses whose per-site mean and raw variance equal (Z0, S2)
/// exactly: an even count splits as ybar +- sqrt(S2); an odd count keeps one
/// value at ybar and splits the rest as ybar +- sqrt(S2 a / (a - 1)).
inline Eigen::VectorXd synthetic_replicates(const ReplicatedDesign& design) {
  design.validate();
  Eigen::VectorXd Y(design.N);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < design.n(); ++i) {
    const int a = design.mult[i];
    const double ybar = design.Z0[i];
    if (a == 1) {
      Y[row++] = ybar;
      continue;
    }
    const bool odd = (a % 2) == 1;
    const double c = odd ? std::sqrt(design.S2[i] * a / (a - 1.0)) : std::sqrt(design.S2[i]);
    if (odd) {
      Y[row++] = ybar;
    }
    for (int j = 0; j < a / 2; ++j) {
      Y[row++] = ybar + c;
      Y[row++] = ybar - c;
    }
  }
  return Y;
}

}  // namespace hetgp
