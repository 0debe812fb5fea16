#pragma once

// Scoring rules for held-out predictions.

#include <cmath>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"
#include "hetgp/hom.hpp"

namespace hetgp {

struct EvalSet {
  Eigen::VectorXd y;
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // total predictive variance

  static EvalSet from(const Eigen::VectorXd& y, const Predictions& p) {
    return {y, p.mean, p.total_var()};
  }

  void validate() const {
    if (y.size() == 0 || mean.size() != y.size() || var.size() != y.size()) {
      throw ValidationError("metrics: y, mean and var must be non-empty and of equal length");
    }
    if (!(var.array() > 0.0).all()) {
      throw ValidationError("metrics: predictive variances must be positive");
    }
  }
};

/// Mean of -(y - mean)^2 / var - log var. Higher is better.
inline double score(const EvalSet& e) {
  e.validate();
  return (-(e.y - e.mean).array().square() / e.var.array() - e.var.array().log()).mean();
}

/// Mean squared error over the population variance of y.
inline double nmse(const EvalSet& e) {
  if (e.y.size() == 0 || e.mean.size() != e.y.size()) {
    throw ValidationError("nmse: y and mean must be non-empty and of equal length");
  }
  const double vy = (e.y.array() - e.y.mean()).square().mean();
  if (!(vy > 0.0)) {
    throw ValidationError("nmse: held-out responses are constant");
  }
  return (e.y - e.mean).array().square().mean() / vy;
}

/// Mean negative log predictive density under N(mean, var). Lower is better.
inline double nlpd(const EvalSet& e) {
  e.validate();
  constexpr double two_pi = 6.283185307179586476925;
  return (0.5 * (two_pi * e.var.array()).log() +
          (e.y - e.mean).array().square() / (2.0 * e.var.array()))
      .mean();
}

}  // namespace hetgp
