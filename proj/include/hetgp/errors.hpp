#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hetgp {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: dimension mismatches, out-of-range parameters, malformed data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix could not be factorized even after the jitter retries.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// The optimizer could not make progress. Carries the best parameters seen.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd best_x, double best_f)
      : Error(what), best_x_(std::move(best_x)), best_f_(best_f) {}

  const Eigen::VectorXd& best_x() const noexcept { return best_x_; }
  double best_f() const noexcept { return best_f_; }

 private:
  Eigen::VectorXd best_x_;
  double best_f_;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hetgp
