#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace odetrack {

/// Base of every error raised by the library.
///
/// Messages accumulate context as an error propagates outward (segment,
/// partition index, ...); catch by reference, call add_context() and rethrow
/// with `throw;` to keep the dynamic type.
class Error : public std::exception {
 public:
  explicit Error(std::string message) : message_{std::move(message)} {}

  const char* what() const noexcept override { return message_.c_str(); }

  void add_context(const std::string& context) {
    message_ = context + ": " + message_;
  }

 private:
  std::string message_;
};

/// Invalid user-supplied configuration or parameters.
class ConfigError : public Error {
  using Error::Error;
};

/// Shape disagreement between operands, or an unsupported dimension.
class DimensionError : public Error {
  using Error::Error;
};

/// A factorization met a non-positive (or too small) pivot. For JJᵀ this is
/// the LICQ-failure signal.
class SingularityError : public Error {
 public:
  explicit SingularityError(std::string message, std::vector<double> point = {},
                            double t = 0.0)
      : Error{std::move(message)}, point_{std::move(point)}, t_{t} {}

  const std::vector<double>& point() const { return point_; }
  double t() const { return t_; }

 private:
  std::vector<double> point_;
  double t_;
};

/// An evaluator returned a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(std::string message, std::vector<double> point, double t)
      : Error{std::move(message)}, point_{std::move(point)}, t_{t} {}

  const std::vector<double>& point() const { return point_; }
  double t() const { return t_; }

 private:
  std::vector<double> point_;
  double t_;
};

class InfeasiblePointError : public Error {
  using Error::Error;
};

/// Unknown catalog name.
class LookupError : public Error {
  using Error::Error;
};

/// A Runge-Kutta stage produced a non-finite value.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string message, double t, int stage)
      : Error{std::move(message)}, t_{t}, stage_{stage} {}

  double t() const { return t_; }
  int stage() const { return stage_; }

 private:
  double t_;
  int stage_;
};

/// Step budget exhausted.
class BudgetError : public Error {
  using Error::Error;
};

/// The inner u,v relaxation did not reach its threshold.
class RelaxationStallError : public Error {
  using Error::Error;
};

/// A static solve did not reach its KKT tolerance.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(std::string message, double last_residual)
      : Error{std::move(message)}, last_residual_{last_residual} {}

  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class InitializationError : public Error {
  using Error::Error;
};

/// Time interval or time list out of order.
class OrderingError : public Error {
  using Error::Error;
};

/// Human-readable "(x=[..], t=..)" used in error messages.
std::string describe_point(const std::vector<double>& x, double t);

}  // namespace odetrack
