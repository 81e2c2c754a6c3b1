#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "odetrack/linalg.hpp"

namespace odetrack {

using ScalarEvaluator = std::function<double(std::span<const double>, double)>;
using VectorEvaluator = std::function<Vector(std::span<const double>, double)>;
using MatrixEvaluator =
    std::function<DenseMatrix(std::span<const double>, double)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// One-parameter chart of a constraint manifold, used by the oracle to scan
/// constrained problems (n = 2, p = 1) along the curve.
struct ManifoldChart {
  std::function<Vector(double)> point;
  Interval range;
  bool periodic = false;
};

/// Time-varying problem
///
///   min_x f(x,t)  s.t.  h(x,t) = 0,  g(x,t) <= 0.
///
/// Evaluators must be pure and thread-safe. Equality (and inequality)
/// evaluators may be left empty when p (q) is zero. Use the checked accessors
/// below rather than calling the evaluators directly: they validate shapes and
/// finiteness and report the offending point.
struct TimeVaryingProblem {
  std::string name;
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t q = 0;

  ScalarEvaluator objective;
  VectorEvaluator gradient;
  VectorEvaluator equality;
  MatrixEvaluator equality_jacobian;
  VectorEvaluator equality_time_partial;
  VectorEvaluator inequality;
  MatrixEvaluator inequality_jacobian;
  VectorEvaluator inequality_time_partial;

  /// Strictly increasing times at which f, h, g may jump.
  std::vector<double> discontinuity_times;

  // Oracle hints, optional.
  std::optional<ManifoldChart> chart;
  std::function<double(double)> closed_form_min;
  std::vector<Interval> default_box;

  double f(std::span<const double> x, double t) const;
  Vector grad(std::span<const double> x, double t) const;
  Vector h(std::span<const double> x, double t) const;
  DenseMatrix jac(std::span<const double> x, double t) const;
  Vector h_t(std::span<const double> x, double t) const;
  Vector g(std::span<const double> x, double t) const;
  DenseMatrix g_jac(std::span<const double> x, double t) const;
  Vector g_t(std::span<const double> x, double t) const;

  bool equality_only() const { return q == 0; }

  /// Throws ConfigError on inconsistent declarations (missing evaluators,
  /// unsorted discontinuity times).
  void validate() const;
};

struct DerivativeReport {
  double gradient_deviation = 0.0;
  double jacobian_deviation = 0.0;
  double time_partial_deviation = 0.0;
  double inequality_jacobian_deviation = 0.0;
  double inequality_time_partial_deviation = 0.0;
  bool passed = false;
  Vector probe_x;
  double probe_t = 0.0;

  double max_deviation() const;
};

/// Rewrites g(x,t) <= 0 as g(x,t) + z² = 0 over the stacked variable (x, z).
/// The objective ignores z. Throws ConfigError when q == 0 or the inequality
/// evaluators are missing.
TimeVaryingProblem slack_augment(const TimeVaryingProblem& problem);

/// Feasibility tolerance for slack_lift_point.
inline constexpr double kFeasibilityTolerance = 1e-9;

/// (x, z) with z_j = sqrt(-g_j(x,t)). Throws InfeasiblePointError when some
/// g_j(x,t) exceeds kFeasibilityTolerance.
Vector slack_lift_point(const TimeVaryingProblem& problem,
                        std::span<const double> x, double t);

/// Compares the supplied derivatives with central differences at (x, t).
DerivativeReport check_derivatives(const TimeVaryingProblem& problem,
                                   std::span<const double> x, double t,
                                   double fd_step, double tol);

/// Central-difference Jacobian of the gradient (the Hessian of f), symmetrized.
DenseMatrix hessian_fd(const TimeVaryingProblem& problem,
                       std::span<const double> x, double t,
                       double step = 1e-6);

}  // namespace odetrack
