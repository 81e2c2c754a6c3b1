#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "odetrack/linalg.hpp"
#include "odetrack/problem.hpp"

namespace odetrack {

/// Increasing sample times τ₀ < τ₁ < ... starting at the run start. The
/// tightness δ is the largest gap.
class TauPartition {
 public:
  /// Throws ConfigError unless times has at least two strictly increasing
  /// entries.
  explicit TauPartition(std::vector<double> times);

  /// t0, t0 + δ, t0 + 2δ, ..., with the last gap shortened to end at t1.
  static TauPartition uniform(double t0, double t1, double delta);

  const std::vector<double>& times() const { return times_; }
  double tightness() const { return tightness_; }

 private:
  std::vector<double> times_;
  double tightness_ = 0.0;
};

enum class CriticalKind { kMinimum, kMaximum, kSaddleOrDegenerate };

const char* to_string(CriticalKind kind);

struct CriticalPoint {
  Vector x;
  double f = 0.0;
  CriticalKind kind = CriticalKind::kSaddleOrDegenerate;
};

/// Critical points of f(·, t), sorted by objective value.
struct CriticalPointSet {
  double t = 0.0;
  std::vector<CriticalPoint> points;

  std::vector<CriticalPoint> of_kind(CriticalKind kind) const;
  std::vector<CriticalPoint> minima() const {
    return of_kind(CriticalKind::kMinimum);
  }
};

struct StaticSolveOptions {
  std::size_t max_flow_steps = 200'000;
  std::size_t max_newton_steps = 20;
  double initial_flow_step = 1e-2;
  double max_flow_step = 1e2;
};

/// Local solution of the frozen-time program at time t, reached from x0.
///
/// Integrates the projected gradient flow at frozen t (RK4 with a step that
/// grows while f decreases and halves otherwise) until the KKT residual is at
/// most 10·tol, then polishes with up to 20 Newton steps on the stacked KKT
/// system [∇ₓf + Jᵀλ; h] over (x, λ). When the Newton Jacobian is singular or
/// the polish stops improving, the flow resumes. Throws NoConvergenceError
/// when the residual cannot be brought to tol within the budget.
Vector static_local_solve(const TimeVaryingProblem& problem, double t,
                          std::span<const double> x0, double tol,
                          const StaticSolveOptions& options = {});

/// Grid search region: one interval per coordinate and a per-axis resolution.
/// Problems carrying a manifold chart are scanned along the chart instead and
/// ignore the box.
struct SearchRegion {
  std::vector<Interval> box;
  std::size_t resolution = 2001;
};

/// Brute-force critical structure of f(·, t) for n <= 2 (unconstrained) or
/// along a catalog manifold chart (n = 2, p = 1). Grid minima are refined with
/// static_local_solve, other stationary candidates with Newton on the
/// gradient; points within 1e-4 of each other are merged. Throws
/// DimensionError for unsupported shapes.
CriticalPointSet grid_scan(const TimeVaryingProblem& problem, double t,
                           const SearchRegion& region);

/// Benchmark optimal value at time t: the problem's closed form when it has
/// one, otherwise the smallest grid_scan minimum.
double f_star(const TimeVaryingProblem& problem, double t,
              const SearchRegion& region);

/// Sampled-time solution with momentum penalty: x₀ solves the program at τ₀,
/// and each x_k is the local solution, warm-started at x_{k-1}, of
///   min f(x, τ_k) + (α/2)‖x - x_{k-1}‖²/(τ_k - τ_{k-1})  s.t. h(x, τ_k) = 0.
std::vector<Vector> discrete_solution(const TimeVaryingProblem& problem,
                                      double alpha,
                                      const TauPartition& partition,
                                      std::span<const double> x_guess,
                                      double tol = 1e-10);

}  // namespace odetrack
