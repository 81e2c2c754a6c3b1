#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "odetrack/linalg.hpp"
#include "odetrack/oracle.hpp"
#include "odetrack/problem.hpp"

namespace odetrack {

struct TrackerConfig {
  double alpha = 0.05;
  double rho = 50.0;
  double outer_step = 1e-3;
  /// Step of the u,v relaxation; defaults to 0.5/rho.
  std::optional<double> inner_step;
  double inner_threshold = 1e-8;
  std::size_t inner_max_iters = 200;
  double init_tol = 1e-8;

  double resolved_inner_step() const { return inner_step.value_or(0.5 / rho); }

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

/// State of the lifted system: x plus the multiplier estimates
/// u ≈ (JJᵀ)⁻¹J∇ₓf and v ≈ (JJᵀ)⁻¹h'.
struct TrackerState {
  double t = 0.0;
  Vector x;
  Vector u;
  Vector v;
};

struct Relaxed {
  TrackerState state;
  std::size_t iterations = 0;
};

struct TrajectoryRecord {
  double t = 0.0;
  Vector x;
  double f = 0.0;
  double constraint_residual = 0.0;
  double kkt_residual = 0.0;
  /// RK4 steps of the u,v relaxation spent on this record.
  std::size_t inner_iterations = 0;
  std::optional<double> fstar;
  std::optional<double> gap;
  /// True for the record emitted after a restart at a discontinuity.
  bool restart = false;
};

struct OracleOptions {
  bool enabled = false;
  SearchRegion region;
  /// Benchmark every stride-th record; the others carry no fstar.
  std::size_t stride = 1;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  /// Operations spent inside the relax/step loop, excluding initialization,
  /// diagnostics and oracle calls.
  OpCounts loop_ops;
  std::size_t restarts = 0;
};

/// max(‖P∇ₓf‖∞, ‖h‖∞); ‖∇ₓf‖∞ when p = 0. Zero exactly at regular KKT
/// points.
double kkt_residual(const TimeVaryingProblem& problem,
                    std::span<const double> x, double t);

/// Relaxation threshold for the multiplier residual at J∇ₓf:
/// θ·(1 + ‖J∇ₓf‖∞).
double relaxation_tolerance(const TrackerConfig& cfg,
                            std::span<const double> j_grad);

/// Solves the static program at t0 from x_guess, then relaxes u,v from zero.
/// Throws InitializationError when the static solve fails.
Relaxed initialize(const TimeVaryingProblem& problem, const TrackerConfig& cfg,
                   double t0, std::span<const double> x_guess);

/// Advances u,v with RK4 on the multiplier block of the lifted system, x and
/// t held fixed, until the multiplier residual is within
/// relaxation_tolerance. Uses matrix-vector products only. Throws
/// RelaxationStallError after inner_max_iters steps.
Relaxed inner_relax(const TimeVaryingProblem& problem, const TrackerState& state,
                    const TrackerConfig& cfg);

/// One RK4 step of the x equation of the lifted system. At every stage point
/// the multipliers are re-relaxed (warm-started from the previous stage)
/// before x' = -(1/α)∇ₓf + (1/α)Jᵀu - Jᵀv is evaluated. Returns the state at
/// t + h carrying the multipliers of the last stage.
Relaxed outer_step(const TimeVaryingProblem& problem, const TrackerState& state,
                   const TrackerConfig& cfg, std::optional<double> h = {});

/// Runs the on-line tracker over [t0, t1]: split at discontinuity times,
/// initialize each segment (a static re-solve from the previous x at every
/// restart), then alternate inner_relax and outer_step, recording every step.
Trajectory track(const TimeVaryingProblem& problem, const TrackerConfig& cfg,
                 double t0, double t1, std::span<const double> x_guess,
                 const OracleOptions& oracle = {});

}  // namespace odetrack
