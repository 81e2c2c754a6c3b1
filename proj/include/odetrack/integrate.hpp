#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "odetrack/dynamics.hpp"

namespace odetrack {

struct StepperConfig {
  double step = 1e-3;
  std::size_t max_steps = 10'000'000;
};

struct Observation {
  double t = 0.0;
  Vector state;
  std::size_t step = 0;  // 1-based index of the step just taken
};

using Observer = std::function<void(const Observation&)>;

/// Fixed-step grid over [t0, t1]: ⌈(t1 - t0)/step⌉ steps, the last one
/// shortened so the grid lands exactly on t1. Node times are computed as
/// t0 + k·step (no accumulation).
class StepGrid {
 public:
  StepGrid(double t0, double t1, double step);

  std::size_t count() const { return count_; }
  /// Node k in [0, count]; node(count) == t1 exactly.
  double node(std::size_t k) const;

 private:
  double t0_;
  double t1_;
  double step_;
  std::size_t count_;
};

/// One classical Runge-Kutta step:
///   k₁ = F(t, y), k₂ = F(t + h/2, y + h k₁/2), k₃ = F(t + h/2, y + h k₂/2),
///   k₄ = F(t + h, y + h k₃),  y⁺ = y + h (k₁ + 2k₂ + 2k₃ + k₄)/6.
/// Exactly four rhs evaluations. A non-finite stage raises DivergenceError.
Vector rk4_step(const OdeField& field, std::span<const double> state, double t,
                double h);

/// Integrates from t0 to t1 on StepGrid(t0, t1, cfg.step), calling the
/// observer after every step. Throws BudgetError when the grid needs more than
/// cfg.max_steps steps.
Vector integrate_to(const OdeField& field, std::span<const double> state,
                    double t0, double t1, const StepperConfig& cfg,
                    const Observer& observer = {});

using Segment = std::pair<double, double>;

/// Maximal closed sub-intervals of [t0, t1] whose interiors contain none of
/// the given times. Times outside the open interval are ignored.
std::vector<Segment> split_at_discontinuities(double t0, double t1,
                                              std::span<const double> times);

}  // namespace odetrack
