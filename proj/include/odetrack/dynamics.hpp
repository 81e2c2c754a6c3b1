#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "odetrack/linalg.hpp"
#include "odetrack/problem.hpp"

namespace odetrack {

/// Right-hand side y' = rhs(y, t) over a flat state vector.
struct OdeField {
  std::size_t state_dim = 0;
  std::function<Vector(std::span<const double>, double)> rhs;
  std::string label;

  /// Evaluates rhs and checks the output length.
  Vector operator()(std::span<const double> state, double t) const;
};

/// Square system F(u) = 0 with Jacobian F'(u). Evaluators receive the time
/// as well so a time-varying family F(·, t) can be tracked; static systems
/// ignore it.
struct NewtonSystem {
  std::size_t dim = 0;
  std::function<Vector(std::span<const double>, double)> residual;
  std::function<DenseMatrix(std::span<const double>, double)> jacobian;
};

/// Tracking ODE with inverses:
///   x' = -(1/α) P ∇ₓf - Jᵀ(JJᵀ)⁻¹ h'.
/// For p = 0 this is the plain gradient flow -(1/α)∇ₓf.
OdeField reference_field(const TimeVaryingProblem& problem, double alpha);

struct ThetaEta {
  DenseMatrix theta;  // n×p, Jᵀ(JJᵀ)⁻¹
  Vector eta;         // [I - θJ] ∇ₓf
};

ThetaEta theta_eta(const TimeVaryingProblem& problem, std::span<const double> x,
                   double t);

/// Inversion-free lifted system over (x, u, v):
///   x' = -(1/α)∇ₓf + (1/α)Jᵀu - Jᵀv
///   u' = ρ (J∇ₓf - JJᵀu)
///   v' = ρ (h' - JJᵀv)
/// Only matrix-vector products; never calls solve_spd.
OdeField lifted_field(const TimeVaryingProblem& problem, double alpha,
                      double rho);

/// The (u, v) block of lifted_field with x and t frozen, given the frozen
/// quantities J, J∇ₓf and h'.
OdeField multiplier_field(DenseMatrix jacobian, Vector j_grad, Vector h_t,
                          double rho);

/// Residual of the multiplier subsystem,
///   max(‖J∇ₓf - JJᵀu‖∞, ‖h' - JJᵀv‖∞).
double multiplier_residual(const DenseMatrix& jacobian,
                           std::span<const double> j_grad,
                           std::span<const double> h_t,
                           std::span<const double> u,
                           std::span<const double> v);

/// Autonomous projected gradient flow at frozen time t0: x' = -P∇ₓf(x, t0).
OdeField frozen_field(const TimeVaryingProblem& problem, double t0);

/// Tracking ODE in the rescaled time s = (t - t0)/α:
///   x' = -P∇ₓf(x, αs + t0) - α Jᵀ(JJᵀ)⁻¹h'(x, αs + t0).
/// At α = 0 it returns exactly the frozen_field values.
OdeField rescaled_field(const TimeVaryingProblem& problem, double alpha,
                        double t0);

/// Pivot floor below which the Newton Jacobian is treated as singular; in
/// one dimension this is |F'| < 1e-8.
inline constexpr double kNewtonSingularTolerance = 1e-8;

/// Continuous Newton method u' = -F'(u)⁻¹F(u). The square solve goes through
/// the normal equations; a Cholesky pivot of F'ᵀF' below singular_tol²
/// raises SingularityError carrying u.
OdeField newton_field(NewtonSystem system,
                      double singular_tol = kNewtonSingularTolerance);

/// Vector lift of the Newton method over (u, v):
///   u' = -v,  v' = ρ [F(u) - F'(u) v].
OdeField ramm_lift_field(NewtonSystem system, double rho);

/// Terms of d/dt f(x(t), t) along the tracking ODE.
struct LyapunovRate {
  double descent = 0.0;  // -(1/α) ∇fᵀ P ∇f, never positive
  double drift = 0.0;    // -∇fᵀ Jᵀ(JJᵀ)⁻¹ h'
  double partial = 0.0;  // ∂f/∂t by central difference, step 1e-6

  double total() const { return descent + drift + partial; }
};

LyapunovRate lyapunov_rate(const TimeVaryingProblem& problem,
                           std::span<const double> x, double t, double alpha);

}  // namespace odetrack
