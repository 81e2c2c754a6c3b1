#include "odetrack/dynamics.hpp"

#include <sstream>

#include "odetrack/error.hpp"

namespace odetrack {

namespace {

Vector to_vector(std::span<const double> x) { return Vector(x.begin(), x.end()); }

void require_equality_only(const TimeVaryingProblem& problem, const char* op) {
  if (!problem.equality_only()) {
    throw ConfigError(std::string(op) + ": " + problem.name +
                      " has inequality constraints; apply slack_augment first");
  }
}

// Runs fn, attaching (x, t) to any SingularityError it raises.
template <typename Fn>
auto at_point(std::span<const double> x, double t, Fn&& fn) {
  try {
    return fn();
  } catch (const SingularityError& e) {
    throw SingularityError(std::string(e.what()) + " at " +
                               describe_point(to_vector(x), t),
                           to_vector(x), t);
  }
}

// -P∇ₓf(x, t).
Vector neg_projected_gradient(const TimeVaryingProblem& problem,
                              std::span<const double> x, double t) {
  const Vector g = problem.grad(x, t);
  if (problem.p == 0) {
    return scaled(-1.0, g);
  }
  return scaled(-1.0, project_tangent(problem.jac(x, t), g));
}

// Jᵀ(JJᵀ)⁻¹h'(x, t).
Vector normal_correction(const TimeVaryingProblem& problem,
                         const DenseMatrix& j, std::span<const double> x,
                         double t) {
  const Vector w = solve_spd(gram_matrix(j), problem.h_t(x, t));
  return matvec_transposed(j, w);
}

}  // namespace

Vector OdeField::operator()(std::span<const double> state, double t) const {
  if (state.size() != state_dim) {
    throw DimensionError(label + ": state has length " +
                         std::to_string(state.size()) + ", expected " +
                         std::to_string(state_dim));
  }
  Vector out = rhs(state, t);
  if (out.size() != state_dim) {
    throw DimensionError(label + ": rhs returned length " +
                         std::to_string(out.size()) + ", expected " +
                         std::to_string(state_dim));
  }
  return out;
}

OdeField reference_field(const TimeVaryingProblem& problem, double alpha) {
  if (!(alpha > 0.0)) {
    throw ConfigError("reference_field: alpha must be positive");
  }
  require_equality_only(problem, "reference_field");
  return {problem.n,
          [problem, alpha](std::span<const double> x, double t) {
            return at_point(x, t, [&] {
              const Vector g = problem.grad(x, t);
              if (problem.p == 0) {
                return scaled(-1.0 / alpha, g);
              }
              const DenseMatrix j = problem.jac(x, t);
              const Vector pg = project_tangent(j, g);
              const Vector correction = normal_correction(problem, j, x, t);
              return axpy(-1.0, correction, scaled(-1.0 / alpha, pg));
            });
          },
          "reference"};
}

ThetaEta theta_eta(const TimeVaryingProblem& problem, std::span<const double> x,
                   double t) {
  require_equality_only(problem, "theta_eta");
  return at_point(x, t, [&] {
    const std::size_t n = problem.n;
    const std::size_t p = problem.p;
    const Vector g = problem.grad(x, t);
    const DenseMatrix j = problem.jac(x, t);
    const DenseMatrix jjt = gram_matrix(j);

    ThetaEta out{DenseMatrix(n, p), {}};
    for (std::size_t c = 0; c < p; ++c) {
      Vector e(p, 0.0);
      e[c] = 1.0;
      const Vector col = matvec_transposed(j, solve_spd(jjt, e));
      for (std::size_t r = 0; r < n; ++r) {
        out.theta(r, c) = col[r];
      }
    }
    // η = g - θ(Jg)
    out.eta = axpy(-1.0, matvec(out.theta, matvec(j, g)), g);
    return out;
  });
}

OdeField lifted_field(const TimeVaryingProblem& problem, double alpha,
                      double rho) {
  if (!(alpha > 0.0) || !(rho > 0.0)) {
    throw ConfigError("lifted_field: alpha and rho must be positive");
  }
  require_equality_only(problem, "lifted_field");
  const std::size_t n = problem.n;
  const std::size_t p = problem.p;
  return {n + 2 * p,
          [problem, alpha, rho, n, p](std::span<const double> state, double t) {
            const auto x = state.first(n);
            const auto u = state.subspan(n, p);
            const auto v = state.subspan(n + p, p);
            const Vector g = problem.grad(x, t);
            Vector out = scaled(-1.0 / alpha, g);
            if (p == 0) {
              return out;
            }
            const DenseMatrix j = problem.jac(x, t);
            const Vector jt_u = matvec_transposed(j, u);
            const Vector jt_v = matvec_transposed(j, v);
            for (std::size_t i = 0; i < n; ++i) {
              out[i] += jt_u[i] / alpha - jt_v[i];
            }
            const Vector jg = matvec(j, g);
            const Vector ht = problem.h_t(x, t);
            const Vector gu = gram_apply(j, u);
            const Vector gv = gram_apply(j, v);
            out.resize(n + 2 * p);
            for (std::size_t k = 0; k < p; ++k) {
              out[n + k] = rho * (jg[k] - gu[k]);
              out[n + p + k] = rho * (ht[k] - gv[k]);
            }
            return out;
          },
          "lifted"};
}

OdeField multiplier_field(DenseMatrix jacobian, Vector j_grad, Vector h_t,
                          double rho) {
  const std::size_t p = jacobian.rows();
  if (j_grad.size() != p || h_t.size() != p) {
    throw DimensionError("multiplier_field: frozen vectors do not match J");
  }
  return {2 * p,
          [j = std::move(jacobian), jg = std::move(j_grad),
           ht = std::move(h_t), rho, p](std::span<const double> uv, double) {
            const Vector gu = gram_apply(j, uv.first(p));
            const Vector gv = gram_apply(j, uv.subspan(p, p));
            Vector out(2 * p);
            for (std::size_t k = 0; k < p; ++k) {
              out[k] = rho * (jg[k] - gu[k]);
              out[p + k] = rho * (ht[k] - gv[k]);
            }
            return out;
          },
          "multipliers"};
}

double multiplier_residual(const DenseMatrix& jacobian,
                           std::span<const double> j_grad,
                           std::span<const double> h_t,
                           std::span<const double> u,
                           std::span<const double> v) {
  if (jacobian.rows() == 0) {
    return 0.0;
  }
  const Vector gu = gram_apply(jacobian, u);
  const Vector gv = gram_apply(jacobian, v);
  return std::max(max_abs_diff(j_grad, gu), max_abs_diff(h_t, gv));
}

OdeField frozen_field(const TimeVaryingProblem& problem, double t0) {
  require_equality_only(problem, "frozen_field");
  return {problem.n,
          [problem, t0](std::span<const double> x, double) {
            return at_point(x, t0,
                            [&] { return neg_projected_gradient(problem, x, t0); });
          },
          "frozen"};
}

OdeField rescaled_field(const TimeVaryingProblem& problem, double alpha,
                        double t0) {
  if (!(alpha >= 0.0)) {
    throw ConfigError("rescaled_field: alpha must be non-negative");
  }
  require_equality_only(problem, "rescaled_field");
  return {problem.n,
          [problem, alpha, t0](std::span<const double> x, double s) {
            if (alpha == 0.0) {
              return at_point(x, t0, [&] {
                return neg_projected_gradient(problem, x, t0);
              });
            }
            const double t = alpha * s + t0;
            return at_point(x, t, [&] {
              Vector out = neg_projected_gradient(problem, x, t);
              if (problem.p > 0) {
                const Vector c =
                    normal_correction(problem, problem.jac(x, t), x, t);
                out = axpy(-alpha, c, out);
              }
              return out;
            });
          },
          "rescaled"};
}

OdeField newton_field(NewtonSystem system, double singular_tol) {
  const std::size_t dim = system.dim;
  const double min_pivot = singular_tol * singular_tol;
  return {dim,
          [sys = std::move(system), min_pivot](std::span<const double> u,
                                               double t) {
            const Vector f = sys.residual(u, t);
            const DenseMatrix jac = sys.jacobian(u, t);
            if (f.size() != sys.dim || jac.rows() != sys.dim ||
                jac.cols() != sys.dim) {
              throw DimensionError("newton_field: system shapes disagree");
            }
            // Normal equations: (F'ᵀF') w = F'ᵀF.
            const DenseMatrix jt = jac.transposed();
            try {
              const Vector w =
                  solve_spd(gram_matrix(jt), matvec(jt, f), min_pivot);
              return scaled(-1.0, w);
            } catch (const SingularityError& e) {
              throw SingularityError(
                  std::string("newton_field: singular Jacobian (") + e.what() +
                      ") at " + describe_point(to_vector(u), t),
                  to_vector(u), t);
            }
          },
          "newton"};
}

OdeField ramm_lift_field(NewtonSystem system, double rho) {
  if (!(rho > 0.0)) {
    throw ConfigError("ramm_lift_field: rho must be positive");
  }
  const std::size_t dim = system.dim;
  return {2 * dim,
          [sys = std::move(system), rho, dim](std::span<const double> state,
                                              double t) {
            const auto u = state.first(dim);
            const auto v = state.subspan(dim, dim);
            const Vector f = sys.residual(u, t);
            const Vector jv = matvec(sys.jacobian(u, t), v);
            Vector out(2 * dim);
            for (std::size_t i = 0; i < dim; ++i) {
              out[i] = -v[i];
              out[dim + i] = rho * (f[i] - jv[i]);
            }
            return out;
          },
          "ramm_lift"};
}

LyapunovRate lyapunov_rate(const TimeVaryingProblem& problem,
                           std::span<const double> x, double t, double alpha) {
  if (!(alpha > 0.0)) {
    throw ConfigError("lyapunov_rate: alpha must be positive");
  }
  require_equality_only(problem, "lyapunov_rate");
  return at_point(x, t, [&] {
    constexpr double kTimeStep = 1e-6;
    const Vector g = problem.grad(x, t);
    LyapunovRate rate;
    if (problem.p == 0) {
      rate.descent = -dot(g, g) / alpha;
    } else {
      const DenseMatrix j = problem.jac(x, t);
      // gᵀPg = ‖Pg‖² since P is a symmetric idempotent.
      const Vector pg = project_tangent(j, g);
      rate.descent = -dot(pg, pg) / alpha;
      rate.drift = -dot(g, normal_correction(problem, j, x, t));
    }
    rate.partial = (problem.f(x, t + kTimeStep) - problem.f(x, t - kTimeStep)) /
                   (2.0 * kTimeStep);
    return rate;
  });
}

}  // namespace odetrack
