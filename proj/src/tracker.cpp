#include "odetrack/tracker.hpp"

#include <cmath>
#include <sstream>

#include "odetrack/dynamics.hpp"
#include "odetrack/error.hpp"
#include "odetrack/integrate.hpp"

namespace odetrack {

namespace {

struct FrozenData {
  DenseMatrix jacobian;
  Vector gradient;
  Vector j_grad;
  Vector h_t;
};

FrozenData freeze(const TimeVaryingProblem& problem, std::span<const double> x,
                  double t) {
  FrozenData d;
  d.gradient = problem.grad(x, t);
  if (problem.p > 0) {
    d.jacobian = problem.jac(x, t);
    d.j_grad = matvec(d.jacobian, d.gradient);
    d.h_t = problem.h_t(x, t);
  }
  return d;
}

// Relaxes u, v in place at frozen (x, t). Returns the number of RK4 steps.
std::size_t relax_multipliers(const FrozenData& d, double t, Vector& u,
                              Vector& v, const TrackerConfig& cfg) {
  const std::size_t p = d.jacobian.rows();
  if (p == 0) {
    return 0;
  }
  const double tol = relaxation_tolerance(cfg, d.j_grad);
  double r = multiplier_residual(d.jacobian, d.j_grad, d.h_t, u, v);
  if (r <= tol) {
    return 0;
  }
  const OdeField field = multiplier_field(d.jacobian, d.j_grad, d.h_t, cfg.rho);
  const double step = cfg.resolved_inner_step();
  Vector uv(u);
  uv.insert(uv.end(), v.begin(), v.end());
  std::size_t iters = 0;
  while (r > tol) {
    if (iters >= cfg.inner_max_iters) {
      std::ostringstream os;
      os << "inner relaxation stalled: residual " << r << " above " << tol
         << " after " << iters << " iterations at t=" << t;
      throw RelaxationStallError(os.str());
    }
    uv = rk4_step(field, uv, t, step);
    ++iters;
    const auto us = std::span<const double>(uv).first(p);
    const auto vs = std::span<const double>(uv).subspan(p, p);
    r = multiplier_residual(d.jacobian, d.j_grad, d.h_t, us, vs);
  }
  u.assign(uv.begin(), uv.begin() + static_cast<long>(p));
  v.assign(uv.begin() + static_cast<long>(p), uv.end());
  return iters;
}

void require_finite(double value, const char* field) {
  if (!std::isfinite(value)) {
    throw ConfigError(std::string("tracker.") + field + " must be finite");
  }
}

}  // namespace

void TrackerConfig::validate() const {
  auto positive = [](double value, const char* field) {
    require_finite(value, field);
    if (!(value > 0.0)) {
      throw ConfigError(std::string("tracker.") + field + " must be positive");
    }
  };
  positive(alpha, "alpha");
  positive(rho, "rho");
  positive(outer_step, "outer_step");
  if (inner_step) {
    positive(*inner_step, "inner_step");
  }
  positive(inner_threshold, "inner_threshold");
  if (!(inner_threshold < 1.0)) {
    throw ConfigError("tracker.inner_threshold must be below 1");
  }
  if (inner_max_iters < 1) {
    throw ConfigError("tracker.inner_max_iters must be at least 1");
  }
  positive(init_tol, "init_tol");
}

double kkt_residual(const TimeVaryingProblem& problem,
                    std::span<const double> x, double t) {
  const Vector g = problem.grad(x, t);
  if (problem.p == 0) {
    return norm_inf(g);
  }
  const DenseMatrix j = problem.jac(x, t);
  Vector pg;
  try {
    pg = project_tangent(j, g);
  } catch (const SingularityError&) {
    throw SingularityError("kkt_residual: constraint Jacobian rank deficient at " +
                               describe_point(Vector(x.begin(), x.end()), t),
                           Vector(x.begin(), x.end()), t);
  }
  return std::max(norm_inf(pg), norm_inf(problem.h(x, t)));
}

double relaxation_tolerance(const TrackerConfig& cfg,
                            std::span<const double> j_grad) {
  return cfg.inner_threshold * (1.0 + norm_inf(j_grad));
}

Relaxed initialize(const TimeVaryingProblem& problem, const TrackerConfig& cfg,
                   double t0, std::span<const double> x_guess) {
  cfg.validate();
  if (x_guess.size() != problem.n) {
    throw DimensionError("initial guess has " + std::to_string(x_guess.size()) +
                         " entries, problem " + problem.name + " has n=" +
                         std::to_string(problem.n));
  }
  Vector x;
  try {
    x = static_local_solve(problem, t0, x_guess, cfg.init_tol);
  } catch (const NoConvergenceError& e) {
    throw InitializationError(std::string("initialization failed: ") + e.what());
  }
  TrackerState state{t0, std::move(x), Vector(problem.p, 0.0),
                     Vector(problem.p, 0.0)};
  return inner_relax(problem, state, cfg);
}

Relaxed inner_relax(const TimeVaryingProblem& problem, const TrackerState& state,
                    const TrackerConfig& cfg) {
  Relaxed out{state, 0};
  if (problem.p == 0) {
    return out;
  }
  const FrozenData d = freeze(problem, state.x, state.t);
  out.iterations = relax_multipliers(d, state.t, out.state.u, out.state.v, cfg);
  return out;
}

Relaxed outer_step(const TimeVaryingProblem& problem, const TrackerState& state,
                   const TrackerConfig& cfg, std::optional<double> h) {
  const double step = h.value_or(cfg.outer_step);
  const std::size_t n = problem.n;
  Vector u = state.u;
  Vector v = state.v;
  std::size_t iters = 0;
  const OdeField field{
      n,
      [&](std::span<const double> x, double t) {
        const FrozenData d = freeze(problem, x, t);
        Vector out = scaled(-1.0 / cfg.alpha, d.gradient);
        if (problem.p == 0) {
          return out;
        }
        iters += relax_multipliers(d, t, u, v, cfg);
        const Vector jt_u = matvec_transposed(d.jacobian, u);
        const Vector jt_v = matvec_transposed(d.jacobian, v);
        for (std::size_t i = 0; i < n; ++i) {
          out[i] += jt_u[i] / cfg.alpha - jt_v[i];
        }
        return out;
      },
      "tracker"};
  Vector x = rk4_step(field, state.x, state.t, step);
  return {TrackerState{state.t + step, std::move(x), std::move(u), std::move(v)},
          iters};
}

Trajectory track(const TimeVaryingProblem& problem, const TrackerConfig& cfg,
                 double t0, double t1, std::span<const double> x_guess,
                 const OracleOptions& oracle) {
  cfg.validate();
  if (!(t1 > t0)) {
    throw ConfigError("track: t1 must be greater than t0");
  }
  if (oracle.enabled && oracle.stride < 1) {
    throw ConfigError("oracle.stride must be at least 1");
  }
  Trajectory out;
  const auto segments =
      split_at_discontinuities(t0, t1, problem.discontinuity_times);
  Vector x(x_guess.begin(), x_guess.end());
  std::size_t emitted = 0;

  auto record = [&](const TrackerState& s, std::size_t iters, bool restart) {
    TrajectoryRecord r;
    r.t = s.t;
    r.x = s.x;
    r.f = problem.f(s.x, s.t);
    r.constraint_residual = problem.p > 0 ? norm_inf(problem.h(s.x, s.t)) : 0.0;
    r.kkt_residual = kkt_residual(problem, s.x, s.t);
    r.inner_iterations = iters;
    r.restart = restart;
    if (oracle.enabled && emitted % oracle.stride == 0) {
      r.fstar = f_star(problem, s.t, oracle.region);
      r.gap = r.f - *r.fstar;
    }
    ++emitted;
    out.records.push_back(std::move(r));
  };

  for (std::size_t seg = 0; seg < segments.size(); ++seg) {
    const auto [a, b] = segments[seg];
    std::ostringstream where;
    where << "segment " << seg << " [" << a << ", " << b << "]";
    try {
      Relaxed init = initialize(problem, cfg, a, x);
      TrackerState state = std::move(init.state);
      if (seg > 0) {
        ++out.restarts;
        record(state, init.iterations, true);
      }
      const StepGrid grid(a, b, cfg.outer_step);
      for (std::size_t k = 0; k < grid.count(); ++k) {
        const double tb = grid.node(k + 1);
        const OpCounts before = op_counter::snapshot();
        const Relaxed relaxed = inner_relax(problem, state, cfg);
        Relaxed stepped = outer_step(problem, relaxed.state, cfg, tb - state.t);
        out.loop_ops += op_counter::snapshot() - before;
        state = std::move(stepped.state);
        state.t = tb;
        record(state, relaxed.iterations + stepped.iterations, false);
      }
      x = state.x;
    } catch (Error& e) {
      e.add_context(where.str());
      throw;
    }
  }
  return out;
}

}  // namespace odetrack
