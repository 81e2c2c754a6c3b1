#include "odetrack/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>

#include "odetrack/dynamics.hpp"
#include "odetrack/error.hpp"
#include "odetrack/integrate.hpp"
#include "odetrack/tracker.hpp"

namespace odetrack {

namespace {

constexpr double kDedupRadius = 1e-4;
constexpr double kSecondDifferenceStep = 1e-4;
constexpr std::size_t kStagnationSteps = 200;

Vector to_vector(std::span<const double> x) { return Vector(x.begin(), x.end()); }

// Gauss-Newton pull back onto h(·, t) = 0 along the rows of J.
void retract(const TimeVaryingProblem& problem, Vector& x, double t) {
  if (problem.p == 0) {
    return;
  }
  for (int it = 0; it < 8; ++it) {
    const Vector h = problem.h(x, t);
    if (norm_inf(h) <= 1e-15) {
      return;
    }
    const DenseMatrix j = problem.jac(x, t);
    const Vector w = solve_spd(gram_matrix(j), h);
    x = axpy(-1.0, matvec_transposed(j, w), x);
  }
}

// KKT system of the frozen program over (x, λ):
//   F = [∇ₓf + Jᵀλ; h],  F' = [[∇²L, Jᵀ], [J, 0]]
// with the Hessian of the Lagrangian by central differences.
NewtonSystem kkt_system(const TimeVaryingProblem& problem) {
  const std::size_t n = problem.n;
  const std::size_t p = problem.p;
  auto lagrangian_gradient = [problem, n, p](std::span<const double> z,
                                             double t) {
    const auto x = z.first(n);
    Vector g = problem.grad(x, t);
    if (p > 0) {
      const Vector jt = matvec_transposed(problem.jac(x, t), z.subspan(n, p));
      for (std::size_t i = 0; i < n; ++i) {
        g[i] += jt[i];
      }
    }
    return g;
  };
  NewtonSystem sys;
  sys.dim = n + p;
  sys.residual = [problem, lagrangian_gradient, n](std::span<const double> z,
                                                   double t) {
    Vector out = lagrangian_gradient(z, t);
    const Vector h = problem.h(z.first(n), t);
    out.insert(out.end(), h.begin(), h.end());
    return out;
  };
  sys.jacobian = [problem, lagrangian_gradient, n, p](std::span<const double> z,
                                                      double t) {
    DenseMatrix k(n + p, n + p);
    Vector probe = to_vector(z);
    for (std::size_t i = 0; i < n; ++i) {
      const double step = 1e-6 * std::max(1.0, std::abs(z[i]));
      probe[i] = z[i] + step;
      const Vector plus = lagrangian_gradient(probe, t);
      probe[i] = z[i] - step;
      const Vector minus = lagrangian_gradient(probe, t);
      probe[i] = z[i];
      for (std::size_t r = 0; r < n; ++r) {
        k(r, i) = (plus[r] - minus[r]) / (2.0 * step);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const double s = 0.5 * (k(i, j) + k(j, i));
        k(i, j) = s;
        k(j, i) = s;
      }
    }
    if (p > 0) {
      const DenseMatrix j = problem.jac(z.first(n), t);
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          k(n + r, c) = j(r, c);
          k(c, n + r) = j(r, c);
        }
      }
    }
    return k;
  };
  return sys;
}

class StaticSolver {
 public:
  StaticSolver(const TimeVaryingProblem& problem, double t, double tol,
               const StaticSolveOptions& options)
      : problem_{problem},
        t_{t},
        tol_{tol},
        options_{options},
        field_{frozen_field(problem, t)},
        step_{options.initial_flow_step} {}

  Vector solve(std::span<const double> x0) {
    x_ = to_vector(x0);
    retract(problem_, x_, t_);
    refresh();
    if (residual_ <= tol_) {
      return x_;
    }
    flow_until(10.0 * tol_);
    if (residual_ > tol_) {
      polish();
    }
    if (residual_ > tol_) {
      flow_until(tol_);
    }
    if (!(residual_ <= tol_)) {
      std::ostringstream os;
      os << "static_local_solve: KKT residual " << residual_
         << " above tolerance " << tol_ << " after " << flow_steps_
         << " flow steps at " << describe_point(x_, t_);
      throw NoConvergenceError(os.str(), residual_);
    }
    return x_;
  }

 private:
  void refresh() {
    f_ = problem_.f(x_, t_);
    residual_ = kkt_residual(problem_, x_, t_);
  }

  // Lyapunov-safeguarded RK4 on the frozen projected gradient flow. Steps
  // that leave f unchanged up to rounding must still shrink the residual.
  // Returns early once the residual stops improving so Newton can take over.
  void flow_until(double target) {
    double best = residual_;
    std::size_t since_best = 0;
    while (residual_ > target && flow_steps_ < options_.max_flow_steps) {
      ++flow_steps_;
      if (step_ < 1e-14 || since_best > kStagnationSteps) {
        return;
      }
      Vector trial;
      double f_trial;
      double r_trial;
      try {
        trial = rk4_step(field_, x_, 0.0, step_);
        retract(problem_, trial, t_);
        f_trial = problem_.f(trial, t_);
        r_trial = kkt_residual(problem_, trial, t_);
      } catch (const DivergenceError&) {
        step_ *= 0.5;
        continue;
      } catch (const SingularityError&) {
        step_ *= 0.5;
        continue;
      }
      const bool decreased = f_trial < f_;
      const bool level = f_trial <= f_ + 1e-14 * (1.0 + std::abs(f_));
      if (decreased || (level && r_trial < residual_)) {
        x_ = std::move(trial);
        f_ = f_trial;
        residual_ = r_trial;
        step_ = std::min(step_ * 1.5, options_.max_flow_step);
      } else {
        step_ *= 0.5;
      }
      if (residual_ < 0.999 * best) {
        best = residual_;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
  }

  void polish() {
    const std::size_t n = problem_.n;
    const std::size_t p = problem_.p;
    Vector z = x_;
    if (p > 0) {
      // Least-squares multipliers: λ = -(JJᵀ)⁻¹J∇ₓf.
      const DenseMatrix j = problem_.jac(x_, t_);
      const Vector lambda =
          solve_spd(gram_matrix(j), matvec(j, problem_.grad(x_, t_)));
      for (double l : lambda) {
        z.push_back(-l);
      }
    }
    const OdeField newton = newton_field(kkt_system(problem_));
    for (std::size_t k = 0; k < options_.max_newton_steps; ++k) {
      Vector direction;
      try {
        direction = newton(z, t_);
      } catch (const SingularityError&) {
        return;
      }
      Vector next = z;
      for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] += direction[i];
      }
      if (!all_finite(next)) {
        return;
      }
      const Vector x_next(next.begin(), next.begin() + static_cast<long>(n));
      double r_next;
      try {
        r_next = kkt_residual(problem_, x_next, t_);
      } catch (const SingularityError&) {
        return;
      }
      if (!(r_next < residual_)) {
        return;
      }
      z = std::move(next);
      x_ = x_next;
      refresh();
      if (residual_ <= tol_ * 1e-3) {
        return;
      }
    }
  }

  const TimeVaryingProblem& problem_;
  double t_;
  double tol_;
  StaticSolveOptions options_;
  OdeField field_;
  double step_;
  std::size_t flow_steps_ = 0;
  Vector x_;
  double f_ = 0.0;
  double residual_ = 0.0;
};

// One-parameter slice of the problem: either x itself (n = 1) or a manifold
// chart (n = 2, p = 1).
struct Slice {
  std::function<Vector(double)> point;
  std::function<double(double)> value;
  std::function<double(double)> slope;
  Interval range;
  bool periodic = false;
};

Slice make_slice(const TimeVaryingProblem& problem, double t,
                 const SearchRegion& region) {
  Slice s;
  if (problem.chart) {
    const ManifoldChart chart = *problem.chart;
    s.point = chart.point;
    s.range = chart.range;
    s.periodic = chart.periodic;
    s.value = [&problem, t, chart](double a) {
      return problem.f(chart.point(a), t);
    };
    s.slope = [&problem, t, chart](double a) {
      constexpr double kStep = 1e-6;
      const Vector plus = chart.point(a + kStep);
      const Vector minus = chart.point(a - kStep);
      Vector tangent(plus.size());
      for (std::size_t i = 0; i < tangent.size(); ++i) {
        tangent[i] = (plus[i] - minus[i]) / (2.0 * kStep);
      }
      return dot(problem.grad(chart.point(a), t), tangent);
    };
    return s;
  }
  if (region.box.size() != 1) {
    throw DimensionError("grid_scan: search box must have one interval for n = 1");
  }
  s.point = [](double a) { return Vector{a}; };
  s.range = region.box[0];
  s.value = [&problem, t](double a) { return problem.f(Vector{a}, t); };
  s.slope = [&problem, t](double a) { return problem.grad(Vector{a}, t)[0]; };
  return s;
}

CriticalKind classify_1d(const std::function<double(double)>& value, double a,
                         double probe) {
  const double f0 = value(a);
  const double e = kSecondDifferenceStep;
  const double curvature =
      (value(a + e) - 2.0 * f0 + value(a - e)) / (e * e);
  const double floor = 1e-3 * std::max(1.0, std::abs(f0));
  if (curvature > floor) return CriticalKind::kMinimum;
  if (curvature < -floor) return CriticalKind::kMaximum;
  const double left = value(a - probe);
  const double right = value(a + probe);
  if (left > f0 && right > f0) return CriticalKind::kMinimum;
  if (left < f0 && right < f0) return CriticalKind::kMaximum;
  return CriticalKind::kSaddleOrDegenerate;
}

// Newton on the slope, staying within `radius` of the start.
std::optional<double> refine_stationary_1d(const Slice& s, double a0,
                                           double radius) {
  double a = a0;
  for (int it = 0; it < 200; ++it) {
    const double d = s.slope(a);
    if (d == 0.0) break;
    const double h = 1e-6 * std::max(1.0, std::abs(a));
    const double dd = (s.slope(a + h) - s.slope(a - h)) / (2.0 * h);
    if (dd == 0.0 || !std::isfinite(dd)) break;
    const double next = a - d / dd;
    if (!std::isfinite(next) || std::abs(next - a0) > radius) {
      return std::nullopt;
    }
    const bool stalled = std::abs(next - a) <= 1e-15 * std::max(1.0, std::abs(a));
    a = next;
    if (stalled) break;
  }
  const double f = s.value(a);
  if (std::abs(s.slope(a)) > 1e-7 * std::max(1.0, std::abs(f))) {
    return std::nullopt;
  }
  return a;
}

void insert_unique(std::vector<CriticalPoint>& out, CriticalPoint cp) {
  for (const auto& existing : out) {
    if (max_abs_diff(existing.x, cp.x) <= kDedupRadius) {
      return;
    }
  }
  out.push_back(std::move(cp));
}

void sort_points(std::vector<CriticalPoint>& points) {
  std::stable_sort(points.begin(), points.end(),
                   [](const CriticalPoint& a, const CriticalPoint& b) {
                     if (a.f != b.f) return a.f < b.f;
                     return a.x < b.x;
                   });
}

CriticalPointSet scan_slice(const TimeVaryingProblem& problem, double t,
                            const SearchRegion& region) {
  const Slice s = make_slice(problem, t, region);
  const std::size_t res = region.resolution;
  if (res < 3) {
    throw ConfigError("grid_scan: resolution must be at least 3");
  }
  const double width = s.range.hi - s.range.lo;
  const double spacing = width / static_cast<double>(s.periodic ? res : res - 1);
  std::vector<double> grid(res), values(res), slopes(res);
  for (std::size_t i = 0; i < res; ++i) {
    grid[i] = s.range.lo + static_cast<double>(i) * spacing;
    values[i] = s.value(grid[i]);
    slopes[i] = s.slope(grid[i]);
  }

  std::vector<std::size_t> minima, stationary;
  auto neighbour = [&](std::size_t i, int offset) -> std::optional<std::size_t> {
    const long j = static_cast<long>(i) + offset;
    if (j >= 0 && j < static_cast<long>(res)) return static_cast<std::size_t>(j);
    if (!s.periodic) return std::nullopt;
    return static_cast<std::size_t>((j + static_cast<long>(res)) % static_cast<long>(res));
  };
  for (std::size_t i = 0; i < res; ++i) {
    const auto l = neighbour(i, -1);
    const auto r = neighbour(i, +1);
    if (!l || !r) continue;
    if (values[i] < values[*l] && values[i] <= values[*r]) {
      minima.push_back(i);
    }
    const double ai = std::abs(slopes[i]);
    if ((ai <= std::abs(slopes[*l]) && ai <= std::abs(slopes[*r])) ||
        slopes[i] * slopes[*r] < 0.0) {
      stationary.push_back(i);
    }
  }

  CriticalPointSet out;
  out.t = t;
  for (std::size_t i : minima) {
    Vector x;
    try {
      x = static_local_solve(problem, t, s.point(grid[i]), 1e-10);
    } catch (const NoConvergenceError&) {
      continue;
    }
    insert_unique(out.points, {x, problem.f(x, t), CriticalKind::kMinimum});
  }
  for (std::size_t i : stationary) {
    const auto a = refine_stationary_1d(s, grid[i], 3.0 * spacing);
    if (!a) continue;
    const Vector x = s.point(*a);
    insert_unique(out.points,
                  {x, problem.f(x, t), classify_1d(s.value, *a, spacing)});
  }
  sort_points(out.points);
  return out;
}

// Eigenvalues of a symmetric 2×2 matrix, ascending.
std::pair<double, double> eigenvalues_2x2(const DenseMatrix& m) {
  const double tr = m(0, 0) + m(1, 1);
  const double diff = m(0, 0) - m(1, 1);
  const double disc = std::sqrt(0.25 * diff * diff + m(0, 1) * m(0, 1));
  return {0.5 * tr - disc, 0.5 * tr + disc};
}

CriticalKind classify_2d(const TimeVaryingProblem& problem, double t,
                         const Vector& x, double probe) {
  const DenseMatrix hess = hessian_fd(problem, x, t, kSecondDifferenceStep);
  const auto [lo, hi] = eigenvalues_2x2(hess);
  const double f0 = problem.f(x, t);
  const double floor = 1e-3 * std::max(1.0, std::abs(f0));
  if (lo > floor) return CriticalKind::kMinimum;
  if (hi < -floor) return CriticalKind::kMaximum;
  if (lo < -floor && hi > floor) return CriticalKind::kSaddleOrDegenerate;
  int above = 0;
  int below = 0;
  for (int k = 0; k < 8; ++k) {
    const double angle = k * std::numbers::pi / 4.0;
    const Vector y{x[0] + probe * std::cos(angle), x[1] + probe * std::sin(angle)};
    const double fy = problem.f(y, t);
    above += fy > f0;
    below += fy < f0;
  }
  if (above == 8) return CriticalKind::kMinimum;
  if (below == 8) return CriticalKind::kMaximum;
  return CriticalKind::kSaddleOrDegenerate;
}

std::optional<Vector> refine_stationary_2d(const TimeVaryingProblem& problem,
                                           double t, const Vector& x0,
                                           double radius) {
  Vector x = x0;
  for (int it = 0; it < 200; ++it) {
    const Vector g = problem.grad(x, t);
    if (norm_inf(g) == 0.0) break;
    const DenseMatrix hess = hessian_fd(problem, x, t);
    const double det = hess(0, 0) * hess(1, 1) - hess(0, 1) * hess(1, 0);
    if (det == 0.0 || !std::isfinite(det)) break;
    const Vector step{(hess(1, 1) * g[0] - hess(0, 1) * g[1]) / det,
                      (hess(0, 0) * g[1] - hess(1, 0) * g[0]) / det};
    const Vector next{x[0] - step[0], x[1] - step[1]};
    if (!all_finite(next) || max_abs_diff(next, x0) > radius) {
      return std::nullopt;
    }
    const bool stalled = norm_inf(step) <= 1e-15 * std::max(1.0, norm_inf(x));
    x = next;
    if (stalled) break;
  }
  if (norm_inf(problem.grad(x, t)) >
      1e-7 * std::max(1.0, std::abs(problem.f(x, t)))) {
    return std::nullopt;
  }
  return x;
}

CriticalPointSet scan_plane(const TimeVaryingProblem& problem, double t,
                            const SearchRegion& region) {
  if (region.box.size() != 2) {
    throw DimensionError("grid_scan: search box must have two intervals for n = 2");
  }
  const std::size_t res = region.resolution;
  if (res < 3) {
    throw ConfigError("grid_scan: resolution must be at least 3");
  }
  const double dx = (region.box[0].hi - region.box[0].lo) / static_cast<double>(res - 1);
  const double dy = (region.box[1].hi - region.box[1].lo) / static_cast<double>(res - 1);
  auto point = [&](std::size_t i, std::size_t j) {
    return Vector{region.box[0].lo + static_cast<double>(i) * dx,
                  region.box[1].lo + static_cast<double>(j) * dy};
  };
  std::vector<double> values(res * res), slopes(res * res);
  for (std::size_t i = 0; i < res; ++i) {
    for (std::size_t j = 0; j < res; ++j) {
      const Vector x = point(i, j);
      values[i * res + j] = problem.f(x, t);
      slopes[i * res + j] = norm2(problem.grad(x, t));
    }
  }

  CriticalPointSet out;
  out.t = t;
  std::vector<Vector> stationary;
  for (std::size_t i = 1; i + 1 < res; ++i) {
    for (std::size_t j = 1; j + 1 < res; ++j) {
      const std::size_t c = i * res + j;
      bool is_min = true;
      bool is_flat = true;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const std::size_t o = (i + di) * res + (j + dj);
          is_min = is_min && values[c] < values[o];
          is_flat = is_flat && slopes[c] <= slopes[o];
        }
      }
      if (is_min) {
        try {
          const Vector x = static_local_solve(problem, t, point(i, j), 1e-10);
          insert_unique(out.points, {x, problem.f(x, t), CriticalKind::kMinimum});
        } catch (const NoConvergenceError&) {
        }
      }
      if (is_flat) {
        stationary.push_back(point(i, j));
      }
    }
  }
  const double probe = std::max(dx, dy);
  for (const Vector& x0 : stationary) {
    const auto x = refine_stationary_2d(problem, t, x0, 3.0 * probe);
    if (!x) continue;
    insert_unique(out.points,
                  {*x, problem.f(*x, t), classify_2d(problem, t, *x, probe)});
  }
  sort_points(out.points);
  return out;
}

}  // namespace

TauPartition::TauPartition(std::vector<double> times) : times_{std::move(times)} {
  if (times_.size() < 2) {
    throw ConfigError("partition needs at least two times");
  }
  for (std::size_t k = 1; k < times_.size(); ++k) {
    const double gap = times_[k] - times_[k - 1];
    if (!(gap > 0.0)) {
      throw ConfigError("partition times must be strictly increasing");
    }
    tightness_ = std::max(tightness_, gap);
  }
}

TauPartition TauPartition::uniform(double t0, double t1, double delta) {
  if (!(t1 > t0)) {
    throw ConfigError("partition horizon must have t1 > t0");
  }
  const StepGrid grid(t0, t1, delta);
  std::vector<double> times;
  times.reserve(grid.count() + 1);
  for (std::size_t k = 0; k <= grid.count(); ++k) {
    times.push_back(grid.node(k));
  }
  return TauPartition(std::move(times));
}

const char* to_string(CriticalKind kind) {
  switch (kind) {
    case CriticalKind::kMinimum:
      return "min";
    case CriticalKind::kMaximum:
      return "max";
    case CriticalKind::kSaddleOrDegenerate:
      return "saddle/degenerate";
  }
  return "unknown";
}

std::vector<CriticalPoint> CriticalPointSet::of_kind(CriticalKind kind) const {
  std::vector<CriticalPoint> out;
  for (const auto& cp : points) {
    if (cp.kind == kind) out.push_back(cp);
  }
  return out;
}

Vector static_local_solve(const TimeVaryingProblem& problem, double t,
                          std::span<const double> x0, double tol,
                          const StaticSolveOptions& options) {
  if (!(tol > 0.0)) {
    throw ConfigError("static_local_solve: tol must be positive");
  }
  if (!all_finite(x0)) {
    throw ConfigError("static_local_solve: initial point is not finite");
  }
  StaticSolver solver(problem, t, tol, options);
  return solver.solve(x0);
}

CriticalPointSet grid_scan(const TimeVaryingProblem& problem, double t,
                           const SearchRegion& region) {
  if (problem.q > 0) {
    throw DimensionError("grid_scan: inequality-constrained problems are not supported");
  }
  if (problem.n == 2 && problem.p == 1 && problem.chart) {
    return scan_slice(problem, t, region);
  }
  if (problem.p == 0 && problem.n == 1) {
    return scan_slice(problem, t, region);
  }
  if (problem.p == 0 && problem.n == 2) {
    return scan_plane(problem, t, region);
  }
  throw DimensionError("grid_scan: unsupported shape n=" + std::to_string(problem.n) +
                       ", p=" + std::to_string(problem.p) +
                       " (n <= 2 unconstrained, or a chart for n = 2, p = 1)");
}

double f_star(const TimeVaryingProblem& problem, double t,
              const SearchRegion& region) {
  if (problem.closed_form_min) {
    return problem.closed_form_min(t);
  }
  const auto minima = grid_scan(problem, t, region).minima();
  if (minima.empty()) {
    throw Error("f_star: no interior minimum in the search region at t=" +
                std::to_string(t));
  }
  return minima.front().f;
}

std::vector<Vector> discrete_solution(const TimeVaryingProblem& problem,
                                      double alpha,
                                      const TauPartition& partition,
                                      std::span<const double> x_guess,
                                      double tol) {
  if (!(alpha > 0.0)) {
    throw ConfigError("discrete_solution: alpha must be positive");
  }
  const auto& tau = partition.times();
  std::vector<Vector> out;
  out.reserve(tau.size());
  try {
    out.push_back(static_local_solve(problem, tau[0], x_guess, tol));
  } catch (Error& e) {
    e.add_context("discrete_solution index 0");
    throw;
  }

  for (std::size_t k = 1; k < tau.size(); ++k) {
    const double weight = alpha / (tau[k] - tau[k - 1]);
    auto anchor = std::make_shared<const Vector>(out.back());
    TimeVaryingProblem penalized = problem;
    penalized.name = problem.name + "+momentum";
    penalized.objective = [problem, anchor, weight](std::span<const double> x,
                                                    double t) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - (*anchor)[i];
        d2 += d * d;
      }
      return problem.f(x, t) + 0.5 * weight * d2;
    };
    penalized.gradient = [problem, anchor, weight](std::span<const double> x,
                                                   double t) {
      Vector g = problem.grad(x, t);
      for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] += weight * (x[i] - (*anchor)[i]);
      }
      return g;
    };
    try {
      out.push_back(static_local_solve(penalized, tau[k], *anchor, tol));
    } catch (Error& e) {
      e.add_context("discrete_solution index " + std::to_string(k));
      throw;
    }
  }
  return out;
}

}  // namespace odetrack
