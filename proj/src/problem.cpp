#include "odetrack/problem.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "odetrack/error.hpp"

namespace odetrack {

namespace {

Vector to_vector(std::span<const double> x) { return Vector(x.begin(), x.end()); }

void check_input(const TimeVaryingProblem& pb, std::span<const double> x) {
  if (x.size() != pb.n) {
    throw DimensionError(pb.name + ": point has length " +
                         std::to_string(x.size()) + ", expected " +
                         std::to_string(pb.n));
  }
}

Vector checked_vector(const TimeVaryingProblem& pb, const VectorEvaluator& fn,
                      std::size_t expected, const char* what,
                      std::span<const double> x, double t) {
  check_input(pb, x);
  if (expected == 0 && !fn) {
    return {};
  }
  if (!fn) {
    throw ConfigError(pb.name + ": missing " + what + " evaluator");
  }
  Vector out = fn(x, t);
  if (out.size() != expected) {
    throw DimensionError(pb.name + ": " + what + " returned length " +
                         std::to_string(out.size()) + ", expected " +
                         std::to_string(expected));
  }
  if (!all_finite(out)) {
    throw EvaluationError(pb.name + ": non-finite " + what + " at " +
                              describe_point(to_vector(x), t),
                          to_vector(x), t);
  }
  return out;
}

DenseMatrix checked_matrix(const TimeVaryingProblem& pb,
                           const MatrixEvaluator& fn, std::size_t rows,
                           const char* what, std::span<const double> x,
                           double t) {
  check_input(pb, x);
  if (rows == 0 && !fn) {
    return DenseMatrix(0, pb.n);
  }
  if (!fn) {
    throw ConfigError(pb.name + ": missing " + what + " evaluator");
  }
  DenseMatrix out = fn(x, t);
  if (out.rows() != rows || out.cols() != pb.n) {
    throw DimensionError(pb.name + ": " + what + " returned " +
                         std::to_string(out.rows()) + "x" +
                         std::to_string(out.cols()) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(pb.n));
  }
  if (!out.all_finite()) {
    throw EvaluationError(pb.name + ": non-finite " + what + " at " +
                              describe_point(to_vector(x), t),
                          to_vector(x), t);
  }
  return out;
}

// Max abs deviation between a matrix and central differences of a vector
// function along each coordinate.
template <typename Fn>
double jacobian_deviation(const DenseMatrix& analytic, Fn&& fn,
                          std::span<const double> x, double step) {
  double dev = 0.0;
  Vector probe = to_vector(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const Vector plus = fn(probe);
    probe[i] = x[i] - step;
    const Vector minus = fn(probe);
    probe[i] = x[i];
    for (std::size_t r = 0; r < analytic.rows(); ++r) {
      const double fd = (plus[r] - minus[r]) / (2.0 * step);
      dev = std::max(dev, std::abs(fd - analytic(r, i)));
    }
  }
  return dev;
}

double vector_time_deviation(const Vector& analytic,
                             const std::function<Vector(double)>& fn, double t,
                             double step) {
  const Vector plus = fn(t + step);
  const Vector minus = fn(t - step);
  double dev = 0.0;
  for (std::size_t r = 0; r < analytic.size(); ++r) {
    dev = std::max(dev, std::abs((plus[r] - minus[r]) / (2.0 * step) -
                                 analytic[r]));
  }
  return dev;
}

}  // namespace

double TimeVaryingProblem::f(std::span<const double> x, double t) const {
  check_input(*this, x);
  if (!objective) {
    throw ConfigError(name + ": missing objective evaluator");
  }
  const double value = objective(x, t);
  if (!std::isfinite(value)) {
    throw EvaluationError(name + ": non-finite objective at " +
                              describe_point(to_vector(x), t),
                          to_vector(x), t);
  }
  return value;
}

Vector TimeVaryingProblem::grad(std::span<const double> x, double t) const {
  return checked_vector(*this, gradient, n, "gradient", x, t);
}

Vector TimeVaryingProblem::h(std::span<const double> x, double t) const {
  return checked_vector(*this, equality, p, "equality", x, t);
}

DenseMatrix TimeVaryingProblem::jac(std::span<const double> x, double t) const {
  return checked_matrix(*this, equality_jacobian, p, "equality_jacobian", x, t);
}

Vector TimeVaryingProblem::h_t(std::span<const double> x, double t) const {
  return checked_vector(*this, equality_time_partial, p,
                        "equality_time_partial", x, t);
}

Vector TimeVaryingProblem::g(std::span<const double> x, double t) const {
  return checked_vector(*this, inequality, q, "inequality", x, t);
}

DenseMatrix TimeVaryingProblem::g_jac(std::span<const double> x,
                                      double t) const {
  return checked_matrix(*this, inequality_jacobian, q, "inequality_jacobian",
                        x, t);
}

Vector TimeVaryingProblem::g_t(std::span<const double> x, double t) const {
  return checked_vector(*this, inequality_time_partial, q,
                        "inequality_time_partial", x, t);
}

void TimeVaryingProblem::validate() const {
  if (n == 0) {
    throw ConfigError(name + ": dimension n must be positive");
  }
  if (!objective || !gradient) {
    throw ConfigError(name + ": objective and gradient are required");
  }
  if (p > 0 && (!equality || !equality_jacobian || !equality_time_partial)) {
    throw ConfigError(name + ": p > 0 requires all equality evaluators");
  }
  if (q > 0 &&
      (!inequality || !inequality_jacobian || !inequality_time_partial)) {
    throw ConfigError(name + ": q > 0 requires all inequality evaluators");
  }
  for (std::size_t i = 1; i < discontinuity_times.size(); ++i) {
    if (!(discontinuity_times[i] > discontinuity_times[i - 1])) {
      throw ConfigError(name + ": discontinuity times must be strictly increasing");
    }
  }
}

double DerivativeReport::max_deviation() const {
  return std::max({gradient_deviation, jacobian_deviation,
                   time_partial_deviation, inequality_jacobian_deviation,
                   inequality_time_partial_deviation});
}

TimeVaryingProblem slack_augment(const TimeVaryingProblem& problem) {
  if (problem.q == 0) {
    throw ConfigError(problem.name + ": no inequality constraints to augment");
  }
  if (!problem.inequality || !problem.inequality_jacobian ||
      !problem.inequality_time_partial) {
    throw ConfigError(problem.name +
                      ": slack_augment requires all three inequality evaluators");
  }

  auto base = std::make_shared<const TimeVaryingProblem>(problem);
  const std::size_t n = problem.n;
  const std::size_t p = problem.p;
  const std::size_t q = problem.q;

  TimeVaryingProblem out;
  out.name = problem.name + "+slack";
  out.n = n + q;
  out.p = p + q;
  out.q = 0;
  out.discontinuity_times = problem.discontinuity_times;
  out.default_box = problem.default_box;

  out.objective = [base, n](std::span<const double> xz, double t) {
    return base->f(xz.first(n), t);
  };
  out.gradient = [base, n, q](std::span<const double> xz, double t) {
    Vector g = base->grad(xz.first(n), t);
    g.resize(n + q, 0.0);
    return g;
  };
  out.equality = [base, n, q](std::span<const double> xz, double t) {
    const auto x = xz.first(n);
    const auto z = xz.subspan(n, q);
    Vector h = base->h(x, t);
    const Vector g = base->g(x, t);
    for (std::size_t j = 0; j < q; ++j) {
      h.push_back(g[j] + z[j] * z[j]);
    }
    return h;
  };
  out.equality_jacobian = [base, n, p, q](std::span<const double> xz,
                                          double t) {
    const auto x = xz.first(n);
    const auto z = xz.subspan(n, q);
    const DenseMatrix jh = base->jac(x, t);
    const DenseMatrix jg = base->g_jac(x, t);
    DenseMatrix j(p + q, n + q);
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        j(r, c) = jh(r, c);
      }
    }
    for (std::size_t r = 0; r < q; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        j(p + r, c) = jg(r, c);
      }
      j(p + r, n + r) = 2.0 * z[r];
    }
    return j;
  };
  out.equality_time_partial = [base, n](std::span<const double> xz, double t) {
    const auto x = xz.first(n);
    Vector ht = base->h_t(x, t);
    const Vector gt = base->g_t(x, t);
    ht.insert(ht.end(), gt.begin(), gt.end());
    return ht;
  };
  return out;
}

Vector slack_lift_point(const TimeVaryingProblem& problem,
                        std::span<const double> x, double t) {
  const Vector g = problem.g(x, t);
  Vector out = to_vector(x);
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g[j] > kFeasibilityTolerance) {
      throw InfeasiblePointError(problem.name + ": inequality " +
                                 std::to_string(j) + " violated (g = " +
                                 std::to_string(g[j]) + ") at " +
                                 describe_point(out, t));
    }
    out.push_back(std::sqrt(std::max(0.0, -g[j])));
  }
  return out;
}

DerivativeReport check_derivatives(const TimeVaryingProblem& problem,
                                   std::span<const double> x, double t,
                                   double fd_step, double tol) {
  if (!(fd_step > 0.0)) {
    throw ConfigError("check_derivatives: fd_step must be positive");
  }
  DerivativeReport report;
  report.probe_x = to_vector(x);
  report.probe_t = t;

  const Vector grad = problem.grad(x, t);
  {
    DenseMatrix as_row(1, problem.n);
    for (std::size_t i = 0; i < problem.n; ++i) {
      as_row(0, i) = grad[i];
    }
    report.gradient_deviation = jacobian_deviation(
        as_row, [&](const Vector& y) { return Vector{problem.f(y, t)}; }, x,
        fd_step);
  }
  if (problem.p > 0) {
    report.jacobian_deviation = jacobian_deviation(
        problem.jac(x, t), [&](const Vector& y) { return problem.h(y, t); }, x,
        fd_step);
    report.time_partial_deviation = vector_time_deviation(
        problem.h_t(x, t), [&](double s) { return problem.h(x, s); }, t,
        fd_step);
  }
  if (problem.q > 0) {
    report.inequality_jacobian_deviation = jacobian_deviation(
        problem.g_jac(x, t), [&](const Vector& y) { return problem.g(y, t); },
        x, fd_step);
    report.inequality_time_partial_deviation = vector_time_deviation(
        problem.g_t(x, t), [&](double s) { return problem.g(x, s); }, t,
        fd_step);
  }
  report.passed = report.max_deviation() <= tol;
  return report;
}

DenseMatrix hessian_fd(const TimeVaryingProblem& problem,
                       std::span<const double> x, double t, double step) {
  const std::size_t n = problem.n;
  DenseMatrix hess(n, n);
  Vector probe = to_vector(x);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const Vector plus = problem.grad(probe, t);
    probe[i] = x[i] - h;
    const Vector minus = problem.grad(probe, t);
    probe[i] = x[i];
    for (std::size_t r = 0; r < n; ++r) {
      hess(r, i) = (plus[r] - minus[r]) / (2.0 * h);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double s = 0.5 * (hess(i, j) + hess(j, i));
      hess(i, j) = s;
      hess(j, i) = s;
    }
  }
  return hess;
}

}  // namespace odetrack
