#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "odetrack/catalog.hpp"
#include "odetrack/dynamics.hpp"
#include "odetrack/error.hpp"
#include "odetrack/integrate.hpp"
#include "synthetic.hpp"

using namespace odetrack;

namespace {

TimeVaryingProblem half_square() {
  TimeVaryingProblem pb;
  pb.name = "half_square";
  pb.n = 1;
  pb.objective = [](std::span<const double> x, double) {
    return 0.5 * (x[0] - 1.0) * (x[0] - 1.0);
  };
  pb.gradient = [](std::span<const double> x, double) { return Vector{x[0] - 1.0}; };
  return pb;
}

NewtonSystem linear_system(DenseMatrix a, Vector b) {
  NewtonSystem s;
  s.dim = b.size();
  s.residual = [a, b](std::span<const double> u, double) {
    return axpy(-1.0, b, matvec(a, u));
  };
  s.jacobian = [a](std::span<const double>, double) { return a; };
  return s;
}

NewtonSystem shifted_identity(double root) {
  return linear_system(DenseMatrix(1, 1, {1.0}), Vector{root});
}

Vector on_circle(double a) { return {std::cos(a), std::sin(a)}; }

}  // namespace

TEST_CASE("reference_field") {
  CHECK(reference_field(half_square(), 1.0)(Vector{0}, 0.0) == Vector{1.0});
  const auto c = catalog_get("circle_linear");
  const Vector kkt = reference_field(c, 1.0)(Vector{1, 0}, 0.0);
  CHECK(norm_inf(kkt) <= 1e-15);
  const Vector r = reference_field(c, 0.5)(Vector{0, 1}, 0.0);
  CHECK(r[0] == doctest::Approx(-2.0));
  CHECK(std::abs(r[1]) <= 1e-15);
  CHECK_THROWS_AS(reference_field(c, 1.0)(Vector{0, 0}, 0.0), SingularityError);
  CHECK_THROWS_AS(reference_field(c, 0.0), ConfigError);
  CHECK_THROWS_AS(reference_field(catalog_get("clamped_quadratic"), 1.0), ConfigError);
}

TEST_CASE("theta_eta") {
  TimeVaryingProblem axis;
  axis.name = "axis";
  axis.n = 2;
  axis.p = 1;
  axis.objective = [](std::span<const double> x, double) { return 3.0 * x[0] + 5.0 * x[1]; };
  axis.gradient = [](std::span<const double>, double) { return Vector{3.0, 5.0}; };
  axis.equality = [](std::span<const double> x, double) { return Vector{x[0]}; };
  axis.equality_jacobian = [](std::span<const double>, double) {
    return DenseMatrix(1, 2, {1.0, 0.0});
  };
  axis.equality_time_partial = [](std::span<const double>, double) { return Vector{0.0}; };
  const ThetaEta a = theta_eta(axis, Vector{0, 0}, 0.0);
  CHECK(a.theta(0, 0) == 1.0);
  CHECK(a.theta(1, 0) == 0.0);
  CHECK(a.eta == Vector{0.0, 5.0});

  const auto c = catalog_get("circle_linear");
  const ThetaEta b = theta_eta(c, Vector{0, 1}, 0.0);
  CHECK(b.theta(0, 0) == 0.0);
  CHECK(b.theta(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("reference field equals the theta/eta form") {
  const auto pb = odetrack::testing::breathing_circle();
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> time(0.0, 6.0);
  const double alpha = 0.3;
  const OdeField field = reference_field(pb, alpha);
  for (int i = 0; i < 50; ++i) {
    const double t = time(rng);
    const double r = 1.0 + 0.3 * std::sin(t);
    Vector x = on_circle(angle(rng));
    x[0] *= r;
    x[1] *= r;
    const ThetaEta te = theta_eta(pb, x, t);
    const Vector ht = pb.h_t(x, t);
    const Vector th = matvec(te.theta, ht);
    Vector expect(2);
    for (int k = 0; k < 2; ++k) expect[k] = -te.eta[k] / alpha - th[k];
    CHECK(max_abs_diff(field(x, t), expect) <= 1e-12);
  }
}

TEST_CASE("lifted_field") {
  const OdeField free = lifted_field(half_square(), 2.0, 10.0);
  CHECK(free.state_dim == 1);
  CHECK(free(Vector{0}, 0.0) == Vector{0.5});

  const auto c = catalog_get("circle_linear");
  const OdeField lifted = lifted_field(c, 1.0, 7.0);
  CHECK(lifted.state_dim == 4);
  const Vector eq = lifted(Vector{1, 0, 0.5, 0}, 0.0);
  CHECK(norm_inf(eq) == 0.0);
  const Vector off = lifted(Vector{0, 1, 0, 0}, 0.0);
  CHECK(off == Vector{-1, 0, 0, 0});

  const OpCounts before = op_counter::snapshot();
  for (int i = 0; i < 10; ++i) lifted(Vector{0.3, 0.9, 0.1, -0.2}, 0.1 * i);
  CHECK((op_counter::snapshot() - before).solve == 0);
}

TEST_CASE("relaxing the multipliers recovers the reference field") {
  const auto pb = odetrack::testing::breathing_circle();
  const double alpha = 0.4;
  const double t = 0.8;
  const Vector x{0.2, -1.1};
  const DenseMatrix j = pb.jac(x, t);
  const Vector jg = matvec(j, pb.grad(x, t));
  const Vector ht = pb.h_t(x, t);
  const OdeField inner = multiplier_field(j, jg, ht, 1.0);
  StepperConfig cfg;
  cfg.step = 0.05;
  const Vector uv = integrate_to(inner, Vector{0, 0}, 0.0, 20.0, cfg);
  CHECK(multiplier_residual(j, jg, ht, Vector{uv[0]}, Vector{uv[1]}) <= 1e-8);

  const Vector xdot = lifted_field(pb, alpha, 1.0)(Vector{x[0], x[1], uv[0], uv[1]}, t);
  const Vector ref = reference_field(pb, alpha)(x, t);
  CHECK(max_abs_diff(Vector{xdot[0], xdot[1]}, ref) <= 1e-6);
}

TEST_CASE("frozen_field") {
  const auto q = catalog_get("quartic_switch");
  CHECK(frozen_field(q, 10.0)(Vector{-3}, 123.0) == Vector{0.0});
  CHECK(std::abs(frozen_field(q, 0.0)(Vector{-4}, 0.0)[0]) <= 1e-12);
  const auto pf = catalog_get("pitchfork");
  CHECK(frozen_field(pf, 1.0)(Vector{2}, 5.0)[0] == doctest::Approx(-24.0));
}

TEST_CASE("rescaled_field") {
  const auto q = catalog_get("quartic_switch");
  const OdeField r1 = rescaled_field(q, 1.0, 0.0);
  CHECK(r1(Vector{0.5}, 2.0)[0] == -q.grad(Vector{0.5}, 2.0)[0]);

  const auto c = catalog_get("circle_linear");
  const Vector r = rescaled_field(c, 0.5, 0.0)(Vector{0, 1}, 0.0);
  CHECK(r[0] == doctest::Approx(-1.0));
  CHECK(std::abs(r[1]) <= 1e-15);

  const auto pb = odetrack::testing::breathing_circle();
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 20; ++i) {
    const Vector x{u(rng), u(rng)};
    const double t0 = u(rng);
    const double s = u(rng);
    CHECK(rescaled_field(pb, 0.0, t0)(x, s) == frozen_field(pb, t0)(x, s));
  }
}

TEST_CASE("newton_field") {
  const OdeField scalar = newton_field(shifted_identity(2.0));
  CHECK(scalar(Vector{5}, 0.0)[0] == doctest::Approx(-3.0));
  StepperConfig cfg;
  cfg.step = 0.01;
  const Vector u1 = integrate_to(scalar, Vector{5}, 0.0, 1.0, cfg);
  CHECK(u1[0] == doctest::Approx(2.0 + 3.0 * std::exp(-1.0)).epsilon(1e-9));

  const OdeField diag =
      newton_field(linear_system(DenseMatrix::from_rows({{2, 0}, {0, 4}}), Vector{2, 4}));
  const Vector d = diag(Vector{0, 0}, 0.0);
  CHECK(d[0] == doctest::Approx(1.0));
  CHECK(d[1] == doctest::Approx(1.0));

  const auto q = catalog_get("quartic_switch");
  NewtonSystem fprime;
  fprime.dim = 1;
  fprime.residual = [q](std::span<const double> x, double t) { return q.grad(x, t); };
  fprime.jacobian = [q](std::span<const double> x, double t) { return hessian_fd(q, x, t); };
  CHECK(newton_field(fprime)(Vector{-4}, 12.0)[0] == doctest::Approx(4.0 / 9.0).epsilon(1e-8));

  try {
    newton_field(linear_system(DenseMatrix(1, 1, {0.0}), Vector{1}))(Vector{0.25}, 0.0);
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(e.point() == Vector{0.25});
  }
  CHECK_THROWS_AS(
      newton_field(linear_system(DenseMatrix(1, 1, {1e-9}), Vector{1}))(Vector{0}, 0.0),
      SingularityError);
}

TEST_CASE("ramm_lift_field") {
  const OdeField f = ramm_lift_field(shifted_identity(0.0), 2.0);
  CHECK(f(Vector{1, 0}, 0.0) == Vector{0, 2});
  CHECK(norm_inf(ramm_lift_field(shifted_identity(3.0), 5.0)(Vector{3, 0}, 0.0)) == 0.0);

  StepperConfig cfg;
  cfg.step = 1e-3;
  const Vector end =
      integrate_to(ramm_lift_field(shifted_identity(3.0), 10.0), Vector{0, 0}, 0.0, 50.0, cfg);
  CHECK(std::abs(end[0] - 3.0) <= 1e-6);
}

TEST_CASE("lyapunov_rate") {
  const auto c = catalog_get("circle_linear");
  const LyapunovRate at_kkt = lyapunov_rate(c, Vector{1, 0}, 0.0, 1.0);
  CHECK(at_kkt.descent == 0.0);

  const LyapunovRate free = lyapunov_rate(half_square(), Vector{3}, 0.0, 0.5);
  CHECK(free.descent == doctest::Approx(-8.0));
  CHECK(free.drift == 0.0);
  CHECK(free.partial == 0.0);
  CHECK(free.total() == free.descent);

  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 50; ++i) {
    const Vector x{u(rng), u(rng)};
    if (norm2(x) < 0.1) continue;
    CHECK(lyapunov_rate(c, x, u(rng), 0.2).descent <= 0.0);
  }
}

// df/dt along a trajectory of the tracking ODE, by central differences of the
// recorded f values, against the Lyapunov decomposition at the midpoint.
TEST_CASE("Lyapunov rate follows the chain rule along trajectories") {
  struct Case {
    TimeVaryingProblem problem;
    Vector x0;
    double alpha;
    double t0;
  };
  const std::vector<Case> cases{
      {odetrack::testing::breathing_circle(), Vector{-1.0, 0.0}, 0.5, 0.0},
      {catalog_get("quartic_switch"), Vector{-3.9}, 1.0, 0.0},
  };
  for (const auto& c : cases) {
    const OdeField field = reference_field(c.problem, c.alpha);
    const double h = 2e-4;
    std::vector<double> ts{c.t0};
    std::vector<Vector> xs{c.x0};
    StepperConfig cfg;
    cfg.step = h;
    integrate_to(field, c.x0, c.t0, c.t0 + 2.0, cfg, [&](const Observation& o) {
      ts.push_back(o.t);
      xs.push_back(o.state);
    });
    for (std::size_t k = 1000; k + 1 < ts.size(); k += 1000) {
      const double fd = (c.problem.f(xs[k + 1], ts[k + 1]) - c.problem.f(xs[k - 1], ts[k - 1])) /
                        (ts[k + 1] - ts[k - 1]);
      const double rate = lyapunov_rate(c.problem, xs[k], ts[k], c.alpha).total();
      INFO(c.problem.name, " t=", ts[k], " fd=", fd, " rate=", rate);
      CHECK(std::abs(fd - rate) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}
