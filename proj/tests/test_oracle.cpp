#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>

#include "odetrack/catalog.hpp"
#include "odetrack/error.hpp"
#include "odetrack/oracle.hpp"
#include "odetrack/tracker.hpp"
#include "synthetic.hpp"

using namespace odetrack;

namespace {

SearchRegion box1(double lo, double hi, std::size_t resolution = 2001) {
  return {{{lo, hi}}, resolution};
}

// (x² - 1)² + y²: minima at (±1, 0), saddle at the origin.
TimeVaryingProblem double_well_2d() {
  TimeVaryingProblem pb;
  pb.name = "double_well_2d";
  pb.n = 2;
  pb.objective = [](std::span<const double> x, double) {
    const double a = x[0] * x[0] - 1.0;
    return a * a + x[1] * x[1];
  };
  pb.gradient = [](std::span<const double> x, double) {
    return Vector{4.0 * x[0] * (x[0] * x[0] - 1.0), 2.0 * x[1]};
  };
  pb.default_box = {{-2, 2}, {-2, 2}};
  return pb;
}

double penalized(const TimeVaryingProblem& pb, double alpha, const Vector& x,
                 const Vector& prev, double t, double dt) {
  const Vector d = axpy(-1.0, prev, x);
  return pb.f(x, t) + 0.5 * alpha * dot(d, d) / dt;
}

}  // namespace

TEST_CASE("tau partitions") {
  const TauPartition u = TauPartition::uniform(0.0, 1.0, 0.3);
  CHECK(u.times().size() == 5);
  CHECK(u.times().back() == 1.0);
  CHECK(u.tightness() == doctest::Approx(0.3));
  CHECK(TauPartition({0.0, 0.5, 2.0}).tightness() == 1.5);
  CHECK_THROWS_AS(TauPartition({0.0}), ConfigError);
  CHECK_THROWS_AS(TauPartition({0.0, 1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(TauPartition::uniform(0.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("static_local_solve") {
  const auto q = catalog_get("quartic_switch");
  CHECK(static_local_solve(q, 0.0, Vector{-3.5}, 1e-10)[0] == doctest::Approx(-4.0).epsilon(1e-8));
  CHECK(std::abs(static_local_solve(q, 0.0, Vector{-1.0}, 1e-10)[0]) <= 1e-8);

  const auto c = catalog_get("circle_linear");
  const Vector x = static_local_solve(c, std::numbers::pi / 2, Vector{-0.6, -0.8}, 1e-10);
  CHECK(std::abs(x[0]) <= 1e-6);
  CHECK(std::abs(x[1] + 1.0) <= 1e-6);
  CHECK(kkt_residual(c, x, std::numbers::pi / 2) <= 1e-10);

  // degenerate point with zero gradient
  const Vector flat = static_local_solve(q, 10.0, Vector{-3.0}, 1e-10);
  CHECK(flat[0] == doctest::Approx(-3.0));

  CHECK_THROWS_AS(static_local_solve(q, 0.0, Vector{1.0}, 0.0), ConfigError);
}

TEST_CASE("static_local_solve is idempotent") {
  const auto c = catalog_get("circle_linear");
  const auto pf = catalog_get("pitchfork");
  for (double t : {0.3, 1.7, 2.9}) {
    const Vector a = static_local_solve(c, t, Vector{0.2, 0.9}, 1e-10);
    const Vector b = static_local_solve(c, t, a, 1e-10);
    CHECK(max_abs_diff(a, b) <= 1e-10);
    const Vector p = static_local_solve(pf, t, Vector{0.5}, 1e-10);
    CHECK(max_abs_diff(p, static_local_solve(pf, t, p, 1e-10)) <= 1e-10);
  }
}

TEST_CASE("static_local_solve budget") {
  StaticSolveOptions opts;
  opts.max_flow_steps = 1;
  opts.max_newton_steps = 0;
  opts.initial_flow_step = 1e-6;
  try {
    static_local_solve(catalog_get("quartic_switch"), 0.0, Vector{-1.0}, 1e-12, opts);
    FAIL("expected NoConvergenceError");
  } catch (const NoConvergenceError& e) {
    CHECK(e.last_residual() > 1e-12);
  }
}

TEST_CASE("grid_scan on the quartic at the switch") {
  const auto set = grid_scan(catalog_get("quartic_switch"), 10.0, box1(-6, 2));
  const auto minima = set.minima();
  REQUIRE(minima.size() == 1);
  CHECK(std::abs(minima[0].x[0]) <= 1e-6);
  CHECK(std::abs(minima[0].f) <= 1e-10);
  const auto degenerate = set.of_kind(CriticalKind::kSaddleOrDegenerate);
  REQUIRE(degenerate.size() == 1);
  CHECK(degenerate[0].x[0] == doctest::Approx(-3.0).epsilon(1e-3));
  CHECK(degenerate[0].f == doctest::Approx(27.0).epsilon(1e-6));
  for (std::size_t i = 1; i < set.points.size(); ++i) {
    CHECK(set.points[i - 1].f <= set.points[i].f);
  }
}

TEST_CASE("grid_scan on the pitchfork") {
  const auto pf = catalog_get("pitchfork");
  const auto at0 = grid_scan(pf, 0.0, box1(-3, 3));
  REQUIRE(at0.minima().size() == 1);
  CHECK(std::abs(at0.minima()[0].x[0]) <= 1e-2);

  const auto at4 = grid_scan(pf, 4.0, box1(-3, 3));
  const auto minima = at4.minima();
  REQUIRE(minima.size() == 2);
  CHECK(std::abs(std::abs(minima[0].x[0]) - 2.0) <= 1e-8);
  CHECK(minima[0].x[0] * minima[1].x[0] < 0.0);
  const auto maxima = at4.of_kind(CriticalKind::kMaximum);
  REQUIRE(maxima.size() == 1);
  CHECK(std::abs(maxima[0].x[0]) <= 1e-8);

  const double spacing = 6.0 / 2000.0;
  for (double t : {0.25, 1.0, 4.0}) {
    const auto m = grid_scan(pf, t, box1(-3, 3)).minima();
    REQUIRE(m.size() == 2);
    for (const auto& p : m) CHECK(std::abs(std::abs(p.x[0]) - std::sqrt(t)) <= spacing);
  }
}

TEST_CASE("grid_scan along the circle chart") {
  const auto c = catalog_get("circle_linear");
  const double t = 1.0;
  const auto set = grid_scan(c, t, {});
  const auto minima = set.minima();
  REQUIRE(minima.size() == 1);
  CHECK(minima[0].f == doctest::Approx(-1.0).epsilon(1e-10));
  const auto maxima = set.of_kind(CriticalKind::kMaximum);
  REQUIRE(maxima.size() == 1);
  CHECK(maxima[0].f == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("grid_scan in two dimensions") {
  const auto set = grid_scan(double_well_2d(), 0.0, {{{-2, 2}, {-2, 2}}, 201});
  const auto minima = set.minima();
  REQUIRE(minima.size() == 2);
  for (const auto& m : minima) {
    CHECK(std::abs(std::abs(m.x[0]) - 1.0) <= 1e-6);
    CHECK(std::abs(m.x[1]) <= 1e-6);
  }
  const auto saddles = set.of_kind(CriticalKind::kSaddleOrDegenerate);
  REQUIRE(saddles.size() == 1);
  CHECK(norm_inf(saddles[0].x) <= 1e-6);
}

TEST_CASE("grid_scan rejects unsupported shapes") {
  CHECK_THROWS_AS(grid_scan(odetrack::testing::synthetic_chain(4), 0.0, {}), DimensionError);
  TimeVaryingProblem three = double_well_2d();
  three.n = 3;
  CHECK_THROWS_AS(grid_scan(three, 0.0, {{{0, 1}, {0, 1}, {0, 1}}, 11}), DimensionError);
  CHECK_THROWS_AS(grid_scan(catalog_get("clamped_quadratic"), 0.0, box1(-1, 1)),
                  DimensionError);
  CHECK_THROWS_AS(grid_scan(catalog_get("pitchfork"), 0.0, box1(-1, 1, 1)), ConfigError);
}

TEST_CASE("f_star") {
  const auto c = catalog_get("circle_linear");
  for (double t : {0.0, 1.3, 5.0}) CHECK(f_star(c, t, {}) == -1.0);
  CHECK(std::abs(f_star(catalog_get("quartic_switch"), 10.0, box1(-6, 2))) <= 1e-10);
  CHECK(f_star(catalog_get("pitchfork"), 4.0, box1(-3, 3)) == doctest::Approx(-16.0));
}

TEST_CASE("discrete_solution follows the penalized recurrence") {
  const auto pb = odetrack::testing::moving_quadratic([](double t) { return t; });
  const auto part = TauPartition::uniform(0.0, 2.0, 0.5);
  const auto xs = discrete_solution(pb, 1.0, part, Vector{0.7});
  REQUIRE(xs.size() == part.times().size());
  CHECK(std::abs(xs[0][0]) <= 1e-8);
  for (std::size_t k = 1; k <= 3; ++k) {
    const double expect = (part.times()[k] + xs[k - 1][0]) / 2.0;
    CHECK(std::abs(xs[k][0] - expect) <= 1e-8);
  }

  const auto loose = discrete_solution(pb, 1e-6, part, Vector{0.7});
  for (std::size_t k = 0; k < loose.size(); ++k) {
    CHECK(std::abs(loose[k][0] - part.times()[k]) <= 1e-4);
  }
}

TEST_CASE("discrete_solution never raises the penalized objective") {
  const auto c = catalog_get("circle_linear");
  const auto q = catalog_get("quartic_switch");
  const double alpha = 0.05;
  const auto part = TauPartition::uniform(0.0, 3.0, 0.05);
  for (const auto* pb : {&c, &q}) {
    const Vector guess = pb->n == 2 ? Vector{-1, 0} : Vector{-4};
    const auto xs = discrete_solution(*pb, alpha, part, guess);
    const auto& tau = part.times();
    for (std::size_t k = 1; k < xs.size(); ++k) {
      const double dt = tau[k] - tau[k - 1];
      CHECK(penalized(*pb, alpha, xs[k], xs[k - 1], tau[k], dt) <=
            pb->f(xs[k - 1], tau[k]) + 1e-10);
    }
  }
}

TEST_CASE("discrete_solution approaches the tracked trajectory") {
  const auto c = catalog_get("circle_linear");
  TrackerConfig cfg;
  const double horizon = std::numbers::pi;
  const auto traj = track(c, cfg, 0.0, horizon, Vector{-1, 0});

  auto sup_distance = [&](double delta) {
    const auto part = TauPartition::uniform(0.0, horizon, delta);
    const auto xs = discrete_solution(c, cfg.alpha, part, Vector{-1, 0});
    double sup = 0.0;
    std::size_t r = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double tk = part.times()[k];
      while (r < traj.records.size() && traj.records[r].t < tk - 1e-9) ++r;
      if (r == traj.records.size() || std::abs(traj.records[r].t - tk) > 1e-9) continue;
      sup = std::max(sup, norm2(axpy(-1.0, traj.records[r].x, xs[k])));
    }
    return sup;
  };

  const double d04 = sup_distance(0.04);
  const double d02 = sup_distance(0.02);
  const double d01 = sup_distance(0.01);
  INFO("sup distances ", d04, " ", d02, " ", d01);
  CHECK(d01 <= 0.05);
  CHECK(d02 < d04);
  CHECK(d01 < d02);
}

TEST_CASE("discrete_solution reports the failing index") {
  TimeVaryingProblem pb = catalog_get("quartic_switch");
  const auto grad = pb.gradient;
  pb.gradient = [grad](std::span<const double> x, double t) {
    if (t > 0.6) return Vector{NAN};
    return grad(x, t);
  };
  try {
    discrete_solution(pb, 0.05, TauPartition::uniform(0.0, 1.0, 0.25), Vector{-4});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("index 3") != std::string::npos);
  }
}
