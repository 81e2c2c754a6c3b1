#include "odetrack/catalog.hpp"

#include <cmath>
#include <numbers>

#include "odetrack/error.hpp"

namespace odetrack {

namespace {

// Weight of the -2x² term; it fades linearly to zero at t = 10.
double quartic_switch_weight(double t) { return t <= 10.0 ? (10.0 - t) / 10.0 : 0.0; }

TimeVaryingProblem quartic_switch() {
  TimeVaryingProblem pb;
  pb.name = "quartic_switch";
  pb.n = 1;
  pb.objective = [](std::span<const double> x, double t) {
    const double v = x[0];
    const double v2 = v * v;
    return v2 * v2 + 8.0 * v2 * v + 18.0 * v2 - 2.0 * v2 * quartic_switch_weight(t);
  };
  pb.gradient = [](std::span<const double> x, double t) {
    const double v = x[0];
    return Vector{4.0 * v * v * v + 24.0 * v * v + 36.0 * v -
                  4.0 * v * quartic_switch_weight(t)};
  };
  pb.default_box = {{-6.0, 2.0}};
  return pb;
}

TimeVaryingProblem pitchfork() {
  TimeVaryingProblem pb;
  pb.name = "pitchfork";
  pb.n = 1;
  pb.objective = [](std::span<const double> x, double t) {
    const double v2 = x[0] * x[0];
    return v2 * v2 - 2.0 * t * v2;
  };
  pb.gradient = [](std::span<const double> x, double t) {
    const double v = x[0];
    return Vector{4.0 * v * v * v - 4.0 * t * v};
  };
  pb.default_box = {{-4.0, 4.0}};
  return pb;
}

TimeVaryingProblem circle_linear() {
  TimeVaryingProblem pb;
  pb.name = "circle_linear";
  pb.n = 2;
  pb.p = 1;
  pb.objective = [](std::span<const double> x, double t) {
    return x[0] * std::cos(t) + x[1] * std::sin(t);
  };
  pb.gradient = [](std::span<const double>, double t) {
    return Vector{std::cos(t), std::sin(t)};
  };
  pb.equality = [](std::span<const double> x, double) {
    return Vector{x[0] * x[0] + x[1] * x[1] - 1.0};
  };
  pb.equality_jacobian = [](std::span<const double> x, double) {
    DenseMatrix j(1, 2);
    j(0, 0) = 2.0 * x[0];
    j(0, 1) = 2.0 * x[1];
    return j;
  };
  pb.equality_time_partial = [](std::span<const double>, double) {
    return Vector{0.0};
  };
  pb.chart = ManifoldChart{
      [](double angle) { return Vector{std::cos(angle), std::sin(angle)}; },
      {0.0, 2.0 * std::numbers::pi},
      true};
  pb.closed_form_min = [](double) { return -1.0; };
  pb.default_box = {{-1.5, 1.5}, {-1.5, 1.5}};
  return pb;
}

TimeVaryingProblem clamped_quadratic() {
  TimeVaryingProblem pb;
  pb.name = "clamped_quadratic";
  pb.n = 1;
  pb.q = 1;
  // Target s(t) = t - 1 crosses the boundary x = 0 at t = 1.
  pb.objective = [](std::span<const double> x, double t) {
    const double d = x[0] - (t - 1.0);
    return d * d;
  };
  pb.gradient = [](std::span<const double> x, double t) {
    return Vector{2.0 * (x[0] - (t - 1.0))};
  };
  pb.inequality = [](std::span<const double> x, double) {
    return Vector{x[0]};
  };
  pb.inequality_jacobian = [](std::span<const double>, double) {
    DenseMatrix j(1, 1);
    j(0, 0) = 1.0;
    return j;
  };
  pb.inequality_time_partial = [](std::span<const double>, double) {
    return Vector{0.0};
  };
  pb.default_box = {{-3.0, 3.0}};
  return pb;
}

}  // namespace

const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {
      "quartic_switch", "pitchfork", "circle_linear", "clamped_quadratic"};
  return names;
}

TimeVaryingProblem catalog_get(std::string_view name) {
  if (name == "quartic_switch") return quartic_switch();
  if (name == "pitchfork") return pitchfork();
  if (name == "circle_linear") return circle_linear();
  if (name == "clamped_quadratic") return clamped_quadratic();
  std::string valid;
  for (const auto& n : catalog_names()) {
    valid += (valid.empty() ? "" : ", ") + n;
  }
  throw LookupError("unknown problem '" + std::string(name) +
                    "'; valid names: " + valid);
}

}  // namespace odetrack
