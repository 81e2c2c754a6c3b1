#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "odetrack/problem.hpp"

namespace odetrack {

/// Names accepted by catalog_get, in a stable order.
const std::vector<std::string>& catalog_names();

/// Built-in problems with analytic derivatives:
///
///  quartic_switch     f = x⁴ + 8x³ + 18x² - 2x²(10 - t)/10 for t <= 10,
///                     without the last term afterwards
///  pitchfork          f = x⁴ - 2tx², minima ±√t for t > 0
///  circle_linear      f = x₁cos t + x₂sin t on the unit circle
///  clamped_quadratic  f = (x - (t - 1))² subject to x <= 0
///
/// Throws LookupError listing the valid names.
TimeVaryingProblem catalog_get(std::string_view name);

}  // namespace odetrack
