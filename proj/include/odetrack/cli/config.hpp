#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "odetrack/linalg.hpp"
#include "odetrack/problem.hpp"
#include "odetrack/tracker.hpp"

namespace odetrack::cli {

enum class Mode { kTrack, kCompare, kFig1, kSweep };

const char* to_string(Mode mode);
/// Throws ConfigError for anything but track|compare|fig1|sweep.
Mode parse_mode(std::string_view text);

struct OracleConfig {
  bool enabled = false;
  /// Overrides the catalog's default search box.
  std::optional<std::vector<Interval>> box;
  std::size_t resolution = 2001;
  std::size_t stride = 1;
};

struct RunConfig {
  std::optional<Mode> mode;
  std::string problem;
  double t0 = 0.0;
  std::optional<double> t1;
  TrackerConfig tracker;
  std::optional<Vector> x_guess;
  OracleConfig oracle;
  std::vector<double> discontinuity_times;
  double compare_delta = 0.01;
  std::vector<double> sweep_alphas;
  double sweep_nu = 0.2;
  std::optional<std::string> out_dir;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the offending field.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::string& path);

/// Catalog problem ready for the tracker (inequalities replaced by slacks),
/// along with the original variable count.
struct PreparedProblem {
  TimeVaryingProblem problem;
  std::size_t original_n = 0;
  Vector x_guess;
  SearchRegion region;
};

/// Resolves the problem, default guess and search region for a run starting
/// at t0. Throws LookupError for unknown problems and ConfigError for
/// inconsistent settings.
PreparedProblem prepare(const RunConfig& config);

}  // namespace odetrack::cli
