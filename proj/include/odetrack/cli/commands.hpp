#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "odetrack/cli/config.hpp"

namespace odetrack::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitTracker = 2;

/// Gradient flow x' = -f'(x, t) and the continuous Newton method on
/// F(x) = f'(x, t) for a scalar unconstrained problem, sampled on a common
/// grid that starts at t0. Where the Newton Jacobian is singular the step
/// moves against the gradient at the speed of the last regular step.
struct Fig1Series {
  std::vector<double> t;
  std::vector<double> x_gradflow;
  std::vector<double> x_newton;
  std::vector<bool> newton_regularized;
  std::size_t regularized_steps = 0;
  /// Smallest |f''| met by the Newton series at the start of a step.
  double min_abs_curvature = 0.0;
};

Fig1Series compute_fig1(const TimeVaryingProblem& problem, double t0, double t1,
                        double x0, double step);

/// Writes trajectory.csv and summary.json.
int cmd_track(const RunConfig& config, const std::filesystem::path& out_dir,
              std::ostream& err);

/// Writes fig1.csv (t, x_gradflow, x_newton, newton_regularized) and
/// fig1_summary.json. Defaults to quartic_switch over [0, 20] from -4.
int cmd_fig1(const RunConfig& config, const std::filesystem::path& out_dir,
             std::ostream& err);

/// Writes compare.json with per-method status, pairwise gaps and op counts.
int cmd_compare(const RunConfig& config, const std::filesystem::path& out_dir,
                std::ostream& err);

/// Writes sweep.csv, one row per alpha in descending order. Runs use up to
/// ODETRACK_THREADS threads.
int cmd_sweep(const RunConfig& config, const std::filesystem::path& out_dir,
              std::ostream& err);

/// Command-line entry: odetrack <mode> --config <path> [--out <dir>].
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace odetrack::cli
