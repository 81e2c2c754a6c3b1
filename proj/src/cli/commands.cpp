#include "odetrack/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "odetrack/catalog.hpp"
#include "odetrack/dynamics.hpp"
#include "odetrack/error.hpp"
#include "odetrack/integrate.hpp"
#include "odetrack/oracle.hpp"
#include "odetrack/tracker.hpp"

namespace odetrack::cli {

namespace {

using Json = nlohmann::ordered_json;

std::string fmt(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

Json to_json(const OpCounts& ops) {
  return Json{{"matvec", ops.matvec},
              {"gram", ops.gram},
              {"solve", ops.solve},
              {"flops", ops.flops}};
}

Json nullable(double value) {
  return std::isfinite(value) ? Json(value) : Json(nullptr);
}

void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << body;
  if (!out) {
    throw ConfigError("write failed for " + path.string());
  }
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory " + dir.string() + ": " +
                      ec.message());
  }
}

double require_t1(const RunConfig& config) {
  if (!config.t1) {
    throw ConfigError("t1: required");
  }
  return *config.t1;
}

// Runs body, mapping configuration problems to exit 1 and solver failures to
// exit 2.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LookupError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "tracker error: " << e.what() << "\n";
    return kExitTracker;
  }
}

struct Series {
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<double> f;
};

struct MethodResult {
  std::string name;
  bool ok = false;
  std::string error;
  Series series;
  OpCounts loop_ops;
  OpCounts total_ops;
};

// Pairs of samples whose times agree to 1e-9.
struct PairStats {
  std::size_t shared = 0;
  double sup_f_gap = 0.0;
  double sup_x_distance = 0.0;
};

PairStats compare_series(const Series& a, const Series& b, std::size_t n) {
  PairStats s;
  std::size_t j = 0;
  for (std::size_t i = 0; i < a.t.size(); ++i) {
    const double tol = 1e-9 * std::max(1.0, std::abs(a.t[i]));
    while (j < b.t.size() && b.t[j] < a.t[i] - tol) ++j;
    if (j == b.t.size()) break;
    if (std::abs(b.t[j] - a.t[i]) > tol) continue;
    ++s.shared;
    s.sup_f_gap = std::max(s.sup_f_gap, std::abs(a.f[i] - b.f[j]));
    double d2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = a.x[i][k] - b.x[j][k];
      d2 += d * d;
    }
    s.sup_x_distance = std::max(s.sup_x_distance, std::sqrt(d2));
  }
  return s;
}

std::size_t thread_budget() {
  const char* raw = std::getenv("ODETRACK_THREADS");
  if (raw == nullptr || *raw == '\0') {
    return 1;
  }
  char* end = nullptr;
  const long value = std::strtol(raw, &end, 10);
  if (*end != '\0' || value < 1) {
    throw ConfigError(std::string("ODETRACK_THREADS: expected a positive integer, got '") +
                      raw + "'");
  }
  return static_cast<std::size_t>(value);
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

Fig1Series compute_fig1(const TimeVaryingProblem& problem, double t0, double t1,
                        double x0, double step) {
  if (problem.n != 1 || problem.p != 0 || problem.q != 0) {
    throw ConfigError("fig1: problem must be scalar and unconstrained (got " +
                      problem.name + ")");
  }
  const OdeField gradflow{1,
                          [&problem](std::span<const double> x, double t) {
                            return scaled(-1.0, problem.grad(x, t));
                          },
                          "gradflow"};
  NewtonSystem system;
  system.dim = 1;
  system.residual = [&problem](std::span<const double> x, double t) {
    return problem.grad(x, t);
  };
  system.jacobian = [&problem](std::span<const double> x, double t) {
    return hessian_fd(problem, x, t);
  };
  const OdeField newton = newton_field(system);

  const StepGrid grid(t0, t1, step);
  Fig1Series out;
  out.t.push_back(t0);
  out.x_gradflow.push_back(x0);
  out.x_newton.push_back(x0);
  out.newton_regularized.push_back(false);
  out.min_abs_curvature = std::numeric_limits<double>::infinity();
  Vector xg{x0};
  Vector xn{x0};
  double speed = 0.0;
  for (std::size_t k = 0; k < grid.count(); ++k) {
    const double ta = grid.node(k);
    const double tb = grid.node(k + 1);
    const double h = tb - ta;
    xg = rk4_step(gradflow, xg, ta, h);
    out.min_abs_curvature =
        std::min(out.min_abs_curvature, std::abs(hessian_fd(problem, xn, ta)(0, 0)));
    bool regularized = false;
    try {
      const Vector next = rk4_step(newton, xn, ta, h);
      speed = std::abs(next[0] - xn[0]) / h;
      xn = next;
    } catch (const SingularityError&) {
      const double g = problem.grad(xn, ta)[0];
      const double direction = g > 0.0 ? -1.0 : (g < 0.0 ? 1.0 : 0.0);
      xn[0] += h * direction * speed;
      regularized = true;
      ++out.regularized_steps;
    }
    out.t.push_back(tb);
    out.x_gradflow.push_back(xg[0]);
    out.x_newton.push_back(xn[0]);
    out.newton_regularized.push_back(regularized);
  }
  return out;
}

int cmd_track(const RunConfig& config, const std::filesystem::path& out_dir,
              std::ostream& err) {
  return guarded(err, [&] {
    const PreparedProblem prepared = prepare(config);
    const double t1 = require_t1(config);
    OracleOptions oracle{config.oracle.enabled, prepared.region, config.oracle.stride};
    ensure_dir(out_dir);

    const OpCounts before = op_counter::snapshot();
    const Trajectory traj = track(prepared.problem, config.tracker, config.t0, t1,
                                  prepared.x_guess, oracle);
    const OpCounts total = op_counter::snapshot() - before;

    const std::size_t n = prepared.original_n;
    std::string csv = "t";
    for (std::size_t i = 0; i < n; ++i) csv += ",x" + std::to_string(i);
    csv += ",f,h_res,kkt_res,inner_iters";
    if (oracle.enabled) csv += ",fstar,gap";
    csv += "\n";
    double max_gap = -std::numeric_limits<double>::infinity();
    double max_h = 0.0;
    std::size_t inner = 0;
    for (const auto& r : traj.records) {
      csv += fmt(r.t);
      for (std::size_t i = 0; i < n; ++i) csv += "," + fmt(r.x[i]);
      csv += "," + fmt(r.f) + "," + fmt(r.constraint_residual) + "," +
             fmt(r.kkt_residual) + "," + std::to_string(r.inner_iterations);
      if (oracle.enabled) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        csv += "," + fmt(r.fstar.value_or(nan)) + "," + fmt(r.gap.value_or(nan));
      }
      csv += "\n";
      if (r.gap) max_gap = std::max(max_gap, *r.gap);
      max_h = std::max(max_h, r.constraint_residual);
      inner += r.inner_iterations;
    }
    write_text(out_dir / "trajectory.csv", csv);

    const auto& last = traj.records.back();
    Json summary;
    summary["problem"] = config.problem;
    summary["records"] = traj.records.size();
    summary["max_gap"] = nullable(max_gap);
    summary["max_constraint_residual"] = max_h;
    summary["final_t"] = last.t;
    summary["final_x"] = Vector(last.x.begin(), last.x.begin() + static_cast<long>(n));
    summary["final_f"] = last.f;
    summary["total_inner_iterations"] = inner;
    summary["restarts"] = traj.restarts;
    summary["op_counts"] = Json{{"hot_loop", to_json(traj.loop_ops)},
                                {"total", to_json(total)}};
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
  });
}

int cmd_fig1(const RunConfig& config, const std::filesystem::path& out_dir,
             std::ostream& err) {
  return guarded(err, [&] {
    const std::string name = config.problem.empty() ? "quartic_switch" : config.problem;
    const TimeVaryingProblem problem = catalog_get(name);
    const double t1 = config.t1.value_or(20.0);
    if (!(t1 > config.t0)) {
      throw ConfigError("t1: must be greater than t0");
    }
    const Vector x0 = config.x_guess.value_or(Vector{-4.0});
    if (x0.size() != 1) {
      throw ConfigError("x_guess: fig1 needs a single starting value");
    }
    ensure_dir(out_dir);
    const Fig1Series s =
        compute_fig1(problem, config.t0, t1, x0[0], config.tracker.outer_step);

    std::string csv = "t,x_gradflow,x_newton,newton_regularized\n";
    for (std::size_t k = 0; k < s.t.size(); ++k) {
      csv += fmt(s.t[k]) + "," + fmt(s.x_gradflow[k]) + "," + fmt(s.x_newton[k]) +
             "," + (s.newton_regularized[k] ? "1" : "0") + "\n";
    }
    write_text(out_dir / "fig1.csv", csv);

    Json summary;
    summary["problem"] = name;
    summary["t0"] = config.t0;
    summary["t1"] = t1;
    summary["step"] = config.tracker.outer_step;
    summary["x0"] = x0[0];
    summary["gradflow_end"] = s.x_gradflow.back();
    summary["newton_end"] = s.x_newton.back();
    summary["regularized_steps"] = s.regularized_steps;
    summary["min_abs_curvature_newton"] = s.min_abs_curvature;
    write_text(out_dir / "fig1_summary.json", summary.dump(2) + "\n");
    return kExitOk;
  });
}

int cmd_compare(const RunConfig& config, const std::filesystem::path& out_dir,
                std::ostream& err) {
  return guarded(err, [&] {
    const PreparedProblem prepared = prepare(config);
    const double t1 = require_t1(config);
    const TimeVaryingProblem& problem = prepared.problem;
    const TrackerConfig& cfg = config.tracker;
    const double t0 = config.t0;
    const std::size_t n = problem.n;
    ensure_dir(out_dir);

    auto run_method = [&](const std::string& name, auto&& body) {
      MethodResult m;
      m.name = name;
      const OpCounts before = op_counter::snapshot();
      try {
        body(m);
        m.ok = true;
      } catch (const Error& e) {
        m.error = e.what();
        err << name << ": " << e.what() << "\n";
      }
      m.total_ops = op_counter::snapshot() - before;
      return m;
    };
    auto collect = [&](MethodResult& m) {
      return [&m, &problem, n](const Observation& o) {
        const Vector x(o.state.begin(), o.state.begin() + static_cast<long>(n));
        m.series.t.push_back(o.t);
        m.series.f.push_back(problem.f(x, o.t));
        m.series.x.push_back(x);
      };
    };
    const StepperConfig stepper{cfg.outer_step};

    std::vector<MethodResult> methods;
    methods.push_back(run_method("reference", [&](MethodResult& m) {
      const Vector x0 = static_local_solve(problem, t0, prepared.x_guess, cfg.init_tol);
      const OpCounts before = op_counter::snapshot();
      integrate_to(reference_field(problem, cfg.alpha), x0, t0, t1, stepper, collect(m));
      m.loop_ops = op_counter::snapshot() - before;
    }));
    methods.push_back(run_method("tracker", [&](MethodResult& m) {
      const Trajectory traj = track(problem, cfg, t0, t1, prepared.x_guess);
      for (const auto& r : traj.records) {
        if (r.restart) continue;
        m.series.t.push_back(r.t);
        m.series.x.push_back(r.x);
        m.series.f.push_back(r.f);
      }
      m.loop_ops = traj.loop_ops;
    }));
    methods.push_back(run_method("lifted", [&](MethodResult& m) {
      const Relaxed init = initialize(problem, cfg, t0, prepared.x_guess);
      Vector state = init.state.x;
      state.insert(state.end(), init.state.u.begin(), init.state.u.end());
      state.insert(state.end(), init.state.v.begin(), init.state.v.end());
      const OpCounts before = op_counter::snapshot();
      integrate_to(lifted_field(problem, cfg.alpha, cfg.rho), state, t0, t1, stepper,
                   collect(m));
      m.loop_ops = op_counter::snapshot() - before;
    }));
    methods.push_back(run_method("discrete", [&](MethodResult& m) {
      const TauPartition tau = TauPartition::uniform(t0, t1, config.compare_delta);
      const OpCounts before = op_counter::snapshot();
      const auto xs = discrete_solution(problem, cfg.alpha, tau, prepared.x_guess);
      m.loop_ops = op_counter::snapshot() - before;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        m.series.t.push_back(tau.times()[k]);
        m.series.x.push_back(xs[k]);
        m.series.f.push_back(problem.f(xs[k], tau.times()[k]));
      }
    }));

    Json report;
    report["problem"] = config.problem;
    report["t0"] = t0;
    report["t1"] = t1;
    report["alpha"] = cfg.alpha;
    report["rho"] = cfg.rho;
    report["delta"] = config.compare_delta;
    Json per_method = Json::object();
    bool any_ok = false;
    for (const auto& m : methods) {
      Json entry;
      entry["status"] = m.ok ? "ok" : "error";
      if (m.ok) {
        any_ok = true;
        entry["samples"] = m.series.t.size();
        entry["final_f"] = m.series.f.empty() ? Json(nullptr) : Json(m.series.f.back());
      } else {
        entry["error"] = m.error;
      }
      entry["op_counts"] = to_json(m.loop_ops);
      entry["op_counts_total"] = to_json(m.total_ops);
      per_method[m.name] = entry;
    }
    report["methods"] = per_method;
    Json pairs = Json::array();
    for (std::size_t i = 0; i < methods.size(); ++i) {
      for (std::size_t j = i + 1; j < methods.size(); ++j) {
        if (!methods[i].ok || !methods[j].ok) continue;
        const PairStats s = compare_series(methods[i].series, methods[j].series,
                                           prepared.original_n);
        pairs.push_back(Json{{"a", methods[i].name},
                             {"b", methods[j].name},
                             {"shared_times", s.shared},
                             {"sup_f_gap", s.sup_f_gap},
                             {"sup_x_distance", s.sup_x_distance}});
      }
    }
    report["pairs"] = pairs;
    write_text(out_dir / "compare.json", report.dump(2) + "\n");
    return any_ok ? kExitOk : kExitTracker;
  });
}

int cmd_sweep(const RunConfig& config, const std::filesystem::path& out_dir,
              std::ostream& err) {
  return guarded(err, [&] {
    if (config.sweep_alphas.empty()) {
      throw ConfigError("sweep.alphas: at least one value required");
    }
    const PreparedProblem prepared = prepare(config);
    if (catalog_get(config.problem).q > 0) {
      throw ConfigError("sweep: gap benchmark unavailable for inequality-constrained problems");
    }
    const double t1 = require_t1(config);
    const std::size_t threads =
        std::min(thread_budget(), config.sweep_alphas.size());
    ensure_dir(out_dir);

    struct Row {
      double alpha = 0.0;
      double sup_gap = std::numeric_limits<double>::quiet_NaN();
      double max_h = std::numeric_limits<double>::quiet_NaN();
      std::string error;
    };
    std::vector<Row> rows(config.sweep_alphas.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < rows.size(); i = next++) {
        Row& row = rows[i];
        row.alpha = config.sweep_alphas[i];
        TrackerConfig cfg = config.tracker;
        cfg.alpha = row.alpha;
        const OracleOptions oracle{true, prepared.region, config.oracle.stride};
        try {
          const Trajectory traj =
              track(prepared.problem, cfg, config.t0, t1, prepared.x_guess, oracle);
          double gap = -std::numeric_limits<double>::infinity();
          double h = 0.0;
          for (const auto& r : traj.records) {
            if (r.gap && r.t >= config.t0 + config.sweep_nu) gap = std::max(gap, *r.gap);
            h = std::max(h, r.constraint_residual);
          }
          row.sup_gap = std::isfinite(gap) ? gap : std::numeric_limits<double>::quiet_NaN();
          row.max_h = h;
        } catch (const Error& e) {
          row.error = e.what();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.alpha > b.alpha; });
    std::string csv = "alpha,sup_gap_after_nu,max_constraint_residual,error\n";
    bool any_ok = false;
    for (const auto& row : rows) {
      if (row.error.empty()) {
        any_ok = true;
      } else {
        err << "alpha " << row.alpha << ": " << row.error << "\n";
      }
      csv += fmt(row.alpha) + "," + fmt(row.sup_gap) + "," + fmt(row.max_h) + "," +
             one_line(row.error) + "\n";
    }
    write_text(out_dir / "sweep.csv", csv);
    return any_ok ? kExitOk : kExitTracker;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Track local minima of time-varying constrained programs", "odetrack"};
  std::string mode_text;
  std::string config_path;
  std::string out_override;
  app.add_option("mode", mode_text, "track | compare | fig1 | sweep")->required();
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out_override, "output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  RunConfig config;
  Mode mode;
  try {
    mode = parse_mode(mode_text);
    config = load_config(config_path);
    if (config.mode && *config.mode != mode) {
      throw ConfigError(std::string("mode: config says '") + to_string(*config.mode) +
                        "' but the command line says '" + to_string(mode) + "'");
    }
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::filesystem::path out_dir =
      !out_override.empty() ? std::filesystem::path(out_override)
                            : std::filesystem::path(config.out_dir.value_or("."));
  switch (mode) {
    case Mode::kTrack:
      return cmd_track(config, out_dir, err);
    case Mode::kCompare:
      return cmd_compare(config, out_dir, err);
    case Mode::kFig1:
      return cmd_fig1(config, out_dir, err);
    case Mode::kSweep:
      return cmd_sweep(config, out_dir, err);
  }
  return kExitConfig;
}

}  // namespace odetrack::cli
