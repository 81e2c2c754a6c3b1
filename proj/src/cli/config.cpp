#include "odetrack/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "odetrack/catalog.hpp"
#include "odetrack/error.hpp"

namespace odetrack::cli {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) {
    throw ConfigError(where + ": expected an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      std::ostringstream os;
      os << (where.empty() ? key : where + "." + key) << ": unknown field (allowed:";
      for (const auto& a : allowed) os << " " << a;
      os << ")";
      throw ConfigError(os.str());
    }
  }
}

double number(const json& value, const std::string& field) {
  if (!value.is_number()) {
    throw ConfigError(field + ": expected a number");
  }
  const double x = value.get<double>();
  if (!std::isfinite(x)) {
    throw ConfigError(field + ": must be finite");
  }
  return x;
}

double positive(const json& value, const std::string& field) {
  const double x = number(value, field);
  if (!(x > 0.0)) {
    throw ConfigError(field + ": must be positive");
  }
  return x;
}

std::size_t count(const json& value, const std::string& field) {
  if (!value.is_number_integer() || value.get<long long>() < 1) {
    throw ConfigError(field + ": expected a positive integer");
  }
  return value.get<std::size_t>();
}

std::vector<double> numbers(const json& value, const std::string& field) {
  if (!value.is_array()) {
    throw ConfigError(field + ": expected an array of numbers");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    out.push_back(number(value[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::string text(const json& value, const std::string& field) {
  if (!value.is_string()) {
    throw ConfigError(field + ": expected a string");
  }
  return value.get<std::string>();
}

void parse_tracker(const json& obj, TrackerConfig& cfg) {
  check_keys(obj,
             {"alpha", "rho", "outer_step", "inner_step", "inner_threshold",
              "inner_max_iters", "init_tol"},
             "tracker");
  if (obj.contains("alpha")) cfg.alpha = positive(obj["alpha"], "tracker.alpha");
  if (obj.contains("rho")) cfg.rho = positive(obj["rho"], "tracker.rho");
  if (obj.contains("outer_step"))
    cfg.outer_step = positive(obj["outer_step"], "tracker.outer_step");
  if (obj.contains("inner_step"))
    cfg.inner_step = positive(obj["inner_step"], "tracker.inner_step");
  if (obj.contains("inner_threshold"))
    cfg.inner_threshold = positive(obj["inner_threshold"], "tracker.inner_threshold");
  if (obj.contains("inner_max_iters"))
    cfg.inner_max_iters = count(obj["inner_max_iters"], "tracker.inner_max_iters");
  if (obj.contains("init_tol"))
    cfg.init_tol = positive(obj["init_tol"], "tracker.init_tol");
  cfg.validate();
}

void parse_oracle(const json& obj, OracleConfig& cfg) {
  check_keys(obj, {"enabled", "box", "resolution", "stride"}, "oracle");
  if (obj.contains("enabled")) {
    if (!obj["enabled"].is_boolean()) {
      throw ConfigError("oracle.enabled: expected true or false");
    }
    cfg.enabled = obj["enabled"].get<bool>();
  }
  if (obj.contains("box")) {
    const json& box = obj["box"];
    if (!box.is_array() || box.empty()) {
      throw ConfigError("oracle.box: expected a non-empty array of [lo, hi] pairs");
    }
    std::vector<Interval> intervals;
    for (std::size_t i = 0; i < box.size(); ++i) {
      const std::string field = "oracle.box[" + std::to_string(i) + "]";
      const auto pair = numbers(box[i], field);
      if (pair.size() != 2 || !(pair[1] > pair[0])) {
        throw ConfigError(field + ": expected [lo, hi] with hi > lo");
      }
      intervals.push_back({pair[0], pair[1]});
    }
    cfg.box = std::move(intervals);
  }
  if (obj.contains("resolution")) {
    cfg.resolution = count(obj["resolution"], "oracle.resolution");
    if (cfg.resolution < 3) {
      throw ConfigError("oracle.resolution: must be at least 3");
    }
  }
  if (obj.contains("stride")) cfg.stride = count(obj["stride"], "oracle.stride");
}

Vector default_guess(const std::string& name) {
  if (name == "quartic_switch") return {-4.0};
  if (name == "pitchfork") return {1.0};
  if (name == "circle_linear") return {-1.0, 0.0};
  if (name == "clamped_quadratic") return {-1.0};
  throw ConfigError("x_guess: required for problem " + name);
}

}  // namespace

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kTrack:
      return "track";
    case Mode::kCompare:
      return "compare";
    case Mode::kFig1:
      return "fig1";
    case Mode::kSweep:
      return "sweep";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "track") return Mode::kTrack;
  if (name == "compare") return Mode::kCompare;
  if (name == "fig1") return Mode::kFig1;
  if (name == "sweep") return Mode::kSweep;
  throw ConfigError("mode: expected one of track, compare, fig1, sweep (got '" +
                    std::string(name) + "')");
}

RunConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(root,
             {"mode", "problem", "t0", "t1", "tracker", "x_guess", "oracle",
              "discontinuity_times", "compare", "sweep", "out_dir"},
             "");
  RunConfig cfg;
  if (root.contains("mode")) cfg.mode = parse_mode(text(root["mode"], "mode"));
  if (root.contains("problem")) cfg.problem = text(root["problem"], "problem");
  if (root.contains("t0")) cfg.t0 = number(root["t0"], "t0");
  if (root.contains("t1")) cfg.t1 = number(root["t1"], "t1");
  if (cfg.t1 && !(*cfg.t1 > cfg.t0)) {
    std::ostringstream os;
    os << "t1: must be greater than t0 (t0=" << cfg.t0 << ", t1=" << *cfg.t1 << ")";
    throw ConfigError(os.str());
  }
  if (root.contains("tracker")) parse_tracker(root["tracker"], cfg.tracker);
  if (root.contains("x_guess")) {
    cfg.x_guess = numbers(root["x_guess"], "x_guess");
    if (cfg.x_guess->empty()) {
      throw ConfigError("x_guess: must not be empty");
    }
  }
  if (root.contains("oracle")) parse_oracle(root["oracle"], cfg.oracle);
  if (root.contains("discontinuity_times")) {
    cfg.discontinuity_times =
        numbers(root["discontinuity_times"], "discontinuity_times");
    for (std::size_t i = 1; i < cfg.discontinuity_times.size(); ++i) {
      if (!(cfg.discontinuity_times[i] > cfg.discontinuity_times[i - 1])) {
        throw ConfigError("discontinuity_times: must be strictly increasing");
      }
    }
  }
  if (root.contains("compare")) {
    check_keys(root["compare"], {"delta"}, "compare");
    if (root["compare"].contains("delta")) {
      cfg.compare_delta = positive(root["compare"]["delta"], "compare.delta");
    }
  }
  if (root.contains("sweep")) {
    const json& sweep = root["sweep"];
    check_keys(sweep, {"alphas", "nu"}, "sweep");
    if (sweep.contains("alphas")) {
      cfg.sweep_alphas = numbers(sweep["alphas"], "sweep.alphas");
      for (double a : cfg.sweep_alphas) {
        if (!(a > 0.0)) throw ConfigError("sweep.alphas: entries must be positive");
      }
    }
    if (sweep.contains("nu")) {
      cfg.sweep_nu = number(sweep["nu"], "sweep.nu");
      if (cfg.sweep_nu < 0.0) throw ConfigError("sweep.nu: must be non-negative");
    }
  }
  if (root.contains("out_dir")) cfg.out_dir = text(root["out_dir"], "out_dir");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

PreparedProblem prepare(const RunConfig& config) {
  if (config.problem.empty()) {
    throw ConfigError("problem: required");
  }
  TimeVaryingProblem base = catalog_get(config.problem);
  if (!config.discontinuity_times.empty()) {
    base.discontinuity_times = config.discontinuity_times;
  }
  PreparedProblem out;
  out.original_n = base.n;
  Vector guess = config.x_guess ? *config.x_guess : default_guess(config.problem);
  if (guess.size() != base.n) {
    throw ConfigError("x_guess: expected " + std::to_string(base.n) +
                      " entries for " + base.name + ", got " +
                      std::to_string(guess.size()));
  }
  out.region.box = config.oracle.box ? *config.oracle.box : base.default_box;
  out.region.resolution = config.oracle.resolution;
  if (!base.chart && out.region.box.size() != base.n) {
    throw ConfigError("oracle.box: expected " + std::to_string(base.n) +
                      " intervals for " + base.name);
  }
  if (base.q > 0) {
    if (config.oracle.enabled) {
      throw ConfigError("oracle.enabled: not supported for inequality-constrained problems");
    }
    try {
      guess = slack_lift_point(base, guess, config.t0);
    } catch (const InfeasiblePointError& e) {
      throw ConfigError(std::string("x_guess: ") + e.what());
    }
    out.problem = slack_augment(base);
  } else {
    out.problem = std::move(base);
  }
  out.x_guess = std::move(guess);
  return out;
}

}  // namespace odetrack::cli
