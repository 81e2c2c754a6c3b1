#include "odetrack/integrate.hpp"

#include <cmath>
#include <sstream>

#include "odetrack/error.hpp"

namespace odetrack {

namespace {

// Ratios within this relative slack of an integer are not rounded up, so
// (1 - 0)/0.1 is ten steps rather than eleven.
constexpr double kGridSlack = 1e-9;

}  // namespace

StepGrid::StepGrid(double t0, double t1, double step)
    : t0_{t0}, t1_{t1}, step_{step}, count_{0} {
  if (!(step > 0.0)) {
    throw ConfigError("step size must be positive");
  }
  if (t1 < t0) {
    throw OrderingError("time interval end precedes its start");
  }
  if (t1 > t0) {
    const double ratio = (t1 - t0) / step;
    count_ = static_cast<std::size_t>(std::ceil(ratio - kGridSlack * ratio));
    count_ = std::max<std::size_t>(count_, 1);
  }
}

double StepGrid::node(std::size_t k) const {
  if (k >= count_) {
    return t1_;
  }
  return t0_ + static_cast<double>(k) * step_;
}

Vector rk4_step(const OdeField& field, std::span<const double> state, double t,
                double h) {
  if (!(h > 0.0)) {
    throw ConfigError("rk4_step: step size must be positive");
  }
  const std::size_t n = state.size();
  auto check = [&](const Vector& k, int stage) {
    if (!all_finite(k)) {
      std::ostringstream os;
      os << field.label << ": non-finite RK4 stage " << stage << " at t=" << t;
      throw DivergenceError(os.str(), t, stage);
    }
  };
  auto shifted = [&](const Vector& k, double factor) {
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = state[i] + factor * k[i];
    }
    return y;
  };

  const Vector k1 = field(state, t);
  check(k1, 1);
  const Vector k2 = field(shifted(k1, 0.5 * h), t + 0.5 * h);
  check(k2, 2);
  const Vector k3 = field(shifted(k2, 0.5 * h), t + 0.5 * h);
  check(k3, 3);
  const Vector k4 = field(shifted(k3, h), t + h);
  check(k4, 4);

  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = state[i] + h * ((k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0);
  }
  if (!all_finite(out)) {
    std::ostringstream os;
    os << field.label << ": non-finite RK4 update at t=" << t;
    throw DivergenceError(os.str(), t, 4);
  }
  return out;
}

Vector integrate_to(const OdeField& field, std::span<const double> state,
                    double t0, double t1, const StepperConfig& cfg,
                    const Observer& observer) {
  if (cfg.max_steps < 1) {
    throw ConfigError("integrate_to: max_steps must be at least 1");
  }
  const StepGrid grid(t0, t1, cfg.step);
  if (grid.count() > cfg.max_steps) {
    std::ostringstream os;
    os << "integrate_to: " << grid.count() << " steps needed for [" << t0
       << ", " << t1 << "] exceed the budget of " << cfg.max_steps;
    throw BudgetError(os.str());
  }
  Vector y(state.begin(), state.end());
  for (std::size_t k = 0; k < grid.count(); ++k) {
    const double ta = grid.node(k);
    const double tb = grid.node(k + 1);
    y = rk4_step(field, y, ta, tb - ta);
    if (observer) {
      observer(Observation{tb, y, k + 1});
    }
  }
  return y;
}

std::vector<Segment> split_at_discontinuities(double t0, double t1,
                                              std::span<const double> times) {
  if (t1 < t0) {
    throw OrderingError("split_at_discontinuities: t1 precedes t0");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw OrderingError(
          "split_at_discontinuities: times must be strictly increasing");
    }
  }
  std::vector<Segment> out;
  double start = t0;
  for (double cut : times) {
    if (cut > t0 && cut < t1) {
      out.emplace_back(start, cut);
      start = cut;
    }
  }
  out.emplace_back(start, t1);
  return out;
}

}  // namespace odetrack
