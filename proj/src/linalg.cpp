#include "odetrack/linalg.hpp"

#include <cmath>
#include <sstream>

#include "odetrack/error.hpp"

namespace odetrack {

namespace {

thread_local std::uint64_t g_matvec = 0;
thread_local std::uint64_t g_gram = 0;
thread_local std::uint64_t g_solve = 0;
thread_local std::uint64_t g_flops = 0;

std::string shape(const DenseMatrix& a) {
  std::ostringstream os;
  os << a.rows() << "x" << a.cols();
  return os.str();
}

void require(bool ok, const char* message) {
  if (!ok) {
    throw DimensionError(message);
  }
}

// Builds the message only on failure; these checks sit on hot paths.
template <typename Message>
void require_lazy(bool ok, Message&& message) {
  if (!ok) {
    throw DimensionError(message());
  }
}

}  // namespace

std::string describe_point(const std::vector<double>& x, double t) {
  std::ostringstream os;
  os.precision(17);
  os << "(x=[";
  for (std::size_t i = 0; i < x.size(); ++i) {
    os << (i ? ", " : "") << x[i];
  }
  os << "], t=" << t << ")";
  return os.str();
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_{rows}, cols_{cols}, entries_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> entries)
    : rows_{rows}, cols_{cols}, entries_{std::move(entries)} {
  require(entries_.size() == rows * cols,
          "matrix entries do not match declared shape");
  if (!all_finite()) {
    throw ConfigError("matrix has non-finite entries");
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = 1.0;
  }
  return out;
}

DenseMatrix DenseMatrix::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> entries;
  entries.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, "ragged rows in matrix literal");
    entries.insert(entries.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(entries));
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix out(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      out(j, i) = (*this)(i, j);
    }
  }
  return out;
}

bool DenseMatrix::all_finite() const { return odetrack::all_finite(entries_); }

OpCounts& OpCounts::operator+=(const OpCounts& other) {
  matvec += other.matvec;
  gram += other.gram;
  solve += other.solve;
  flops += other.flops;
  return *this;
}

OpCounts operator-(OpCounts a, const OpCounts& b) {
  a.matvec -= b.matvec;
  a.gram -= b.gram;
  a.solve -= b.solve;
  a.flops -= b.flops;
  return a;
}

namespace op_counter {

OpCounts snapshot() {
  return {g_matvec, g_gram, g_solve, g_flops};
}

void reset() {
  g_matvec = 0;
  g_gram = 0;
  g_solve = 0;
  g_flops = 0;
}

void record_matvec(std::uint64_t flops) {
  g_matvec += 1;
  g_flops += flops;
}

void record_gram() { g_gram += 1; }

void record_solve(std::uint64_t flops) {
  g_solve += 1;
  g_flops += flops;
}

void record_flops(std::uint64_t flops) { g_flops += flops; }

}  // namespace op_counter

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) {
    m = std::max(m, std::abs(v));
  }
  return m;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

Vector axpy(double alpha, std::span<const double> x,
            std::span<const double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  Vector out(y.begin(), y.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] += alpha * x[i];
  }
  return out;
}

Vector scaled(double alpha, std::span<const double> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = alpha * x[i];
  }
  return out;
}

bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

Vector matvec(const DenseMatrix& a, std::span<const double> w) {
  require_lazy(a.cols() == w.size(), [&] {
    return "matvec: " + shape(a) + " matrix times length " +
           std::to_string(w.size()) + " vector";
  });
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    const auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      s += r[j] * w[j];
    }
    out[i] = s;
  }
  op_counter::record_matvec(a.rows() * a.cols());
  return out;
}

Vector matvec_transposed(const DenseMatrix& a, std::span<const double> w) {
  require_lazy(a.rows() == w.size(), [&] {
    return "matvec_transposed: " + shape(a) +
           " matrix transposed times length " +
           std::to_string(w.size()) + " vector";
  });
  Vector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    const double wi = w[i];
    for (std::size_t j = 0; j < r.size(); ++j) {
      out[j] += r[j] * wi;
    }
  }
  op_counter::record_matvec(a.rows() * a.cols());
  return out;
}

Vector gram_apply(const DenseMatrix& j, std::span<const double> w) {
  require_lazy(j.rows() == w.size(), [&] {
    return "gram_apply: " + shape(j) +
           " matrix with length " +
           std::to_string(w.size()) + " vector";
  });
  Vector out = matvec(j, matvec_transposed(j, w));
  op_counter::record_gram();
  return out;
}

DenseMatrix gram_matrix(const DenseMatrix& j) {
  const std::size_t p = j.rows();
  DenseMatrix out(p, p);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      const double s = dot(j.row(a), j.row(b));
      out(a, b) = s;
      out(b, a) = s;
    }
  }
  op_counter::record_flops(p * (p + 1) / 2 * j.cols());
  return out;
}

Vector solve_spd(const DenseMatrix& a, std::span<const double> b,
                 double min_pivot) {
  // Rank-deficient inputs leave a pivot of rounding size rather than zero.
  constexpr double kRelativePivot = 1e-13;
  const std::size_t n = a.rows();
  require_lazy(a.cols() == n, [&] {
    return "solve_spd: matrix " + shape(a) + " is not square";
  });
  require_lazy(b.size() == n, [&] {
    return "solve_spd: right-hand side length " +
           std::to_string(b.size()) + " for " + shape(a);
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const double scale = std::max({1.0, std::abs(a(i, k)), std::abs(a(k, i))});
      if (std::abs(a(i, k) - a(k, i)) > 1e-12 * scale) {
        throw ConfigError("solve_spd: matrix is not symmetric");
      }
    }
  }

  // Lower-triangular Cholesky factor, stored densely.
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) {
      d -= l(j, k) * l(j, k);
    }
    if (!(d > min_pivot) || !(d > kRelativePivot * a(j, j))) {
      std::ostringstream os;
      os << "solve_spd: pivot " << d << " at column " << j
         << " is not positive (matrix singular or not positive definite)";
      throw SingularityError(os.str());
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) {
        s -= l(i, k) * l(j, k);
      }
      l(i, j) = s / ljj;
    }
  }

  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) {
      s -= l(i, k) * y[k];
    }
    y[i] = s / l(i, i);
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) {
      s -= l(k, ii) * x[k];
    }
    x[ii] = s / l(ii, ii);
  }
  op_counter::record_solve(n * n * n / 3 + 2 * n * n);
  return x;
}

Vector project_tangent(const DenseMatrix& j, std::span<const double> v) {
  require_lazy(j.cols() == v.size(), [&] {
    return "project_tangent: " + shape(j) +
           " Jacobian with length " +
           std::to_string(v.size()) + " vector";
  });
  if (j.rows() == 0) {
    return Vector(v.begin(), v.end());
  }
  const Vector w = solve_spd(gram_matrix(j), matvec(j, v));
  return axpy(-1.0, matvec_transposed(j, w), v);
}

}  // namespace odetrack
