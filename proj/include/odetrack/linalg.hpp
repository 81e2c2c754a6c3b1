#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace odetrack {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Entries are validated finite on
/// construction.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  /// Zero matrix.
  DenseMatrix(std::size_t rows, std::size_t cols);

  /// Throws DimensionError if entries.size() != rows * cols and ConfigError
  /// if any entry is not finite.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(std::size_t i, std::size_t j) {
    return entries_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return entries_[i * cols_ + j];
  }

  std::span<const double> row(std::size_t i) const {
    return {entries_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) {
    return {entries_.data() + i * cols_, cols_};
  }

  const std::vector<double>& entries() const { return entries_; }

  DenseMatrix transposed() const;

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

/// Snapshot of the process-wide operation counters.
struct OpCounts {
  std::uint64_t matvec = 0;
  std::uint64_t gram = 0;
  std::uint64_t solve = 0;
  /// Scalar multiply-adds performed inside the counted kernels.
  std::uint64_t flops = 0;

  OpCounts& operator+=(const OpCounts& other);
  friend OpCounts operator-(OpCounts a, const OpCounts& b);
  friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// Per-thread counters for matrix-vector products, Gram applications and SPD
/// solves. Each thread sees only its own work, so concurrent runs do not mix.
namespace op_counter {
OpCounts snapshot();
void reset();
void record_matvec(std::uint64_t flops);
void record_gram();
void record_solve(std::uint64_t flops);
void record_flops(std::uint64_t flops);
}  // namespace op_counter

// Vector helpers. These are not counted.
double dot(std::span<const double> a, std::span<const double> b);
double norm_inf(std::span<const double> a);
double norm2(std::span<const double> a);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
Vector axpy(double alpha, std::span<const double> x, std::span<const double> y);
Vector scaled(double alpha, std::span<const double> x);
bool all_finite(std::span<const double> a);

/// A·w.
Vector matvec(const DenseMatrix& a, std::span<const double> w);

/// Aᵀ·w. Counted as a matrix-vector product.
Vector matvec_transposed(const DenseMatrix& a, std::span<const double> w);

/// J(Jᵀw) without forming JJᵀ: two matvecs and one Gram application.
Vector gram_apply(const DenseMatrix& j, std::span<const double> w);

/// Explicit JJᵀ, O(p²n). Only the reference path forms it.
DenseMatrix gram_matrix(const DenseMatrix& j);

/// Solves Ax = b for symmetric positive-definite A by Cholesky factorization
/// without pivoting. A pivot <= min_pivot, or <= 1e-13 times its diagonal
/// entry, raises SingularityError.
Vector solve_spd(const DenseMatrix& a, std::span<const double> b,
                 double min_pivot = 0.0);

/// Orthogonal projection of v onto ker J: v - Jᵀ (JJᵀ)⁻¹ J v.
Vector project_tangent(const DenseMatrix& j, std::span<const double> v);

}  // namespace odetrack
