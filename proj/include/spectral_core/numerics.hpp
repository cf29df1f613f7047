#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectral_core {

/// Raised for shape mismatches and violated preconditions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& entries() { return data_; }
  const std::vector<double>& entries() const { return data_; }

  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// xoshiro256** seeded through splitmix64. The stream depends only on the
// seed, so identical seeds give identical draws on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; the spare deviate is cached.
  double gaussian();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Seed for an independent child stream; does not advance this stream.
  std::uint64_t child_seed(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// fan_out x fan_in matrix with entries uniform on +-sqrt(6/(fan_in+fan_out)).
Matrix glorot_uniform(SeededRng& rng, std::size_t fan_in, std::size_t fan_out);

/// n x dim matrix of independent standard normal draws.
Matrix sample_standard_gaussian(SeededRng& rng, std::size_t dim, std::size_t n);

// All reductions below accumulate in ascending index order.
Vector matvec(const Matrix& m, std::span<const double> v);
Vector hadamard(std::span<const double> a, std::span<const double> b);
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose of b in the caller.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// a^T * b, summing over the shared row index in ascending order.
Matrix matmul_at(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double sum_of_squares(std::span<const double> v);
bool all_finite(std::span<const double> v);

}  // namespace spectral_core
