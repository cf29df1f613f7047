#include "spectral_core/numerics.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace spectral_core {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  require(data_.size() == rows * cols, "Matrix: entry count does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double SeededRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the logarithm argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t SeededRng::below(std::size_t n) {
  require(n > 0, "SeededRng::below: empty range");
  // Lemire's rejection keeps the draw unbiased.
  const std::uint64_t bound = n;
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    const unsigned __int128 product = static_cast<unsigned __int128>(x) * bound;
    if (static_cast<std::uint64_t>(product) >= threshold) {
      return static_cast<std::size_t>(product >> 64);
    }
  }
}

std::uint64_t SeededRng::child_seed(std::uint64_t stream) const {
  std::uint64_t state = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return splitmix64(state);
}

Matrix glorot_uniform(SeededRng& rng, std::size_t fan_in, std::size_t fan_out) {
  require(fan_in >= 1 && fan_out >= 1, "glorot_uniform: fan dimensions must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_out, fan_in);
  for (auto& w : m.entries()) w = rng.uniform(-limit, limit);
  return m;
}

Matrix sample_standard_gaussian(SeededRng& rng, std::size_t dim, std::size_t n) {
  require(dim >= 1 && n >= 1, "sample_standard_gaussian: dim and n must be positive");
  Matrix m(n, dim);
  for (auto& x : m.entries()) x = rng.gaussian();
  return m;
}

Vector matvec(const Matrix& m, std::span<const double> v) {
  require(m.cols() == v.size(), "matvec: shape mismatch");
  Vector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * v[j];
    out[i] = acc;
  }
  return out;
}

Vector hadamard(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "hadamard: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

namespace {

// C = A * B where A is addressed through (row_stride, col_stride) so the
// same kernel serves A and A^T. Every output entry accumulates its products
// in ascending k from zero, so the blocking never changes the result bits.
void gemm_kernel(const double* a, std::size_t a_row_stride, std::size_t a_col_stride, const double* b,
                 double* c, std::size_t m, std::size_t kdim, std::size_t n) {
  using Lane = double __attribute__((vector_size(32)));
  constexpr std::size_t kWidth = 4;
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 2 * kWidth;
  const auto load = [](const double* p) {
    Lane v;
    std::memcpy(&v, p, sizeof v);
    return v;
  };
  const auto store = [](double* p, Lane v) { std::memcpy(p, &v, sizeof v); };
  const std::size_t n_full = n - n % kCols;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    for (std::size_t j = 0; j < n_full; j += kCols) {
      Lane lo[kRows] = {};
      Lane hi[kRows] = {};
      for (std::size_t k = 0; k < kdim; ++k) {
        const Lane b_lo = load(b + k * n + j);
        const Lane b_hi = load(b + k * n + j + kWidth);
        for (std::size_t r = 0; r < kRows; ++r) {
          const double aik = a[(i + r) * a_row_stride + k * a_col_stride];
          lo[r] += aik * b_lo;
          hi[r] += aik * b_hi;
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        store(c + (i + r) * n + j, lo[r]);
        store(c + (i + r) * n + j + kWidth, hi[r]);
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n_full; j += kCols) {
      Lane lo = {};
      Lane hi = {};
      for (std::size_t k = 0; k < kdim; ++k) {
        const double aik = a[i * a_row_stride + k * a_col_stride];
        lo += aik * load(b + k * n + j);
        hi += aik * load(b + k * n + j + kWidth);
      }
      store(c + i * n + j, lo);
      store(c + i * n + j + kWidth, hi);
    }
  }
  if (n_full == n) return;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = n_full; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kdim; ++k) acc += a[r * a_row_stride + k * a_col_stride] * b[k * n + j];
      c[r * n + j] = acc;
    }
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: shape mismatch");
  Matrix c(a.rows(), b.cols());
  gemm_kernel(a.entries().data(), a.cols(), 1, b.entries().data(), c.entries().data(), a.rows(), a.cols(),
              b.cols());
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_bt: shape mismatch");
  return matmul(a, b.transposed());
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_at: shape mismatch");
  Matrix c(a.cols(), b.cols());
  gemm_kernel(a.entries().data(), 1, a.cols(), b.entries().data(), c.entries().data(), a.cols(), a.rows(),
              b.cols());
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.entries()[i] += b.entries()[i];
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "subtract: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.entries()[i] -= b.entries()[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (auto& x : c.entries()) x *= s;
  return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  return max_abs_diff(a.entries(), b.entries());
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "max_abs_diff: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double sum_of_squares(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace spectral_core
