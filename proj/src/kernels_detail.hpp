#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>

// Shared between the scalar and SIMD kernel translation units.  Both paths
// must follow the exact operation sequences documented here; the equivalence
// tests assert bitwise-identical results.
namespace podreach::kern::detail {

struct Backend {
  const char* name;
  void (*exp_v)(const double*, double*, std::size_t);
  void (*gauss_pdf_v)(double, double, const double*, const double*,
                      const double*, double*, std::size_t);
  double (*gauss_pdf_dot)(double, double, const double*, const double*,
                          const double*, std::size_t);
};

const Backend& scalar_backend();

#if PODREACH_BUILD_AVX2
// Null when the running CPU lacks AVX2 or FMA.
const Backend* avx2_backend_if_supported();
#endif

// exp() range reduction constants.  kd = nearbyint(x * LOG2E) stays within
// [-1021, 1023] for x in [-708, 709], so a single 2^k bit-shift scale works.
inline constexpr double kExpUnderflow = -708.0;  // below: flush to zero
inline constexpr double kExpOverflow = 709.0;    // above: +inf
inline constexpr double kLog2E = 1.44269504088896340736;
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Taylor coefficients 1/k!; degree 13 keeps the remainder below 0.1 ulp on
// |r| <= ln(2)/2.
inline constexpr double kExpC[12] = {
    1.0 / 2,         1.0 / 6,         1.0 / 24,       1.0 / 120,
    1.0 / 720,       1.0 / 5040,      1.0 / 40320,    1.0 / 362880,
    1.0 / 3628800,   1.0 / 39916800,  1.0 / 479001600, 1.0 / 6227020800.0,
};

inline double exp_core(double x) {
  if (!(x >= kExpUnderflow)) {
    if (x != x) return x;
    return 0.0;
  }
  if (x > kExpOverflow) return std::numeric_limits<double>::infinity();
  const double kd = std::nearbyint(x * kLog2E);
  double r = std::fma(kd, -kLn2Hi, x);
  r = std::fma(kd, -kLn2Lo, r);
  double p = kExpC[11];
  for (int c = 10; c >= 0; --c) p = std::fma(p, r, kExpC[c]);
  p = std::fma(p, r, 1.0);
  p = std::fma(p, r, 1.0);
  const auto k = static_cast<std::int64_t>(kd);
  const auto bits = static_cast<std::uint64_t>(k + 1023) << 52;
  return p * std::bit_cast<double>(bits);
}

// Term order is load-bearing: ((d*d) * -0.5) / v, then (w*e) / sqrt(v*2pi).
inline double pdf_term(double x, double extra_var, double w, double mu, double var) {
  const double v = var + extra_var;
  const double d = x - mu;
  const double t = ((d * d) * -0.5) / v;
  const double e = exp_core(t);
  return (w * e) / std::sqrt(v * kTwoPi);
}

}  // namespace podreach::kern::detail
