#pragma once

#include <cstddef>

// Batch numeric kernels for the 1-D Gaussian mixture algebra.
//
// Every kernel has a scalar reference implementation and, where the build
// supports it, a SIMD variant selected at runtime.  The two are bitwise
// identical: exp() is our own fixed polynomial (not libm), and dot-style
// reductions accumulate into four interleaved partial sums (element j goes
// to lane j mod 4) combined as (l0+l1)+(l2+l3) in both paths.
namespace podreach::kern {

// True if the running CPU supports the SIMD variant compiled into this build.
bool simd_available();

// Test hook: force the scalar reference path regardless of CPU support.
void set_force_scalar(bool on);

// Name of the backend the dispatcher currently selects ("scalar", "avx2", "neon").
const char* active_backend();

// out[i] = exp(x[i]).  Max error ~2 ulp on [-708, 709].  Inputs below -708
// flush to zero (no subnormal outputs); above 709.79 yield +inf; NaN propagates.
void exp_v(const double* x, double* out, std::size_t n);

// out[i] = w[i] * phi(x; mu[i], var[i] + extra_var)
// where phi(x; m, v) = exp(-(x-m)^2 / (2v)) / sqrt(2 pi v).
// Variances must be positive.
void gauss_pdf_v(double x, double extra_var, const double* w, const double* mu,
                 const double* var, double* out, std::size_t n);

// sum_i w[i] * phi(x; mu[i], var[i] + extra_var), fixed 4-lane accumulation.
double gauss_pdf_dot(double x, double extra_var, const double* w, const double* mu,
                     const double* var, std::size_t n);

// Scalar exp with the same algorithm as exp_v (reference, always scalar).
double exp_ref(double x);

}  // namespace podreach::kern
