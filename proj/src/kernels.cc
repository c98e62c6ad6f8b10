#include "podreach/kernels.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "kernels_detail.hpp"

namespace podreach::kern {
namespace {

using detail::exp_core;
using detail::pdf_term;

void exp_v_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = exp_core(x[i]);
}

void gauss_pdf_v_scalar(double x, double extra_var, const double* w, const double* mu,
                        const double* var, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = pdf_term(x, extra_var, w[i], mu[i], var[i]);
}

double gauss_pdf_dot_scalar(double x, double extra_var, const double* w, const double* mu,
                            const double* var, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) acc[i & 3] += pdf_term(x, extra_var, w[i], mu[i], var[i]);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

std::atomic<bool> g_force_scalar{false};

const detail::Backend* simd_backend() {
#if PODREACH_BUILD_AVX2
  static const detail::Backend* b = detail::avx2_backend_if_supported();
  return b;
#else
  return nullptr;
#endif
}

inline const detail::Backend& active() {
  if (!g_force_scalar.load(std::memory_order_relaxed)) {
    if (const detail::Backend* b = simd_backend()) return *b;
  }
  return detail::scalar_backend();
}

}  // namespace

namespace detail {
const Backend& scalar_backend() {
  static const Backend b{"scalar", &exp_v_scalar, &gauss_pdf_v_scalar, &gauss_pdf_dot_scalar};
  return b;
}
}  // namespace detail

bool simd_available() { return simd_backend() != nullptr; }

void set_force_scalar(bool on) { g_force_scalar.store(on, std::memory_order_relaxed); }

const char* active_backend() { return active().name; }

double exp_ref(double x) { return exp_core(x); }

void exp_v(const double* x, double* out, std::size_t n) { active().exp_v(x, out, n); }

void gauss_pdf_v(double x, double extra_var, const double* w, const double* mu,
                 const double* var, double* out, std::size_t n) {
  active().gauss_pdf_v(x, extra_var, w, mu, var, out, n);
}

double gauss_pdf_dot(double x, double extra_var, const double* w, const double* mu,
                     const double* var, std::size_t n) {
  return active().gauss_pdf_dot(x, extra_var, w, mu, var, n);
}

}  // namespace podreach::kern
