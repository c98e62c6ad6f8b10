// AVX2 kernel variants.  Compiled with -mavx2 -mfma; only reached when the
// running CPU reports both features.  Each routine mirrors the scalar
// reference operation-for-operation so results are bitwise identical.
#include <immintrin.h>

#include <cstddef>
#include <limits>

#include "kernels_detail.hpp"

#if PODREACH_BUILD_AVX2

namespace podreach::kern::detail {
namespace {

inline __m256d exp4(__m256d x) {
  const __m256d under = _mm256_set1_pd(kExpUnderflow);
  const __m256d over = _mm256_set1_pd(kExpOverflow);
  const __m256d m_nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d m_under = _mm256_cmp_pd(x, under, _CMP_LT_OQ);
  const __m256d m_over = _mm256_cmp_pd(x, over, _CMP_GT_OQ);
  // Clamp keeps the 2^k scale construction in range; masked lanes are
  // overwritten below.
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, under), over);
  const __m256d kd = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(kLog2E)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fmadd_pd(kd, _mm256_set1_pd(-kLn2Hi), xc);
  r = _mm256_fmadd_pd(kd, _mm256_set1_pd(-kLn2Lo), r);
  __m256d p = _mm256_set1_pd(kExpC[11]);
  for (int c = 10; c >= 0; --c) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kExpC[c]));
  const __m256d one = _mm256_set1_pd(1.0);
  p = _mm256_fmadd_pd(p, r, one);
  p = _mm256_fmadd_pd(p, r, one);
  const __m128i k32 = _mm256_cvtpd_epi32(kd);
  const __m256i k64 = _mm256_cvtepi32_epi64(k32);
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(k64, _mm256_set1_epi64x(1023)), 52);
  __m256d res = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  res = _mm256_andnot_pd(m_under, res);
  res = _mm256_blendv_pd(res, _mm256_set1_pd(std::numeric_limits<double>::infinity()), m_over);
  res = _mm256_blendv_pd(res, x, m_nan);
  return res;
}

inline __m256d pdf_term4(__m256d x, __m256d extra, __m256d w, __m256d mu, __m256d var) {
  const __m256d v = _mm256_add_pd(var, extra);
  const __m256d d = _mm256_sub_pd(x, mu);
  const __m256d t =
      _mm256_div_pd(_mm256_mul_pd(_mm256_mul_pd(d, d), _mm256_set1_pd(-0.5)), v);
  const __m256d e = exp4(t);
  const __m256d num = _mm256_mul_pd(w, e);
  const __m256d den = _mm256_sqrt_pd(_mm256_mul_pd(v, _mm256_set1_pd(kTwoPi)));
  return _mm256_div_pd(num, den);
}

void exp_v_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = exp_core(x[i]);
}

void gauss_pdf_v_avx2(double x, double extra_var, const double* w, const double* mu,
                      const double* var, double* out, std::size_t n) {
  const __m256d vx = _mm256_set1_pd(x);
  const __m256d ve = _mm256_set1_pd(extra_var);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, pdf_term4(vx, ve, _mm256_loadu_pd(w + i),
                                        _mm256_loadu_pd(mu + i), _mm256_loadu_pd(var + i)));
  }
  for (; i < n; ++i) out[i] = pdf_term(x, extra_var, w[i], mu[i], var[i]);
}

double gauss_pdf_dot_avx2(double x, double extra_var, const double* w, const double* mu,
                          const double* var, std::size_t n) {
  const __m256d vx = _mm256_set1_pd(x);
  const __m256d ve = _mm256_set1_pd(extra_var);
  __m256d vacc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d term = pdf_term4(vx, ve, _mm256_loadu_pd(w + i),
                                   _mm256_loadu_pd(mu + i), _mm256_loadu_pd(var + i));
    vacc = _mm256_add_pd(vacc, term);
  }
  alignas(32) double acc[4];
  _mm256_store_pd(acc, vacc);
  for (; i < n; ++i) acc[i & 3] += pdf_term(x, extra_var, w[i], mu[i], var[i]);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

}  // namespace

const Backend* avx2_backend_if_supported() {
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  static const Backend b{"avx2", &exp_v_avx2, &gauss_pdf_v_avx2, &gauss_pdf_dot_avx2};
  return &b;
}

}  // namespace podreach::kern::detail

#endif  // PODREACH_BUILD_AVX2
