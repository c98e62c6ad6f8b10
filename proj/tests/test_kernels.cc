#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <vector>

#include "podreach/kernels.hpp"
#include "podreach/rng.hpp"

using podreach::Rng;
namespace kern = podreach::kern;

namespace {

struct ScalarGuard {
  ~ScalarGuard() { kern::set_force_scalar(false); }
};

std::int64_t ulp_diff(double a, double b) {
  if (a == b) return 0;
  std::int64_t ia, ib;
  std::memcpy(&ia, &a, 8);
  std::memcpy(&ib, &b, 8);
  if (ia < 0) ia = std::numeric_limits<std::int64_t>::min() - ia;
  if (ib < 0) ib = std::numeric_limits<std::int64_t>::min() - ib;
  return ia > ib ? ia - ib : ib - ia;
}

double pdf_reference(double x, double extra, double w, double mu, double var) {
  const double v = var + extra;
  const double d = x - mu;
  return w * std::exp(-0.5 * d * d / v) / std::sqrt(v * 2.0 * podreach::kPi);
}

}  // namespace

TEST_CASE("exp matches libm within 4 ulp across the finite range") {
  ScalarGuard guard;
  kern::set_force_scalar(true);
  Rng rng(101);
  std::int64_t worst = 0;
  for (int i = 0; i < 200000; ++i) {
    const double x = rng.uniform(-708.0, 709.0);
    const double got = kern::exp_ref(x);
    const double want = std::exp(x);
    worst = std::max(worst, ulp_diff(got, want));
  }
  CHECK(worst <= 4);
  // the hot region for Gaussian exponents
  worst = 0;
  for (int i = 0; i < 200000; ++i) {
    const double x = rng.uniform(-60.0, 0.0);
    worst = std::max(worst, ulp_diff(kern::exp_ref(x), std::exp(x)));
  }
  CHECK(worst <= 2);
}

TEST_CASE("exp edge cases") {
  CHECK(kern::exp_ref(0.0) == 1.0);
  CHECK(kern::exp_ref(-0.0) == 1.0);
  CHECK(kern::exp_ref(-709.0) == 0.0);
  CHECK(kern::exp_ref(-1e300) == 0.0);
  CHECK(kern::exp_ref(710.0) == std::numeric_limits<double>::infinity());
  CHECK(kern::exp_ref(std::numeric_limits<double>::infinity()) ==
        std::numeric_limits<double>::infinity());
  CHECK(std::isnan(kern::exp_ref(std::numeric_limits<double>::quiet_NaN())));
  // no subnormal outputs: below the flush threshold everything is exactly zero
  CHECK(kern::exp_ref(-708.5) == 0.0);
}

TEST_CASE("exp_v equals exp_ref elementwise") {
  ScalarGuard guard;
  Rng rng(7);
  for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{4}, std::size_t{17}}) {
    std::vector<double> x(n), out(n);
    for (auto& v : x) v = rng.uniform(-700.0, 5.0);
    kern::set_force_scalar(true);
    kern::exp_v(x.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == kern::exp_ref(x[i]));
  }
}

TEST_CASE("gauss_pdf_v matches the closed form") {
  ScalarGuard guard;
  kern::set_force_scalar(true);
  Rng rng(33);
  const std::size_t n = 57;
  std::vector<double> w(n), mu(n), var(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = rng.uniform(-2.0, 2.0);
    mu[i] = rng.uniform(-30.0, 30.0);
    var[i] = rng.uniform(0.01, 9.0);
  }
  const double x = 1.25;
  const double extra = 0.4;
  kern::gauss_pdf_v(x, extra, w.data(), mu.data(), var.data(), out.data(), n);
  for (std::size_t i = 0; i < n; ++i) {
    const double want = pdf_reference(x, extra, w[i], mu[i], var[i]);
    CHECK(out[i] == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("gauss_pdf_dot reduces in the documented lane order") {
  ScalarGuard guard;
  kern::set_force_scalar(true);
  Rng rng(12);
  for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{8},
                        std::size_t{23}, std::size_t{64}}) {
    std::vector<double> w(n), mu(n), var(n), term(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = rng.uniform(-1.0, 1.0);
      mu[i] = rng.uniform(-5.0, 5.0);
      var[i] = rng.uniform(0.05, 4.0);
    }
    const double x = 0.75;
    kern::gauss_pdf_v(x, 0.1, w.data(), mu.data(), var.data(), term.data(), n);
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) lane[i & 3] += term[i];
    const double want = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    const double got = kern::gauss_pdf_dot(x, 0.1, w.data(), mu.data(), var.data(), n);
    CHECK(got == want);
  }
}

TEST_CASE("simd and scalar paths agree bitwise") {
  if (!kern::simd_available()) {
    MESSAGE("no SIMD backend on this host; dispatch test skipped");
    CHECK(std::strcmp(kern::active_backend(), "scalar") == 0);
    return;
  }
  ScalarGuard guard;
  kern::set_force_scalar(false);
  CHECK(std::strcmp(kern::active_backend(), "scalar") != 0);

  Rng rng(2024);
  for (std::size_t n = 1; n <= 67; ++n) {
    std::vector<double> x(n);
    for (auto& v : x) {
      const double r = rng.uniform01();
      if (r < 0.1)
        v = rng.uniform(-800.0, -650.0);  // straddles the flush cutoff
      else if (r < 0.2)
        v = rng.uniform(700.0, 720.0);  // straddles overflow
      else
        v = rng.uniform(-80.0, 1.0);
    }
    std::vector<double> simd_out(n), ref_out(n);
    kern::set_force_scalar(false);
    kern::exp_v(x.data(), simd_out.data(), n);
    kern::set_force_scalar(true);
    kern::exp_v(x.data(), ref_out.data(), n);
    kern::set_force_scalar(false);
    CHECK(std::memcmp(simd_out.data(), ref_out.data(), n * sizeof(double)) == 0);

    std::vector<double> w(n), mu(n), var(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = rng.uniform(-3.0, 3.0);
      mu[i] = rng.uniform(-40.0, 40.0);
      var[i] = rng.uniform(1e-4, 25.0);
    }
    const double xq = rng.uniform(-40.0, 40.0);
    const double extra = rng.uniform(0.0, 2.0);
    kern::gauss_pdf_v(xq, extra, w.data(), mu.data(), var.data(), simd_out.data(), n);
    kern::set_force_scalar(true);
    kern::gauss_pdf_v(xq, extra, w.data(), mu.data(), var.data(), ref_out.data(), n);
    kern::set_force_scalar(false);
    CHECK(std::memcmp(simd_out.data(), ref_out.data(), n * sizeof(double)) == 0);

    const double dot_simd = kern::gauss_pdf_dot(xq, extra, w.data(), mu.data(), var.data(), n);
    kern::set_force_scalar(true);
    const double dot_ref = kern::gauss_pdf_dot(xq, extra, w.data(), mu.data(), var.data(), n);
    kern::set_force_scalar(false);
    CHECK(std::memcmp(&dot_simd, &dot_ref, sizeof(double)) == 0);
  }
}

TEST_CASE("force_scalar hook switches the reported backend") {
  ScalarGuard guard;
  kern::set_force_scalar(true);
  CHECK(std::strcmp(kern::active_backend(), "scalar") == 0);
  kern::set_force_scalar(false);
  if (kern::simd_available())
    CHECK(std::strcmp(kern::active_backend(), "scalar") != 0);
  else
    CHECK(std::strcmp(kern::active_backend(), "scalar") == 0);
}
