#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "podreach/belief.hpp"
#include "podreach/errors.hpp"
#include "podreach/gmix.hpp"
#include "podreach/hsmodel.hpp"
#include "podreach/rng.hpp"

using namespace podreach;
using doctest::Approx;

namespace {

hsmodel::HybridModel thermostat() {
  return hsmodel::build_thermostat(hsmodel::ThermostatParams{});
}

double gauss_at(double x, double mu, double var) {
  const double d = x - mu;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
}

// discretized observation likelihood, written out independently
double lik_at(const hsmodel::DiscretizedObservation& o, int yi, double x) {
  double s = 0.0;
  for (int h = 0; h < o.n_sub; ++h) s += o.sub_delta * gauss_at(x, o.mu_h(yi, h), o.noise_var);
  return s;
}

belief::SufficientStatistic two_mode_statistic(const std::vector<double>& w0,
                                               const std::vector<double>& mu0,
                                               const std::vector<double>& v0,
                                               const std::vector<double>& w1,
                                               const std::vector<double>& mu1,
                                               const std::vector<double>& v1) {
  belief::SufficientStatistic s;
  s.mixture = gmix::HybridMixture(2, 1);
  for (std::size_t i = 0; i < w0.size(); ++i) s.mixture.mode(0).add1(w0[i], mu0[i], v0[i]);
  for (std::size_t i = 0; i < w1.size(); ++i) s.mixture.mode(1).add1(w1[i], mu1[i], v1[i]);
  return s;
}

}  // namespace

TEST_CASE("init places the prior in the known mode") {
  const auto m = thermostat();
  const auto s = belief::init_gaussian(m, 19.0, 0.1, 0);
  REQUIRE(s.mixture.mode(0).size() == 1);
  CHECK(s.mixture.mode(1).size() == 0);
  CHECK(s.mixture.mode(0).weight(0) == 1.0);
  CHECK(s.mixture.mode(0).mu1(0) == 19.0);
  CHECK(s.mixture.mode(0).var1(0) == 0.1);
  CHECK(s.time_index == 0);
  CHECK_FALSE(s.dead);
  CHECK(s.total_mass() == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("init collapses a mode-spread prior onto the known mode") {
  gmix::HybridMixture rho(2, 1);
  rho.mode(0).add1(0.5, 18.0, 0.2);
  rho.mode(1).add1(0.5, 20.0, 0.3);
  const auto s = belief::init(rho, 0);
  CHECK(s.mixture.mode(0).size() == 2);
  CHECK(s.mixture.mode(1).size() == 0);
  CHECK(s.total_mass() == Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(belief::init(rho, 2), std::invalid_argument);
  CHECK_THROWS_AS(belief::init(rho, -1), std::invalid_argument);
}

TEST_CASE("init without mode knowledge keeps per-mode weights") {
  gmix::HybridMixture rho(2, 1);
  rho.mode(0).add1(0.25, 18.0, 0.2);
  rho.mode(1).add1(0.75, 20.0, 0.3);
  const auto s = belief::init(rho);
  CHECK(s.mixture.mode(0).weight(0) == 0.25);
  CHECK(s.mixture.mode(1).weight(0) == 0.75);
  CHECK(s.total_mass() == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("init rejects an unnormalized prior") {
  gmix::HybridMixture rho(2, 1);
  rho.mode(0).add1(0.9, 19.0, 0.1);
  CHECK_THROWS_AS(belief::init(rho), NumericError);

  gmix::HybridMixture over(2, 1);
  over.mode(0).add1(1.000002, 19.0, 0.1);
  CHECK_THROWS_AS(belief::init(over), NumericError);

  gmix::HybridMixture close(2, 1);
  close.mode(0).add1(1.0 + 5e-7, 19.0, 0.1);
  CHECK_NOTHROW(belief::init(close));
}

TEST_CASE("zero statistic updates to a dead zero") {
  const auto m = thermostat();
  belief::SufficientStatistic z;
  z.mixture = gmix::HybridMixture(2, 1);
  z.time_index = 3;
  const auto out = belief::update(m, z, {11, 0}, 0, 20);
  CHECK(out.dead);
  CHECK(out.total_mass() == 0.0);
  CHECK(out.time_index == 4);
}

TEST_CASE("update validates inputs") {
  const auto m = thermostat();
  const auto s = belief::init_gaussian(m, 19.0, 0.1, 0);
  CHECK_THROWS_AS(belief::update(m, s, {0, 0}, 2, 20), std::invalid_argument);
  CHECK_THROWS_AS(belief::update(m, s, {-1, 0}, 0, 20), std::invalid_argument);
  CHECK_THROWS_AS(belief::update(m, s, {31, 0}, 0, 20), std::invalid_argument);
  hsmodel::HybridModel planar;
  planar.n = 2;
  CHECK_THROWS_AS(belief::update(planar, s, {0, 0}, 0, 20), NumericError);
}

TEST_CASE("unreduced update carries one component per factor combination") {
  const auto m = thermostat();
  const auto s0 = belief::init_gaussian(m, 19.75, 1e-4, 0);
  const int y = m.obs_x.nearest_index(19.75);
  const auto out = belief::update(m, s0, {y, 0}, 1, 0);
  // two target modes, ten indicator components, five likelihood components,
  // one input component
  CHECK(out.mixture.component_count() == 2 * 10 * 5 * 1);
  CHECK(out.mixture.mode(0).size() == 50);
  CHECK(out.mixture.mode(1).size() == 50);
  CHECK(out.time_index == 1);
}

TEST_CASE("single step matches quadrature of the exact operator") {
  // pinned case: prior phi(x; 19.75, 0.1) in mode 0, heater off, observation
  // cell nearest 18.75; closed form (fitted indicator) versus trapezoid
  // quadrature with the exact indicator
  const auto m = thermostat();
  const auto s0 = belief::init_gaussian(m, 19.75, 0.1, 0);
  const int y = m.obs_x.nearest_index(18.75);
  const int u = 0;
  const auto out = belief::update(m, s0, {y, 0}, u, 0);

  const double a = m.A(0, 0);
  const double nyx = static_cast<double>(m.n_yx());
  const double klo = m.safe.box.lo(0);
  const double khi = m.safe.box.hi(0);
  const double step = 5e-3;
  const int n_quad = static_cast<int>(std::lround((khi - klo) / step));

  double sup = 0.0;
  for (int qn = 0; qn < 2; ++qn) {
    const double fv = m.f[u][qn](0);
    const double wv = m.W[u][qn](0, 0);
    for (int p = 0; p < 400; ++p) {
      const double xp = 16.0 + 7.5 * p / 399.0;
      double total = 0.0;
      for (int q = 0; q < 2; ++q) {
        const double tq = m.Tq[u](q, qn);
        const gmix::Mixture& sig = s0.mixture.mode(q);
        if (sig.empty()) continue;
        double integral = 0.0;
        for (int k = 0; k <= n_quad; ++k) {
          const double x = klo + (khi - klo) * k / n_quad;
          double sig_x = 0.0;
          for (std::size_t l = 0; l < sig.size(); ++l)
            sig_x += sig.weight(l) * gauss_at(x, sig.mu1(l), sig.var1(l));
          const double v = gauss_at(xp, a * x + fv, wv) * sig_x;
          integral += (k == 0 || k == n_quad) ? 0.5 * v : v;
        }
        integral *= (khi - klo) / n_quad;
        total += tq * integral;
      }
      const double oracle = nyx * lik_at(m.obs_x, y, xp) * total;
      sup = std::max(sup, std::abs(out.mixture.mode(qn).eval1(xp) - oracle));
    }
  }
  CHECK(sup <= 3e-2);
  // the gap is dominated by exact-versus-fitted indicator; a collapse to
  // zero would mean the oracle stopped being independent
  CHECK(sup >= 1e-3);
}

TEST_CASE("update is linear before reduction") {
  const auto m = thermostat();
  const auto s1 = two_mode_statistic({0.6, 0.2}, {18.5, 20.0}, {0.2, 0.4}, {0.1}, {21.0}, {0.3});
  const auto s2 = two_mode_statistic({0.3}, {19.2}, {0.15}, {0.5, 0.1}, {18.0, 20.5}, {0.25, 0.5});
  const double lam = 0.35;

  belief::SufficientStatistic blend;
  blend.mixture = gmix::HybridMixture(2, 1);
  for (int q = 0; q < 2; ++q) {
    const auto& a = s1.mixture.mode(q);
    const auto& b = s2.mixture.mode(q);
    for (std::size_t i = 0; i < a.size(); ++i)
      blend.mixture.mode(q).add1(lam * a.weight(i), a.mu1(i), a.var1(i));
    for (std::size_t i = 0; i < b.size(); ++i)
      blend.mixture.mode(q).add1((1.0 - lam) * b.weight(i), b.mu1(i), b.var1(i));
  }

  for (int u = 0; u < 2; ++u) {
    const belief::Observation y{m.obs_x.nearest_index(19.0), 0};
    const auto ub = belief::update(m, blend, y, u, 0);
    const auto u1 = belief::update(m, s1, y, u, 0);
    const auto u2 = belief::update(m, s2, y, u, 0);
    for (int q = 0; q < 2; ++q) {
      for (int p = 0; p <= 50; ++p) {
        const double x = 16.0 + 7.5 * p / 50.0;
        const double lhs = ub.mixture.mode(q).eval1(x);
        const double rhs =
            lam * u1.mixture.mode(q).eval1(x) + (1.0 - lam) * u2.mixture.mode(q).eval1(x);
        CHECK(std::abs(lhs - rhs) <= 1e-9);
      }
    }
  }
}

TEST_CASE("mass decays on average across observations") {
  const auto m = thermostat();
  const double nyx = static_cast<double>(m.n_yx());
  auto s = belief::init_gaussian(m, 19.75, 0.1, 0);
  for (int u = 0; u < 2; ++u) {
    double avg = 0.0;
    for (int y = 0; y < m.n_yx(); ++y)
      avg += belief::update(m, s, {y, 0}, u, 0).total_mass() / nyx;
    CHECK(avg <= s.total_mass() * 1.05);
  }
  // again from a partially decayed statistic
  s = belief::update(m, s, {m.obs_x.nearest_index(19.5), 0}, 0, 20);
  REQUIRE(s.total_mass() > 0.1);
  double avg = 0.0;
  for (int y = 0; y < m.n_yx(); ++y)
    avg += belief::update(m, s, {y, 0}, 0, 0).total_mass() / nyx;
  CHECK(avg <= s.total_mass() * 1.05);
}

TEST_CASE("reduction caps per-mode component counts without losing mass") {
  const auto m = thermostat();
  const auto s0 = belief::init_gaussian(m, 19.75, 0.1, 0);
  const belief::Observation y{m.obs_x.nearest_index(19.5), 0};
  const auto full = belief::update(m, s0, y, 0, 0);
  const auto red = belief::update(m, s0, y, 0, 8);
  CHECK(red.mixture.mode(0).size() <= 8);
  CHECK(red.mixture.mode(1).size() <= 8);
  CHECK(red.total_mass() == Approx(full.total_mass()).epsilon(1e-9));
}

TEST_CASE("safety mass integrates the exact safe region") {
  const auto m = thermostat();
  const auto s = belief::init_gaussian(m, 19.75, 0.1, 0);
  CHECK(belief::safety_mass(m, s) == Approx(1.0).epsilon(1e-9));

  // gate mode 1 out of the safe set and park the prior there
  std::string j = hsmodel::model_to_json(m);
  const std::string find = "\"modes\":[0,1]";
  const auto p = j.find(find);
  REQUIRE(p != std::string::npos);
  j.replace(p, find.size(), "\"modes\":[0]");
  const auto gated = hsmodel::load_model_json(j, "mem");
  const auto s1 = belief::init_gaussian(gated, 19.75, 0.1, 1);
  CHECK(belief::safety_mass(gated, s1) == 0.0);
  // all its mass sits outside the safe modes, so one step starves it
  const auto dead = belief::update(gated, s1, {11, 0}, 0, 20);
  CHECK(dead.dead);
  CHECK(dead.total_mass() == 0.0);
}

TEST_CASE("safety mass stays within the total mass after updates") {
  const auto m = thermostat();
  Rng rng(77001);
  for (int trial = 0; trial < 100; ++trial) {
    const double mu0 = rng.uniform(17.0, 22.5);
    const double s2 = rng.uniform(0.01, 0.5);
    const int q0 = static_cast<int>(rng.below(2));
    const auto s = belief::init_gaussian(m, mu0, s2, q0);
    const belief::Observation y{static_cast<int>(rng.below(31)), 0};
    const int u = static_cast<int>(rng.below(2));
    const auto out = belief::update(m, s, y, u, 8);
    const double sm = belief::safety_mass(m, out);
    CHECK(sm >= 0.0);
    CHECK(sm <= out.total_mass() * (1.0 + 1e-12) + 1e-15);
  }
}

TEST_CASE("hostile observations starve the statistic") {
  const auto m = thermostat();
  auto s = belief::init_gaussian(m, 19.75, 0.1, 0);
  const belief::Observation far{m.obs_x.nearest_index(16.0), 0};
  int steps = 0;
  while (!s.dead && steps < 50) {
    s = belief::update(m, s, far, 0, 20);
    ++steps;
  }
  CHECK(s.dead);
  CHECK(belief::is_dead(s));
  CHECK(steps <= 50);
}

TEST_CASE("dead detection thresholds on total mass") {
  const auto m = thermostat();
  belief::SufficientStatistic z;
  z.mixture = gmix::HybridMixture(2, 1);
  CHECK(belief::is_dead(z));
  const auto s = belief::init_gaussian(m, 19.0, 0.1, 0);
  CHECK_FALSE(belief::is_dead(s));
  CHECK(belief::is_dead(s, 2.0));
}

TEST_CASE("belief csv layout") {
  const auto m = thermostat();
  const auto s = belief::init_gaussian(m, 19.75, 0.1, 0);
  std::ostringstream os;
  belief::write_belief_csv(os, s);
  const std::string text = os.str();
  CHECK(text == "mode,weight,mean0,cov00\r\n0,1,19.75,0.10000000000000001\r\n");

  const auto stepped = belief::update(m, s, {11, 0}, 0, 5);
  std::ostringstream os2;
  belief::write_belief_csv(os2, stepped);
  const std::string t2 = os2.str();
  std::size_t lines = 0;
  for (std::size_t p = t2.find("\r\n"); p != std::string::npos; p = t2.find("\r\n", p + 2))
    ++lines;
  CHECK(lines == 1 + static_cast<std::size_t>(stepped.mixture.component_count()));
}
