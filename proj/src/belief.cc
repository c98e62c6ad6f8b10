#include "podreach/belief.hpp"

#include <cmath>
#include <vector>

#include "podreach/kernels.hpp"

namespace podreach::belief {

SufficientStatistic init(const gmix::HybridMixture& rho, std::optional<int> q0) {
  const double mass = rho.total_weight();
  if (std::abs(mass - 1.0) > 1e-6)
    throw NumericError("init: prior mass " + std::to_string(mass) + " not within 1e-6 of 1");
  SufficientStatistic s;
  if (!q0.has_value()) {
    s.mixture = rho;
    return s;
  }
  const int q = *q0;
  if (q < 0 || q >= rho.n_modes()) throw std::invalid_argument("init: q0 out of range");
  s.mixture = gmix::HybridMixture(rho.n_modes(), rho.dim());
  gmix::Mixture& dst = s.mixture.mode(q);
  for (int qq = 0; qq < rho.n_modes(); ++qq) {
    const gmix::Mixture& src = rho.mode(qq);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (rho.dim() == 1)
        dst.add1(src.weight(i), src.mu1(i), src.var1(i));
      else
        dst.add_unchecked(src.weight(i), src.mean(i), src.cov(i));
    }
  }
  return s;
}

SufficientStatistic init_gaussian(const hsmodel::HybridModel& model, double mu0, double s2,
                                  int q0) {
  gmix::HybridMixture rho(model.n_modes, 1);
  rho.mode(q0).add1(1.0, mu0, s2);
  return init(rho, q0);
}

SufficientStatistic update(const hsmodel::HybridModel& model, const SufficientStatistic& sigma,
                           Observation y, int u, int reduce_to) {
  if (model.n != 1) throw NumericError("update: closed-form update requires a 1-D model");
  if (u < 0 || u >= model.n_actions) throw std::invalid_argument("update: action out of range");
  if (y.yx < 0 || y.yx >= model.n_yx())
    throw std::invalid_argument("update: observation index out of range");
  if (!model.perfect_mode_observation && (y.yq < 0 || y.yq >= model.n_yq))
    throw std::invalid_argument("update: mode observation out of range");

  const int nq = model.n_modes;
  SufficientStatistic out;
  out.mixture = gmix::HybridMixture(nq, 1);
  out.time_index = sigma.time_index + 1;

  const double in_mass = sigma.total_mass();
  if (sigma.mixture.component_count() == 0 || in_mass == 0.0) {
    out.dead = true;
    return out;
  }

  const hsmodel::DiscretizedObservation& obs = model.obs_x;
  const int hh = obs.n_sub;
  const double w2 = obs.noise_var;
  const auto nyx = static_cast<double>(model.n_yx());
  std::vector<double> lik_mu(static_cast<std::size_t>(hh));
  std::vector<double> lik_var(static_cast<std::size_t>(hh), w2);
  std::vector<double> lik_w(static_cast<std::size_t>(hh), obs.sub_delta);
  for (int h = 0; h < hh; ++h) lik_mu[static_cast<std::size_t>(h)] = obs.mu_h(y.yx, h);
  std::vector<double> coef(static_cast<std::size_t>(hh));
  std::vector<double> wli;

  for (int qn = 0; qn < nq; ++qn) {
    gmix::Mixture& dst = out.mixture.mode(qn);
    const auto su = static_cast<std::size_t>(u);
    const auto sq = static_cast<std::size_t>(qn);
    const double a = model.A(0, 0);
    const double fv = model.f[su][sq][0];
    const double wv = model.W[su][sq](0, 0);
    const double mode_factor =
        model.perfect_mode_observation
            ? 1.0
            : static_cast<double>(model.n_yq) * model.Qobs[su](qn, y.yq);
    if (mode_factor == 0.0) continue;
    for (int q = 0; q < nq; ++q) {
      const gmix::Mixture& ind = model.indicator.mixture.mode(q);
      if (ind.empty()) continue;  // q outside K_q: indicator is zero
      const double tq = model.Tq[su](q, qn);
      const double scale0 = nyx * mode_factor * tq;
      if (scale0 == 0.0) continue;
      const gmix::Mixture& sig = sigma.mixture.mode(q);
      wli.resize(ind.size());
      for (std::size_t l = 0; l < sig.size(); ++l) {
        const double wl = sig.weight(l);
        const double ml = sig.mu1(l);
        const double vl = sig.var1(l);
        // w_l w_i phi(mu_l; mu_i, S_l + S_i) over indicator components
        kern::gauss_pdf_v(ml, vl, ind.w_data(), ind.mu_data(), ind.var_data(), wli.data(),
                          ind.size());
        for (std::size_t i = 0; i < ind.size(); ++i) {
          const double w_li = wl * wli[i];
          const double vi = ind.var1(i);
          const double mi = ind.mu1(i);
          const double vsum = vl + vi;
          const double hat_mu = (ml * vi + mi * vl) / vsum;
          const double hat_var = vl * vi / vsum;
          const double m = a * hat_mu + fv;
          const double s = a * a * hat_var + wv;
          // likelihood product over the observation's components
          kern::gauss_pdf_v(m, s, lik_w.data(), lik_mu.data(), lik_var.data(), coef.data(),
                            static_cast<std::size_t>(hh));
          const double denom = s + w2;
          const double post_var = s * w2 / denom;
          for (int h = 0; h < hh; ++h) {
            const auto sh = static_cast<std::size_t>(h);
            const double post_mean = (lik_mu[sh] * s + m * w2) / denom;
            dst.add1(scale0 * w_li * coef[sh], post_mean, post_var);
          }
        }
      }
    }
  }

  if (reduce_to > 0) {
    // the observation-likelihood split adds no spatial resolution worth
    // keeping ahead of the reducer: collapse each h-run first
    for (int qn = 0; qn < nq; ++qn)
      out.mixture.mode(qn) = gmix::merge_consecutive(out.mixture.mode(qn), hh);
    out.mixture = gmix::prune(out.mixture, kPruneRelTol);
    out.mixture = gmix::reduce(out.mixture, reduce_to);
  }

  // weights >= -1e-12, clipped to zero
  gmix::HybridMixture clipped(nq, 1);
  for (int qn = 0; qn < nq; ++qn) {
    const gmix::Mixture& src = out.mixture.mode(qn);
    gmix::Mixture& dst = clipped.mode(qn);
    dst.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double w = src.weight(i);
      if (w < -1e-12) throw NumericError("update: negative component weight");
      if (w <= 0.0) continue;
      dst.add1(w, src.mu1(i), src.var1(i));
    }
  }
  out.mixture = std::move(clipped);

  const double out_mass = out.total_mass();
  if (!std::isfinite(out_mass)) throw NumericError("update: non-finite mass");
  out.dead = out_mass < kDeadThreshold;
  return out;
}

double safety_mass(const hsmodel::HybridModel& model, const SufficientStatistic& sigma) {
  return gmix::interval_mass(sigma.mixture, model.safe.box, model.safe.modes);
}

bool is_dead(const SufficientStatistic& sigma, double threshold) {
  return sigma.total_mass() < threshold;
}

void write_belief_csv(std::ostream& os, const SufficientStatistic& sigma) {
  const int dim = sigma.mixture.dim();
  os << "mode,weight";
  for (int d = 0; d < dim; ++d) os << ",mean" << d;
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) os << ",cov" << r << c;
  os << "\r\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << ',' << buf;
  };
  for (int q = 0; q < sigma.mixture.n_modes(); ++q) {
    const gmix::Mixture& m = sigma.mixture.mode(q);
    for (std::size_t i = 0; i < m.size(); ++i) {
      os << q;
      put(m.weight(i));
      for (int d = 0; d < dim; ++d) put(m.mean(i)[d]);
      for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) put(m.cov(i)(r, c));
      os << "\r\n";
    }
  }
}

}  // namespace podreach::belief
