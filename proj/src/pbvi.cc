#include "podreach/pbvi.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "podreach/kernels.hpp"
#include "podreach/parallel.hpp"
#include "podreach/rng.hpp"

namespace podreach::pbvi {

namespace {

using nlohmann::json;

std::vector<belief::Observation> enumerate_observations(const hsmodel::HybridModel& model) {
  const int nyq = model.perfect_mode_observation ? 1 : model.n_yq;
  std::vector<belief::Observation> ys;
  ys.reserve(static_cast<std::size_t>(model.n_yx()) * static_cast<std::size_t>(nyq));
  for (int yx = 0; yx < model.n_yx(); ++yx)
    for (int yq = 0; yq < nyq; ++yq) ys.push_back(belief::Observation{yx, yq});
  return ys;
}

// All backed-up pieces for one sweep: alpha(u, y, i) with i indexing the
// next-stage set.
struct SweepMemo {
  std::vector<belief::Observation> ys;
  std::vector<gmix::HybridMixture> alphas;
  int n_actions = 0;
  int n_next = 0;

  const gmix::HybridMixture& at(int u, int y, int i) const {
    const auto idx =
        (static_cast<std::size_t>(u) * ys.size() + static_cast<std::size_t>(y)) *
            static_cast<std::size_t>(n_next) +
        static_cast<std::size_t>(i);
    return alphas[idx];
  }
};

SweepMemo build_sweep(const hsmodel::HybridModel& model,
                      const std::vector<AlphaFunction>& gamma_next, int reduce_to, int threads) {
  SweepMemo memo;
  memo.ys = enumerate_observations(model);
  memo.n_actions = model.n_actions;
  memo.n_next = static_cast<int>(gamma_next.size());
  const std::size_t total =
      static_cast<std::size_t>(memo.n_actions) * memo.ys.size() * gamma_next.size();
  memo.alphas.assign(total, gmix::HybridMixture(model.n_modes, 1));
  const std::size_t ny = memo.ys.size();
  const std::size_t ni = gamma_next.size();
  parallel_for(total, threads, [&](std::size_t k) {
    const int i = static_cast<int>(k % ni);
    const int y = static_cast<int>((k / ni) % ny);
    const int u = static_cast<int>(k / (ni * ny));
    memo.alphas[k] = backup_alpha_yu(model, gamma_next[static_cast<std::size_t>(i)], memo.ys[y],
                                     u, reduce_to);
  });
  return memo;
}

struct Selection {
  int action = 0;
  std::vector<int> pick;  // winning next-stage piece per observation
  double value = 0.0;
};

Selection select_for(const SweepMemo& memo, const gmix::HybridMixture& sigma) {
  Selection best;
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<int> pick(memo.ys.size(), 0);
  for (int u = 0; u < memo.n_actions; ++u) {
    double total = 0.0;
    for (std::size_t y = 0; y < memo.ys.size(); ++y) {
      double bv = -std::numeric_limits<double>::infinity();
      int bi = 0;
      for (int i = 0; i < memo.n_next; ++i) {
        const double v = gmix::inner_product(memo.at(u, static_cast<int>(y), i), sigma);
        if (v > bv) {
          bv = v;
          bi = i;
        }
      }
      total += bv;
      pick[y] = bi;
    }
    if (total > best_val) {
      best_val = total;
      best.action = u;
      best.pick = pick;
      best.value = total;
    }
  }
  return best;
}

AlphaFunction assemble(const SweepMemo& memo, const Selection& sel, int n_modes, int reduce_to,
                       int t) {
  gmix::HybridMixture mix(n_modes, 1);
  for (std::size_t y = 0; y < memo.ys.size(); ++y) {
    const gmix::HybridMixture& part = memo.at(sel.action, static_cast<int>(y), sel.pick[y]);
    for (int q = 0; q < n_modes; ++q) {
      const gmix::Mixture& src = part.mode(q);
      gmix::Mixture& dst = mix.mode(q);
      dst.reserve(dst.size() + src.size());
      for (std::size_t c = 0; c < src.size(); ++c) dst.add1(src.weight(c), src.mu1(c), src.var1(c));
    }
  }
  if (reduce_to > 0) {
    mix = gmix::prune(mix, belief::kPruneRelTol);
    mix = gmix::reduce(mix, reduce_to);
  }
  return AlphaFunction{std::move(mix), sel.action, t};
}

// Multiset comparison to 1e-12 after sorting components lexicographically.
bool same_alpha(const AlphaFunction& a, const AlphaFunction& b) {
  constexpr double kTol = 1e-12;
  if (a.action != b.action) return false;
  if (a.mixture.n_modes() != b.mixture.n_modes()) return false;
  for (int q = 0; q < a.mixture.n_modes(); ++q) {
    const gmix::Mixture& ma = a.mixture.mode(q);
    const gmix::Mixture& mb = b.mixture.mode(q);
    if (ma.size() != mb.size()) return false;
    auto sorted = [](const gmix::Mixture& m) {
      std::vector<std::array<double, 3>> v;
      v.reserve(m.size());
      for (std::size_t i = 0; i < m.size(); ++i)
        v.push_back({m.mu1(i), m.var1(i), m.weight(i)});
      std::sort(v.begin(), v.end());
      return v;
    };
    const auto va = sorted(ma);
    const auto vb = sorted(mb);
    for (std::size_t i = 0; i < va.size(); ++i)
      for (int k = 0; k < 3; ++k)
        if (std::abs(va[i][k] - vb[i][k]) > kTol) return false;
  }
  return true;
}

// Importance-sampled L1 distance between two scalar hybrid mixtures using
// the normalized absolute-weight union as the proposal.
double l1_estimate(const gmix::HybridMixture& a, const gmix::HybridMixture& b, Rng& rng,
                   int n_samples) {
  const int nq = a.n_modes();
  // per-mode packed union arrays for the proposal density
  std::vector<std::vector<double>> uw(nq), umu(nq), uvar(nq);
  struct Comp {
    int q;
    double w, mu, sd;
  };
  std::vector<Comp> comps;
  double total = 0.0;
  for (int q = 0; q < nq; ++q) {
    for (const gmix::HybridMixture* m : {&a, &b}) {
      const gmix::Mixture& mix = m->mode(q);
      for (std::size_t i = 0; i < mix.size(); ++i) {
        const double w = std::abs(mix.weight(i));
        uw[static_cast<std::size_t>(q)].push_back(w);
        umu[static_cast<std::size_t>(q)].push_back(mix.mu1(i));
        uvar[static_cast<std::size_t>(q)].push_back(mix.var1(i));
        comps.push_back(Comp{q, w, mix.mu1(i), std::sqrt(mix.var1(i))});
        total += w;
      }
    }
  }
  if (!(total > 0.0)) return 0.0;
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    double r = rng.uniform01() * total;
    std::size_t idx = 0;
    while (idx + 1 < comps.size() && r >= comps[idx].w) {
      r -= comps[idx].w;
      ++idx;
    }
    const Comp& c = comps[idx];
    const double x = c.mu + c.sd * rng.gauss();
    const auto sq = static_cast<std::size_t>(c.q);
    const double den = kern::gauss_pdf_dot(x, 0.0, uw[sq].data(), umu[sq].data(), uvar[sq].data(),
                                           uw[sq].size()) /
                       total;
    if (!(den > 0.0)) continue;
    acc += std::abs(a.eval1(x, c.q) - b.eval1(x, c.q)) / den;
  }
  return acc / static_cast<double>(n_samples);
}

json mixture_to_json(const gmix::HybridMixture& m) {
  json modes = json::array();
  for (int q = 0; q < m.n_modes(); ++q) {
    const gmix::Mixture& mix = m.mode(q);
    json comps = json::array();
    for (std::size_t i = 0; i < mix.size(); ++i) {
      json comp;
      comp["w"] = mix.weight(i);
      json mean = json::array();
      for (int d = 0; d < m.dim(); ++d) mean.push_back(mix.mean(i)(d));
      comp["mean"] = std::move(mean);
      json cov = json::array();
      for (int r = 0; r < m.dim(); ++r) {
        json row = json::array();
        for (int cidx = 0; cidx < m.dim(); ++cidx) row.push_back(mix.cov(i)(r, cidx));
        cov.push_back(std::move(row));
      }
      comp["cov"] = std::move(cov);
      comps.push_back(std::move(comp));
    }
    modes.push_back(std::move(comps));
  }
  return modes;
}

gmix::HybridMixture mixture_from_json(const json& modes, int dim, const std::string& origin) {
  if (!modes.is_array() || modes.empty())
    throw DataError(origin + ": modes must be a non-empty array");
  gmix::HybridMixture m(static_cast<int>(modes.size()), dim);
  for (std::size_t q = 0; q < modes.size(); ++q) {
    const json& comps = modes[q];
    if (!comps.is_array()) throw DataError(origin + ": mode entry must be an array");
    for (const json& comp : comps) {
      const double w = comp.at("w").get<double>();
      const json& jmean = comp.at("mean");
      const json& jcov = comp.at("cov");
      if (static_cast<int>(jmean.size()) != dim || static_cast<int>(jcov.size()) != dim)
        throw DataError(origin + ": component dimension mismatch");
      if (!std::isfinite(w)) throw DataError(origin + ": non-finite weight");
      if (dim == 1) {
        const double mu = jmean[0].get<double>();
        const double var = jcov[0][0].get<double>();
        if (!std::isfinite(mu) || !std::isfinite(var) || !(var > gmix::kEpsPd))
          throw DataError(origin + ": invalid component");
        m.mode(static_cast<int>(q)).add1(w, mu, var);
      } else {
        Eigen::VectorXd mu(dim);
        Eigen::MatrixXd cov(dim, dim);
        for (int d = 0; d < dim; ++d) mu(d) = jmean[static_cast<std::size_t>(d)].get<double>();
        for (int r = 0; r < dim; ++r) {
          const json& row = jcov[static_cast<std::size_t>(r)];
          if (static_cast<int>(row.size()) != dim)
            throw DataError(origin + ": covariance row size mismatch");
          for (int cidx = 0; cidx < dim; ++cidx)
            cov(r, cidx) = row[static_cast<std::size_t>(cidx)].get<double>();
        }
        if (!mu.allFinite() || !cov.allFinite())
          throw DataError(origin + ": non-finite component");
        m.mode(static_cast<int>(q)).add(w, mu, cov);
      }
    }
  }
  return m;
}

}  // namespace

const std::vector<AlphaFunction>& PolicyStack::gamma(int t) const {
  if (t < 0 || t >= static_cast<int>(gammas.size()))
    throw std::out_of_range("PolicyStack::gamma: stage out of range");
  return gammas[static_cast<std::size_t>(t)];
}

AlphaFunction terminal_alpha(const hsmodel::HybridModel& model, int horizon) {
  return AlphaFunction{model.indicator.mixture, -1, horizon};
}

std::vector<belief::SufficientStatistic> sample_belief_set(const hsmodel::HybridModel& model,
                                                           int count, int horizon,
                                                           std::uint64_t seed, int reduce_to) {
  if (model.n != 1) throw std::invalid_argument("sample_belief_set: scalar models only");
  if (count < 1) throw std::invalid_argument("sample_belief_set: count must be positive");
  if (horizon < 0) throw std::invalid_argument("sample_belief_set: horizon must be non-negative");
  Rng rng = Rng::substream(seed, 0);
  const double lo = model.safe.box.lo(0);
  const double hi = model.safe.box.hi(0);
  auto fresh = [&] { return belief::init_gaussian(model, rng.uniform(lo, hi), kSampleVar, 0); };

  std::vector<belief::SufficientStatistic> pool;
  while (pool.size() < static_cast<std::size_t>(count)) {
    belief::SufficientStatistic sigma = fresh();
    pool.push_back(sigma);
    for (int step = 0; step < horizon; ++step) {
      belief::Observation y;
      const int u = rng.below(model.n_actions);
      y.yx = rng.below(model.n_yx());
      y.yq = model.perfect_mode_observation ? 0 : rng.below(model.n_yq);
      sigma = belief::update(model, sigma, y, u, reduce_to);
      if (belief::is_dead(sigma)) sigma = fresh();
      pool.push_back(sigma);
    }
  }
  if (pool.size() == static_cast<std::size_t>(count)) return pool;
  std::vector<belief::SufficientStatistic> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k)
    out.push_back(pool[(static_cast<std::size_t>(k) * pool.size()) /
                       static_cast<std::size_t>(count)]);
  return out;
}

gmix::HybridMixture backup_alpha_yu(const hsmodel::HybridModel& model,
                                    const AlphaFunction& alpha_next, belief::Observation y, int u,
                                    int reduce_to) {
  if (model.n != 1) throw std::invalid_argument("backup_alpha_yu: scalar models only");
  if (u < 0 || u >= model.n_actions)
    throw std::invalid_argument("backup_alpha_yu: action out of range");
  if (y.yx < 0 || y.yx >= model.n_yx())
    throw std::invalid_argument("backup_alpha_yu: observation out of range");
  if (!model.perfect_mode_observation && (y.yq < 0 || y.yq >= model.n_yq))
    throw std::invalid_argument("backup_alpha_yu: mode observation out of range");
  if (alpha_next.mixture.n_modes() != model.n_modes)
    throw std::invalid_argument("backup_alpha_yu: mode count mismatch");

  const int nq = model.n_modes;
  const auto& obs = model.obs_x;
  const int hh = obs.n_sub;
  const double w2 = obs.noise_var;
  std::vector<double> lik_mu(static_cast<std::size_t>(hh));
  std::vector<double> lik_w(static_cast<std::size_t>(hh), obs.sub_delta);
  std::vector<double> lik_var(static_cast<std::size_t>(hh), w2);
  for (int h = 0; h < hh; ++h)
    lik_mu[static_cast<std::size_t>(h)] = obs.mu_h(y.yx, h);

  gmix::HybridMixture out(nq, 1);
  std::vector<double> lw(static_cast<std::size_t>(hh));
  for (int q = 0; q < nq; ++q) {
    const gmix::Mixture& ind = model.indicator.mixture.mode(q);
    if (ind.empty()) continue;

    // expected next-stage piece pulled back to the current state; components
    // appear in runs of hh sharing a variance
    gmix::Mixture acc(1);
    for (int qn = 0; qn < nq; ++qn) {
      const double tq = model.Tq[static_cast<std::size_t>(u)](q, qn);
      const double mode_factor = model.perfect_mode_observation
                                     ? 1.0
                                     : model.Qobs[static_cast<std::size_t>(u)](qn, y.yq);
      const double scale0 = tq * mode_factor;
      if (scale0 == 0.0) continue;
      const gmix::Mixture& am = alpha_next.mixture.mode(qn);
      if (am.empty()) continue;
      const double a = model.A(0, 0);
      const double fv = model.f[static_cast<std::size_t>(u)][static_cast<std::size_t>(qn)](0);
      const double wv =
          model.W[static_cast<std::size_t>(u)][static_cast<std::size_t>(qn)](0, 0);
      const double abs_a = std::abs(a);
      acc.reserve(acc.size() + am.size() * static_cast<std::size_t>(hh));
      for (std::size_t l = 0; l < am.size(); ++l) {
        const double ml = am.mu1(l);
        const double vl = am.var1(l);
        // delta_H phi(mu_h; mu_l, var_l + w2) per likelihood component
        kern::gauss_pdf_v(ml, vl, lik_w.data(), lik_mu.data(), lik_var.data(), lw.data(),
                          static_cast<std::size_t>(hh));
        const double denom = w2 + vl;
        const double s = w2 * vl / denom;
        const double pull_var = (s + wv) / (a * a);
        const double wl_scale = scale0 * am.weight(l) / abs_a;
        for (int h = 0; h < hh; ++h) {
          const auto sh = static_cast<std::size_t>(h);
          const double m = (lik_mu[sh] * vl + ml * w2) / denom;
          acc.add1(wl_scale * lw[sh], (m - fv) / a, pull_var);
        }
      }
    }
    if (reduce_to > 0) acc = gmix::merge_consecutive(acc, hh);

    // multiply by the fitted indicator of the current mode
    gmix::Mixture& dst = out.mode(q);
    dst.reserve(acc.size() * ind.size());
    std::vector<double> wc(ind.size());
    for (std::size_t c = 0; c < acc.size(); ++c) {
      const double mc = acc.mu1(c);
      const double vc = acc.var1(c);
      kern::gauss_pdf_v(mc, vc, ind.w_data(), ind.mu_data(), ind.var_data(), wc.data(),
                        ind.size());
      for (std::size_t i = 0; i < ind.size(); ++i) {
        const double vi = ind.var1(i);
        const double vsum = vc + vi;
        dst.add1(acc.weight(c) * wc[i], (mc * vi + ind.mu1(i) * vc) / vsum, vc * vi / vsum);
      }
    }
  }

  if (reduce_to > 0) {
    out = gmix::prune(out, belief::kPruneRelTol);
    out = gmix::reduce(out, reduce_to);
  }
  return out;
}

AlphaFunction point_backup(const hsmodel::HybridModel& model,
                           const belief::SufficientStatistic& sigma,
                           const std::vector<AlphaFunction>& gamma_next, int reduce_to) {
  if (gamma_next.empty()) throw std::invalid_argument("point_backup: empty next-stage set");
  const SweepMemo memo = build_sweep(model, gamma_next, reduce_to, 1);
  const Selection sel = select_for(memo, sigma.mixture);
  const int t = gamma_next.front().time_index - 1;
  return assemble(memo, sel, model.n_modes, reduce_to, t);
}

PolicyStack solve(const hsmodel::HybridModel& model,
                  const std::vector<belief::SufficientStatistic>& belief_set, int horizon,
                  int reduce_to, int threads) {
  if (model.n != 1) throw std::invalid_argument("solve: scalar models only");
  if (horizon < 1) throw std::invalid_argument("solve: horizon must be positive");
  if (belief_set.empty()) throw std::invalid_argument("solve: empty belief set");

  PolicyStack stack;
  stack.horizon = horizon;
  stack.belief_count = static_cast<int>(belief_set.size());
  stack.reduce_to = reduce_to;
  stack.model_hash = hsmodel::model_hash(model);
  stack.gammas.assign(static_cast<std::size_t>(horizon) + 1, {});
  stack.gammas[static_cast<std::size_t>(horizon)].push_back(terminal_alpha(model, horizon));

  for (int t = horizon - 1; t >= 0; --t) {
    const SweepMemo memo =
        build_sweep(model, stack.gammas[static_cast<std::size_t>(t) + 1], reduce_to, threads);
    std::vector<Selection> sels(belief_set.size());
    parallel_for(belief_set.size(), threads,
                 [&](std::size_t k) { sels[k] = select_for(memo, belief_set[k].mixture); });

    std::vector<AlphaFunction>& gamma = stack.gammas[static_cast<std::size_t>(t)];
    std::set<std::pair<int, std::vector<int>>> seen;
    for (const Selection& sel : sels) {
      if (!seen.insert({sel.action, sel.pick}).second) continue;
      AlphaFunction cand = assemble(memo, sel, model.n_modes, reduce_to, t);
      bool dup = false;
      for (const AlphaFunction& g : gamma) {
        if (same_alpha(cand, g)) {
          dup = true;
          break;
        }
      }
      if (!dup) gamma.push_back(std::move(cand));
    }
  }
  return stack;
}

ValueResult value(const PolicyStack& stack, const belief::SufficientStatistic& sigma, int t) {
  if (stack.gammas.empty()) throw std::invalid_argument("value: empty policy");
  if (t < 0 || t > stack.horizon) throw std::out_of_range("value: stage out of range");
  const std::vector<AlphaFunction>& gamma = stack.gammas[static_cast<std::size_t>(t)];
  if (gamma.empty()) throw DataError("value: empty alpha set at requested stage");
  double best = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double v = gmix::inner_product(gamma[i].mixture, sigma.mixture);
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  ValueResult res;
  res.raw = best;
  res.value = std::min(1.0, std::max(0.0, best));
  res.action = gamma[arg].action;
  return res;
}

double delta_diagnostic(const std::vector<belief::SufficientStatistic>& belief_set,
                        const std::vector<belief::SufficientStatistic>& probe_set,
                        std::uint64_t seed) {
  if (belief_set.empty()) throw std::invalid_argument("delta_diagnostic: empty belief set");
  if (probe_set.empty()) throw std::invalid_argument("delta_diagnostic: empty probe set");
  constexpr int kSamples = 2000;
  Rng rng = Rng::substream(seed, 1);
  double worst = 0.0;
  for (const belief::SufficientStatistic& probe : probe_set) {
    double best = std::numeric_limits<double>::infinity();
    for (const belief::SufficientStatistic& b : belief_set)
      best = std::min(best, l1_estimate(probe.mixture, b.mixture, rng, kSamples));
    worst = std::max(worst, best);
  }
  return worst;
}

std::string policy_to_json(const PolicyStack& stack) {
  json j;
  j["format"] = "podreach-policy";
  j["version"] = 1;
  j["horizon"] = stack.horizon;
  j["belief_count"] = stack.belief_count;
  j["reduce_to"] = stack.reduce_to;
  j["seed"] = stack.seed;
  j["model_hash"] = stack.model_hash;
  json gs = json::array();
  for (const auto& gamma : stack.gammas) {
    json ga = json::array();
    for (const AlphaFunction& alpha : gamma) {
      json a;
      a["action"] = alpha.action;
      a["time_index"] = alpha.time_index;
      a["modes"] = mixture_to_json(alpha.mixture);
      ga.push_back(std::move(a));
    }
    gs.push_back(std::move(ga));
  }
  j["gammas"] = std::move(gs);
  return j.dump();
}

PolicyStack policy_from_json(const std::string& text, const std::string& origin) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError(origin + ": not valid JSON");
  try {
    if (j.at("format").get<std::string>() != "podreach-policy")
      throw DataError(origin + ": not a policy file");
    if (j.at("version").get<int>() != 1)
      throw DataError(origin + ": unsupported policy version");
    PolicyStack stack;
    stack.horizon = j.at("horizon").get<int>();
    stack.belief_count = j.at("belief_count").get<int>();
    stack.reduce_to = j.at("reduce_to").get<int>();
    stack.seed = j.at("seed").get<std::uint64_t>();
    stack.model_hash = j.at("model_hash").get<std::string>();
    const json& gs = j.at("gammas");
    if (!gs.is_array() || static_cast<int>(gs.size()) != stack.horizon + 1)
      throw DataError(origin + ": gamma stage count does not match horizon");
    if (stack.horizon < 1) throw DataError(origin + ": horizon must be positive");
    stack.gammas.reserve(gs.size());
    for (const json& ga : gs) {
      if (!ga.is_array() || ga.empty())
        throw DataError(origin + ": each stage needs at least one alpha function");
      std::vector<AlphaFunction> gamma;
      gamma.reserve(ga.size());
      for (const json& a : ga) {
        AlphaFunction alpha;
        alpha.action = a.at("action").get<int>();
        alpha.time_index = a.at("time_index").get<int>();
        const json& modes = a.at("modes");
        int dim = 1;
        for (const json& comps : modes)
          if (comps.is_array() && !comps.empty()) {
            dim = static_cast<int>(comps[0].at("mean").size());
            break;
          }
        alpha.mixture = mixture_from_json(modes, dim, origin);
        gamma.push_back(std::move(alpha));
      }
      stack.gammas.push_back(std::move(gamma));
    }
    return stack;
  } catch (const json::exception& e) {
    throw DataError(origin + ": " + e.what());
  } catch (const NumericError& e) {
    throw DataError(origin + ": " + e.what());
  }
}

void save_policy_file(const PolicyStack& stack, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(path + ": cannot open for writing");
  os << policy_to_json(stack) << '\n';
  if (!os) throw DataError(path + ": write failed");
}

PolicyStack load_policy_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path + ": cannot open");
  std::ostringstream ss;
  ss << is.rdbuf();
  return policy_from_json(ss.str(), path);
}

}  // namespace podreach::pbvi
