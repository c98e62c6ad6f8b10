#include "podreach/hsmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "podreach/kernels.hpp"

namespace podreach::hsmodel {

using nlohmann::json;

namespace {
constexpr double kPiValue = 3.141592653589793238462643383279502884;
}

gmix::Mixture DiscretizedObservation::likelihood(int yi) const {
  gmix::Mixture m(1);
  m.reserve(static_cast<std::size_t>(n_sub));
  for (int h = 0; h < n_sub; ++h) m.add1(sub_delta, mu_h(yi, h), noise_var);
  return m;
}

double DiscretizedObservation::likelihood_at(int yi, double x) const {
  double s = 0.0;
  for (int h = 0; h < n_sub; ++h) {
    const double d = x - mu_h(yi, h);
    s += sub_delta * std::exp(((d * d) * -0.5) / noise_var) /
         std::sqrt(noise_var * 2.0 * kPiValue);
  }
  return s;
}

int DiscretizedObservation::nearest_index(double y) const {
  const double pos = (y - grid.front()) / delta;
  const auto i = static_cast<long>(std::lround(pos));
  return static_cast<int>(std::clamp<long>(i, 0, static_cast<long>(grid.size()) - 1));
}

bool SafeSet::contains_mode(int q) const {
  return std::binary_search(modes.begin(), modes.end(), q);
}

bool SafeSet::contains(double x, int q) const {
  return contains_mode(q) && x >= box.lo[0] && x <= box.hi[0];
}

namespace {

void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void check_stochastic_rows(const Eigen::MatrixXd& m, const std::string& path) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
        fail(path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]",
             "probability outside [0,1]");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
      fail(path + "[" + std::to_string(r) + "]", "distribution does not sum to 1");
  }
}

}  // namespace

void HybridModel::validate() const {
  if (n < 1) fail("$.n", "must be >= 1");
  if (n_modes < 1) fail("$.n_modes", "must be >= 1");
  if (n_actions < 1) fail("$.n_actions", "must be >= 1");
  if (static_cast<int>(Tq.size()) != n_actions) fail("$.Tq", "expected one table per action");
  for (int u = 0; u < n_actions; ++u) {
    if (Tq[u].rows() != n_modes || Tq[u].cols() != n_modes)
      fail("$.Tq[" + std::to_string(u) + "]", "expected n_modes x n_modes");
    check_stochastic_rows(Tq[u], "$.Tq[" + std::to_string(u) + "]");
  }
  if (A.rows() != n || A.cols() != n) fail("$.A", "expected n x n");
  if (!(std::abs(Eigen::PartialPivLU<Eigen::MatrixXd>(A).determinant()) > gmix::kEpsPd))
    fail("$.A", "not invertible");
  if (static_cast<int>(f.size()) != n_actions || static_cast<int>(W.size()) != n_actions)
    fail("$.f", "expected one entry per action");
  for (int u = 0; u < n_actions; ++u) {
    if (static_cast<int>(f[u].size()) != n_modes || static_cast<int>(W[u].size()) != n_modes)
      fail("$.f[" + std::to_string(u) + "]", "expected one entry per target mode");
    for (int q = 0; q < n_modes; ++q) {
      const std::string p = "[" + std::to_string(u) + "][" + std::to_string(q) + "]";
      if (f[u][q].size() != n) fail("$.f" + p, "expected n-vector");
      if (W[u][q].rows() != n || W[u][q].cols() != n) fail("$.W" + p, "expected n x n");
      Eigen::LLT<Eigen::MatrixXd> llt(W[u][q]);
      if (llt.info() != Eigen::Success) fail("$.W" + p, "not positive definite");
    }
  }
  if (obs_x.size() < 3) fail("$.observation.grid", "grid too coarse (fewer than 3 values)");
  if (!(obs_x.delta > 0.0)) fail("$.observation.delta", "must be positive");
  if (!(obs_x.noise_var > 0.0)) fail("$.observation.noise_var", "must be positive");
  for (std::size_t i = 1; i < obs_x.grid.size(); ++i) {
    if (std::abs(obs_x.grid[i] - obs_x.grid[i - 1] - obs_x.delta) > 1e-9)
      fail("$.observation.grid[" + std::to_string(i) + "]", "not uniformly spaced by delta");
  }
  if (obs_x.n_sub < 1 ||
      std::abs(obs_x.n_sub * obs_x.sub_delta - obs_x.delta) > 1e-9)
    fail("$.observation.sub_delta", "must divide delta evenly");
  if (n_yq < 1) fail("$.mode_observation.n_yq", "must be >= 1");
  if (!perfect_mode_observation) {
    if (static_cast<int>(Qobs.size()) != n_actions)
      fail("$.mode_observation.Q", "expected one matrix per action");
    for (int u = 0; u < n_actions; ++u) {
      if (Qobs[u].rows() != n_modes || Qobs[u].cols() != n_yq)
        fail("$.mode_observation.Q[" + std::to_string(u) + "]", "expected n_modes x n_yq");
      check_stochastic_rows(Qobs[u], "$.mode_observation.Q[" + std::to_string(u) + "]");
    }
  }
  if (safe.box.lo.size() != n || safe.box.hi.size() != n)
    fail("$.safe_set", "box dimension must equal n");
  for (int d = 0; d < n; ++d)
    if (!(safe.box.lo[d] < safe.box.hi[d])) fail("$.safe_set", "empty box");
  if (safe.modes.empty()) fail("$.safe_set.modes", "must be nonempty");
  if (!std::is_sorted(safe.modes.begin(), safe.modes.end()))
    fail("$.safe_set.modes", "must be sorted ascending");
  for (int q : safe.modes)
    if (q < 0 || q >= n_modes) fail("$.safe_set.modes", "mode out of range");
  if (indicator_components < 1) fail("$.indicator.components", "must be >= 1");
  if (!(indicator_shrink > 0.0 && indicator_shrink <= 1.0))
    fail("$.indicator.shrink", "must be in (0, 1]");
}

void HybridModel::rebuild_indicator() {
  indicator = fit_indicator(safe.box, safe.modes, n_modes, indicator_components,
                            indicator_shrink);
}

HybridModel build_thermostat(const ThermostatParams& p) {
  if (!(p.v_std > 0.0 && p.w_std > 0.0 && p.delta > 0.0 && p.sub_delta > 0.0))
    throw ConfigError("$.thermostat: standard deviations and spacings must be positive");
  constexpr double b = 0.0167;
  constexpr double c = 0.8;
  constexpr double xa = 6.0;
  HybridModel m;
  m.n = 1;
  m.n_modes = 2;
  m.n_actions = 2;
  // command success probabilities, independent of the current mode
  Eigen::MatrixXd t_off(2, 2);
  t_off << p.p_off, 1.0 - p.p_off, p.p_off, 1.0 - p.p_off;
  Eigen::MatrixXd t_on(2, 2);
  t_on << 1.0 - p.p_on, p.p_on, 1.0 - p.p_on, p.p_on;
  m.Tq = {t_off, t_on};
  m.A = Eigen::MatrixXd::Constant(1, 1, 1.0 - b);
  m.f.assign(2, std::vector<Eigen::VectorXd>(2));
  m.W.assign(2, std::vector<Eigen::MatrixXd>(2));
  for (int u = 0; u < 2; ++u) {
    for (int qn = 0; qn < 2; ++qn) {
      m.f[u][qn] = Eigen::VectorXd::Constant(1, c * qn + b * xa);
      m.W[u][qn] = Eigen::MatrixXd::Constant(1, 1, p.v_std * p.v_std);
    }
  }
  const double klo = 17.5;
  const double khi = 22.0;
  // grid extension: tail z rounded up to a grid multiple plus one guard cell
  const double tol = p.delta * (std::ceil(kTailZ * p.w_std / p.delta) + 1.0);
  DiscretizedObservation obs;
  obs.delta = p.delta;
  obs.tol_lo = tol;
  obs.tol_hi = tol;
  obs.sub_delta = p.sub_delta;
  obs.noise_var = p.w_std * p.w_std;
  obs.n_sub = static_cast<int>(std::lround(p.delta / p.sub_delta));
  const double lo = klo - tol;
  const double hi = khi + tol;
  const int n_grid = static_cast<int>(std::lround((hi - lo) / p.delta)) + 1;
  if (n_grid < 3) throw ConfigError("$.observation.grid: grid too coarse (fewer than 3 values)");
  obs.grid.resize(static_cast<std::size_t>(n_grid));
  for (int i = 0; i < n_grid; ++i) obs.grid[static_cast<std::size_t>(i)] = lo + i * p.delta;
  m.obs_x = std::move(obs);
  m.perfect_mode_observation = true;
  m.n_yq = 2;
  m.Qobs = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  m.safe.box.lo = Eigen::VectorXd::Constant(1, klo);
  m.safe.box.hi = Eigen::VectorXd::Constant(1, khi);
  m.safe.modes = {0, 1};
  m.indicator_components = p.n_indicator;
  m.indicator_shrink = p.indicator_shrink;
  m.validate();
  m.rebuild_indicator();
  return m;
}

HybridModel build_thermostat(double v_std, double w_std, double delta, double sub_delta,
                             int n_indicator) {
  ThermostatParams p;
  p.v_std = v_std;
  p.w_std = w_std;
  p.delta = delta;
  p.sub_delta = sub_delta;
  p.n_indicator = n_indicator;
  return build_thermostat(p);
}

std::vector<double> fit_gaussian_sum_1d(const std::vector<double>& xs,
                                        const std::vector<double>& target,
                                        const std::vector<double>& means, double var) {
  if (xs.size() != target.size()) throw std::invalid_argument("fit: sample size mismatch");
  const std::size_t m = xs.size();
  const std::size_t j = means.size();
  if (m < j) throw std::invalid_argument("fit: underdetermined system");
  Eigen::MatrixXd g(m, j);
  std::vector<double> col(m);
  std::vector<double> vars(m, var);
  std::vector<double> ones(m, 1.0);
  for (std::size_t cj = 0; cj < j; ++cj) {
    // column = phi(x_p; mu_j, var) over sample points
    kern::gauss_pdf_v(means[cj], 0.0, ones.data(), xs.data(), vars.data(), col.data(), m);
    for (std::size_t p = 0; p < m; ++p) g(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(cj)) = col[p];
  }
  Eigen::VectorXd t(m);
  for (std::size_t p = 0; p < m; ++p) t[static_cast<Eigen::Index>(p)] = target[p];
  const Eigen::MatrixXd gtg = g.transpose() * g;
  const Eigen::VectorXd gtt = g.transpose() * t;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gtg);
  if (ldlt.info() != Eigen::Success) throw NumericError("fit: normal equations not solvable");
  const Eigen::VectorXd w = ldlt.solve(gtt);
  return {w.data(), w.data() + w.size()};
}

IndicatorFit fit_indicator(const gmix::Box& kx, const std::vector<int>& kq, int n_modes,
                           int n_components, double shrink) {
  if (n_components < 1) throw std::invalid_argument("fit_indicator: n_components must be >= 1");
  if (kx.lo.size() != 1) throw NumericError("fit_indicator: only 1-D safe sets supported");
  const double lo = kx.lo[0];
  const double hi = kx.hi[0];
  const double width = hi - lo;
  if (!(width > 0.0)) throw std::invalid_argument("fit_indicator: empty box");
  for (int q : kq)
    if (q < 0 || q >= n_modes) throw std::invalid_argument("fit_indicator: mode out of range");

  const double sigma_fit = width / (2.0 * n_components);
  const double var = sigma_fit * sigma_fit;
  std::vector<double> means(static_cast<std::size_t>(n_components));
  for (int i = 0; i < n_components; ++i)
    means[static_cast<std::size_t>(i)] = lo + (i + 0.5) * (width / n_components);

  // dense sample grid; a band around each jump is excluded so the step
  // transition does not force overshoot into the plateau
  const double margin = width / 3.0;
  const double band = 0.75 * sigma_fit;
  const int n_grid = 4001;
  std::vector<double> xs;
  std::vector<double> target;
  xs.reserve(n_grid);
  target.reserve(n_grid);
  const double glo = lo - margin;
  const double ghi = hi + margin;
  for (int i = 0; i < n_grid; ++i) {
    const double x = glo + (ghi - glo) * i / (n_grid - 1);
    if (std::abs(x - lo) <= band || std::abs(x - hi) <= band) continue;
    xs.push_back(x);
    target.push_back((x > lo && x < hi) ? 1.0 : 0.0);
  }
  std::vector<double> w = fit_gaussian_sum_1d(xs, target, means, var);
  for (double& wi : w) wi *= shrink;

  gmix::Mixture shared(1);
  shared.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) shared.add1(w[i], means[i], var);

  // sup residual on the 5%-shrunk interior reporting grid
  double residual = 0.0;
  const double rlo = lo + 0.05 * width;
  const double rhi = hi - 0.05 * width;
  for (int i = 0; i < 1000; ++i) {
    const double x = rlo + (rhi - rlo) * i / 999.0;
    residual = std::max(residual, std::abs(shared.eval1(x) - 1.0));
  }
  if (residual > 0.15) {
    throw NumericError("fit_indicator: interior residual " + std::to_string(residual) +
                       " exceeds 0.15 (n_components=" + std::to_string(n_components) + ")");
  }

  IndicatorFit fit;
  fit.fit_residual = residual;
  fit.mixture = gmix::HybridMixture(n_modes, 1);
  for (int q : kq) fit.mixture.mode(q) = shared;
  return fit;
}

TransitionKernel transition_mixture(const HybridModel& model, int q, int u, int q_next) {
  if (u < 0 || u >= model.n_actions || q < 0 || q >= model.n_modes || q_next < 0 ||
      q_next >= model.n_modes)
    throw std::invalid_argument("transition_mixture: index out of range");
  TransitionKernel k;
  k.weight_fit = gmix::Mixture(model.n);
  k.constant_weight = model.Tq[static_cast<std::size_t>(u)](q, q_next);
  k.A = model.A;
  k.f = model.f[static_cast<std::size_t>(u)][static_cast<std::size_t>(q_next)];
  k.W = model.W[static_cast<std::size_t>(u)][static_cast<std::size_t>(q_next)];
  return k;
}

namespace {

constexpr const char* kModelKind = "podtshs";

[[noreturn]] void jfail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& need(const json& o, const char* key, const std::string& path) {
  auto it = o.find(key);
  if (it == o.end()) jfail(path + "." + key, "missing");
  return *it;
}

void reject_unknown(const json& o, std::initializer_list<const char*> allowed,
                    const std::string& path) {
  for (auto it = o.begin(); it != o.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) jfail(path + "." + it.key(), "unknown key");
  }
}

double jdouble(const json& v, const std::string& path) {
  if (!v.is_number()) jfail(path, "expected number");
  return v.get<double>();
}

int jint(const json& v, const std::string& path) {
  if (!v.is_number_integer()) jfail(path, "expected integer");
  return v.get<int>();
}

Eigen::VectorXd jvec(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) jfail(path, "expected nonempty array");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = jdouble(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

Eigen::MatrixXd jmat(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) jfail(path, "expected nonempty array of rows");
  const std::size_t rows = v.size();
  std::size_t cols = 0;
  Eigen::MatrixXd out;
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = v[r];
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || row.empty()) jfail(rp, "expected nonempty row");
    if (r == 0) {
      cols = row.size();
      out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    }
    if (row.size() != cols) jfail(rp, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          jdouble(row[c], rp + "[" + std::to_string(c) + "]");
  }
  return out;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

HybridModel load_model_json(const std::string& text, const std::string& origin) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) throw ConfigError(origin + ": not valid JSON");
  if (!root.is_object()) jfail("$", "expected object");
  reject_unknown(root,
                 {"type", "n", "n_modes", "n_actions", "Tq", "A", "f", "W", "observation",
                  "mode_observation", "safe_set", "indicator"},
                 "$");
  if (need(root, "type", "$").get<std::string>() != kModelKind)
    jfail("$.type", std::string("expected \"") + kModelKind + "\"");

  HybridModel m;
  m.n = jint(need(root, "n", "$"), "$.n");
  m.n_modes = jint(need(root, "n_modes", "$"), "$.n_modes");
  m.n_actions = jint(need(root, "n_actions", "$"), "$.n_actions");
  if (m.n < 1) jfail("$.n", "must be >= 1");
  if (m.n_modes < 1) jfail("$.n_modes", "must be >= 1");
  if (m.n_actions < 1) jfail("$.n_actions", "must be >= 1");

  const json& tq = need(root, "Tq", "$");
  if (!tq.is_array() || tq.size() != static_cast<std::size_t>(m.n_actions))
    jfail("$.Tq", "expected one table per action");
  for (std::size_t u = 0; u < tq.size(); ++u)
    m.Tq.push_back(jmat(tq[u], "$.Tq[" + std::to_string(u) + "]"));

  m.A = jmat(need(root, "A", "$"), "$.A");

  const json& jf = need(root, "f", "$");
  const json& jw = need(root, "W", "$");
  if (!jf.is_array() || jf.size() != static_cast<std::size_t>(m.n_actions))
    jfail("$.f", "expected one entry per action");
  if (!jw.is_array() || jw.size() != static_cast<std::size_t>(m.n_actions))
    jfail("$.W", "expected one entry per action");
  m.f.resize(static_cast<std::size_t>(m.n_actions));
  m.W.resize(static_cast<std::size_t>(m.n_actions));
  for (int u = 0; u < m.n_actions; ++u) {
    const auto su = static_cast<std::size_t>(u);
    const std::string pf = "$.f[" + std::to_string(u) + "]";
    const std::string pw = "$.W[" + std::to_string(u) + "]";
    if (!jf[su].is_array() || jf[su].size() != static_cast<std::size_t>(m.n_modes))
      jfail(pf, "expected one vector per target mode");
    if (!jw[su].is_array() || jw[su].size() != static_cast<std::size_t>(m.n_modes))
      jfail(pw, "expected one matrix per target mode");
    for (int qn = 0; qn < m.n_modes; ++qn) {
      const auto sq = static_cast<std::size_t>(qn);
      m.f[su].push_back(jvec(jf[su][sq], pf + "[" + std::to_string(qn) + "]"));
      m.W[su].push_back(jmat(jw[su][sq], pw + "[" + std::to_string(qn) + "]"));
    }
  }

  const json& jo = need(root, "observation", "$");
  reject_unknown(jo, {"grid", "delta", "tol_lo", "tol_hi", "sub_delta", "noise_var"},
                 "$.observation");
  const json& jg = need(jo, "grid", "$.observation");
  if (!jg.is_array() || jg.size() < 3)
    jfail("$.observation.grid", "grid too coarse (fewer than 3 values)");
  for (std::size_t i = 0; i < jg.size(); ++i)
    m.obs_x.grid.push_back(jdouble(jg[i], "$.observation.grid[" + std::to_string(i) + "]"));
  m.obs_x.delta = jdouble(need(jo, "delta", "$.observation"), "$.observation.delta");
  m.obs_x.tol_lo = jo.contains("tol_lo") ? jdouble(jo["tol_lo"], "$.observation.tol_lo") : 0.0;
  m.obs_x.tol_hi = jo.contains("tol_hi") ? jdouble(jo["tol_hi"], "$.observation.tol_hi") : 0.0;
  m.obs_x.sub_delta = jdouble(need(jo, "sub_delta", "$.observation"), "$.observation.sub_delta");
  m.obs_x.noise_var = jdouble(need(jo, "noise_var", "$.observation"), "$.observation.noise_var");
  if (!(m.obs_x.sub_delta > 0.0)) jfail("$.observation.sub_delta", "must be positive");
  m.obs_x.n_sub = static_cast<int>(std::lround(m.obs_x.delta / m.obs_x.sub_delta));

  const json& jq = need(root, "mode_observation", "$");
  reject_unknown(jq, {"perfect", "n_yq", "Q"}, "$.mode_observation");
  const json& jperf = need(jq, "perfect", "$.mode_observation");
  if (!jperf.is_boolean()) jfail("$.mode_observation.perfect", "expected boolean");
  m.perfect_mode_observation = jperf.get<bool>();
  m.n_yq = jint(need(jq, "n_yq", "$.mode_observation"), "$.mode_observation.n_yq");
  if (jq.contains("Q")) {
    const json& qq = jq["Q"];
    if (!qq.is_array()) jfail("$.mode_observation.Q", "expected array");
    for (std::size_t u = 0; u < qq.size(); ++u)
      m.Qobs.push_back(jmat(qq[u], "$.mode_observation.Q[" + std::to_string(u) + "]"));
  } else if (!m.perfect_mode_observation) {
    jfail("$.mode_observation.Q", "missing");
  }

  const json& js = need(root, "safe_set", "$");
  reject_unknown(js, {"lo", "hi", "modes"}, "$.safe_set");
  m.safe.box.lo = jvec(need(js, "lo", "$.safe_set"), "$.safe_set.lo");
  m.safe.box.hi = jvec(need(js, "hi", "$.safe_set"), "$.safe_set.hi");
  const json& jm = need(js, "modes", "$.safe_set");
  if (!jm.is_array() || jm.empty()) jfail("$.safe_set.modes", "must be nonempty");
  for (std::size_t i = 0; i < jm.size(); ++i)
    m.safe.modes.push_back(jint(jm[i], "$.safe_set.modes[" + std::to_string(i) + "]"));

  const json& ji = need(root, "indicator", "$");
  reject_unknown(ji, {"components", "shrink"}, "$.indicator");
  m.indicator_components = jint(need(ji, "components", "$.indicator"), "$.indicator.components");
  m.indicator_shrink = jdouble(need(ji, "shrink", "$.indicator"), "$.indicator.shrink");

  m.validate();
  m.rebuild_indicator();
  return m;
}

HybridModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open model file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_model_json(ss.str(), path);
}

std::string model_to_json(const HybridModel& m) {
  json root;
  root["type"] = kModelKind;
  root["n"] = m.n;
  root["n_modes"] = m.n_modes;
  root["n_actions"] = m.n_actions;
  json tq = json::array();
  for (const auto& t : m.Tq) tq.push_back(mat_to_json(t));
  root["Tq"] = std::move(tq);
  root["A"] = mat_to_json(m.A);
  json jf = json::array();
  json jw = json::array();
  for (int u = 0; u < m.n_actions; ++u) {
    json fu = json::array();
    json wu = json::array();
    for (int qn = 0; qn < m.n_modes; ++qn) {
      fu.push_back(vec_to_json(m.f[static_cast<std::size_t>(u)][static_cast<std::size_t>(qn)]));
      wu.push_back(mat_to_json(m.W[static_cast<std::size_t>(u)][static_cast<std::size_t>(qn)]));
    }
    jf.push_back(std::move(fu));
    jw.push_back(std::move(wu));
  }
  root["f"] = std::move(jf);
  root["W"] = std::move(jw);
  json jo;
  jo["grid"] = m.obs_x.grid;
  jo["delta"] = m.obs_x.delta;
  jo["tol_lo"] = m.obs_x.tol_lo;
  jo["tol_hi"] = m.obs_x.tol_hi;
  jo["sub_delta"] = m.obs_x.sub_delta;
  jo["noise_var"] = m.obs_x.noise_var;
  root["observation"] = std::move(jo);
  json jq;
  jq["perfect"] = m.perfect_mode_observation;
  jq["n_yq"] = m.n_yq;
  json qq = json::array();
  for (const auto& qmat : m.Qobs) qq.push_back(mat_to_json(qmat));
  jq["Q"] = std::move(qq);
  root["mode_observation"] = std::move(jq);
  json js;
  js["lo"] = vec_to_json(m.safe.box.lo);
  js["hi"] = vec_to_json(m.safe.box.hi);
  js["modes"] = m.safe.modes;
  root["safe_set"] = std::move(js);
  json ji;
  ji["components"] = m.indicator_components;
  ji["shrink"] = m.indicator_shrink;
  root["indicator"] = std::move(ji);
  return root.dump();
}

std::string model_hash(const HybridModel& m) {
  const std::string dump = model_to_json(m);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace podreach::hsmodel
