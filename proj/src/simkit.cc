#include "podreach/simkit.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>

#include "podreach/parallel.hpp"
#include "podreach/rng.hpp"

namespace podreach::simkit {

namespace {

int sample_row(const Eigen::MatrixXd& table, int row, Rng& rng) {
  const double r = rng.uniform01();
  double cum = 0.0;
  const int n = static_cast<int>(table.cols());
  for (int j = 0; j < n; ++j) {
    cum += table(row, j);
    if (r < cum) return j;
  }
  return n - 1;
}

TrajectoryRecord run_one(const hsmodel::HybridModel& model, const pbvi::PolicyStack& policy,
                         PolicyMode mode, double mu0, double s2, int q0, int T,
                         std::uint64_t run_seed) {
  Rng rng(run_seed);
  TrajectoryRecord rec;
  rec.seed = run_seed;
  rec.x.reserve(static_cast<std::size_t>(T) + 1);
  rec.q.reserve(static_cast<std::size_t>(T) + 1);
  rec.observation.reserve(static_cast<std::size_t>(T));
  rec.action.reserve(static_cast<std::size_t>(T));

  const double a = model.A(0, 0);
  const double obs_sd = std::sqrt(model.obs_x.noise_var);

  double x = mu0 + std::sqrt(s2) * rng.gauss();
  int q = q0;
  rec.x.push_back(x);
  rec.q.push_back(q);
  rec.safe = model.safe.contains(x, q);

  belief::SufficientStatistic sigma = belief::init_gaussian(model, mu0, s2, q0);
  for (int t = 0; t < T && rec.safe; ++t) {
    const int stage = mode == PolicyMode::kStationary ? 0 : t;
    const int u = pbvi::value(policy, sigma, stage).action;
    rec.action.push_back(u);

    const int qn = sample_row(model.Tq[static_cast<std::size_t>(u)], q, rng);
    const double fv = model.f[static_cast<std::size_t>(u)][static_cast<std::size_t>(qn)](0);
    const double wv = model.W[static_cast<std::size_t>(u)][static_cast<std::size_t>(qn)](0, 0);
    const double xn = a * x + fv + std::sqrt(wv) * rng.gauss();

    belief::Observation y;
    y.yx = model.obs_x.nearest_index(xn + obs_sd * rng.gauss());
    y.yq = model.perfect_mode_observation
               ? 0
               : sample_row(model.Qobs[static_cast<std::size_t>(u)], qn, rng);
    rec.observation.push_back(y.yx);
    sigma = belief::update(model, sigma, y, u, policy.reduce_to);

    x = xn;
    q = qn;
    rec.x.push_back(x);
    rec.q.push_back(q);
    rec.safe = model.safe.contains(x, q);
  }
  return rec;
}

void append_number(std::string& line, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  line.append(buf, res.ptr);
}

}  // namespace

SimulationResult simulate(const hsmodel::HybridModel& model, const pbvi::PolicyStack& policy,
                          PolicyMode mode, double mu0, double s2, int q0, int T, int n_runs,
                          std::uint64_t seed, int threads) {
  if (policy.gammas.empty()) throw std::invalid_argument("simulate: empty policy stack");
  if (n_runs < 1) throw std::invalid_argument("simulate: n_runs must be positive");
  if (T < 0) throw std::invalid_argument("simulate: negative horizon");
  if (mode == PolicyMode::kTimeVarying && policy.horizon < T)
    throw std::invalid_argument("simulate: policy horizon shorter than simulation horizon");
  if (q0 < 0 || q0 >= model.n_modes) throw std::invalid_argument("simulate: q0 out of range");

  SimulationResult result;
  result.records.resize(static_cast<std::size_t>(n_runs));
  parallel_for(static_cast<std::size_t>(n_runs), threads, [&](std::size_t i) {
    result.records[i] =
        run_one(model, policy, mode, mu0, s2, q0, T, Rng::substream_seed(seed, i));
  });

  int safe = 0;
  for (const TrajectoryRecord& rec : result.records) safe += rec.safe ? 1 : 0;
  const double p = static_cast<double>(safe) / static_cast<double>(n_runs);
  result.estimate = p;
  result.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(n_runs));
  return result;
}

std::vector<SweepRow> sweep_mu0(const hsmodel::HybridModel& model,
                                const pbvi::PolicyStack& policy,
                                const std::vector<double>& mu0_grid, int T, int n_runs,
                                std::uint64_t seed, PolicyMode mode, int threads) {
  std::vector<SweepRow> rows;
  rows.reserve(mu0_grid.size());
  for (std::size_t i = 0; i < mu0_grid.size(); ++i) {
    const double mu0 = mu0_grid[i];
    SweepRow row;
    row.mu0 = mu0;
    const belief::SufficientStatistic sigma0 =
        belief::init_gaussian(model, mu0, pbvi::kSampleVar, 0);
    const pbvi::ValueResult vr = pbvi::value(policy, sigma0, 0);
    row.v_pbvi = vr.value;
    row.u0 = vr.action;
    const SimulationResult sim = simulate(model, policy, mode, mu0, pbvi::kSampleVar, 0, T,
                                          n_runs, splitmix64(seed + i), threads);
    row.mc_estimate = sim.estimate;
    row.mc_std_error = sim.std_error;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "mu0,V_pbvi,mc_estimate,mc_stderr,u0\r\n";
  for (const SweepRow& row : rows) {
    std::string line;
    append_number(line, row.mu0);
    line.push_back(',');
    append_number(line, row.v_pbvi);
    line.push_back(',');
    append_number(line, row.mc_estimate);
    line.push_back(',');
    append_number(line, row.mc_std_error);
    line.push_back(',');
    line += std::to_string(row.u0);
    os << line << "\r\n";
  }
}

}  // namespace podreach::simkit
