#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "podreach/pbvi.hpp"

// Monte Carlo simulation of the hybrid system under a solved policy.
namespace podreach::simkit {

enum class PolicyMode { kTimeVarying, kStationary };

struct TrajectoryRecord {
  std::vector<double> x;         // states, t = 0..last simulated step
  std::vector<int> q;
  std::vector<int> observation;  // grid index fed to the belief, per step taken
  std::vector<int> action;       // action applied, per step taken
  bool safe = false;             // every recorded state inside K
  std::uint64_t seed = 0;        // substream seed of this run
};

struct SimulationResult {
  double estimate = 0.0;  // fraction of safe runs
  double std_error = 0.0; // sqrt(p(1-p)/n)
  std::vector<TrajectoryRecord> records;
};

// Runs n_runs independent trajectories from x0 ~ N(mu0, s2), mode q0.  The
// belief is maintained online with belief.update at the policy's reduce_to,
// fed the sampled observation snapped to the nearest grid value; actions come
// from value() at stage t (kTimeVarying, requires policy.horizon >= T) or
// stage 0 (kStationary).  A run stops early once it leaves the safe set.
// Per-run substreams make the result independent of the thread count.
SimulationResult simulate(const hsmodel::HybridModel& model, const pbvi::PolicyStack& policy,
                          PolicyMode mode, double mu0, double s2, int q0, int T, int n_runs,
                          std::uint64_t seed, int threads = 1);

struct SweepRow {
  double mu0 = 0.0;
  double v_pbvi = 0.0;
  double mc_estimate = 0.0;
  double mc_std_error = 0.0;
  int u0 = -1;
};

// One simulate + value evaluation per mu0; sigma_0 = N(mu0, pbvi::kSampleVar)
// at mode 0.
std::vector<SweepRow> sweep_mu0(const hsmodel::HybridModel& model,
                                const pbvi::PolicyStack& policy,
                                const std::vector<double>& mu0_grid, int T, int n_runs,
                                std::uint64_t seed, PolicyMode mode = PolicyMode::kTimeVarying,
                                int threads = 1);

// header mu0,V_pbvi,mc_estimate,mc_stderr,u0 with CRLF line ends
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace podreach::simkit
