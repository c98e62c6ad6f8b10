#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "podreach/belief.hpp"

namespace podreach::pbvi {

inline constexpr int kDefaultReduceTarget = 20;
// Initial spread of sampled beliefs: sigma_0 = N(mu_0, kSampleVar) restricted to mode 0.
inline constexpr double kSampleVar = 0.1;

// One piece of the piecewise-linear value bound.  action == -1 marks the
// terminal piece (no decision is attached to the horizon stage).
struct AlphaFunction {
  gmix::HybridMixture mixture;
  int action = -1;
  int time_index = 0;
};

struct PolicyStack {
  // gammas[t] is the alpha set for stage t, t = 0..horizon.
  std::vector<std::vector<AlphaFunction>> gammas;
  int horizon = 0;
  int belief_count = 0;
  int reduce_to = kDefaultReduceTarget;
  std::uint64_t seed = 0;
  std::string model_hash;

  const std::vector<AlphaFunction>& gamma(int t) const;
};

struct ValueResult {
  double value = 0.0;  // raw clamped to [0, 1]
  double raw = 0.0;    // inner product of the maximizing piece, unclamped
  int action = -1;
};

// Terminal piece: the fitted indicator of the safe set.
AlphaFunction terminal_alpha(const hsmodel::HybridModel& model, int horizon);

// Samples `count` reachable beliefs by simulating random action/observation
// trajectories of length `horizon` from sigma_0 = N(mu_0, kSampleVar) at mode 0,
// mu_0 uniform over the safe interval.  Every intermediate statistic is pooled
// (a dead statistic is replaced by a fresh start before pooling) and the pool
// is evenly subsampled.  Bit-identical for a fixed seed.
std::vector<belief::SufficientStatistic> sample_belief_set(const hsmodel::HybridModel& model,
                                                           int count, int horizon,
                                                           std::uint64_t seed,
                                                           int reduce_to = kDefaultReduceTarget);

// One backed-up piece for a fixed observation/action pair:
//   alpha_{y,u}(x, q) = 1_K(x, q) * sum_{q'} T_q(q'|u) * M(q', y^q, u)
//                       * integral alpha'(x', q') phi(y^x | x', u) tau(x' | x, q') dx'
// where M is the mode-observation factor (1 when modes are observed exactly)
// and 1_K is the fitted indicator.  No normalization factors appear here; they
// cancel against the observation weights in the value recursion.
// reduce_to <= 0 keeps the exact composed mixture.
gmix::HybridMixture backup_alpha_yu(const hsmodel::HybridModel& model,
                                    const AlphaFunction& alpha_next, belief::Observation y, int u,
                                    int reduce_to = kDefaultReduceTarget);

// Backs up one belief point against the stage-(t+1) alpha set: for each action
// the per-observation maximizing pieces are summed, the best action wins
// (ties to the lowest index).
AlphaFunction point_backup(const hsmodel::HybridModel& model,
                           const belief::SufficientStatistic& sigma,
                           const std::vector<AlphaFunction>& gamma_next,
                           int reduce_to = kDefaultReduceTarget);

// Point-based backward sweep over the fixed belief set.  Duplicate backups
// (same action and the same component multiset to 1e-12) are stored once.
PolicyStack solve(const hsmodel::HybridModel& model,
                  const std::vector<belief::SufficientStatistic>& belief_set, int horizon,
                  int reduce_to = kDefaultReduceTarget, int threads = 1);

// Lower bound at stage t and the attached action.  Throws on t out of range
// or an empty stack.
ValueResult value(const PolicyStack& stack, const belief::SufficientStatistic& sigma, int t);

// Worst-case (over probe_set) distance to the nearest belief in belief_set,
// measured as an importance-sampled L1 mixture distance.  Scalar state only.
double delta_diagnostic(const std::vector<belief::SufficientStatistic>& belief_set,
                        const std::vector<belief::SufficientStatistic>& probe_set,
                        std::uint64_t seed = 0x5eed);

std::string policy_to_json(const PolicyStack& stack);
PolicyStack policy_from_json(const std::string& text, const std::string& origin);
void save_policy_file(const PolicyStack& stack, const std::string& path);
PolicyStack load_policy_file(const std::string& path);

}  // namespace podreach::pbvi
