#pragma once

#include <optional>
#include <ostream>

#include "podreach/gmix.hpp"
#include "podreach/hsmodel.hpp"

// The unnormalized sufficient statistic sigma_t and its closed-form update.
namespace podreach::belief {

// sampling-procedure control, not part of the math
inline constexpr double kDeadThreshold = 1e-6;
// relative weight floor applied before reduction
inline constexpr double kPruneRelTol = 1e-12;

struct Observation {
  int yx = 0;  // index into the observation grid
  int yq = 0;  // mode observation symbol; ignored under perfect mode observation
};

struct SufficientStatistic {
  gmix::HybridMixture mixture;
  int time_index = 0;
  bool dead = false;

  double total_mass() const { return mixture.total_weight(); }
};

// sigma_0 from a normalized prior (total mass within 1e-6 of 1).  With q0
// given, all continuous components are placed in that mode.
SufficientStatistic init(const gmix::HybridMixture& rho, std::optional<int> q0 = std::nullopt);

// sigma_0 = 1_{q0}(q) phi(x; mu0, s2) for the 1-D benchmark
SufficientStatistic init_gaussian(const hsmodel::HybridModel& model, double mu0, double s2,
                                  int q0);

// One application of the update operator: indicator, transition, and
// observation-likelihood products in closed form, then (for reduce_to > 0)
// moment-matching of each likelihood block, pruning, and reduction per mode.
// reduce_to <= 0 keeps the raw composed mixture (oracle comparisons).
// Requires a 1-D model (the observation channel is scalar).
SufficientStatistic update(const hsmodel::HybridModel& model, const SufficientStatistic& sigma,
                           Observation y, int u, int reduce_to);

// <sigma, 1_K> with exact Gaussian CDFs (not the fitted indicator)
double safety_mass(const hsmodel::HybridModel& model, const SufficientStatistic& sigma);

bool is_dead(const SufficientStatistic& sigma, double threshold = kDeadThreshold);

// one row per component: mode, weight, mean..., cov...
void write_belief_csv(std::ostream& os, const SufficientStatistic& sigma);

}  // namespace podreach::belief
