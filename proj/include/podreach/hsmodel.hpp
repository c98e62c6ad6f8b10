#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "podreach/gmix.hpp"

// PODTSHS definition: hybrid linear-Gaussian dynamics, mode transition
// tables, discretized observation channel, safe set, and the Gaussian-sum
// fits the closed-form algebra requires.
namespace podreach::hsmodel {

// Default multiplier applied to least-squares indicator weights so the fit
// under-approximates the indicator in the interior.  Chosen mild: the fitted
// function multiplies into every recursion step, so horizon-T values carry
// the factor to the T-th power (0.998^20 ~ 0.96).
inline constexpr double kIndicatorShrink = 0.998;

// One-sided |z| with standard normal tail mass 1e-6; drives observation grid
// extension beyond the safe set.
inline constexpr double kTailZ = 4.753424308817087;

struct DiscretizedObservation {
  std::vector<double> grid;  // ascending, equally spaced
  double delta = 0.0;        // grid spacing
  double tol_lo = 0.0;       // extension below K_x
  double tol_hi = 0.0;       // extension above K_x
  double sub_delta = 0.0;    // likelihood component spacing
  double noise_var = 0.0;    // w^2
  int n_sub = 0;             // H = delta / sub_delta

  int size() const { return static_cast<int>(grid.size()); }
  double mu_h(int yi, int h) const {
    return grid[static_cast<std::size_t>(yi)] - 0.5 * delta +
           static_cast<double>(h) * sub_delta;
  }
  // sum_h sub_delta * phi(x; mu_h(yi), noise_var)
  gmix::Mixture likelihood(int yi) const;
  double likelihood_at(int yi, double x) const;
  // nearest grid index, clamped to the ends
  int nearest_index(double y) const;
};

struct SafeSet {
  gmix::Box box;
  std::vector<int> modes;  // sorted ascending
  bool contains_mode(int q) const;
  bool contains(double x, int q) const;
};

struct IndicatorFit {
  gmix::HybridMixture mixture;  // mode-gated copies of shared 1-D components
  double fit_residual = 0.0;    // sup |fit - 1_K| on the interior reporting grid
};

struct HybridModel {
  int n = 1;
  int n_modes = 0;
  int n_actions = 0;
  // Tq[u](q, q') = P(q' | q, u); each row sums to 1
  std::vector<Eigen::MatrixXd> Tq;
  // shared invertible A; f[u][q'], W[u][q'] per action and target mode
  Eigen::MatrixXd A;
  std::vector<std::vector<Eigen::VectorXd>> f;
  std::vector<std::vector<Eigen::MatrixXd>> W;
  DiscretizedObservation obs_x;
  // Qobs[u](q', y^q) = P(y^q | q', u); unused under perfect mode observation
  std::vector<Eigen::MatrixXd> Qobs;
  bool perfect_mode_observation = true;
  int n_yq = 0;
  SafeSet safe;
  int indicator_components = 10;
  double indicator_shrink = kIndicatorShrink;
  IndicatorFit indicator;  // built on construction/load

  int n_yx() const { return obs_x.size(); }
  // throws ConfigError naming the offending field on the first violation
  void validate() const;
  void rebuild_indicator();
};

struct ThermostatParams {
  double v_std = 0.1;      // process noise std
  double w_std = 0.25;     // observation noise std
  double delta = 0.25;     // observation grid spacing
  double sub_delta = 0.05; // likelihood component spacing
  int n_indicator = 10;    // indicator fit components
  double p_on = 0.8;       // P(q'=1 | u=1), mode-independent
  double p_off = 0.9;      // P(q'=0 | u=0), mode-independent
  double indicator_shrink = kIndicatorShrink;
};

HybridModel build_thermostat(const ThermostatParams& params);
HybridModel build_thermostat(double v_std, double w_std, double delta, double sub_delta,
                             int n_indicator);

// Least-squares weights for sum_j w_j phi(x; means[j], var) ~ target(x) over
// the sample points; plain normal equations.
std::vector<double> fit_gaussian_sum_1d(const std::vector<double>& xs,
                                        const std::vector<double>& target,
                                        const std::vector<double>& means, double var);

// Gaussian-sum under-approximation of the safe-set indicator (1-D safe sets).
// Equally spaced means at the n_components cell centers of K_x, shared
// sigma_fit = width / (2 n_components), least squares on a dense grid over
// K_x extended by width/3 per side excluding a band of 0.75 sigma_fit around
// each jump, then weights scaled by `shrink`.  Rejects fits whose interior
// sup-norm residual exceeds 0.15.
IndicatorFit fit_indicator(const gmix::Box& kx, const std::vector<int>& kq, int n_modes,
                           int n_components, double shrink = kIndicatorShrink);

struct TransitionKernel {
  // T_q(q'|x,q,u) as a Gaussian sum in x; empty fit means the x-independent
  // constant case with the table entry as the lone weight
  gmix::Mixture weight_fit;
  double constant_weight = 0.0;
  Eigen::MatrixXd A;
  Eigen::VectorXd f;
  Eigen::MatrixXd W;
};

TransitionKernel transition_mixture(const HybridModel& model, int q, int u, int q_next);

// Model file I/O.  The JSON layout mirrors HybridModel (matrices row-major);
// load reports the first invariant violation with a JSON-path string.
HybridModel load_model_json(const std::string& text, const std::string& origin);
HybridModel load_model_file(const std::string& path);
std::string model_to_json(const HybridModel& model);

// FNV-1a over the canonical JSON dump; ties policies to the model they were
// solved for.
std::string model_hash(const HybridModel& model);

}  // namespace podreach::hsmodel
