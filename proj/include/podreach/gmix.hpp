#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "podreach/errors.hpp"

// Closed-form algebra on weighted Gaussian mixtures over a hybrid state
// space (continuous vector x, discrete mode q).  Weights may be negative:
// mixtures double as least-squares function fits.
namespace podreach::gmix {

// Positive-definiteness floor for covariance eigenvalues.
inline constexpr double kEpsPd = 1e-12;

struct WeightedGaussian {
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Validating constructor: symmetrizes cov as (S + S^T)/2 and requires all
// eigenvalues > kEpsPd.
WeightedGaussian make_gaussian(double weight, Eigen::VectorXd mean, Eigen::MatrixXd cov);

// phi(x; mean, cov), the normalized Gaussian density (weight ignored).
double gauss_density(const WeightedGaussian& g, const Eigen::VectorXd& x);

// One mode's components, structure-of-arrays.  For dim()==1 the mean/cov
// arrays are flat doubles suitable for the batch kernels.
class Mixture {
 public:
  explicit Mixture(int dim = 1);

  int dim() const { return dim_; }
  std::size_t size() const { return w_.size(); }
  bool empty() const { return w_.empty(); }
  void reserve(std::size_t n);
  void clear();

  // dim()==1 path; var must exceed kEpsPd
  void add1(double w, double mu, double var);
  double mu1(std::size_t i) const { return mu_[i]; }
  double var1(std::size_t i) const { return cov_[i]; }

  // general path; cov symmetrized, eigenvalues must exceed kEpsPd
  void add(double w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov);
  void add_unchecked(double w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov);

  double weight(std::size_t i) const { return w_[i]; }
  void scale_weight(std::size_t i, double factor) { w_[i] *= factor; }
  Eigen::Map<const Eigen::VectorXd> mean(std::size_t i) const;
  Eigen::Map<const Eigen::MatrixXd> cov(std::size_t i) const;
  WeightedGaussian component(std::size_t i) const;

  const double* w_data() const { return w_.data(); }
  const double* mu_data() const { return mu_.data(); }
  const double* var_data() const { return cov_.data(); }

  double total_weight() const;
  // sum_i w_i phi(x; mu_i, cov_i)
  double eval1(double x) const;
  double eval(const Eigen::VectorXd& x) const;

 private:
  int dim_;
  std::vector<double> w_;
  std::vector<double> mu_;   // dim_ entries per component
  std::vector<double> cov_;  // dim_*dim_ entries per component
};

// Per-discrete-mode mixture; represents sufficient statistics, alpha
// functions, and fitted indicator/observation functions alike.
class HybridMixture {
 public:
  HybridMixture() : HybridMixture(1, 1) {}
  HybridMixture(int n_modes, int dim);

  int n_modes() const { return static_cast<int>(modes_.size()); }
  int dim() const { return dim_; }
  Mixture& mode(int q) { return modes_[static_cast<std::size_t>(q)]; }
  const Mixture& mode(int q) const { return modes_[static_cast<std::size_t>(q)]; }

  std::size_t component_count() const;
  double total_weight() const;
  double eval1(double x, int q) const { return mode(q).eval1(x); }
  double eval(const Eigen::VectorXd& x, int q) const { return mode(q).eval(x); }

 private:
  int dim_;
  std::vector<Mixture> modes_;
};

// Pointwise product of two weighted Gaussian densities, itself a weighted
// Gaussian: weight w_a w_b phi(mu_a; mu_b, S_a+S_b), cov (S_a^-1+S_b^-1)^-1.
WeightedGaussian product(const WeightedGaussian& a, const WeightedGaussian& b);

// Change of variable for a conditional Gaussian phi(x'; Ax+f, W).  The input
// carries x' in its mean slot and W in its cov slot; the result is the same
// density read as a function of x: |det A|^-1 phi(x; A^-1(x'-f), A^-1 W A^-T).
WeightedGaussian affine_pushforward(const WeightedGaussian& g, const Eigen::MatrixXd& A,
                                    const Eigen::VectorXd& f);

// sum_q sum_{i,j} w_i w_j phi(mu_i; mu_j, S_i+S_j); symmetric in its
// arguments bitwise (computed as the mean of both pairing orders).
double inner_product(const HybridMixture& a, const HybridMixture& b);

// Axis-aligned box.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

struct IntervalMassResult {
  double value = 0.0;
  // true when a non-diagonal n>1 covariance forced quasi-Monte-Carlo
  // integration instead of the exact CDF form
  bool approximate = false;
};

// integral of m over box x modes, exact CDF form for 1-D and diagonal
// covariances, Genz-style QMC fallback otherwise.
IntervalMassResult interval_mass_ex(const HybridMixture& m, const Box& box,
                                    const std::vector<int>& modes);
double interval_mass(const HybridMixture& m, const Box& box, const std::vector<int>& modes);

// Weight-preserving merge of two components (matches first and second
// moments of the pair).
WeightedGaussian moment_match(const WeightedGaussian& a, const WeightedGaussian& b);

// Moment-matches each run of `block` consecutive components into one.
// Scalar mixtures only; zero-weight runs are dropped.
Mixture merge_consecutive(const Mixture& m, int block);

struct ReduceStats {
  // L2 cost sqrt(ISE) of each performed merge, in execution order
  std::vector<double> merge_costs;
};

// Greedy pairwise moment-preserving reduction to at most `target` components
// per mode, picking at each step the pair whose merge minimizes the
// integral-squared-error increase.  Per-mode total weight is preserved
// exactly; components are never dropped, only merged.
HybridMixture reduce(const HybridMixture& m, int target, ReduceStats* stats = nullptr);

// Drops components with |w| <= rel_tol * sum_modes sum_i |w_i|.  Not part of
// reduce: callers that can tolerate mass loss invoke this explicitly.
HybridMixture prune(const HybridMixture& m, double rel_tol);

}  // namespace podreach::gmix
