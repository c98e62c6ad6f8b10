#include "podreach/gmix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "podreach/kernels.hpp"

namespace podreach::gmix {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kSqrt1_2 = 0.70710678118654752440084436210485;

// phi(a; b, S) for general n, S must be PD
double pair_phi(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::MatrixXd S) {
  const auto n = S.rows();
  if (n == 1) {
    const double d = a[0] - b[0];
    const double v = S(0, 0);
    return std::exp(((d * d) * -0.5) / v) / std::sqrt(v * kTwoPi);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(std::move(S));
  if (llt.info() != Eigen::Success) throw NumericError("pair_phi: covariance sum not positive definite");
  const Eigen::VectorXd d = a - b;
  const Eigen::VectorXd half = llt.matrixL().solve(d);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  const double quad = half.squaredNorm();
  return std::exp(-0.5 * quad - logdet - 0.5 * static_cast<double>(n) * std::log(kTwoPi));
}

void check_spd(const Eigen::MatrixXd& cov) {
  if (cov.rows() == 1) {
    if (!(cov(0, 0) > kEpsPd)) throw NumericError("covariance below positive-definite floor");
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > kEpsPd))
    throw NumericError("covariance below positive-definite floor");
}

// P(lo < X < hi) for X ~ N(mu, sd^2)
double cdf_interval(double mu, double sd, double lo, double hi) {
  const double za = (lo - mu) / sd * kSqrt1_2;
  const double zb = (hi - mu) / sd * kSqrt1_2;
  return 0.5 * (std::erf(zb) - std::erf(za));
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z * kSqrt1_2); }

// Acklam's rational approximation to the standard normal quantile (~1e-9).
double norm_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  if (!(p > 0.0)) return -kInf;
  if (!(p < 1.0)) return kInf;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Genz sequential-conditioning estimate of P(lo < X < hi), X ~ N(mu, Sigma),
// driven by a Richtmyer quasi-random sequence.
double genz_box_probability(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov,
                            const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const Eigen::Index n = mu.size();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("interval_mass: covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::VectorXd a = lo - mu;
  const Eigen::VectorXd b = hi - mu;

  static constexpr double primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                      31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
  const int n_points = 8192;
  std::vector<double> sq(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    sq[static_cast<std::size_t>(j)] = std::sqrt(primes[j % 20]);

  double total = 0.0;
  Eigen::VectorXd y(n);
  for (int k = 1; k <= n_points; ++k) {
    double f = 1.0;
    double d0 = norm_cdf(a[0] / L(0, 0));
    double e0 = norm_cdf(b[0] / L(0, 0));
    f = e0 - d0;
    for (Eigen::Index i = 1; i < n && f > 0.0; ++i) {
      const double u = std::fmod(static_cast<double>(k) * sq[static_cast<std::size_t>(i - 1)], 1.0);
      y[i - 1] = norm_quantile(d0 + u * (e0 - d0));
      double dot = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) dot += L(i, j) * y[j];
      d0 = norm_cdf((a[i] - dot) / L(i, i));
      e0 = norm_cdf((b[i] - dot) / L(i, i));
      f *= (e0 - d0);
    }
    total += f;
  }
  return total / n_points;
}

}  // namespace

WeightedGaussian make_gaussian(double weight, Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (!std::isfinite(weight)) throw NumericError("component weight not finite");
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw std::invalid_argument("make_gaussian: dimension mismatch");
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  check_spd(sym);
  return WeightedGaussian{weight, std::move(mean), std::move(sym)};
}

double gauss_density(const WeightedGaussian& g, const Eigen::VectorXd& x) {
  return pair_phi(x, g.mean, g.cov);
}

Mixture::Mixture(int dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("Mixture: dim must be >= 1");
}

void Mixture::reserve(std::size_t n) {
  w_.reserve(n);
  mu_.reserve(n * static_cast<std::size_t>(dim_));
  cov_.reserve(n * static_cast<std::size_t>(dim_) * static_cast<std::size_t>(dim_));
}

void Mixture::clear() {
  w_.clear();
  mu_.clear();
  cov_.clear();
}

void Mixture::add1(double w, double mu, double var) {
  if (dim_ != 1) throw std::invalid_argument("add1 on a multi-dimensional mixture");
  if (!(var > kEpsPd)) throw NumericError("variance below positive-definite floor");
  if (!std::isfinite(w) || !std::isfinite(mu)) throw NumericError("non-finite component");
  w_.push_back(w);
  mu_.push_back(mu);
  cov_.push_back(var);
}

void Mixture::add(double w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  if (mu.size() != dim_ || cov.rows() != dim_ || cov.cols() != dim_)
    throw std::invalid_argument("Mixture::add: dimension mismatch");
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  check_spd(sym);
  if (!std::isfinite(w)) throw NumericError("component weight not finite");
  add_unchecked(w, mu, sym);
}

void Mixture::add_unchecked(double w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  w_.push_back(w);
  mu_.insert(mu_.end(), mu.data(), mu.data() + dim_);
  cov_.insert(cov_.end(), cov.data(), cov.data() + dim_ * dim_);
}

Eigen::Map<const Eigen::VectorXd> Mixture::mean(std::size_t i) const {
  return {mu_.data() + i * static_cast<std::size_t>(dim_), dim_};
}

Eigen::Map<const Eigen::MatrixXd> Mixture::cov(std::size_t i) const {
  const auto d = static_cast<std::size_t>(dim_);
  return {cov_.data() + i * d * d, dim_, dim_};
}

WeightedGaussian Mixture::component(std::size_t i) const {
  return WeightedGaussian{w_[i], mean(i), cov(i)};
}

double Mixture::total_weight() const {
  double s = 0.0;
  for (double w : w_) s += w;
  return s;
}

double Mixture::eval1(double x) const {
  return kern::gauss_pdf_dot(x, 0.0, w_.data(), mu_.data(), cov_.data(), w_.size());
}

double Mixture::eval(const Eigen::VectorXd& x) const {
  if (dim_ == 1) return eval1(x[0]);
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += w_[i] * pair_phi(x, mean(i), cov(i));
  return s;
}

HybridMixture::HybridMixture(int n_modes, int dim) : dim_(dim) {
  if (n_modes < 1) throw std::invalid_argument("HybridMixture: n_modes must be >= 1");
  modes_.assign(static_cast<std::size_t>(n_modes), Mixture(dim));
}

std::size_t HybridMixture::component_count() const {
  std::size_t n = 0;
  for (const auto& m : modes_) n += m.size();
  return n;
}

double HybridMixture::total_weight() const {
  double s = 0.0;
  for (const auto& m : modes_) s += m.total_weight();
  return s;
}

WeightedGaussian product(const WeightedGaussian& a, const WeightedGaussian& b) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("product: dimension mismatch");
  const Eigen::Index n = a.mean.size();
  Eigen::MatrixXd S = a.cov + b.cov;
  const double scale = a.weight * b.weight * pair_phi(a.mean, b.mean, S);
  if (n == 1) {
    const double va = a.cov(0, 0);
    const double vb = b.cov(0, 0);
    const double vsum = va + vb;
    Eigen::VectorXd mean(1);
    mean[0] = (a.mean[0] * vb + b.mean[0] * va) / vsum;
    Eigen::MatrixXd cov(1, 1);
    cov(0, 0) = va * vb / vsum;
    return WeightedGaussian{scale, std::move(mean), std::move(cov)};
  }
  // (Sa^-1 + Sb^-1)^-1 = Sa (Sa+Sb)^-1 Sb, and the matching mean mix
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericError("product: covariance sum not positive definite");
  Eigen::VectorXd mean = b.cov * llt.solve(a.mean) + a.cov * llt.solve(b.mean);
  Eigen::MatrixXd cov = a.cov * llt.solve(b.cov);
  cov = 0.5 * (cov + cov.transpose()).eval();
  return WeightedGaussian{scale, std::move(mean), std::move(cov)};
}

WeightedGaussian affine_pushforward(const WeightedGaussian& g, const Eigen::MatrixXd& A,
                                    const Eigen::VectorXd& f) {
  const Eigen::Index n = g.mean.size();
  if (A.rows() != n || A.cols() != n || f.size() != n)
    throw std::invalid_argument("affine_pushforward: dimension mismatch");
  if (n == 1) {
    const double a = A(0, 0);
    if (!(std::abs(a) > kEpsPd)) throw NumericError("affine_pushforward: singular map");
    Eigen::VectorXd mean(1);
    mean[0] = (g.mean[0] - f[0]) / a;
    Eigen::MatrixXd cov(1, 1);
    cov(0, 0) = g.cov(0, 0) / (a * a);
    return WeightedGaussian{g.weight / std::abs(a), std::move(mean), std::move(cov)};
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  const double det = lu.determinant();
  if (!(std::abs(det) > kEpsPd)) throw NumericError("affine_pushforward: singular map");
  Eigen::VectorXd mean = lu.solve(g.mean - f);
  Eigen::MatrixXd cov = lu.solve(lu.solve(g.cov).transpose()).transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  return WeightedGaussian{g.weight / std::abs(det), std::move(mean), std::move(cov)};
}

namespace {

double inner_mode_oneway(const Mixture& a, const Mixture& b) {
  double s = 0.0;
  if (a.dim() == 1) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      s += a.weight(i) * kern::gauss_pdf_dot(a.mu1(i), a.var1(i), b.w_data(), b.mu_data(),
                                             b.var_data(), b.size());
    }
    return s;
  }
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      s += a.weight(i) * b.weight(j) * pair_phi(a.mean(i), b.mean(j), a.cov(i) + b.cov(j));
  return s;
}

}  // namespace

double inner_product(const HybridMixture& a, const HybridMixture& b) {
  if (a.n_modes() != b.n_modes() || a.dim() != b.dim())
    throw std::invalid_argument("inner_product: shape mismatch");
  double s_ab = 0.0;
  double s_ba = 0.0;
  for (int q = 0; q < a.n_modes(); ++q) {
    s_ab += inner_mode_oneway(a.mode(q), b.mode(q));
    s_ba += inner_mode_oneway(b.mode(q), a.mode(q));
  }
  return 0.5 * (s_ab + s_ba);
}

IntervalMassResult interval_mass_ex(const HybridMixture& m, const Box& box,
                                    const std::vector<int>& modes) {
  if (box.lo.size() != m.dim() || box.hi.size() != m.dim())
    throw std::invalid_argument("interval_mass: box dimension mismatch");
  for (Eigen::Index d = 0; d < box.lo.size(); ++d)
    if (!(box.lo[d] < box.hi[d])) throw std::invalid_argument("interval_mass: empty box");
  IntervalMassResult r;
  for (int q : modes) {
    if (q < 0 || q >= m.n_modes()) throw std::invalid_argument("interval_mass: mode out of range");
    const Mixture& mix = m.mode(q);
    if (m.dim() == 1) {
      for (std::size_t i = 0; i < mix.size(); ++i)
        r.value += mix.weight(i) *
                   cdf_interval(mix.mu1(i), std::sqrt(mix.var1(i)), box.lo[0], box.hi[0]);
      continue;
    }
    for (std::size_t i = 0; i < mix.size(); ++i) {
      const auto cov = mix.cov(i);
      double max_off = 0.0;
      for (Eigen::Index r0 = 0; r0 < cov.rows(); ++r0)
        for (Eigen::Index c0 = 0; c0 < cov.cols(); ++c0)
          if (r0 != c0) max_off = std::max(max_off, std::abs(cov(r0, c0)));
      if (max_off <= kEpsPd) {
        double p = 1.0;
        for (Eigen::Index d = 0; d < m.dim(); ++d)
          p *= cdf_interval(mix.mean(i)[d], std::sqrt(cov(d, d)), box.lo[d], box.hi[d]);
        r.value += mix.weight(i) * p;
      } else {
        r.value += mix.weight(i) * genz_box_probability(mix.mean(i), cov, box.lo, box.hi);
        r.approximate = true;
      }
    }
  }
  return r;
}

double interval_mass(const HybridMixture& m, const Box& box, const std::vector<int>& modes) {
  return interval_mass_ex(m, box, modes).value;
}

WeightedGaussian moment_match(const WeightedGaussian& a, const WeightedGaussian& b) {
  const double W = a.weight + b.weight;
  if (std::abs(W) <= kEpsPd * (std::abs(a.weight) + std::abs(b.weight)))
    throw NumericError("moment_match: cancelling weights");
  Eigen::VectorXd mean = (a.weight * a.mean + b.weight * b.mean) / W;
  const Eigen::VectorXd da = a.mean - mean;
  const Eigen::VectorXd db = b.mean - mean;
  Eigen::MatrixXd cov = (a.weight * (a.cov + da * da.transpose()) +
                         b.weight * (b.cov + db * db.transpose())) /
                        W;
  cov = 0.5 * (cov + cov.transpose()).eval();
  return WeightedGaussian{W, std::move(mean), std::move(cov)};
}

Mixture merge_consecutive(const Mixture& m, int block) {
  if (m.dim() != 1) throw NumericError("merge_consecutive: scalar mixtures only");
  if (block < 1) throw NumericError("merge_consecutive: block must be positive");
  Mixture out(1);
  out.reserve(m.size() / static_cast<std::size_t>(block) + 1);
  for (std::size_t base = 0; base < m.size(); base += static_cast<std::size_t>(block)) {
    const std::size_t end = std::min(base + static_cast<std::size_t>(block), m.size());
    double w = 0.0;
    for (std::size_t i = base; i < end; ++i) w += m.weight(i);
    if (w == 0.0) continue;
    double mean = 0.0;
    for (std::size_t i = base; i < end; ++i) mean += m.weight(i) * m.mu1(i);
    mean /= w;
    double v = 0.0;
    for (std::size_t i = base; i < end; ++i) {
      const double d = m.mu1(i) - mean;
      v += m.weight(i) * (m.var1(i) + d * d);
    }
    v /= w;
    if (!(v > kEpsPd)) continue;
    out.add1(w, mean, v);
  }
  return out;
}

namespace {

// Greedy pairwise ISE reduction, 1-D: batch kernel rows with cached row
// minima.  cost(i,j) is the exact integral of the squared difference between
// the pair and its moment-matched merge.
class Reduce1D {
 public:
  Reduce1D(const Mixture& src, std::size_t target, ReduceStats* stats)
      : n_(src.size()), target_(target), stats_(stats) {
    w_.assign(src.w_data(), src.w_data() + n_);
    mu_.assign(src.mu_data(), src.mu_data() + n_);
    var_.assign(src.var_data(), src.var_data() + n_);
    alive_.assign(n_, 1);
    self_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) self_[i] = self_j(i);
    best_j_.assign(n_, -1);
    best_cost_.assign(n_, kInf);
    scratch_.resize(6 * n_);
  }

  Mixture run() {
    std::size_t alive = n_;
    for (std::size_t i = 0; i < n_; ++i) refresh_row(i);
    while (alive > target_) {
      std::size_t a = pick_min();
      const auto b = static_cast<std::size_t>(best_j_[a]);
      if (stats_) stats_->merge_costs.push_back(std::sqrt(std::max(best_cost_[a], 0.0)));
      merge_into(a, b);
      --alive;
      refresh_row(a);
      for (std::size_t k = 0; k < n_; ++k) {
        if (!alive_[k] || k == a) continue;
        const auto bj = static_cast<std::size_t>(best_j_[k]);
        if (bj == a || bj == b) {
          refresh_row(k);
        } else {
          const double c = pair_cost(k, a);
          if (c < best_cost_[k]) {
            best_cost_[k] = c;
            best_j_[k] = static_cast<int>(a);
          }
        }
      }
    }
    Mixture out(1);
    out.reserve(alive);
    for (std::size_t i = 0; i < n_; ++i)
      if (alive_[i]) out.add1(w_[i], mu_[i], var_[i]);
    return out;
  }

 private:
  double self_j(std::size_t i) const { return 1.0 / (2.0 * std::sqrt(kPiLocal * var_[i])); }

  static constexpr double kPiLocal = 3.141592653589793238462643383279502884;

  // merged moments; returns false when the pair cannot be merged
  bool merged(std::size_t i, std::size_t j, double& W, double& m, double& v) const {
    W = w_[i] + w_[j];
    if (std::abs(W) <= 1e-14 * (std::abs(w_[i]) + std::abs(w_[j]))) return false;
    m = (w_[i] * mu_[i] + w_[j] * mu_[j]) / W;
    const double di = mu_[i] - m;
    const double dj = mu_[j] - m;
    v = (w_[i] * (var_[i] + di * di) + w_[j] * (var_[j] + dj * dj)) / W;
    return v > kEpsPd;
  }

  double pair_cost(std::size_t i, std::size_t j) const {
    double W;
    double m;
    double v;
    if (!merged(i, j, W, m, v)) return kInf;
    const double j_mm = 1.0 / (2.0 * std::sqrt(kPiLocal * v));
    const double j_ij = pair_phi1(mu_[i] - mu_[j], var_[i] + var_[j]);
    const double j_im = pair_phi1(mu_[i] - m, var_[i] + v);
    const double j_jm = pair_phi1(mu_[j] - m, var_[j] + v);
    return w_[i] * w_[i] * self_[i] + w_[j] * w_[j] * self_[j] + W * W * j_mm +
           2.0 * w_[i] * w_[j] * j_ij - 2.0 * w_[i] * W * j_im - 2.0 * w_[j] * W * j_jm;
  }

  static double pair_phi1(double diff, double vsum) {
    double out;
    const double one = 1.0;
    kern::gauss_pdf_v(0.0, 0.0, &one, &diff, &vsum, &out, 1);
    return out;
  }

  // recompute best partner for row k over all alive j != k, batched
  void refresh_row(std::size_t k) {
    idx_.clear();
    for (std::size_t j = 0; j < n_; ++j)
      if (alive_[j] && j != k) idx_.push_back(j);
    const std::size_t m = idx_.size();
    if (m == 0) {
      best_j_[k] = -1;
      best_cost_[k] = kInf;
      return;
    }
    double* diff_kj = scratch_.data();
    double* vsum_kj = diff_kj + m;
    double* diff_km = vsum_kj + m;
    double* vsum_km = diff_km + m;
    double* diff_jm = vsum_km + m;
    double* vsum_jm = diff_jm + m;
    base_.resize(m);
    coef_kj_.resize(m);
    coef_km_.resize(m);
    coef_jm_.resize(m);
    for (std::size_t t = 0; t < m; ++t) {
      const std::size_t j = idx_[t];
      double W;
      double mm;
      double vv;
      if (!merged(k, j, W, mm, vv)) {
        base_[t] = kInf;
        diff_kj[t] = 0.0;
        vsum_kj[t] = 1.0;
        diff_km[t] = 0.0;
        vsum_km[t] = 1.0;
        diff_jm[t] = 0.0;
        vsum_jm[t] = 1.0;
        coef_kj_[t] = 0.0;
        coef_km_[t] = 0.0;
        coef_jm_[t] = 0.0;
        continue;
      }
      base_[t] = w_[k] * w_[k] * self_[k] + w_[j] * w_[j] * self_[j] +
                 W * W / (2.0 * std::sqrt(kPiLocal * vv));
      diff_kj[t] = mu_[k] - mu_[j];
      vsum_kj[t] = var_[k] + var_[j];
      coef_kj_[t] = 2.0 * w_[k] * w_[j];
      diff_km[t] = mu_[k] - mm;
      vsum_km[t] = var_[k] + vv;
      coef_km_[t] = -2.0 * w_[k] * W;
      diff_jm[t] = mu_[j] - mm;
      vsum_jm[t] = var_[j] + vv;
      coef_jm_[t] = -2.0 * w_[j] * W;
    }
    term_.resize(3 * m);
    kern::gauss_pdf_v(0.0, 0.0, coef_kj_.data(), diff_kj, vsum_kj, term_.data(), m);
    kern::gauss_pdf_v(0.0, 0.0, coef_km_.data(), diff_km, vsum_km, term_.data() + m, m);
    kern::gauss_pdf_v(0.0, 0.0, coef_jm_.data(), diff_jm, vsum_jm, term_.data() + 2 * m, m);
    double best = kInf;
    int arg = -1;
    for (std::size_t t = 0; t < m; ++t) {
      const double c = base_[t] + term_[t] + term_[m + t] + term_[2 * m + t];
      if (c < best) {
        best = c;
        arg = static_cast<int>(idx_[t]);
      }
    }
    best_j_[k] = arg;
    best_cost_[k] = best;
  }

  std::size_t pick_min() const {
    double best = kInf;
    std::size_t arg = 0;
    bool found = false;
    for (std::size_t i = 0; i < n_; ++i) {
      if (alive_[i] && best_j_[i] >= 0 && best_cost_[i] < best) {
        best = best_cost_[i];
        arg = i;
        found = true;
      }
    }
    if (!found) throw NumericError("reduce: no mergeable pair (all costs infinite)");
    return arg;
  }

  void merge_into(std::size_t a, std::size_t b) {
    double W;
    double m;
    double v;
    if (!merged(a, b, W, m, v)) throw NumericError("reduce: degenerate merge");
    w_[a] = W;
    mu_[a] = m;
    var_[a] = v;
    self_[a] = self_j(a);
    alive_[b] = 0;
    best_j_[b] = -1;
    best_cost_[b] = kInf;
  }

  std::size_t n_;
  std::size_t target_;
  ReduceStats* stats_;
  std::vector<double> w_, mu_, var_, self_, best_cost_, base_, term_;
  std::vector<double> coef_kj_, coef_km_, coef_jm_, scratch_;
  std::vector<char> alive_;
  std::vector<int> best_j_;
  std::vector<std::size_t> idx_;
};

// general-n fallback: same greedy, scalar cost evaluation
Mixture reduce_nd(const Mixture& src, std::size_t target, ReduceStats* stats) {
  std::vector<WeightedGaussian> comps;
  comps.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) comps.push_back(src.component(i));
  auto cost = [&](const WeightedGaussian& a, const WeightedGaussian& b) {
    const double W = a.weight + b.weight;
    if (std::abs(W) <= 1e-14 * (std::abs(a.weight) + std::abs(b.weight))) return kInf;
    WeightedGaussian m = moment_match(a, b);
    Eigen::LLT<Eigen::MatrixXd> llt(m.cov);
    if (llt.info() != Eigen::Success) return kInf;
    const double j_aa = pair_phi(a.mean, a.mean, 2.0 * a.cov);
    const double j_bb = pair_phi(b.mean, b.mean, 2.0 * b.cov);
    const double j_mm = pair_phi(m.mean, m.mean, 2.0 * m.cov);
    const double j_ab = pair_phi(a.mean, b.mean, a.cov + b.cov);
    const double j_am = pair_phi(a.mean, m.mean, a.cov + m.cov);
    const double j_bm = pair_phi(b.mean, m.mean, b.cov + m.cov);
    return a.weight * a.weight * j_aa + b.weight * b.weight * j_bb + W * W * j_mm +
           2.0 * a.weight * b.weight * j_ab - 2.0 * a.weight * W * j_am -
           2.0 * b.weight * W * j_bm;
  };
  std::vector<char> alive(comps.size(), 1);
  std::size_t n_alive = comps.size();
  while (n_alive > target) {
    double best = kInf;
    std::size_t bi = 0;
    std::size_t bj = 0;
    bool found = false;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < comps.size(); ++j) {
        if (!alive[j]) continue;
        const double c = cost(comps[i], comps[j]);
        if (c < best) {
          best = c;
          bi = i;
          bj = j;
          found = true;
        }
      }
    }
    if (!found) throw NumericError("reduce: no mergeable pair (all costs infinite)");
    if (stats) stats->merge_costs.push_back(std::sqrt(std::max(best, 0.0)));
    comps[bi] = moment_match(comps[bi], comps[bj]);
    alive[bj] = 0;
    --n_alive;
  }
  Mixture out(src.dim());
  out.reserve(n_alive);
  for (std::size_t i = 0; i < comps.size(); ++i)
    if (alive[i]) out.add_unchecked(comps[i].weight, comps[i].mean, comps[i].cov);
  return out;
}

}  // namespace

HybridMixture reduce(const HybridMixture& m, int target, ReduceStats* stats) {
  if (target < 1) throw std::invalid_argument("reduce: target must be >= 1");
  HybridMixture out(m.n_modes(), m.dim());
  const auto t = static_cast<std::size_t>(target);
  for (int q = 0; q < m.n_modes(); ++q) {
    const Mixture& src = m.mode(q);
    if (src.size() <= t) {
      out.mode(q) = src;
    } else if (m.dim() == 1) {
      out.mode(q) = Reduce1D(src, t, stats).run();
    } else {
      out.mode(q) = reduce_nd(src, t, stats);
    }
  }
  return out;
}

HybridMixture prune(const HybridMixture& m, double rel_tol) {
  double total_abs = 0.0;
  for (int q = 0; q < m.n_modes(); ++q) {
    const Mixture& mix = m.mode(q);
    for (std::size_t i = 0; i < mix.size(); ++i) total_abs += std::abs(mix.weight(i));
  }
  const double thresh = rel_tol * total_abs;
  HybridMixture out(m.n_modes(), m.dim());
  for (int q = 0; q < m.n_modes(); ++q) {
    const Mixture& mix = m.mode(q);
    out.mode(q).reserve(mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
      if (std::abs(mix.weight(i)) > thresh) {
        if (m.dim() == 1)
          out.mode(q).add1(mix.weight(i), mix.mu1(i), mix.var1(i));
        else
          out.mode(q).add_unchecked(mix.weight(i), mix.mean(i), mix.cov(i));
      }
    }
  }
  return out;
}

}  // namespace podreach::gmix
