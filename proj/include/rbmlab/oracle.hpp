#pragma once

// Exact moment computations for the one-dimensional linear family
//   b0(x) = -a x,  b(z) = -kappa z,  Gaussian initial data N(m0, v0),
// plus the iterated exponential integrals A_k^l(t) of the entropy hierarchy.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rbmlab {

struct LinearParams {
  double a = 1.0;
  double kappa = 0.5;
  double sigma = 1.0;
  double m0 = 0.0;
  double v0 = 1.0;
};

void validate(const LinearParams& params);

struct MeanFieldMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Moments of the McKean-Vlasov law: m(t) = m0 e^{-a t} and
/// v(t) = s + (v0 - s) e^{-2 (a + kappa) t} with s = sigma / (a + kappa).
MeanFieldMoments meanfield_moments_linear(const LinearParams& params, double t);

/// Moments of an exchangeable Gaussian system: common mean, on-diagonal
/// variance v, off-diagonal covariance c.
struct ExchangeableMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
  double covariance = 0.0;

  Eigen::MatrixXd matrix() const;
};

/// Full N-particle system, closed form through the two eigenmodes of the
/// exchangeable drift matrix (mean mode and deviation modes).
ExchangeableMoments full_cov_linear(const LinearParams& params, std::size_t n, double t);

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Same quantity through a dense Van Loan matrix exponential; the independent
/// cross-check for full_cov_linear.
GaussianMoments full_cov_linear_dense(const LinearParams& params, std::size_t n, double t);

/// Exact transition of dX = A X dt + sqrt(2 sigma) dW over a time h:
/// X(h) ~ N(M X(0), Q) with M = e^{A h}, Q = int_0^h e^{A s} 2 sigma e^{A^T s} ds.
struct OuTransition {
  Eigen::MatrixXd propagator;
  Eigen::MatrixXd noise_cov;
};

/// Computed from the 2n x 2n Van Loan block exponential on h / 2^j with
/// |A|_1 h / 2^j <= 1/2, then composed j times; the block exponential itself
/// uses scaling and squaring with Pade approximation.
OuTransition ou_transition(const Eigen::MatrixXd& drift, double sigma, double h);

/// How each batch interval is advanced in rbm_cov_linear.
struct IntervalIntegrator {
  enum class Kind { exact, euler_maruyama };
  Kind kind = Kind::exact;
  std::size_t substeps = 1;  // euler_maruyama only

  static IntervalIntegrator exact() { return {}; }
  static IntervalIntegrator euler_maruyama(std::size_t substeps) {
    return {Kind::euler_maruyama, substeps};
  }
};

/// First and second moments of the RBM law after `steps` batch periods.
/// Each period averages the per-division Gaussian update over every division
/// with its exact probability; since the update is affine in (mean, second
/// moment), this is exact for the mixture. Throws CapacityError for n > 8.
GaussianMoments rbm_cov_linear(const LinearParams& params, std::size_t n, std::size_t p,
                               double tau, std::size_t steps,
                               IntervalIntegrator integrator = IntervalIntegrator::exact());

/// KL(N(m1, S1) || N(m2, S2)). Throws DomainError if S2 is not positive
/// definite; returns +inf if S1 is singular.
double gaussian_kl(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1,
                   const Eigen::VectorXd& m2, const Eigen::MatrixXd& s2);
double gaussian_kl(double m1, double v1, double m2, double v2);

/// KL between the k-marginal of an exchangeable Gaussian (v, c) and the
/// product reference N(reference_mean, reference_v)^{(x) k}.
double k_marginal_exchangeable_kl(double v, double c, double reference_v, std::size_t n,
                                  std::size_t k, double mean = 0.0,
                                  double reference_mean = 0.0);

/// A[k][l] on a time grid, for 1 <= k <= k_max and k <= l <= l_max.
class HierarchyTable {
 public:
  HierarchyTable(double gamma, std::size_t k_max, std::size_t l_max,
                 std::vector<double> times);

  double gamma() const { return gamma_; }
  std::size_t k_max() const { return k_max_; }
  std::size_t l_max() const { return l_max_; }
  const std::vector<double>& times() const { return times_; }

  double& at(std::size_t k, std::size_t l, std::size_t t_index);
  double at(std::size_t k, std::size_t l, std::size_t t_index) const;

 private:
  std::size_t offset(std::size_t k, std::size_t l, std::size_t t_index) const;

  double gamma_;
  std::size_t k_max_;
  std::size_t l_max_;
  std::vector<double> times_;
  std::vector<double> values_;
};

/// A_k^l(t) via the ODE chain d/dt A_k^l = gamma k (A_{k+1}^l - A_k^l),
/// A_k^l(0) = 0, A_{l+1}^l = 1, integrated with step-doubling RK4 (local error
/// control relative 1e-10 with an absolute floor of 1e-14, which keeps the
/// global relative error below 1e-8 on the supported grids).
HierarchyTable hierarchy_table(double gamma, std::size_t k_max, std::size_t l_max,
                               const std::vector<double>& times);

struct HierarchyViolation {
  std::string bound;  // "pointwise" or "moment_sum"
  std::size_t k = 0;
  std::size_t l = 0;  // 0 for moment_sum rows
  int r = -1;         // -1 for pointwise rows
  double t = 0.0;
  double value = 0.0;
  double limit = 0.0;
};

struct HierarchyCheck {
  std::size_t pointwise_checked = 0;
  std::size_t sums_checked = 0;
  double max_pointwise_excess = 0.0;  // max of A - bound (may be negative)
  double max_sum_excess = 0.0;
  std::vector<HierarchyViolation> violations;

  bool ok() const { return violations.empty(); }
};

inline constexpr double kPointwiseSlack = 1e-8;
inline constexpr double kSumSlack = 1e-6;

/// Pointwise bound A_k^l(t) <= exp(-2 (l+1) (e^{-gamma t} - k/(l+1))_+^2) and
/// the moment bound sum_{l=k}^{l_max} l^r A_k^l(t) <= (k+r)!/(k-1)! (e^{gamma (r+1) t} - 1)/(r+1).
HierarchyCheck hierarchy_bound_check(const HierarchyTable& table, const std::vector<int>& r_list);

double hierarchy_pointwise_bound(double gamma, std::size_t k, std::size_t l, double t);
double hierarchy_sum_bound(double gamma, std::size_t k, int r, double t);

}  // namespace rbmlab
