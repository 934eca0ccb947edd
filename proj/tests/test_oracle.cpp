#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <functional>

#include "rbmlab/errors.hpp"
#include "rbmlab/metrics.hpp"
#include "rbmlab/oracle.hpp"

using namespace rbmlab;

namespace {

LinearParams base() { return LinearParams{}; }

// A_k^l(t) is the probability that a Yule process with per-capita birth rate
// gamma, started from k individuals, has reached l + 1 by time t. The
// population at t is negative binomial, so the tail is an incomplete beta.
double yule_tail(double gamma, std::size_t k, std::size_t l, double t) {
  if (t == 0.0) return 0.0;
  const double q = std::exp(-gamma * t);
  return boost::math::ibetac(static_cast<double>(k), static_cast<double>(l + 1 - k), q);
}

// Nested integral definition evaluated by Gauss-Legendre quadrature:
// F_j(s) = int_0^s gamma j e^{-gamma j (s - u)} F_{j+1}(u) du, F_{l+1} = 1.
double nested_quadrature(double gamma, std::size_t k, std::size_t l, double t) {
  std::function<double(std::size_t, double)> f = [&](std::size_t j, double s) -> double {
    if (j == l + 1) return 1.0;
    if (s == 0.0) return 0.0;
    const double rate = gamma * static_cast<double>(j);
    return boost::math::quadrature::gauss<double, 30>::integrate(
        [&](double u) { return rate * std::exp(-rate * (s - u)) * f(j + 1, u); }, 0.0, s);
  };
  return f(k, t);
}

}  // namespace

TEST(MeanField, StationaryWithoutCoupling) {
  LinearParams p = base();
  p.kappa = 0.0;
  for (double t : {0.0, 0.5, 3.0}) EXPECT_NEAR(meanfield_moments_linear(p, t).variance, 1.0, 1e-15);
}

TEST(MeanField, VarianceAtOne) {
  EXPECT_NEAR(meanfield_moments_linear(base(), 1.0).variance, 2.0 / 3.0 + std::exp(-3.0) / 3.0, 1e-14);
  EXPECT_NEAR(meanfield_moments_linear(base(), 1.0).variance, 0.68327, 1e-5);
}

TEST(MeanField, MeanDecay) {
  LinearParams p = base();
  p.m0 = 2.0;
  EXPECT_NEAR(meanfield_moments_linear(p, std::log(2.0)).mean, 1.0, 1e-14);
}

TEST(LinearParams, Validation) {
  LinearParams p = base();
  p.v0 = -1;
  EXPECT_THROW(validate(p), ValidationError);
  p = base();
  p.sigma = -1;
  EXPECT_THROW(validate(p), ValidationError);
}

TEST(FullCov, Decoupled) {
  LinearParams p = base();
  p.kappa = 0.0;
  p.v0 = 2.0;
  const auto m = full_cov_linear(p, 6, 0.7);
  EXPECT_NEAR(m.covariance, 0.0, 1e-15);
  EXPECT_NEAR(m.variance, 1.0 + std::exp(-1.4), 1e-14);
}

TEST(FullCov, InitialCondition) {
  const auto m = full_cov_linear(base(), 8, 0.0);
  EXPECT_DOUBLE_EQ(m.variance, 1.0);
  EXPECT_DOUBLE_EQ(m.covariance, 0.0);
}

TEST(FullCov, ClosedFormMatchesMatrixExponential) {
  for (double a : {0.0, 1.0, 2.5})
    for (double kappa : {0.0, 0.5, 3.0})
      for (std::size_t n : {2u, 3u, 8u, 17u})
        for (double t : {0.1, 1.0, 4.0}) {
          LinearParams p{a, kappa, 0.8, 0.3, 1.7};
          const auto closed = full_cov_linear(p, n, t);
          const auto dense = full_cov_linear_dense(p, n, t);
          EXPECT_LT((closed.matrix() - dense.cov).cwiseAbs().maxCoeff(), 1e-10)
              << a << " " << kappa << " " << n << " " << t;
          EXPECT_NEAR(closed.mean, dense.mean(0), 1e-12);
        }
}

TEST(FullCov, ConvergesToMeanFieldAtRateOneOverN) {
  const double vbar = meanfield_moments_linear(base(), 1.0).variance;
  std::vector<RatePoint> dv, dc;
  for (std::size_t n : {4u, 8u, 16u, 32u, 64u}) {
    const auto m = full_cov_linear(base(), n, 1.0);
    dv.push_back({static_cast<double>(n), std::abs(m.variance - vbar), 0});
    dc.push_back({static_cast<double>(n), std::abs(m.covariance), 0});
  }
  EXPECT_NEAR(regress_rate(dv).slope, -1.0, 0.1);
  EXPECT_NEAR(regress_rate(dc).slope, -1.0, 0.1);
}

TEST(OuTransition, ScalarClosedForm) {
  Eigen::MatrixXd A(1, 1);
  A << -1.5;
  const auto tr = ou_transition(A, 0.7, 0.3);
  EXPECT_NEAR(tr.propagator(0, 0), std::exp(-0.45), 1e-14);
  EXPECT_NEAR(tr.noise_cov(0, 0), 0.7 / 1.5 * (1 - std::exp(-0.9)), 1e-13);
}

TEST(RbmCov, SingleBatchEqualsFull) {
  const auto rbm = rbm_cov_linear(base(), 6, 6, 0.1, 10);
  const auto full = full_cov_linear(base(), 6, 1.0);
  EXPECT_LT((rbm.cov - full.matrix()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RbmCov, DecoupledIsDiagonalOu) {
  LinearParams p = base();
  p.kappa = 0.0;
  p.v0 = 3.0;
  for (std::size_t pp : {2u, 4u})
    for (double tau : {0.1, 0.25}) {
      const auto rbm = rbm_cov_linear(p, 4, pp, tau, static_cast<std::size_t>(std::llround(1.0 / tau)));
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          EXPECT_NEAR(rbm.cov(i, j), i == j ? 1.0 + 2.0 * std::exp(-2.0) : 0.0, 1e-12);
    }
}

TEST(RbmCov, SymmetricPsdAndExchangeable) {
  const auto rbm = rbm_cov_linear(base(), 8, 2, 0.2, 5);
  EXPECT_LT((rbm.cov - rbm.cov.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rbm.cov);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  const double v = rbm.cov(0, 0), c = rbm.cov(0, 1);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(rbm.cov(i, j), i == j ? v : c, 1e-10);
}

TEST(RbmCov, ConvergesToFullAsTauShrinks) {
  const auto full = full_cov_linear(base(), 8, 1.0).matrix();
  double prev = 1e9;
  std::vector<RatePoint> gaps;
  for (double tau : {0.2, 0.1, 0.05, 0.025}) {
    const auto rbm = rbm_cov_linear(base(), 8, 2, tau, static_cast<std::size_t>(std::llround(1.0 / tau)));
    const double gap = (rbm.cov - full).cwiseAbs().maxCoeff();
    EXPECT_LT(gap, prev);
    prev = gap;
    gaps.push_back({tau, std::abs(rbm.cov(0, 0) - full(0, 0)), 0});
  }
  const double slope = regress_rate(gaps).slope;
  EXPECT_GE(slope, 0.8);
  EXPECT_LE(slope, 1.2);
}

TEST(RbmCov, EulerMaruyamaConvergesToExact) {
  const auto exact = rbm_cov_linear(base(), 4, 2, 0.2, 5);
  const auto em10 = rbm_cov_linear(base(), 4, 2, 0.2, 5, IntervalIntegrator::euler_maruyama(10));
  const auto em100 = rbm_cov_linear(base(), 4, 2, 0.2, 5, IntervalIntegrator::euler_maruyama(100));
  const double e10 = (em10.cov - exact.cov).cwiseAbs().maxCoeff();
  const double e100 = (em100.cov - exact.cov).cwiseAbs().maxCoeff();
  EXPECT_LT(e100, e10 / 5.0);
}

TEST(RbmCov, CapacityGuard) { EXPECT_THROW(rbm_cov_linear(base(), 10, 2, 0.1, 1), CapacityError); }

TEST(GaussianKl, Examples) {
  EXPECT_NEAR(gaussian_kl(0.0, 1.0, 0.0, 1.0), 0.0, 1e-16);
  EXPECT_NEAR(gaussian_kl(0.0, 2.0, 0.0, 1.0), 0.5 * (2.0 - 1.0 - std::log(2.0)), 1e-15);
  EXPECT_NEAR(gaussian_kl(0.0, 2.0, 0.0, 1.0), 0.15343, 1e-5);
  EXPECT_NEAR(gaussian_kl(1.0, 1.0, 0.0, 1.0), 0.5, 1e-15);
}

TEST(GaussianKl, MatrixFormAndErrors) {
  Eigen::MatrixXd s1(2, 2), s2(2, 2);
  s1 << 2.0, 0.3, 0.3, 1.0;
  s2 << 1.0, 0.0, 0.0, 1.5;
  Eigen::VectorXd m1(2), m2(2);
  m1 << 0.1, -0.2;
  m2 << 0.0, 0.0;
  // Direct formula: 1/2 (tr(S2^-1 S1) + dm' S2^-1 dm - k + ln det S2 - ln det S1).
  const Eigen::MatrixXd inv = s2.inverse();
  const Eigen::VectorXd dm = m2 - m1;
  const double direct = 0.5 * ((inv * s1).trace() + dm.dot(inv * dm) - 2.0 + std::log(s2.determinant()) -
                               std::log(s1.determinant()));
  EXPECT_NEAR(gaussian_kl(m1, s1, m2, s2), direct, 1e-14);
  EXPECT_GT(gaussian_kl(m1, s1, m2, s2), 0.0);

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(gaussian_kl(m1, s1, m2, bad), DomainError);
  Eigen::MatrixXd singular(2, 2);
  singular << 1.0, 1.0, 1.0, 1.0;
  EXPECT_TRUE(std::isinf(gaussian_kl(m1, singular, m2, s2)));
}

TEST(GaussianKl, TinyDifferencesKeepPrecision) {
  const double eps = 1e-7;
  // KL(N(0, 1+eps) || N(0,1)) = eps^2 / 4 to leading order.
  EXPECT_NEAR(gaussian_kl(0.0, 1.0 + eps, 0.0, 1.0) / (eps * eps / 4.0), 1.0, 1e-6);
}

TEST(KMarginalKl, Reductions) {
  for (std::size_t k = 1; k <= 5; ++k) EXPECT_NEAR(k_marginal_exchangeable_kl(0.7, 0.0, 0.7, 10, k), 0.0, 1e-16);
  EXPECT_NEAR(k_marginal_exchangeable_kl(0.9, 0.05, 0.7, 10, 1), gaussian_kl(0.0, 0.9, 0.0, 0.7), 1e-15);
}

TEST(KMarginalKl, MatchesDenseKl) {
  const std::size_t n = 7, k = 4;
  const double v = 0.8, c = 0.03, ref = 0.75;
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(k, k, c);
  s.diagonal().setConstant(v);
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(k, k) * ref;
  const Eigen::VectorXd m = Eigen::VectorXd::Constant(k, 0.2), m0 = Eigen::VectorXd::Zero(k);
  EXPECT_NEAR(k_marginal_exchangeable_kl(v, c, ref, n, k, 0.2, 0.0), gaussian_kl(m, s, m0, r), 1e-13);
}

TEST(KMarginalKl, NondecreasingInK) {
  const auto full = full_cov_linear(base(), 64, 1.0);
  const double ref = meanfield_moments_linear(base(), 1.0).variance;
  double prev = 0.0;
  for (std::size_t k = 1; k <= 5; ++k) {
    const double kl = k_marginal_exchangeable_kl(full.variance, full.covariance, ref, 64, k);
    EXPECT_GE(kl, prev);
    prev = kl;
  }
}

TEST(KMarginalKl, IndefiniteMarginalIsDomainError) {
  EXPECT_THROW(k_marginal_exchangeable_kl(1.0, -0.5, 1.0, 10, 4), DomainError);
  EXPECT_THROW(k_marginal_exchangeable_kl(1.0, 0.0, 1.0, 3, 4), ValidationError);
}

TEST(Hierarchy, DiagonalClosedForm) {
  const HierarchyTable t = hierarchy_table(1.0, 3, 3, {0.0, 0.5, 1.0});
  EXPECT_NEAR(t.at(1, 1, 2), 1.0 - std::exp(-1.0), 1e-10);
  EXPECT_NEAR(t.at(1, 1, 2), 0.63212, 1e-5);
  for (std::size_t k = 1; k <= 3; ++k) {
    EXPECT_NEAR(t.at(k, k, 1), 1.0 - std::exp(-0.5 * static_cast<double>(k)), 1e-10);
    for (std::size_t l = k; l <= 3; ++l) EXPECT_EQ(t.at(k, l, 0), 0.0);
  }
}

TEST(Hierarchy, MatchesYuleTail) {
  const std::vector<double> times{0.05, 0.3, 1.0, 1.7, 2.0};
  for (double gamma : {0.5, 1.0, 2.0}) {
    const HierarchyTable t = hierarchy_table(gamma, 5, 60, times);
    for (std::size_t k = 1; k <= 5; ++k)
      for (std::size_t l = k; l <= 60; ++l)
        for (std::size_t ti = 0; ti < times.size(); ++ti) {
          const double ref = yule_tail(gamma, k, l, times[ti]);
          EXPECT_NEAR(t.at(k, l, ti), ref, 1e-8 * ref + 1e-13) << gamma << " " << k << " " << l << " " << times[ti];
        }
  }
}

TEST(Hierarchy, MatchesNestedQuadrature) {
  const double gamma = 0.7;
  const std::vector<double> times{0.4, 1.3};
  const HierarchyTable t = hierarchy_table(gamma, 4, 6, times);
  for (std::size_t k = 1; k <= 4; ++k)
    for (std::size_t l = k; l <= std::min<std::size_t>(k + 2, 6); ++l)
      for (std::size_t ti = 0; ti < times.size(); ++ti) {
        const double ref = nested_quadrature(gamma, k, l, times[ti]);
        EXPECT_NEAR(t.at(k, l, ti), ref, 1e-9 * ref + 1e-14) << k << " " << l << " " << times[ti];
      }
}

TEST(Hierarchy, PointwiseBoundExample) {
  EXPECT_DOUBLE_EQ(hierarchy_pointwise_bound(1.0, 1, 1, 1.0), 1.0);
  EXPECT_LT(hierarchy_pointwise_bound(1.0, 1, 20, 0.1), 1e-3);
}

TEST(Hierarchy, SumBoundExample) {
  EXPECT_NEAR(hierarchy_sum_bound(1.0, 1, 0, 1.0), std::exp(1.0) - 1.0, 1e-14);
  EXPECT_NEAR(hierarchy_sum_bound(1.0, 2, 1, 1.0), 6.0 * (std::exp(2.0) - 1.0) / 2.0, 1e-12);
  const HierarchyTable t = hierarchy_table(1.0, 1, 60, {1.0});
  // Summing A_1^l over l gives the mean Yule population minus one, e^t - 1,
  // so the r = 0, k = 1 bound is attained in the limit.
  double sum = 0.0;
  for (std::size_t l = 1; l <= 60; ++l) sum += t.at(1, l, 0);
  EXPECT_NEAR(sum, std::exp(1.0) - 1.0, 1e-8);
}

TEST(Hierarchy, AcceptanceGridHasNoViolations) {
  std::vector<double> times(41);
  for (int i = 0; i < 41; ++i) times[i] = 2.0 * i / 40.0;
  const HierarchyTable t = hierarchy_table(1.0, 5, 60, times);
  const HierarchyCheck check = hierarchy_bound_check(t, {0, 1});
  EXPECT_TRUE(check.ok());
  EXPECT_EQ(check.pointwise_checked, 41u * (60 + 59 + 58 + 57 + 56));
  EXPECT_EQ(check.sums_checked, 41u * 5 * 2);
  EXPECT_LE(check.max_pointwise_excess, kPointwiseSlack);
}

TEST(Hierarchy, ZeroTimeSumsVanish) {
  const HierarchyTable t = hierarchy_table(1.0, 3, 10, {0.0});
  const HierarchyCheck check = hierarchy_bound_check(t, {0, 1, 2});
  EXPECT_TRUE(check.ok());
  EXPECT_LE(check.max_sum_excess, kSumSlack);
}

TEST(Hierarchy, DetectsViolationsOfPerturbedTable) {
  HierarchyTable t = hierarchy_table(1.0, 2, 30, {0.2});
  t.at(1, 25, 0) += 0.5;
  EXPECT_FALSE(hierarchy_bound_check(t, {0}).ok());
}
