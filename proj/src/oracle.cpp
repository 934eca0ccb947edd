#include "rbmlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <unsupported/Eigen/MatrixFunctions>

#include "rbmlab/batching.hpp"
#include "rbmlab/errors.hpp"

namespace rbmlab {

void validate(const LinearParams& params) {
  if (!(params.a >= 0.0) || !(params.kappa >= 0.0) || !(params.sigma >= 0.0))
    throw ValidationError("linear parameters a, kappa, sigma must be >= 0");
  if (!(params.v0 >= 0.0)) throw ValidationError("initial variance v0 must be >= 0");
  if (!std::isfinite(params.m0)) throw ValidationError("initial mean must be finite");
}

namespace {

// Solution of s' = 2 lambda s + 2 sigma, s(0) = s0.
double mode_variance(double lambda, double sigma, double s0, double t) {
  if (lambda == 0.0) return s0 + 2.0 * sigma * t;
  return s0 * std::exp(2.0 * lambda * t) + sigma * std::expm1(2.0 * lambda * t) / lambda;
}

void require_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("time must be finite and >= 0");
}


}  // namespace

MeanFieldMoments meanfield_moments_linear(const LinearParams& params, double t) {
  validate(params);
  require_time(t);
  return {params.m0 * std::exp(-params.a * t),
          mode_variance(-(params.a + params.kappa), params.sigma, params.v0, t)};
}

Eigen::MatrixXd ExchangeableMoments::matrix() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, covariance);
  m.diagonal().setConstant(variance);
  return m;
}

ExchangeableMoments full_cov_linear(const LinearParams& params, std::size_t n, double t) {
  validate(params);
  require_time(t);
  if (n < 2) throw ValidationError("full_cov_linear needs n >= 2");
  const double nd = static_cast<double>(n);
  // Drift matrix -(a+kappa) I + kappa/(n-1) (J - I): eigenvalue -a on the
  // mean mode, -(a + kappa n/(n-1)) on the n-1 deviation modes.
  const double lambda_mean = -params.a;
  const double lambda_dev = -(params.a + params.kappa * nd / (nd - 1.0));
  const double s_mean = mode_variance(lambda_mean, params.sigma, params.v0, t);
  const double s_dev = mode_variance(lambda_dev, params.sigma, params.v0, t);
  ExchangeableMoments out;
  out.n = n;
  out.mean = params.m0 * std::exp(-params.a * t);
  out.variance = (s_mean + (nd - 1.0) * s_dev) / nd;
  out.covariance = (s_mean - s_dev) / nd;
  return out;
}

OuTransition ou_transition(const Eigen::MatrixXd& drift, double sigma, double h) {
  const Eigen::Index n = drift.rows();
  if (drift.cols() != n) throw ValidationError("drift matrix must be square");
  if (!(h >= 0.0)) throw ValidationError("transition time must be >= 0");
  // The Van Loan off-diagonal block grows like e^{|A| h}, so evaluate on a
  // short interval and compose: M_{2h} = M_h^2, Q_{2h} = M_h Q_h M_h^T + Q_h.
  const double norm = drift.cwiseAbs().colwise().sum().maxCoeff() * h;
  int doublings = 0;
  while (std::ldexp(norm, -doublings) > 0.5) ++doublings;
  const double step = std::ldexp(h, -doublings);

  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = -drift * step;
  block.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n) * (2.0 * sigma * step);
  block.bottomRightCorner(n, n) = drift.transpose() * step;
  const Eigen::MatrixXd e = block.exp();
  OuTransition out;
  out.propagator = e.bottomRightCorner(n, n).transpose();
  out.noise_cov = out.propagator * e.topRightCorner(n, n);
  for (int d = 0; d < doublings; ++d) {
    out.noise_cov = (out.propagator * out.noise_cov * out.propagator.transpose() + out.noise_cov).eval();
    out.propagator = (out.propagator * out.propagator).eval();
  }
  out.noise_cov = 0.5 * (out.noise_cov + out.noise_cov.transpose()).eval();
  return out;
}

GaussianMoments full_cov_linear_dense(const LinearParams& params, std::size_t n, double t) {
  validate(params);
  require_time(t);
  if (n < 2) throw ValidationError("full_cov_linear_dense needs n >= 2");
  const double coupling = params.kappa / static_cast<double>(n - 1);
  Eigen::MatrixXd drift = Eigen::MatrixXd::Constant(n, n, coupling);
  drift.diagonal().setConstant(-(params.a + params.kappa));
  const OuTransition tr = ou_transition(drift, params.sigma, t);
  GaussianMoments out;
  out.mean = tr.propagator * Eigen::VectorXd::Constant(n, params.m0);
  out.cov = params.v0 * tr.propagator * tr.propagator.transpose() + tr.noise_cov;
  return out;
}

namespace {

OuTransition interval_transition(const Eigen::MatrixXd& drift, double sigma, double tau,
                                 const IntervalIntegrator& integrator) {
  if (integrator.kind == IntervalIntegrator::Kind::exact)
    return ou_transition(drift, sigma, tau);
  if (integrator.substeps < 1) throw ValidationError("substeps must be >= 1");
  const Eigen::Index n = drift.rows();
  const double h = tau / static_cast<double>(integrator.substeps);
  const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(n, n) + h * drift;
  OuTransition out{Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (std::size_t s = 0; s < integrator.substeps; ++s) {
    out.propagator = step * out.propagator;
    out.noise_cov = step * out.noise_cov * step.transpose();
    out.noise_cov.diagonal().array() += 2.0 * sigma * h;
  }
  return out;
}

}  // namespace

GaussianMoments rbm_cov_linear(const LinearParams& params, std::size_t n, std::size_t p,
                               double tau, std::size_t steps, IntervalIntegrator integrator) {
  validate(params);
  if (n > kMaxCouplingN)
    throw CapacityError("rbm_cov_linear enumerates divisions exactly and supports n <= " +
                        std::to_string(kMaxCouplingN));
  validate_batch_shape(n, p);
  if (!(tau > 0.0)) throw ValidationError("tau must be > 0");

  const auto divisions = enumerate_divisions(n, p);
  const double weight = 1.0 / static_cast<double>(divisions.size());
  const double coupling = params.kappa / static_cast<double>(p - 1);
  std::vector<OuTransition> transitions;
  transitions.reserve(divisions.size());
  for (const auto& [division, _] : divisions) {
    Eigen::MatrixXd drift = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t b = 0; b < division.block_count(); ++b)
      for (std::uint32_t i : division.block(b))
        for (std::uint32_t j : division.block(b))
          if (i != j) drift(i, j) = coupling;
    drift.diagonal().setConstant(-(params.a + params.kappa));
    transitions.push_back(interval_transition(drift, params.sigma, tau, integrator));
  }

  GaussianMoments state;
  state.mean = Eigen::VectorXd::Constant(n, params.m0);
  state.cov = Eigen::MatrixXd::Identity(n, n) * params.v0;
  for (std::size_t step = 0; step < steps; ++step) {
    const Eigen::MatrixXd second = state.cov + state.mean * state.mean.transpose();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd next_second = Eigen::MatrixXd::Zero(n, n);
    for (const auto& tr : transitions) {
      mean += weight * tr.propagator * state.mean;
      next_second += weight * (tr.propagator * second * tr.propagator.transpose() + tr.noise_cov);
    }
    state.mean = mean;
    state.cov = next_second - mean * mean.transpose();
    state.cov = 0.5 * (state.cov + state.cov.transpose()).eval();
  }
  return state;
}

namespace {

// u - log(1 + u), accurate for small u.
double entropy_term(double u) { return u - std::log1p(u); }

}  // namespace

double gaussian_kl(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1,
                   const Eigen::VectorXd& m2, const Eigen::MatrixXd& s2) {
  const Eigen::Index k = s2.rows();
  if (s2.cols() != k || s1.rows() != k || s1.cols() != k || m1.size() != k || m2.size() != k)
    throw ValidationError("gaussian_kl: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(s2);
  if (llt.info() != Eigen::Success) throw DomainError("gaussian_kl: reference covariance is not positive definite");
  for (Eigen::Index i = 0; i < k; ++i)
    if (!(llt.matrixL()(i, i) > 0.0)) throw DomainError("gaussian_kl: singular reference covariance");

  // Whitened covariance W = L^{-1} S1 L^{-T}; KL = 1/2 sum_i (w_i - 1 - log w_i) + 1/2 |L^{-1} dm|^2.
  const auto lower = llt.matrixL();
  Eigen::MatrixXd w = lower.solve(s1);
  w = lower.solve(w.transpose()).transpose();
  w = 0.5 * (w + w.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double lambda = eig.eigenvalues()(i);
    if (lambda < -1e-12 * scale) throw DomainError("gaussian_kl: covariance is not positive semidefinite");
    if (lambda <= 0.0) return std::numeric_limits<double>::infinity();
    total += entropy_term(lambda - 1.0);
  }
  const Eigen::VectorXd shift = lower.solve(m2 - m1);
  return 0.5 * (total + shift.squaredNorm());
}

double gaussian_kl(double m1, double v1, double m2, double v2) {
  Eigen::VectorXd a(1), b(1);
  Eigen::MatrixXd s(1, 1), r(1, 1);
  a << m1;
  b << m2;
  s << v1;
  r << v2;
  return gaussian_kl(a, s, b, r);
}

double k_marginal_exchangeable_kl(double v, double c, double reference_v, std::size_t n,
                                  std::size_t k, double mean, double reference_mean) {
  if (k < 1 || k > n) throw ValidationError("k-marginal needs 1 <= k <= n");
  const double kd = static_cast<double>(k);
  if (!(v - c > 0.0) || !(v + (kd - 1.0) * c > 0.0))
    throw DomainError("k-marginal covariance is not positive definite");
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(k, k, c);
  cov.diagonal().setConstant(v);
  const Eigen::MatrixXd ref = Eigen::MatrixXd::Identity(k, k) * reference_v;
  return gaussian_kl(Eigen::VectorXd::Constant(k, mean), cov,
                     Eigen::VectorXd::Constant(k, reference_mean), ref);
}

HierarchyTable::HierarchyTable(double gamma, std::size_t k_max, std::size_t l_max,
                               std::vector<double> times)
    : gamma_(gamma), k_max_(k_max), l_max_(l_max), times_(std::move(times)),
      values_(k_max * l_max * times_.size(), 0.0) {}

std::size_t HierarchyTable::offset(std::size_t k, std::size_t l, std::size_t t_index) const {
  if (k < 1 || k > k_max_ || l < k || l > l_max_ || t_index >= times_.size())
    throw ValidationError("hierarchy table index out of range");
  return ((k - 1) * l_max_ + (l - 1)) * times_.size() + t_index;
}

double& HierarchyTable::at(std::size_t k, std::size_t l, std::size_t t_index) {
  return values_[offset(k, l, t_index)];
}

double HierarchyTable::at(std::size_t k, std::size_t l, std::size_t t_index) const {
  return values_[offset(k, l, t_index)];
}

namespace {

// y'_k = gamma k (y_{k+1} - y_k) for k = 1..l with y_{l+1} = 1; index k-1.
void chain_rhs(double gamma, const std::vector<double>& y, std::vector<double>& dy) {
  const std::size_t l = y.size();
  for (std::size_t k = 1; k <= l; ++k) {
    const double next = k == l ? 1.0 : y[k];
    dy[k - 1] = gamma * static_cast<double>(k) * (next - y[k - 1]);
  }
}

void rk4_step(double gamma, const std::vector<double>& y, double h, std::vector<double>& out,
              std::vector<double> (&work)[5]) {
  auto& [k1, k2, k3, k4, tmp] = work;
  const std::size_t m = y.size();
  chain_rhs(gamma, y, k1);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  chain_rhs(gamma, tmp, k2);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  chain_rhs(gamma, tmp, k3);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * k3[i];
  chain_rhs(gamma, tmp, k4);
  for (std::size_t i = 0; i < m; ++i)
    out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

constexpr double kRelTol = 1e-10;
constexpr double kAbsTol = 1e-14;

}  // namespace

HierarchyTable hierarchy_table(double gamma, std::size_t k_max, std::size_t l_max,
                               const std::vector<double>& times) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be > 0");
  if (k_max < 1 || l_max < k_max) throw ValidationError("need 1 <= k_max <= l_max");
  if (times.empty() || !(times.front() >= 0.0))
    throw ValidationError("time grid must be non-empty and start at t >= 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw ValidationError("time grid must be increasing");

  HierarchyTable table(gamma, k_max, l_max, times);
  for (std::size_t l = 1; l <= l_max; ++l) {
    std::vector<double> y(l, 0.0), full(l), half(l), two_half(l);
    std::vector<double> work[5] = {std::vector<double>(l), std::vector<double>(l),
                                   std::vector<double>(l), std::vector<double>(l),
                                   std::vector<double>(l)};
    double t = 0.0;
    double h = 0.25 / (gamma * static_cast<double>(l));
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      const double target = times[ti];
      int refinements = 0;
      while (t < target) {
        const double step = std::min(h, target - t);
        rk4_step(gamma, y, step, full, work);
        rk4_step(gamma, y, 0.5 * step, half, work);
        rk4_step(gamma, half, 0.5 * step, two_half, work);
        double err_ratio = 0.0;
        for (std::size_t i = 0; i < l; ++i) {
          const double err = std::abs(two_half[i] - full[i]) / 15.0;
          const double tol = kRelTol * std::abs(two_half[i]) + kAbsTol;
          err_ratio = std::max(err_ratio, err / tol);
        }
        if (err_ratio <= 1.0) {
          for (std::size_t i = 0; i < l; ++i)
            y[i] = two_half[i] + (two_half[i] - full[i]) / 15.0;
          t = (step == target - t) ? target : t + step;
          const double grow = err_ratio > 0.0 ? 0.9 * std::pow(err_ratio, -0.2) : 4.0;
          h = step * std::min(4.0, std::max(1.0, grow));
          refinements = 0;
        } else {
          h = step * std::max(0.1, 0.9 * std::pow(err_ratio, -0.2));
          if (++refinements > 200 || h < 1e-14)
            throw Error("hierarchy_table: step refinement failed at t = " + std::to_string(t));
        }
      }
      for (std::size_t k = 1; k <= std::min(k_max, l); ++k)
        table.at(k, l, ti) = std::clamp(y[k - 1], 0.0, 1.0);
    }
  }
  return table;
}

double hierarchy_pointwise_bound(double gamma, std::size_t k, std::size_t l, double t) {
  const double lp1 = static_cast<double>(l + 1);
  const double gap = std::max(0.0, std::exp(-gamma * t) - static_cast<double>(k) / lp1);
  return std::exp(-2.0 * lp1 * gap * gap);
}

double hierarchy_sum_bound(double gamma, std::size_t k, int r, double t) {
  double falling = 1.0;  // (k + r)! / (k - 1)!
  for (std::size_t j = k; j <= k + static_cast<std::size_t>(r); ++j)
    falling *= static_cast<double>(j);
  const double rp1 = static_cast<double>(r + 1);
  return falling * std::expm1(gamma * rp1 * t) / rp1;
}

HierarchyCheck hierarchy_bound_check(const HierarchyTable& table, const std::vector<int>& r_list) {
  HierarchyCheck check;
  check.max_pointwise_excess = -std::numeric_limits<double>::infinity();
  check.max_sum_excess = -std::numeric_limits<double>::infinity();
  const auto& times = table.times();
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    for (std::size_t k = 1; k <= table.k_max(); ++k) {
      for (std::size_t l = k; l <= table.l_max(); ++l) {
        const double value = table.at(k, l, ti);
        const double limit = hierarchy_pointwise_bound(table.gamma(), k, l, t);
        ++check.pointwise_checked;
        check.max_pointwise_excess = std::max(check.max_pointwise_excess, value - limit);
        if (value > limit + kPointwiseSlack)
          check.violations.push_back({"pointwise", k, l, -1, t, value, limit});
      }
      for (int r : r_list) {
        if (r < 0) throw ValidationError("moment order r must be >= 0");
        double sum = 0.0;
        for (std::size_t l = k; l <= table.l_max(); ++l)
          sum += std::pow(static_cast<double>(l), r) * table.at(k, l, ti);
        const double limit = hierarchy_sum_bound(table.gamma(), k, r, t);
        ++check.sums_checked;
        check.max_sum_excess = std::max(check.max_sum_excess, sum - limit);
        if (sum > limit + kSumSlack)
          check.violations.push_back({"moment_sum", k, 0, r, t, sum, limit});
      }
    }
  }
  return check;
}

}  // namespace rbmlab
