#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numeric>

#include "rbmlab/errors.hpp"
#include "rbmlab/oracle.hpp"
#include "rbmlab/sim.hpp"

using namespace rbmlab;

namespace {

Model make(const std::string& family, double a, double kappa, double sigma = 1.0) {
  ModelSpec s;
  s.family = family;
  s.params = {{"a", a}, {"kappa", kappa}};
  s.sigma = sigma;
  return build_model(s);
}

InitialLaw gaussian(double mean, double var) {
  InitialLaw law;
  law.mean = {mean};
  law.spread = var;
  return law;
}

const StatValue& stat(const Checkpoint& c, const std::string& name) {
  for (const auto& s : c.stats)
    if (s.name == name) return s;
  throw std::runtime_error("missing stat " + name);
}

// Restores RBMLAB_THREADS on scope exit.
struct ThreadEnv {
  explicit ThreadEnv(const char* value) {
    if (const char* old = std::getenv("RBMLAB_THREADS")) saved = old;
    setenv("RBMLAB_THREADS", value, 1);
  }
  ~ThreadEnv() {
    if (saved.empty())
      unsetenv("RBMLAB_THREADS");
    else
      setenv("RBMLAB_THREADS", saved.c_str(), 1);
  }
  std::string saved;
};

}  // namespace

TEST(FullDrift, TwoParticleExample) {
  const Model m = make("linear", 1.0, 1.0);
  const ParticleState s(2, 1, {1.0, 0.0});
  const auto d = full_drift(m, s);
  EXPECT_DOUBLE_EQ(d[0], -2.0);
  EXPECT_DOUBLE_EQ(d[1], 1.0);
}

TEST(FullDrift, CoincidentParticlesGiveConfinementOnly) {
  const Model m = make("sine", 1.0, 2.0);
  const ParticleState s(5, 1, std::vector<double>(5, 0.7));
  for (double v : full_drift(m, s)) EXPECT_DOUBLE_EQ(v, m.b0(0.7));
}

TEST(FullDrift, ZeroCouplingDecouples) {
  const Model m = make("linear", 1.3, 0.0);
  const ParticleState s(4, 1, {1.0, -2.0, 0.5, 3.0});
  const auto d = full_drift(m, s);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(d[i], m.b0(s.coords[i]));
}

TEST(FullDrift, MultiDimensional) {
  ModelSpec spec;
  spec.family = "linear";
  spec.params = {{"a", 0.0}, {"kappa", 1.0}};
  spec.dim = 2;
  const Model m = build_model(spec);
  const ParticleState s(2, 2, {1.0, 2.0, 0.0, 0.0});
  const auto d = full_drift(m, s);
  EXPECT_EQ(d, (std::vector<double>{-1.0, -2.0, 1.0, 2.0}));
}

TEST(RbmDrift, BatchPairExample) {
  const Model m = make("linear", 0.0, 1.0);
  const ParticleState s(4, 1, {1.0, 0.0, 0.0, 0.0});
  const BatchDivision d({{0, 1}, {2, 3}});
  EXPECT_EQ(rbm_drift(m, s, d), (std::vector<double>{-1.0, 1.0, 0.0, 0.0}));
}

TEST(RbmDrift, SingleBatchEqualsFullDrift) {
  for (const char* family : {"linear", "sine"}) {
    const Model m = make(family, 1.0, 0.8);
    RngStream r(1, StreamTag::test, {8});
    std::vector<double> x(8);
    r.fill_normal(x);
    const ParticleState s(8, 1, x);
    const BatchDivision d({{7, 6, 5, 4, 3, 2, 1, 0}});
    const auto a = full_drift(m, s);
    const auto b = rbm_drift(m, s, d);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a[i], b[i]) << family;
  }
}

TEST(RbmDrift, DivisionAverageEqualsFullDrift) {
  const Model m = make("sine", 1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    RngStream r(2, StreamTag::test, {static_cast<std::uint64_t>(trial)});
    std::vector<double> x(4);
    r.fill_normal(x);
    const ParticleState s(4, 1, x);
    std::vector<double> avg(4, 0.0);
    for (const auto& w : enumerate_divisions(4, 2)) {
      const auto d = rbm_drift(m, s, w.division);
      for (int i = 0; i < 4; ++i) avg[i] += d[i] / 3.0;
    }
    const auto f = full_drift(m, s);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(avg[i], f[i], 1e-12);
  }
}

TEST(RbmDrift, SampledDivisionsUnbiasedForLargerN) {
  const Model m = make("sine", 1.0, 1.0);
  const std::size_t n = 32;
  RngStream r(3, StreamTag::test, {1});
  std::vector<double> x(n);
  r.fill_normal(x);
  const ParticleState s(n, 1, x);
  const auto f = full_drift(m, s);
  const int draws = 4000;
  std::vector<double> sum(n, 0.0), sq(n, 0.0);
  for (int k = 0; k < draws; ++k) {
    const auto d = rbm_drift(m, s, sample_division(n, 2, r));
    for (std::size_t i = 0; i < n; ++i) {
      sum[i] += d[i];
      sq[i] += d[i] * d[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = sum[i] / draws;
    const double se = std::sqrt(std::max(1e-30, sq[i] / draws - mean * mean) / draws);
    EXPECT_LT(std::abs(mean - f[i]), 5.0 * se + 1e-12) << i;
  }
}

TEST(EnsembleDrift, MatchesFullDriftForFactorizedKernels) {
  for (const char* family : {"linear", "sine"}) {
    const Model m = make(family, 1.0, 0.6);
    RngStream r(4, StreamTag::test, {2});
    std::vector<double> x(50), a(50), b(50);
    r.fill_normal(x);
    full_drift(m, x, 1, a);
    ensemble_drift(m, x, 1, b);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12) << family;
  }
}

TEST(EmStep, DeterministicLinearStep) {
  const Model m = make("linear", 1.0, 0.0, 0.0);
  ParticleState s(1, 1, {1.0});
  const std::vector<double> drift{m.b0(1.0)};
  em_step(s, drift, 0.0, 0.1, NoiseKey{});
  EXPECT_DOUBLE_EQ(s.coords[0], 0.9);
  EXPECT_EQ(s.step, 1);
  EXPECT_DOUBLE_EQ(s.time, 0.1);
}

TEST(EmStep, ZeroDriftZeroNoiseOnlyAdvancesTime) {
  ParticleState s(2, 1, {0.3, -0.4});
  const std::vector<double> zero(2, 0.0);
  em_step(s, zero, 0.0, 0.05, NoiseKey{1, 0, 0, 0});
  EXPECT_EQ(s.coords, (std::vector<double>{0.3, -0.4}));
  EXPECT_DOUBLE_EQ(s.time, 0.05);
}

TEST(EmStep, FixedIncrementHook) {
  ParticleState s(1, 1, {0.0});
  const std::vector<double> zero{0.0}, one{1.0};
  em_step_with_increments(s, zero, 0.5, 0.01, one);
  EXPECT_NEAR(s.coords[0], 0.1, 1e-15);
}

TEST(EmStep, NonFiniteOutputThrowsWithStep) {
  ParticleState s(1, 1, {1.0});
  const std::vector<double> huge{std::numeric_limits<double>::infinity()}, zero{0.0};
  try {
    em_step_with_increments(s, huge, 1.0, 0.1, zero);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 1);
  }
}

TEST(Simulate, DivergentRunAborts) {
  const Model m = make("cubic", 1.0, 0.0);
  SimConfig c;
  c.scheme = Scheme::full;
  c.n = 2;
  c.tau = 1.0;
  c.t_end = 20.0;
  EXPECT_THROW(simulate(c, m, gaussian(10.0, 0.0)), DivergenceError);
}

TEST(Simulate, ConfigValidation) {
  SimConfig c;
  c.scheme = Scheme::rbm;
  c.n = 5;
  c.p = 2;
  EXPECT_THROW(validate(c), ValidationError);
  c.n = 4;
  c.tau = 0.0;
  EXPECT_THROW(validate(c), ValidationError);
  c.tau = 0.1;
  c.replicas = 0;
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(Simulate, SchemeNames) {
  EXPECT_EQ(scheme_from_string("meanfield-ensemble"), Scheme::meanfield_ensemble);
  EXPECT_EQ(to_string(Scheme::rbm), "rbm");
  EXPECT_THROW(scheme_from_string("nope"), ConfigError);
}

TEST(Simulate, DegenerateBatchMatchesFullTrajectory) {
  const Model m = make("sine", 1.0, 1.0);
  SimConfig c;
  c.n = 8;
  c.p = 8;
  c.tau = 0.01;
  c.t_end = 1.0;
  c.seed = 31;
  c.keep_trajectories = true;
  c.scheme = Scheme::full;
  const auto full = simulate(c, m, gaussian(0, 1));
  c.scheme = Scheme::rbm;
  const auto rbm = simulate(c, m, gaussian(0, 1));
  ASSERT_EQ(full.trajectories[0].size(), 101u);
  for (std::size_t k = 0; k < full.trajectories[0].size(); ++k)
    for (std::size_t i = 0; i < 8; ++i)
      EXPECT_NEAR(full.trajectories[0][k][i], rbm.trajectories[0][k][i], 1e-12);
}

TEST(Simulate, DeterministicAcrossThreadCounts) {
  const Model m = make("sine", 1.0, 1.0);
  SimConfig c;
  c.scheme = Scheme::rbm;
  c.n = 16;
  c.p = 4;
  c.tau = 0.05;
  c.t_end = 0.5;
  c.seed = 5;
  c.replicas = 9;
  c.keep_trajectories = true;
  SimResult one, many;
  {
    ThreadEnv env("1");
    one = simulate(c, m, gaussian(0, 1));
  }
  {
    ThreadEnv env("4");
    many = simulate(c, m, gaussian(0, 1));
  }
  EXPECT_EQ(one.trajectories, many.trajectories);
  ASSERT_EQ(one.checkpoints.size(), many.checkpoints.size());
  for (std::size_t k = 0; k < one.checkpoints.size(); ++k)
    for (std::size_t s = 0; s < one.checkpoints[k].stats.size(); ++s) {
      EXPECT_EQ(one.checkpoints[k].stats[s].value, many.checkpoints[k].stats[s].value);
      EXPECT_EQ(one.checkpoints[k].stats[s].std_error, many.checkpoints[k].stats[s].std_error);
    }
}

TEST(Simulate, ExchangeabilityUnderRelabeling) {
  const Model m = make("sine", 1.0, 1.5);
  SimConfig c;
  c.scheme = Scheme::full;
  c.n = 6;
  c.tau = 0.02;
  c.t_end = 0.5;
  c.seed = 17;
  const std::vector<std::uint64_t> perm{3, 0, 5, 1, 4, 2};
  const ParticleState base = run_replica(c, m, gaussian(0, 1), 0);
  const ParticleState permuted = run_replica(c, m, gaussian(0, 1), 0, perm);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(permuted.coords[i], base.coords[perm[i]], 1e-12);
}

TEST(Simulate, ObserverSeesCheckpoints) {
  const Model m = make("linear", 1.0, 0.5);
  SimConfig c;
  c.scheme = Scheme::rbm;
  c.n = 4;
  c.tau = 0.1;
  c.t_end = 1.0;
  c.checkpoint_every = 3;
  std::vector<long long> seen;
  run_replica(c, m, gaussian(0, 1), 0, {}, [&](long long step, const ParticleState&) { seen.push_back(step); });
  EXPECT_EQ(seen, (std::vector<long long>{0, 3, 6, 9, 10}));
}

TEST(Simulate, StationaryOrnsteinUhlenbeckVariance) {
  const Model m = make("linear", 1.0, 0.0);
  SimConfig c;
  c.scheme = Scheme::rbm;
  c.n = 100000;
  c.tau = 0.01;
  c.substeps = 5;
  c.t_end = 1.0;
  c.seed = 3;
  c.checkpoint_every = 100;
  const auto r = simulate(c, m, gaussian(0, 1));
  const auto& v = stat(r.checkpoints.back(), "var_0");
  EXPECT_LT(std::abs(v.value - 1.0), 4.0 * v.std_error) << v.value << " +- " << v.std_error;
}

TEST(Simulate, MeanFieldEnsembleVariance) {
  const Model m = make("linear", 1.0, 0.5);
  SimConfig c;
  c.scheme = Scheme::meanfield_ensemble;
  c.n = 100000;
  c.tau = 0.01;
  c.substeps = 5;
  c.t_end = 1.0;
  c.seed = 4;
  c.checkpoint_every = 100;
  const auto r = simulate(c, m, gaussian(0, 1));
  const auto& v = stat(r.checkpoints.back(), "var_0");
  const double expected = 2.0 / 3.0 + std::exp(-3.0) / 3.0;
  EXPECT_LT(std::abs(v.value - expected), 4.0 * v.std_error) << v.value << " +- " << v.std_error;
}

// The Euler-Maruyama variant of the RBM oracle is the exact law of the
// simulated chain, so the match holds even at a coarse step.
TEST(Simulate, RbmChainMatchesEulerMaruyamaOracle) {
  LinearParams lp;
  const Model m = make("linear", lp.a, lp.kappa, lp.sigma);
  SimConfig c;
  c.scheme = Scheme::rbm;
  c.n = 4;
  c.p = 2;
  c.tau = 0.25;
  c.t_end = 1.0;
  c.seed = 8;
  c.replicas = 20000;
  c.checkpoint_every = 4;
  const auto r = simulate(c, m, gaussian(lp.m0, lp.v0));
  const auto em = rbm_cov_linear(lp, 4, 2, 0.25, 4, IntervalIntegrator::euler_maruyama(1));
  const auto exact = rbm_cov_linear(lp, 4, 2, 0.25, 4);
  const auto& v = stat(r.checkpoints.back(), "var_0");
  // Pooled variance includes the off-diagonal covariance through the sample mean.
  EXPECT_LT(std::abs(v.value - em.cov(0, 0)), 4.0 * v.std_error);
  EXPECT_GT(std::abs(v.value - exact.cov(0, 0)), 4.0 * v.std_error)
      << "the coarse step should be distinguishable from the exact interval solution";
}

TEST(Coupled, ZeroCouplingGivesZeroError) {
  const Model m = make("linear", 1.0, 0.0);
  SimConfig c;
  c.n = 8;
  c.p = 2;
  c.tau = 0.1;
  c.t_end = 1.0;
  c.replicas = 3;
  for (const auto& k : coupled_simulate(c, m, gaussian(0, 1)).checkpoints) EXPECT_EQ(k.mean_abs_deviation, 0.0);
}

TEST(Coupled, SingleBatchGivesZeroError) {
  const Model m = make("sine", 1.0, 1.0);
  SimConfig c;
  c.n = 8;
  c.p = 8;
  c.tau = 0.1;
  c.t_end = 1.0;
  c.replicas = 2;
  for (const auto& k : coupled_simulate(c, m, gaussian(0, 1)).checkpoints)
    EXPECT_LE(k.mean_abs_deviation, 1e-12);
}

TEST(Coupled, StrongErrorDecreasesWithTau) {
  const Model m = make("linear", 1.0, 0.5);
  SimConfig c;
  c.n = 64;
  c.p = 2;
  c.t_end = 1.0;
  c.replicas = 16;
  c.seed = 12;
  std::vector<double> err;
  for (double tau : {0.2, 0.1, 0.05}) {
    c.tau = tau;
    err.push_back(coupled_simulate(c, m, gaussian(0, 1)).checkpoints.back().mean_abs_deviation);
  }
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
}
