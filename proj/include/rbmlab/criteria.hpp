#pragma once

// Evaluators for the acceptance criteria AC1-AC11. Each returns a verdict
// plus the series and tables the harness embeds in its report. Options carry
// no defaults here; the harness fills them from the resolved config.

#include <array>
#include <span>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rbmlab/model.hpp"
#include "rbmlab/oracle.hpp"
#include "rbmlab/report.hpp"

namespace rbmlab {

struct CriterionOutcome {
  Verdict verdict;
  std::vector<RateSeries> series;
  Json table = Json::object();
};

using Range = std::array<double, 2>;
using Shape = std::pair<std::size_t, std::size_t>;  // (n, p)

std::string format_range(const Range& r);
bool in_range(double x, const Range& r);

// AC1: marginal uniformity and constant conditional membership of the coupled
// division, by exact enumeration. Empty `anchors` means every anchor.
CriterionOutcome check_batch_coupling(const std::vector<Shape>& shapes,
                                      const std::vector<std::size_t>& anchors);

// Supplementary to AC1: chi-square test of sample_division against the
// enumerated uniform law; fails below `min_p_value`.
CriterionOutcome check_division_sampler(const std::vector<Shape>& shapes,
                                        std::size_t samples, double min_p_value,
                                        std::uint64_t seed);

// AC2: division-averaged RBM drift equals the full drift.
struct DriftCheckOptions {
  std::vector<std::size_t> ns;
  std::vector<ModelSpec> models;
  std::size_t states = 0;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
};
CriterionOutcome check_drift_unbiased(const DriftCheckOptions& opt);

// AC3: RBM with p = N reproduces the full scheme.
struct DegeneracyOptions {
  std::vector<ModelSpec> models;
  InitialLaw init;
  std::size_t n = 0;
  long long steps = 0;
  double tau = 0.0;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
};
CriterionOutcome check_degeneracy(const DegeneracyOptions& opt);

// AC4: oracle tau-sweep of the RBM vs full-system 1-marginal.
struct TauRateOptions {
  LinearParams params;
  std::size_t n = 0;
  std::size_t p = 0;
  double t_end = 0.0;
  std::vector<double> taus;
  Range kl_slope{};
  Range bias_slope{};
};
CriterionOutcome check_tau_rate(const TauRateOptions& opt);

// AC5: oracle N-sweep of the full-system vs mean-field 1-marginal KL.
struct NRateOptions {
  LinearParams params;
  std::vector<std::size_t> ns;
  double t = 0.0;
  Range slope{};
};
CriterionOutcome check_n_rate(const NRateOptions& opt);

// AC6: KL_k / (k (k-1)) flat across k.
struct KSharpnessOptions {
  LinearParams params;
  std::size_t n = 0;
  double t = 0.0;
  std::vector<std::size_t> ks;
  double relative_tolerance = 0.0;
};
CriterionOutcome check_k_sharpness(const KSharpnessOptions& opt);

// AC7: Monte Carlo RBM covariance vs the oracle, entrywise in standard errors.
struct McConsistencyOptions {
  LinearParams params;
  std::size_t n = 0;
  std::size_t p = 0;
  double tau = 0.0;
  double t_end = 0.0;
  std::size_t substeps = 0;
  std::size_t replicas = 0;
  double max_z = 0.0;
  std::uint64_t seed = 0;
};
CriterionOutcome check_mc_consistency(const McConsistencyOptions& opt);

// AC8: E|X|^q bounded over time by `factor` times the kappa = 0 stationary
// value.
struct MomentOptions {
  ModelSpec model;
  InitialLaw init;
  std::size_t n = 0;
  std::size_t p = 0;
  double tau = 0.0;
  double t_end = 0.0;
  std::size_t replicas = 0;
  std::size_t checkpoint_every = 0;
  std::vector<int> orders;
  double factor = 0.0;
  std::uint64_t seed = 0;
};
CriterionOutcome check_moment_bounds(const MomentOptions& opt);

/// E|Z|^q for Z ~ N(0, s I_d).
double gaussian_abs_moment(double variance, std::size_t dim, double q);

// AC9: hierarchy integrals against both bounds and the closed form of A_1^1.
struct HierarchyOptions {
  double gamma = 0.0;
  std::size_t k_max = 0;
  std::size_t l_max = 0;
  std::vector<double> times;
  std::vector<int> r_list;
  double closed_form_tolerance = 0.0;
};
CriterionOutcome check_hierarchy(const HierarchyOptions& opt, HierarchyTable* table_out = nullptr);

// AC10: W1 between one replica's RBM empirical measure and a mean-field
// ensemble reference, averaged over replicas, decreasing in N.
struct MeanFieldW1Options {
  ModelSpec model;
  InitialLaw init;
  std::vector<std::size_t> ns;
  std::size_t p = 0;
  double tau = 0.0;
  double t_end = 0.0;
  std::size_t ensemble = 0;
  std::size_t replicas = 0;
  double max_slope = 0.0;
  double min_r2 = 0.0;
  std::uint64_t seed = 0;
};
CriterionOutcome check_meanfield_w1(const MeanFieldW1Options& opt);

// AC11: per-step cost of the full and the RBM drift.
struct BenchOptions {
  ModelSpec model;
  std::vector<std::size_t> ns;
  std::size_t p = 0;
  double min_seconds = 0.0;  // per grid point
  Range full_slope{};
  Range rbm_slope{};
  bool assert_slopes = false;  // otherwise the verdict is advisory
  std::uint64_t seed = 0;
};
CriterionOutcome check_cost_scaling(const BenchOptions& opt);

// Strong error of the synchronously coupled RBM vs full system across tau,
// plus the p = N coupled run whose deviation must vanish. Informational.
struct StrongCouplingOptions {
  ModelSpec model;
  InitialLaw init;
  std::size_t n = 0;
  std::size_t p = 0;
  double t_end = 0.0;
  std::vector<double> taus;
  std::size_t substeps = 0;
  std::size_t replicas = 0;
  std::uint64_t seed = 0;
};
std::vector<RateSeries> strong_coupling_sweep(const StrongCouplingOptions& opt, Json& table);

// Monte Carlo tau-sweep on a nonlinear model: Gaussian-fit KL and variance gap
// between pooled RBM and full-system particles. Informational.
struct McTauSweepOptions {
  ModelSpec model;
  InitialLaw init;
  std::size_t n = 0;
  std::size_t p = 0;
  double t_end = 0.0;
  std::vector<double> taus;
  std::size_t replicas = 0;
  std::uint64_t seed = 0;
};
std::vector<RateSeries> mc_tau_sweep(const McTauSweepOptions& opt, Json& table);

// Sub-Gaussian tail fit of the final particles of an RBM run. Informational.
Json tail_report(std::span<const double> samples);

}  // namespace rbmlab
