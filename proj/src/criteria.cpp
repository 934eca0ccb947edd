#include "rbmlab/criteria.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "rbmlab/batching.hpp"
#include "rbmlab/errors.hpp"
#include "rbmlab/metrics.hpp"
#include "rbmlab/parallel.hpp"
#include "rbmlab/sim.hpp"

namespace rbmlab {

std::string format_range(const Range& r) {
  return "[" + format_double(r[0]) + ", " + format_double(r[1]) + "]";
}

bool in_range(double x, const Range& r) { return x >= r[0] && x <= r[1]; }

namespace {

Json rational_json(const Rational& r) { return Json::array({r.numerator(), r.denominator()}); }

// Fits when possible; a sweep with fewer than three positive errors stays
// unfitted and reports why in `note`.
void try_fit(RateSeries& s, std::string* note = nullptr) {
  try {
    s.fit = regress_rate(s.points);
    s.fitted = true;
  } catch (const ValidationError& e) {
    s.fitted = false;
    if (note) *note = e.what();
  }
}

long long steps_for(double t_end, double tau) {
  const long long steps = std::llround(t_end / tau);
  if (steps < 1 || std::abs(static_cast<double>(steps) * tau - t_end) > 1e-9 * std::max(1.0, t_end))
    throw ConfigError("tau " + format_double(tau) + " does not divide t_end " + format_double(t_end));
  return steps;
}

ModelSpec linear_spec(const LinearParams& params) {
  ModelSpec spec;
  spec.family = "linear";
  spec.params = {{"a", params.a}, {"kappa", params.kappa}};
  spec.sigma = params.sigma;
  return spec;
}

InitialLaw linear_init(const LinearParams& params) {
  InitialLaw law;
  law.mean = {params.m0};
  law.spread = params.v0;
  return law;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t derived_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return RngStream(seed, StreamTag::ensemble, path).next_u64();
}

}  // namespace

CriterionOutcome check_batch_coupling(const std::vector<Shape>& shapes,
                                      const std::vector<std::size_t>& anchors) {
  CriterionOutcome out;
  out.verdict.id = "AC1";
  out.verdict.name = "coupled division: uniform marginal and conditional membership (p-1)/(n-1)";
  out.verdict.tolerance = "exact rational equality";
  Json rows = Json::array();
  std::size_t checked = 0;
  std::size_t failures = 0;
  for (const auto& [n, p] : shapes) {
    validate_batch_shape(n, p);
    std::vector<std::size_t> list = anchors;
    if (list.empty())
      for (std::size_t i = 0; i < n; ++i) list.push_back(i);
    for (std::size_t anchor : list) {
      if (anchor >= n) throw ConfigError("anchor " + std::to_string(anchor) + " out of range for n = " + std::to_string(n));
      const CouplingLaw law = joint_coupling_law(n, p, anchor);
      const bool uniform = law.marginal_is_uniform();
      const bool constant = law.conditional_is_constant();
      const bool total = law.total_probability() == Rational(1);
      const bool ok = uniform && constant && total;
      ++checked;
      if (!ok) ++failures;
      std::set<Rational> marginal_values(law.coupled_marginal.begin(), law.coupled_marginal.end());
      std::set<Rational> conditional_values;
      for (const auto& c : law.conditional) conditional_values.insert(c.probability);
      Json row{{"n", n},
               {"p", p},
               {"anchor", anchor},
               {"support", law.support.size()},
               {"outcomes", law.outcomes.size()},
               {"expected_conditional", rational_json(Rational(static_cast<std::int64_t>(p - 1),
                                                               static_cast<std::int64_t>(n - 1)))},
               {"marginal_values", Json::array()},
               {"conditional_values", Json::array()},
               {"total_probability", rational_json(law.total_probability())},
               {"pass", ok}};
      for (const auto& v : marginal_values) row["marginal_values"].push_back(rational_json(v));
      for (const auto& v : conditional_values) row["conditional_values"].push_back(rational_json(v));
      // Explicit anchors get the complete conditional table.
      if (!anchors.empty()) {
        Json detail = Json::array();
        for (const auto& c : law.conditional)
          detail.push_back(Json{{"coupled", law.support[c.coupled_index].blocks()},
                                {"j", c.j},
                                {"probability", rational_json(c.probability)}});
        row["conditional"] = std::move(detail);
      }
      rows.push_back(std::move(row));
    }
  }
  out.table = Json{{"coupling", rows}};
  out.verdict.measured = static_cast<double>(failures);
  out.verdict.pass = failures == 0;
  out.verdict.detail = std::to_string(checked) + " (shape, anchor) cases, " +
                       std::to_string(failures) + " failing";
  return out;
}

CriterionOutcome check_division_sampler(const std::vector<Shape>& shapes, std::size_t samples,
                                        double min_p_value, std::uint64_t seed) {
  CriterionOutcome out;
  out.verdict.id = "AC1";
  out.verdict.name = "division sampler matches the enumerated uniform law (chi-square)";
  out.verdict.tolerance = "p-value >= " + format_double(min_p_value);
  Json rows = Json::array();
  double min_p = 1.0;
  for (const auto& [n, p] : shapes) {
    RngStream stream(seed, StreamTag::test, {n, p});
    const UniformityTest test = division_uniformity(n, p, samples, stream);
    min_p = std::min(min_p, test.p_value);
    rows.push_back(Json{{"n", n},
                        {"p", p},
                        {"samples", test.samples},
                        {"support", test.support},
                        {"chi_square", test.chi_square},
                        {"p_value", test.p_value}});
  }
  out.table = Json{{"uniformity", rows}};
  out.verdict.measured = min_p;
  out.verdict.pass = min_p >= min_p_value;
  out.verdict.detail = "minimum p-value over " + std::to_string(shapes.size()) + " shapes";
  return out;
}

CriterionOutcome check_drift_unbiased(const DriftCheckOptions& opt) {
  CriterionOutcome out;
  out.verdict.id = "AC2";
  out.verdict.name = "division-averaged RBM drift equals the full drift";
  out.verdict.tolerance = "max abs difference <= " + format_double(opt.tolerance);
  Json rows = Json::array();
  double worst = 0.0;
  for (const auto& spec : opt.models) {
    const Model model = build_model(spec);
    const std::size_t d = model.dim();
    for (std::size_t n : opt.ns) {
      for (std::size_t p = 2; p <= n; ++p) {
        if (n % p != 0) continue;
        const auto divisions = enumerate_divisions(n, p);
        const double weight = 1.0 / static_cast<double>(divisions.size());
        double case_max = 0.0;
        std::vector<double> coords(n * d), full(n * d), avg(n * d), one(n * d);
        for (std::size_t s = 0; s < opt.states; ++s) {
          RngStream stream(opt.seed, StreamTag::test, {n, p, s});
          for (auto& x : coords) x = 2.0 * stream.normal();
          full_drift(model, coords, d, full);
          std::fill(avg.begin(), avg.end(), 0.0);
          for (const auto& wd : divisions) {
            rbm_drift(model, coords, d, wd.division, one);
            for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += weight * one[k];
          }
          for (std::size_t k = 0; k < avg.size(); ++k)
            case_max = std::max(case_max, std::abs(avg[k] - full[k]));
        }
        worst = std::max(worst, case_max);
        rows.push_back(Json{{"family", spec.family},
                            {"n", n},
                            {"p", p},
                            {"divisions", divisions.size()},
                            {"states", opt.states},
                            {"max_abs_difference", case_max}});
      }
    }
  }
  out.table = Json{{"drift", rows}};
  out.verdict.measured = worst;
  out.verdict.pass = worst <= opt.tolerance;
  out.verdict.detail = std::to_string(rows.size()) + " (family, n, p) cases";
  return out;
}

CriterionOutcome check_degeneracy(const DegeneracyOptions& opt) {
  CriterionOutcome out;
  out.verdict.id = "AC3";
  out.verdict.name = "RBM with p = N reproduces the full trajectory";
  out.verdict.tolerance = "max abs coordinate difference <= " + format_double(opt.tolerance);
  Json rows = Json::array();
  double worst = 0.0;
  for (const auto& spec : opt.models) {
    const Model model = build_model(spec);
    SimConfig cfg;
    cfg.n = opt.n;
    cfg.p = opt.n;
    cfg.tau = opt.tau;
    cfg.t_end = opt.tau * static_cast<double>(opt.steps);
    cfg.seed = opt.seed;
    cfg.keep_trajectories = true;
    cfg.scheme = Scheme::full;
    const SimResult full = simulate(cfg, model, opt.init);
    cfg.scheme = Scheme::rbm;
    const SimResult rbm = simulate(cfg, model, opt.init);
    double diff = 0.0;
    std::size_t compared = 0;
    const auto& a = full.trajectories.at(0);
    const auto& b = rbm.trajectories.at(0);
    if (a.size() != b.size()) throw Error("degeneracy check: checkpoint count mismatch");
    for (std::size_t c = 0; c < a.size(); ++c)
      for (std::size_t k = 0; k < a[c].size(); ++k) {
        diff = std::max(diff, std::abs(a[c][k] - b[c][k]));
        ++compared;
      }
    worst = std::max(worst, diff);
    rows.push_back(Json{{"family", spec.family},
                        {"n", opt.n},
                        {"steps", opt.steps},
                        {"checkpoints", a.size()},
                        {"coordinates_compared", compared},
                        {"max_abs_difference", diff}});
  }
  out.table = Json{{"degeneracy", rows}};
  out.verdict.measured = worst;
  out.verdict.pass = worst <= opt.tolerance;
  out.verdict.detail = std::to_string(opt.steps) + " steps, n = p = " + std::to_string(opt.n);
  return out;
}

CriterionOutcome check_tau_rate(const TauRateOptions& opt) {
  validate(opt.params);
  CriterionOutcome out;
  out.verdict.id = "AC4";
  out.verdict.name = "tau-rate of the RBM 1-marginal (Gaussian-proxy KL and covariance bias)";
  out.verdict.tolerance = "KL slope in " + format_range(opt.kl_slope) + ", bias slope in " +
                          format_range(opt.bias_slope);
  const ExchangeableMoments full = full_cov_linear(opt.params, opt.n, opt.t_end);
  RateSeries kl{"oracle_tau_kl", "tau", "KL (Gaussian moment proxy) of the RBM 1-marginal against the full-system 1-marginal", {}, false, {}};
  RateSeries bias{"oracle_tau_cov_bias", "tau", "|v_rbm - v_full|", {}, false, {}};
  Json rows = Json::array();
  for (double tau : opt.taus) {
    const long long steps = steps_for(opt.t_end, tau);
    const GaussianMoments rbm = rbm_cov_linear(opt.params, opt.n, opt.p, tau, static_cast<std::size_t>(steps));
    const double v = rbm.cov(0, 0);
    const double c = rbm.cov(0, 1);
    const double k = gaussian_kl(rbm.mean(0), v, full.mean, full.variance);
    const double b = std::abs(v - full.variance);
    kl.points.push_back({tau, k, 0.0});
    bias.points.push_back({tau, b, 0.0});
    rows.push_back(Json{{"tau", tau},
                        {"steps", steps},
                        {"v_rbm", v},
                        {"c_rbm", c},
                        {"v_full", full.variance},
                        {"c_full", full.covariance},
                        {"kl", k},
                        {"tv_pinsker_bound", pinsker_tv_bound(k)},
                        {"cov_bias", b},
                        {"offdiag_bias", std::abs(c - full.covariance)}});
  }
  try_fit(kl);
  try_fit(bias);
  out.table = Json{{"tau_sweep", rows}};
  out.series = {kl, bias};
  const bool fitted = kl.fitted && bias.fitted;
  out.verdict.measured = kl.fitted ? kl.fit.slope : std::nan("");
  out.verdict.pass = fitted && in_range(kl.fit.slope, opt.kl_slope) && in_range(bias.fit.slope, opt.bias_slope);
  out.verdict.detail = fitted ? "KL slope " + format_double(kl.fit.slope) + ", bias slope " +
                                    format_double(bias.fit.slope)
                              : "too few positive points to fit";
  return out;
}

CriterionOutcome check_n_rate(const NRateOptions& opt) {
  validate(opt.params);
  CriterionOutcome out;
  out.verdict.id = "AC5";
  out.verdict.name = "N-rate of the full-system vs mean-field 1-marginal KL";
  out.verdict.tolerance = "slope in " + format_range(opt.slope);
  const MeanFieldMoments mf = meanfield_moments_linear(opt.params, opt.t);
  RateSeries s{"oracle_n_kl", "n", "gaussian_kl(full 1-marginal || mean-field law)", {}, false, {}};
  Json rows = Json::array();
  for (std::size_t n : opt.ns) {
    const ExchangeableMoments full = full_cov_linear(opt.params, n, opt.t);
    const double k = gaussian_kl(full.mean, full.variance, mf.mean, mf.variance);
    s.points.push_back({static_cast<double>(n), k, 0.0});
    rows.push_back(Json{{"n", n},
                        {"v_full", full.variance},
                        {"c_full", full.covariance},
                        {"v_meanfield", mf.variance},
                        {"kl", k},
                        {"tv_pinsker_bound", pinsker_tv_bound(k)}});
  }
  try_fit(s);
  out.series = {s};
  out.table = Json{{"n_sweep", rows}};
  out.verdict.measured = s.fitted ? s.fit.slope : std::nan("");
  out.verdict.pass = s.fitted && in_range(s.fit.slope, opt.slope);
  out.verdict.detail = s.fitted ? "fitted slope " + format_double(s.fit.slope) + ", r2 " + format_double(s.fit.r2)
                                : "too few positive points to fit";
  return out;
}

CriterionOutcome check_k_sharpness(const KSharpnessOptions& opt) {
  validate(opt.params);
  CriterionOutcome out;
  out.verdict.id = "AC6";
  out.verdict.name = "k-marginal KL scales as k(k-1)";
  out.verdict.tolerance = "max relative deviation of KL_k/(k(k-1)) from its mean <= " +
                          format_double(opt.relative_tolerance);
  const MeanFieldMoments mf = meanfield_moments_linear(opt.params, opt.t);
  const ExchangeableMoments full = full_cov_linear(opt.params, opt.n, opt.t);
  std::vector<double> ratios;
  Json rows = Json::array();
  for (std::size_t k : opt.ks) {
    if (k < 2) throw ConfigError("k-sharpness needs k >= 2");
    const double kl = k_marginal_exchangeable_kl(full.variance, full.covariance, mf.variance, opt.n, k,
                                                 full.mean, mf.mean);
    const double ratio = kl / static_cast<double>(k * (k - 1));
    ratios.push_back(ratio);
    rows.push_back(Json{{"k", k}, {"kl", kl}, {"kl_over_k_k_minus_1", ratio}});
  }
  if (ratios.empty()) throw ConfigError("k-sharpness needs at least one k");
  double mean = 0.0;
  for (double r : ratios) mean += r;
  mean /= static_cast<double>(ratios.size());
  double dev = 0.0;
  for (double r : ratios) dev = std::max(dev, std::abs(r / mean - 1.0));
  out.table = Json{{"k_table", rows}, {"mean_ratio", mean}};
  out.verdict.measured = dev;
  out.verdict.pass = dev <= opt.relative_tolerance;
  out.verdict.detail = "n = " + std::to_string(opt.n) + ", t = " + format_double(opt.t);
  return out;
}

CriterionOutcome check_mc_consistency(const McConsistencyOptions& opt) {
  validate(opt.params);
  CriterionOutcome out;
  out.verdict.id = "AC7";
  out.verdict.name = "Monte Carlo RBM covariance matches the exact RBM oracle";
  out.verdict.tolerance = "max |z| over covariance entries <= " + format_double(opt.max_z);
  const long long steps = steps_for(opt.t_end, opt.tau);
  SimConfig cfg;
  cfg.scheme = Scheme::rbm;
  cfg.n = opt.n;
  cfg.p = opt.p;
  cfg.tau = opt.tau;
  cfg.substeps = opt.substeps;
  cfg.t_end = opt.t_end;
  cfg.seed = opt.seed;
  cfg.replicas = opt.replicas;
  cfg.checkpoint_every = static_cast<std::size_t>(steps);
  const Model model = build_model(linear_spec(opt.params));
  const SimResult sim = simulate(cfg, model, linear_init(opt.params));

  const std::size_t n = opt.n;
  const std::size_t r = sim.final_states.size();
  const double rd = static_cast<double>(r);
  std::vector<double> mean(n, 0.0);
  for (const auto& s : sim.final_states)
    for (std::size_t i = 0; i < n; ++i) mean[i] += s.coords[i];
  for (auto& m : mean) m /= rd;

  const GaussianMoments exact = rbm_cov_linear(opt.params, n, opt.p, opt.tau, static_cast<std::size_t>(steps));
  const GaussianMoments em = rbm_cov_linear(opt.params, n, opt.p, opt.tau, static_cast<std::size_t>(steps),
                                            IntervalIntegrator::euler_maruyama(opt.substeps));
  double max_z = 0.0;
  double max_z_em = 0.0;
  double max_z_mean = 0.0;
  Json entries = Json::array();
  std::vector<double> y(r);
  for (std::size_t i = 0; i < n; ++i) {
    {
      double ss = 0.0;
      for (const auto& s : sim.final_states) ss += (s.coords[i] - mean[i]) * (s.coords[i] - mean[i]);
      const double se = std::sqrt(ss / (rd - 1.0) / rd);
      max_z_mean = std::max(max_z_mean, std::abs(mean[i] - exact.mean(i)) / se);
    }
    for (std::size_t j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < r; ++k) {
        const auto& c = sim.final_states[k].coords;
        y[k] = (c[i] - mean[i]) * (c[j] - mean[j]);
      }
      const double cov = pairwise_sum(y.data(), r) / (rd - 1.0);
      double ss = 0.0;
      const double ybar = cov * (rd - 1.0) / rd;
      for (double v : y) ss += (v - ybar) * (v - ybar);
      const double se = std::sqrt(ss / (rd - 1.0) / rd);
      const double z = std::abs(cov - exact.cov(i, j)) / se;
      const double z_em = std::abs(cov - em.cov(i, j)) / se;
      max_z = std::max(max_z, z);
      max_z_em = std::max(max_z_em, z_em);
      entries.push_back(Json{{"i", i},
                             {"j", j},
                             {"empirical", cov},
                             {"std_error", se},
                             {"oracle", exact.cov(i, j)},
                             {"oracle_em", em.cov(i, j)},
                             {"z", z},
                             {"z_em", z_em}});
    }
  }
  out.table = Json{{"covariance_entries", entries},
                   {"max_z_mean", max_z_mean},
                   {"max_z_em_oracle", max_z_em},
                   {"replicas", r},
                   {"substeps", opt.substeps}};
  out.verdict.measured = max_z;
  out.verdict.pass = max_z <= opt.max_z;
  out.verdict.detail = std::to_string(entries.size()) + " entries; max |z| against the matched Euler-Maruyama oracle " +
                       format_double(max_z_em) + ", means " + format_double(max_z_mean);
  return out;
}

double gaussian_abs_moment(double variance, std::size_t dim, double q) {
  const double d = static_cast<double>(dim);
  return std::pow(2.0 * variance, q / 2.0) * std::exp(std::lgamma((d + q) / 2.0) - std::lgamma(d / 2.0));
}

CriterionOutcome check_moment_bounds(const MomentOptions& opt) {
  CriterionOutcome out;
  out.verdict.id = "AC8";
  out.verdict.name = "E|X|^q finite and bounded over time";
  out.verdict.tolerance = "sup_t E|X|^q <= " + format_double(opt.factor) + " x stationary OU value";
  const Model model = build_model(opt.model);
  const double a = opt.model.param("a", 1.0);
  if (!(a > 0.0)) throw ConfigError("moment check needs a > 0 for the reference OU law");
  SimConfig cfg;
  cfg.scheme = Scheme::rbm;
  cfg.n = opt.n;
  cfg.p = opt.p;
  cfg.tau = opt.tau;
  cfg.t_end = opt.t_end;
  cfg.seed = opt.seed;
  cfg.replicas = opt.replicas;
  cfg.checkpoint_every = opt.checkpoint_every;
  steps_for(opt.t_end, opt.tau);
  const SimResult sim = simulate(cfg, model, opt.init);

  double worst_ratio = 0.0;
  bool finite = true;
  Json rows = Json::array();
  for (int q : opt.orders) {
    const std::string stat = "abs_moment_" + std::to_string(q);
    const double reference = gaussian_abs_moment(opt.model.sigma / a, model.dim(), q);
    RateSeries s{stat, "t", "E|X|^" + std::to_string(q), {}, false, {}};
    double sup = 0.0;
    for (const auto& c : sim.checkpoints) {
      auto it = std::find_if(c.stats.begin(), c.stats.end(), [&](const StatValue& v) { return v.name == stat; });
      if (it == c.stats.end()) throw ConfigError("moment order " + std::to_string(q) + " is not tracked (use 2, 4 or 8)");
      if (!std::isfinite(it->value)) finite = false;
      sup = std::max(sup, it->value);
      s.points.push_back({c.time, it->value, it->std_error});
    }
    worst_ratio = std::max(worst_ratio, sup / reference);
    rows.push_back(Json{{"q", q}, {"sup", sup}, {"reference", reference}, {"ratio", sup / reference}});
    out.series.push_back(std::move(s));
  }
  std::vector<double> pooled;
  for (const auto& st : sim.final_states)
    for (std::size_t i = 0; i < st.n; ++i) pooled.push_back(st.coords[i * st.dim]);
  out.table = Json{{"moments", rows}, {"final_tail", tail_report(pooled)}};
  out.verdict.measured = worst_ratio;
  out.verdict.pass = finite && worst_ratio <= opt.factor;
  out.verdict.detail = finite ? "largest sup/reference ratio over q" : "non-finite moment encountered";
  return out;
}

CriterionOutcome check_hierarchy(const HierarchyOptions& opt, HierarchyTable* table_out) {
  CriterionOutcome out;
  out.verdict.id = "AC9";
  out.verdict.name = "hierarchy integrals obey the pointwise and moment-sum bounds";
  out.verdict.tolerance = "pointwise slack " + format_double(kPointwiseSlack) + ", sum slack " +
                          format_double(kSumSlack) + ", A_1^1 closed form to " +
                          format_double(opt.closed_form_tolerance);
  const HierarchyTable table = hierarchy_table(opt.gamma, opt.k_max, opt.l_max, opt.times);
  const HierarchyCheck check = hierarchy_bound_check(table, opt.r_list);
  double closed = 0.0;
  for (std::size_t ti = 0; ti < opt.times.size(); ++ti)
    closed = std::max(closed, std::abs(table.at(1, 1, ti) + std::expm1(-opt.gamma * opt.times[ti])));
  Json violations = Json::array();
  for (std::size_t v = 0; v < std::min<std::size_t>(check.violations.size(), 20); ++v) {
    const auto& x = check.violations[v];
    violations.push_back(Json{{"bound", x.bound}, {"k", x.k}, {"l", x.l}, {"r", x.r},
                              {"t", x.t}, {"value", x.value}, {"limit", x.limit}});
  }
  out.table = Json{{"pointwise_checked", check.pointwise_checked},
                   {"sums_checked", check.sums_checked},
                   {"max_pointwise_excess", check.max_pointwise_excess},
                   {"max_sum_excess", check.max_sum_excess},
                   {"violation_count", check.violations.size()},
                   {"violations", violations},
                   {"a11_closed_form_error", closed}};
  out.verdict.measured = static_cast<double>(check.violations.size());
  out.verdict.pass = check.ok() && closed <= opt.closed_form_tolerance;
  out.verdict.detail = std::to_string(check.violations.size()) + " violations; A_1^1 error " + format_double(closed);
  if (table_out) *table_out = table;
  return out;
}

CriterionOutcome check_meanfield_w1(const MeanFieldW1Options& opt) {
  CriterionOutcome out;
  out.verdict.id = "AC10";
  out.verdict.name = "W1 between RBM empirical measures and the mean-field ensemble decreases in N";
  out.verdict.tolerance = "slope <= " + format_double(opt.max_slope) + " and r2 >= " + format_double(opt.min_r2);
  const Model model = build_model(opt.model);
  const std::size_t d = model.dim();
  steps_for(opt.t_end, opt.tau);

  SimConfig ref;
  ref.scheme = Scheme::meanfield_ensemble;
  ref.n = opt.ensemble;
  ref.tau = opt.tau;
  ref.t_end = opt.t_end;
  ref.seed = derived_seed(opt.seed, {opt.ensemble});
  ref.checkpoint_every = static_cast<std::size_t>(steps_for(opt.t_end, opt.tau));
  std::vector<double> reference = simulate(ref, model, opt.init).final_states.at(0).coords;
  if (d == 1) std::sort(reference.begin(), reference.end());

  RateSeries s{"mc_meanfield_w1", "n", "mean over replicas of W1(RBM empirical measure, ensemble)", {}, false, {}};
  Json rows = Json::array();
  for (std::size_t n : opt.ns) {
    SimConfig cfg;
    cfg.scheme = Scheme::rbm;
    cfg.n = n;
    cfg.p = opt.p;
    cfg.tau = opt.tau;
    cfg.t_end = opt.t_end;
    cfg.seed = derived_seed(opt.seed, {n, 1});
    cfg.replicas = opt.replicas;
    cfg.checkpoint_every = ref.checkpoint_every;
    const SimResult sim = simulate(cfg, model, opt.init);
    std::vector<double> w(sim.final_states.size());
    parallel_for(w.size(), [&](std::size_t k) {
      std::vector<double> x = sim.final_states[k].coords;
      if (d == 1) {
        std::sort(x.begin(), x.end());
        w[k] = w1_1d(x, reference);
      } else {
        w[k] = sliced_w1(x, reference, d);
      }
    });
    const double rd = static_cast<double>(w.size());
    const double mean = pairwise_sum(w.data(), w.size()) / rd;
    double ss = 0.0;
    for (double v : w) ss += (v - mean) * (v - mean);
    const double se = w.size() > 1 ? std::sqrt(ss / (rd - 1.0) / rd) : 0.0;
    s.points.push_back({static_cast<double>(n), mean, se});
    rows.push_back(Json{{"n", n}, {"w1_mean", mean}, {"std_error", se}, {"replicas", w.size()}});
  }
  try_fit(s);
  out.series = {s};
  out.table = Json{{"w1_sweep", rows}, {"ensemble_size", opt.ensemble}};
  out.verdict.measured = s.fitted ? s.fit.slope : std::nan("");
  out.verdict.pass = s.fitted && s.fit.slope <= opt.max_slope && s.fit.r2 >= opt.min_r2;
  out.verdict.detail = s.fitted ? "slope " + format_double(s.fit.slope) + ", r2 " + format_double(s.fit.r2)
                                : "too few positive points to fit";
  return out;
}

CriterionOutcome check_cost_scaling(const BenchOptions& opt) {
  CriterionOutcome out;
  out.verdict.id = "AC11";
  out.verdict.name = "per-step cost scaling of the full and RBM drift";
  out.verdict.advisory = !opt.assert_slopes;
  out.verdict.tolerance = "full slope in " + format_range(opt.full_slope) + ", RBM slope in " +
                          format_range(opt.rbm_slope);
  const Model model = build_model(opt.model);
  const std::size_t d = model.dim();
  RateSeries full{"bench_full_drift", "n", "seconds per drift evaluation", {}, false, {}};
  RateSeries rbm{"bench_rbm_step", "n", "seconds per division draw plus drift evaluation", {}, false, {}};
  Json rows = Json::array();
  for (std::size_t n : opt.ns) {
    RngStream stream(opt.seed, StreamTag::test, {n});
    std::vector<double> coords(n * d), drift(n * d);
    stream.fill_normal(coords);

    auto time_loop = [&](auto&& body) {
      std::size_t reps = 0;
      const auto start = std::chrono::steady_clock::now();
      double elapsed = 0.0;
      do {
        body();
        ++reps;
        elapsed = seconds_since(start);
      } while (elapsed < opt.min_seconds);
      return std::make_pair(elapsed / static_cast<double>(reps), reps);
    };
    const auto [t_full, reps_full] = time_loop([&] { full_drift(model, coords, d, drift); });
    RngStream division_stream(opt.seed, StreamTag::division, {n});
    const auto [t_rbm, reps_rbm] = time_loop([&] {
      const BatchDivision division = sample_division(n, opt.p, division_stream);
      rbm_drift(model, coords, d, division, drift);
    });
    full.points.push_back({static_cast<double>(n), t_full, 0.0});
    rbm.points.push_back({static_cast<double>(n), t_rbm, 0.0});
    rows.push_back(Json{{"n", n},
                        {"full_seconds", t_full},
                        {"full_repetitions", reps_full},
                        {"rbm_seconds", t_rbm},
                        {"rbm_repetitions", reps_rbm},
                        {"speedup", t_full / t_rbm}});
  }
  try_fit(full);
  try_fit(rbm);
  out.series = {full, rbm};
  out.table = Json{{"bench", rows}};
  const bool fitted = full.fitted && rbm.fitted;
  out.verdict.measured = full.fitted ? full.fit.slope : std::nan("");
  out.verdict.pass = fitted && in_range(full.fit.slope, opt.full_slope) && in_range(rbm.fit.slope, opt.rbm_slope);
  out.verdict.detail = fitted ? "full slope " + format_double(full.fit.slope) + ", RBM slope " +
                                    format_double(rbm.fit.slope)
                              : "too few positive points to fit";
  return out;
}

std::vector<RateSeries> strong_coupling_sweep(const StrongCouplingOptions& opt, Json& table) {
  const Model model = build_model(opt.model);
  RateSeries s{"strong_error", "tau", "E|X_rbm - X_full| at t_end", {}, false, {}};
  Json rows = Json::array();
  for (double tau : opt.taus) {
    steps_for(opt.t_end, tau);
    SimConfig cfg;
    cfg.n = opt.n;
    cfg.p = opt.p;
    cfg.tau = tau;
    cfg.substeps = opt.substeps;
    cfg.t_end = opt.t_end;
    cfg.seed = opt.seed;
    cfg.replicas = opt.replicas;
    const CoupledResult res = coupled_simulate(cfg, model, opt.init);
    const auto& last = res.checkpoints.back();
    s.points.push_back({tau, last.mean_abs_deviation, last.std_error});
    Json curve = Json::array();
    for (const auto& c : res.checkpoints)
      curve.push_back(Json{{"t", c.time}, {"deviation", c.mean_abs_deviation}, {"std_error", c.std_error}});
    rows.push_back(Json{{"tau", tau}, {"final_deviation", last.mean_abs_deviation},
                        {"std_error", last.std_error}, {"curve", curve}});
  }
  std::string note;
  try_fit(s, &note);
  // With p = N the coupled systems coincide, so the deviation must vanish.
  SimConfig same;
  same.n = opt.n;
  same.p = opt.n;
  same.tau = opt.taus.empty() ? opt.t_end : opt.taus.front();
  same.substeps = opt.substeps;
  same.t_end = opt.t_end;
  same.seed = opt.seed;
  same.replicas = std::min<std::size_t>(opt.replicas, 2);
  double degenerate = 0.0;
  for (const auto& c : coupled_simulate(same, model, opt.init).checkpoints)
    degenerate = std::max(degenerate, c.mean_abs_deviation);
  bool monotone = true;
  for (std::size_t i = 1; i < s.points.size(); ++i)
    if (s.points[i].x < s.points[i - 1].x) monotone = monotone && s.points[i].err < s.points[i - 1].err;
  table = Json{{"strong_sweep", rows},
               {"decreases_with_tau", monotone},
               {"p_equals_n_max_deviation", degenerate}};
  if (!note.empty()) table["fit_note"] = note;
  return {s};
}

std::vector<RateSeries> mc_tau_sweep(const McTauSweepOptions& opt, Json& table) {
  const Model model = build_model(opt.model);
  RateSeries kl{"mc_tau_kl_proxy", "tau", "gaussian-fit KL(pooled rbm || pooled full)", {}, false, {}};
  RateSeries gap{"mc_tau_var_gap", "tau", "|var_rbm - var_full|", {}, false, {}};
  Json rows = Json::array();
  auto pooled = [&](Scheme scheme, double tau) {
    SimConfig cfg;
    cfg.scheme = scheme;
    cfg.n = opt.n;
    cfg.p = opt.p;
    cfg.tau = tau;
    cfg.t_end = opt.t_end;
    cfg.seed = opt.seed;
    cfg.replicas = opt.replicas;
    cfg.checkpoint_every = static_cast<std::size_t>(steps_for(opt.t_end, tau));
    std::vector<double> out;
    for (const auto& s : simulate(cfg, model, opt.init).final_states)
      for (std::size_t i = 0; i < s.n; ++i) out.push_back(s.coords[i * s.dim]);
    return out;
  };
  for (double tau : opt.taus) {
    const auto r = pooled(Scheme::rbm, tau);
    const auto f = pooled(Scheme::full, tau);
    const GaussianFit gr = fit_gaussian(r);
    const GaussianFit gf = fit_gaussian(f);
    const double k = gaussian_kl(gr.mean, gr.variance, gf.mean, gf.variance);
    const double g = std::abs(gr.variance - gf.variance);
    kl.points.push_back({tau, k, 0.0});
    gap.points.push_back({tau, g, 0.0});
    rows.push_back(Json{{"tau", tau},
                        {"rbm_mean", gr.mean},
                        {"rbm_variance", gr.variance},
                        {"full_mean", gf.mean},
                        {"full_variance", gf.variance},
                        {"kl_proxy", k},
                        {"hist_tv", hist_tv(r, f, 50, -6.0, 6.0).tv}});
  }
  try_fit(kl);
  try_fit(gap);
  table = Json{{"mc_tau_sweep", rows}};
  return {kl, gap};
}

Json tail_report(std::span<const double> samples) {
  const TailFit fit = subgaussian_tail(samples);
  Json j{{"available", fit.available}};
  if (!fit.available) {
    j["reason"] = fit.reason;
    return j;
  }
  j["coefficient"] = fit.coefficient;
  j["r2"] = fit.r2;
  j["points"] = fit.points;
  j["heavy_tail"] = fit.heavy_tail;
  return j;
}

}  // namespace rbmlab
