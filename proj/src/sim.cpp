#include "rbmlab/sim.hpp"

#include <cmath>
#include <optional>

#include "rbmlab/errors.hpp"
#include "rbmlab/parallel.hpp"

namespace rbmlab {

ParticleState::ParticleState(std::size_t n_, std::size_t dim_, std::vector<double> coords_)
    : n(n_), dim(dim_), coords(std::move(coords_)) {
  if (coords.size() != n * dim)
    throw ValidationError("particle coordinates must be an n x dim array");
}

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::full: return "full";
    case Scheme::rbm: return "rbm";
    case Scheme::meanfield_ensemble: return "meanfield-ensemble";
  }
  return "full";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "full") return Scheme::full;
  if (name == "rbm") return Scheme::rbm;
  if (name == "meanfield-ensemble" || name == "meanfield") return Scheme::meanfield_ensemble;
  throw ConfigError("unknown scheme '" + name + "'");
}

long long SimConfig::outer_steps() const { return std::llround(t_end / tau); }

void validate(const SimConfig& config) {
  if (!(config.tau > 0.0) || !std::isfinite(config.tau))
    throw ValidationError("tau must be finite and > 0");
  if (!(config.t_end >= 0.0) || !std::isfinite(config.t_end))
    throw ValidationError("t_end must be finite and >= 0");
  if (config.substeps < 1) throw ValidationError("substeps must be >= 1");
  if (config.replicas < 1) throw ValidationError("replicas must be >= 1");
  if (config.checkpoint_every < 1) throw ValidationError("checkpoint_every must be >= 1");
  if (config.n < 2) throw ValidationError("at least two particles are required");
  if (config.scheme == Scheme::rbm) validate_batch_shape(config.n, config.p);
}

namespace {

// b0(x_i) + scale * (sum over rows [0, self) and (self, count) of b(x_i - x_j)).
inline void interaction_row(const ModelFamily& family, std::span<const double> xi,
                            std::span<const double> group, std::size_t self,
                            std::size_t dim, double scale, double* acc, double* out) {
  for (std::size_t k = 0; k < dim; ++k) acc[k] = 0.0;
  family.accumulate_kernel(xi, group.subspan(0, self * dim), {acc, dim});
  family.accumulate_kernel(xi, group.subspan((self + 1) * dim), {acc, dim});
  family.drift0(xi, {out, dim});
  for (std::size_t k = 0; k < dim; ++k) out[k] += scale * acc[k];
}

void check_shape(std::span<const double> coords, std::size_t dim, std::span<double> out) {
  if (dim == 0 || coords.size() % dim != 0 || out.size() != coords.size())
    throw ValidationError("drift arrays must be n x dim");
}

}  // namespace

void full_drift(const Model& model, std::span<const double> coords, std::size_t dim,
                std::span<double> out) {
  check_shape(coords, dim, out);
  const std::size_t n = coords.size() / dim;
  if (n < 2) throw ValidationError("full drift needs N >= 2 (interaction undefined)");
  const double scale = 1.0 / static_cast<double>(n - 1);
  std::vector<double> acc(dim);
  for (std::size_t i = 0; i < n; ++i)
    interaction_row(model.family(), coords.subspan(i * dim, dim), coords, i, dim, scale,
                    acc.data(), out.data() + i * dim);
}

std::vector<double> full_drift(const Model& model, const ParticleState& state) {
  std::vector<double> out(state.coords.size());
  full_drift(model, state.coords, state.dim, out);
  return out;
}

void rbm_drift(const Model& model, std::span<const double> coords, std::size_t dim,
               const BatchDivision& division, std::span<double> out) {
  check_shape(coords, dim, out);
  const std::size_t n = coords.size() / dim;
  if (division.n() != n) throw ValidationError("division size does not match particle count");
  const std::size_t p = division.p();
  if (p < 2) throw ValidationError("rbm drift needs p >= 2");
  const double scale = 1.0 / static_cast<double>(p - 1);
  std::vector<double> group(p * dim);
  std::vector<double> acc(dim);
  for (std::size_t b = 0; b < division.block_count(); ++b) {
    const auto members = division.block(b);
    for (std::size_t m = 0; m < p; ++m)
      for (std::size_t k = 0; k < dim; ++k) group[m * dim + k] = coords[members[m] * dim + k];
    for (std::size_t m = 0; m < p; ++m)
      interaction_row(model.family(), std::span<const double>(group).subspan(m * dim, dim),
                      group, m, dim, scale, acc.data(), out.data() + members[m] * dim);
  }
}

std::vector<double> rbm_drift(const Model& model, const ParticleState& state,
                              const BatchDivision& division) {
  std::vector<double> out(state.coords.size());
  rbm_drift(model, state.coords, state.dim, division, out);
  return out;
}

void ensemble_drift(const Model& model, std::span<const double> coords, std::size_t dim,
                    std::span<double> out) {
  check_shape(coords, dim, out);
  const std::size_t n = coords.size() / dim;
  if (n < 2) throw ValidationError("ensemble drift needs at least two members");
  if (!model.family().aggregate_interactions(coords, dim, out)) {
    full_drift(model, coords, dim, out);
    return;
  }
  const double scale = 1.0 / static_cast<double>(n - 1);
  std::vector<double> b0(dim);
  for (std::size_t i = 0; i < n; ++i) {
    model.drift0(coords.subspan(i * dim, dim), b0);
    for (std::size_t k = 0; k < dim; ++k) out[i * dim + k] = b0[k] + scale * out[i * dim + k];
  }
}

void draw_noise(const NoiseKey& key, std::uint64_t label, std::span<double> out) {
  RngStream stream(key.seed, StreamTag::noise, {key.replica, key.step, key.substep, label});
  stream.fill_normal(out);
}

void em_step_with_increments(ParticleState& state, std::span<const double> drift,
                             double sigma, double dt, std::span<const double> gaussians) {
  if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
  if (drift.size() != state.coords.size() || gaussians.size() != state.coords.size())
    throw ValidationError("drift and noise must match the state shape");
  const double amplitude = std::sqrt(2.0 * sigma * dt);
  bool finite = true;
  for (std::size_t k = 0; k < state.coords.size(); ++k) {
    double& x = state.coords[k];
    x = x + drift[k] * dt + amplitude * gaussians[k];
    finite = finite && std::isfinite(x);
  }
  ++state.step;
  state.time = static_cast<double>(state.step) * dt;
  if (!finite) throw DivergenceError("non-finite coordinates", state.step);
}

void em_step(ParticleState& state, std::span<const double> drift, double sigma, double dt,
             const NoiseKey& key, std::span<const std::uint64_t> labels) {
  if (!labels.empty() && labels.size() != state.n)
    throw ValidationError("noise labels must have one entry per particle");
  std::vector<double> gaussians(state.coords.size());
  for (std::size_t i = 0; i < state.n; ++i)
    draw_noise(key, labels.empty() ? i : labels[i],
               std::span(gaussians).subspan(i * state.dim, state.dim));
  em_step_with_increments(state, drift, sigma, dt, gaussians);
}

namespace {

ParticleState initial_state(const SimConfig& config, const InitialLaw& law,
                            std::size_t replica, std::span<const std::uint64_t> labels) {
  validate(law);
  const std::size_t dim = law.dim();
  std::vector<double> coords(config.n * dim);
  for (std::size_t i = 0; i < config.n; ++i) {
    RngStream stream(config.seed, StreamTag::init,
                     {replica, labels.empty() ? i : labels[i]});
    sample_initial_point(law, stream, std::span(coords).subspan(i * dim, dim));
  }
  return ParticleState(config.n, dim, std::move(coords));
}

bool is_checkpoint(long long step, long long total, std::size_t every) {
  return step == total || step % static_cast<long long>(every) == 0;
}

void check_dims(const Model& model, const InitialLaw& law) {
  if (model.dim() != law.dim())
    throw ValidationError("initial law dimension does not match the model");
}

}  // namespace

ParticleState run_replica(const SimConfig& config, const Model& model,
                          const InitialLaw& law, std::size_t replica,
                          std::span<const std::uint64_t> labels,
                          const CheckpointObserver& observer) {
  validate(config);
  check_dims(model, law);
  if (!labels.empty() && labels.size() != config.n)
    throw ValidationError("labels must have one entry per particle");
  ParticleState state = initial_state(config, law, replica, labels);
  const long long steps = config.outer_steps();
  const double dt = config.dt();
  std::vector<double> drift(state.coords.size());
  if (observer) observer(0, state);
  for (long long step = 0; step < steps; ++step) {
    std::optional<BatchDivision> division;
    if (config.scheme == Scheme::rbm) {
      RngStream stream(config.seed, StreamTag::division,
                       {replica, static_cast<std::uint64_t>(step)});
      division = sample_division(config.n, config.p, stream);
    }
    for (std::size_t sub = 0; sub < config.substeps; ++sub) {
      switch (config.scheme) {
        case Scheme::full: full_drift(model, state.coords, state.dim, drift); break;
        case Scheme::rbm: rbm_drift(model, state.coords, state.dim, *division, drift); break;
        case Scheme::meanfield_ensemble:
          ensemble_drift(model, state.coords, state.dim, drift);
          break;
      }
      em_step(state, drift, model.sigma(), dt,
              {config.seed, replica, static_cast<std::uint64_t>(step), sub}, labels);
    }
    if (observer && is_checkpoint(step + 1, steps, config.checkpoint_every))
      observer(step + 1, state);
  }
  return state;
}

namespace {

constexpr int kMomentOrders[] = {2, 4, 8};

// Replica-level raw statistics at one checkpoint.
struct ReplicaStats {
  std::vector<double> mean;      // per dim
  std::vector<double> second;    // per dim, E x^2
  std::vector<double> central4;  // per dim, E (x - mean_r)^4
  double abs_q[3] = {0, 0, 0};
  double abs_2q[3] = {0, 0, 0};
};

ReplicaStats replica_stats(const ParticleState& s) {
  ReplicaStats r;
  const double inv_n = 1.0 / static_cast<double>(s.n);
  r.mean.assign(s.dim, 0.0);
  r.second.assign(s.dim, 0.0);
  r.central4.assign(s.dim, 0.0);
  for (std::size_t i = 0; i < s.n; ++i) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < s.dim; ++k) {
      const double x = s.coords[i * s.dim + k];
      r.mean[k] += x;
      r.second[k] += x * x;
      norm2 += x * x;
    }
    for (int q = 0; q < 3; ++q) {
      const double v = std::pow(norm2, kMomentOrders[q] / 2.0);
      r.abs_q[q] += v;
      r.abs_2q[q] += v * v;
    }
  }
  for (std::size_t k = 0; k < s.dim; ++k) {
    r.mean[k] *= inv_n;
    r.second[k] *= inv_n;
    for (std::size_t i = 0; i < s.n; ++i) {
      const double c = s.coords[i * s.dim + k] - r.mean[k];
      r.central4[k] += c * c * c * c;
    }
    r.central4[k] *= inv_n;
  }
  for (int q = 0; q < 3; ++q) {
    r.abs_q[q] *= inv_n;
    r.abs_2q[q] *= inv_n;
  }
  return r;
}

// Mean and standard error of replica-level values.
std::pair<double, double> across_replicas(const std::vector<double>& values) {
  const std::size_t r = values.size();
  const double mean = pairwise_sum(values.data(), r) / static_cast<double>(r);
  if (r < 2) return {mean, 0.0};
  std::vector<double> sq(r);
  for (std::size_t i = 0; i < r; ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
  const double var = pairwise_sum(sq.data(), r) / static_cast<double>(r - 1);
  return {mean, std::sqrt(var / static_cast<double>(r))};
}

std::vector<StatValue> reduce_stats(const std::vector<const ReplicaStats*>& reps,
                                    std::size_t n, std::size_t dim) {
  const std::size_t r = reps.size();
  const double per_replica = static_cast<double>(n);
  std::vector<StatValue> stats;
  std::vector<double> values(r);
  for (std::size_t k = 0; k < dim; ++k) {
    for (std::size_t i = 0; i < r; ++i) values[i] = reps[i]->mean[k];
    auto [mean, mean_se] = across_replicas(values);
    for (std::size_t i = 0; i < r; ++i) values[i] = reps[i]->second[k];
    const double second = across_replicas(values).first;
    const double total = per_replica * static_cast<double>(r);
    const double var = (second - mean * mean) * total / (total - 1.0);
    for (std::size_t i = 0; i < r; ++i)
      values[i] = (reps[i]->second[k] - mean * mean) * total / (total - 1.0);
    double var_se = across_replicas(values).second;
    if (r == 1) {
      mean_se = std::sqrt(var / per_replica);
      var_se = std::sqrt(std::max(0.0, reps[0]->central4[k] - var * var) / per_replica);
    }
    stats.push_back({"mean_" + std::to_string(k), mean, mean_se});
    stats.push_back({"var_" + std::to_string(k), var, var_se});
  }
  for (int q = 0; q < 3; ++q) {
    for (std::size_t i = 0; i < r; ++i) values[i] = reps[i]->abs_q[q];
    auto [value, se] = across_replicas(values);
    if (r == 1)
      se = std::sqrt(std::max(0.0, reps[0]->abs_2q[q] - value * value) / per_replica);
    stats.push_back({"abs_moment_" + std::to_string(kMomentOrders[q]), value, se});
  }
  return stats;
}

std::vector<long long> checkpoint_steps(const SimConfig& config) {
  std::vector<long long> out;
  const long long steps = config.outer_steps();
  out.push_back(0);
  for (long long s = 1; s <= steps; ++s)
    if (is_checkpoint(s, steps, config.checkpoint_every)) out.push_back(s);
  return out;
}

}  // namespace

SimResult simulate(const SimConfig& config, const Model& model, const InitialLaw& law) {
  validate(config);
  check_dims(model, law);
  const auto steps = checkpoint_steps(config);
  const std::size_t replicas = config.replicas;

  std::vector<std::vector<ReplicaStats>> per_replica(replicas);
  SimResult result;
  result.final_states.resize(replicas);
  if (config.keep_trajectories) result.trajectories.resize(replicas);

  parallel_for(replicas, [&](std::size_t r) {
    auto observer = [&](long long, const ParticleState& s) {
      per_replica[r].push_back(replica_stats(s));
      if (config.keep_trajectories) result.trajectories[r].push_back(s.coords);
    };
    result.final_states[r] = run_replica(config, model, law, r, {}, observer);
  });

  const double dt_outer = config.tau;
  for (std::size_t c = 0; c < steps.size(); ++c) {
    std::vector<const ReplicaStats*> reps(replicas);
    for (std::size_t r = 0; r < replicas; ++r) reps[r] = &per_replica[r][c];
    result.checkpoints.push_back({steps[c], static_cast<double>(steps[c]) * dt_outer,
                                  reduce_stats(reps, config.n, law.dim())});
  }
  return result;
}

CoupledResult coupled_simulate(const SimConfig& config_in, const Model& model,
                               const InitialLaw& law) {
  SimConfig config = config_in;
  config.scheme = Scheme::rbm;
  validate(config);
  check_dims(model, law);
  const auto checkpoints = checkpoint_steps(config);
  const long long steps = config.outer_steps();
  const double dt = config.dt();
  const std::size_t replicas = config.replicas;

  CoupledResult result;
  result.final_full.resize(replicas);
  result.final_rbm.resize(replicas);
  std::vector<std::vector<double>> deviation(replicas);

  auto mean_abs_dev = [](const ParticleState& a, const ParticleState& b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < a.dim; ++k) {
        const double d = a.coords[i * a.dim + k] - b.coords[i * a.dim + k];
        d2 += d * d;
      }
      total += std::sqrt(d2);
    }
    return total / static_cast<double>(a.n);
  };

  parallel_for(replicas, [&](std::size_t r) {
    ParticleState full = initial_state(config, law, r, {});
    ParticleState rbm = full;
    std::vector<double> drift(full.coords.size());
    std::vector<double> gaussians(full.coords.size());
    deviation[r].push_back(0.0);
    for (long long step = 0; step < steps; ++step) {
      RngStream stream(config.seed, StreamTag::division,
                       {r, static_cast<std::uint64_t>(step)});
      const BatchDivision division = sample_division(config.n, config.p, stream);
      for (std::size_t sub = 0; sub < config.substeps; ++sub) {
        const NoiseKey key{config.seed, r, static_cast<std::uint64_t>(step), sub};
        for (std::size_t i = 0; i < config.n; ++i)
          draw_noise(key, i, std::span(gaussians).subspan(i * full.dim, full.dim));
        full_drift(model, full.coords, full.dim, drift);
        em_step_with_increments(full, drift, model.sigma(), dt, gaussians);
        rbm_drift(model, rbm.coords, rbm.dim, division, drift);
        em_step_with_increments(rbm, drift, model.sigma(), dt, gaussians);
      }
      if (is_checkpoint(step + 1, steps, config.checkpoint_every))
        deviation[r].push_back(mean_abs_dev(full, rbm));
    }
    result.final_full[r] = std::move(full);
    result.final_rbm[r] = std::move(rbm);
  });

  std::vector<double> values(replicas);
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    for (std::size_t r = 0; r < replicas; ++r) values[r] = deviation[r][c];
    auto [mean, se] = across_replicas(values);
    result.checkpoints.push_back(
        {checkpoints[c], static_cast<double>(checkpoints[c]) * config.tau, mean, se});
  }
  return result;
}

}  // namespace rbmlab
