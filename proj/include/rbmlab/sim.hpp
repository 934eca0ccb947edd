#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rbmlab/batching.hpp"
#include "rbmlab/model.hpp"

namespace rbmlab {

struct ParticleState {
  long long step = 0;  // Euler-Maruyama steps taken
  double time = 0.0;
  std::size_t n = 0;
  std::size_t dim = 1;
  std::vector<double> coords;  // n x dim, row-major

  ParticleState() = default;
  ParticleState(std::size_t n_, std::size_t dim_, std::vector<double> coords_);

  std::span<const double> row(std::size_t i) const {
    return std::span(coords).subspan(i * dim, dim);
  }
};

enum class Scheme { full, rbm, meanfield_ensemble };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& name);

struct SimConfig {
  Scheme scheme = Scheme::full;
  std::size_t n = 2;  // particle count, or ensemble size M for meanfield
  std::size_t p = 2;  // batch size (rbm only)
  double tau = 0.01;  // batch period and outer step
  std::size_t substeps = 1;
  double t_end = 1.0;
  std::uint64_t seed = 0;
  std::size_t replicas = 1;
  std::size_t checkpoint_every = 1;  // outer steps between checkpoints
  bool keep_trajectories = false;

  /// Number of outer steps, round(t_end / tau).
  long long outer_steps() const;
  double dt() const { return tau / static_cast<double>(substeps); }
};

/// Throws ValidationError on inconsistent settings.
void validate(const SimConfig& config);

/// out_i = b0(x_i) + 1/(N-1) sum_{j != i} b(x_i - x_j), Theta(N^2 d).
void full_drift(const Model& model, std::span<const double> coords,
                std::size_t dim, std::span<double> out);
std::vector<double> full_drift(const Model& model, const ParticleState& state);

/// out_i = b0(x_i) + 1/(p-1) sum_{l in xi(i), l != i} b(x_i - x_l), Theta(N p d).
/// With p = N the summation order matches full_drift exactly.
void rbm_drift(const Model& model, std::span<const double> coords, std::size_t dim,
               const BatchDivision& division, std::span<double> out);
std::vector<double> rbm_drift(const Model& model, const ParticleState& state,
                              const BatchDivision& division);

/// Full drift using the family's O(N d) factorized interaction sum when
/// available; the self-consistent ensemble approximation of the mean-field law.
void ensemble_drift(const Model& model, std::span<const double> coords,
                    std::size_t dim, std::span<double> out);

/// Identifies the Brownian increments of one Euler-Maruyama step.
struct NoiseKey {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  std::uint64_t step = 0;  // outer (batch) step
  std::uint64_t substep = 0;
};

/// Standard normals for particle `label` at `key` (dim values).
void draw_noise(const NoiseKey& key, std::uint64_t label, std::span<double> out);

/// x' = x + drift dt + sqrt(2 sigma dt) G with caller-supplied G (n x dim).
void em_step_with_increments(ParticleState& state, std::span<const double> drift,
                             double sigma, double dt,
                             std::span<const double> gaussians);

/// Same with G drawn per particle from `key`; particle i uses noise label
/// labels[i] (or i when labels is empty). Throws DivergenceError on
/// non-finite output.
void em_step(ParticleState& state, std::span<const double> drift, double sigma,
             double dt, const NoiseKey& key,
             std::span<const std::uint64_t> labels = {});

using CheckpointObserver =
    std::function<void(long long outer_step, const ParticleState& state)>;

/// Runs one replica from its seeded initial draw. Particle i takes its
/// initial sample and its noise from label labels[i] (or i). The observer is
/// called at outer step 0, every `checkpoint_every` outer steps and at the end.
ParticleState run_replica(const SimConfig& config, const Model& model,
                          const InitialLaw& law, std::size_t replica,
                          std::span<const std::uint64_t> labels = {},
                          const CheckpointObserver& observer = {});

struct StatValue {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
};

struct Checkpoint {
  long long step = 0;  // outer step
  double time = 0.0;
  std::vector<StatValue> stats;
};

struct SimResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<ParticleState> final_states;  // one per replica
  /// [replica][checkpoint] coordinates, filled when keep_trajectories is set.
  std::vector<std::vector<std::vector<double>>> trajectories;
};

/// Summary statistics recorded at every checkpoint: per-dimension mean and
/// variance ("mean_k", "var_k") and moments E|X|^q ("abs_moment_q" for
/// q = 2, 4, 8) over particles and replicas. Standard errors come from the
/// spread of replica-level values when replicas >= 2, otherwise from the
/// particles treated as independent.
SimResult simulate(const SimConfig& config, const Model& model, const InitialLaw& law);

struct CoupledCheckpoint {
  long long step = 0;
  double time = 0.0;
  double mean_abs_deviation = 0.0;  // E|X_rbm - X_full| over particles, replicas
  double std_error = 0.0;
};

struct CoupledResult {
  std::vector<CoupledCheckpoint> checkpoints;
  std::vector<ParticleState> final_full;
  std::vector<ParticleState> final_rbm;
};

/// Runs the full and the RBM system with identical initial data and Brownian
/// increments (synchronous coupling). `config.scheme` is ignored.
CoupledResult coupled_simulate(const SimConfig& config, const Model& model,
                               const InitialLaw& law);

}  // namespace rbmlab
