#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbmlab/model.hpp"
#include "rbmlab/report.hpp"
#include "rbmlab/sim.hpp"

namespace rbmlab {

enum class ExperimentKind {
  converge_tau,
  converge_n,
  verify_batching,
  hierarchy,
  moment_check,
  bench,
  strong_coupling,
};

std::string to_string(ExperimentKind kind);
/// Throws ConfigError for unknown names.
ExperimentKind experiment_from_string(const std::string& name);
std::vector<std::string> experiment_names();

/// Defaults for every knob of `kind`, with sections model, sim, experiment.
Json default_config(ExperimentKind kind);

/// Defaults overlaid with `user` (recursive merge; arrays replace). Unknown
/// keys are rejected with ConfigError so typos do not pass silently.
Json resolve_config(ExperimentKind kind, const Json& user);

/// Reads a JSON file; ConfigError on I/O or parse failure.
Json load_json_file(const std::string& path);

/// Parsers for the model and sim sections. ConfigError on wrong types or
/// unknown enum values, ValidationError on out-of-range values.
ModelSpec parse_model(const Json& model);
InitialLaw parse_initial_law(const Json& model);
SimConfig parse_sim(const Json& sim);

/// Runs `kind` on a resolved config.
ExperimentReport run_experiment(ExperimentKind kind, const Json& resolved);

/// Defaults for `rbmlab simulate`: sections model and sim.
Json default_simulate_config();
Json resolve_simulate_config(const Json& user);

/// Runs the sim section and renders CSV. Trajectory mode writes
/// `replica,step,time,particle,dim0..`; summary mode writes
/// `step,time,stat,value,stderr`. `step` counts outer (batch) steps.
std::string run_simulate_csv(const Json& resolved);

/// Oracle tables for a parameter object with keys a, kappa, sigma, m0, v0,
/// n, t and optionally p, tau (RBM moments).
Json oracle_tables(const Json& params);

/// `k,l,t,A` rows of a hierarchy table.
std::string hierarchy_csv(const Json& resolved);

/// 0 when every non-advisory verdict passes, 3 otherwise.
int exit_code(const ExperimentReport& report);

inline constexpr int kExitConfigError = 2;
inline constexpr int kExitCriterionFailure = 3;

}  // namespace rbmlab
