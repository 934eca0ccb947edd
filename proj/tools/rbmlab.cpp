// rbmlab command-line front end.
//
//   rbmlab <experiment> [--config file] [--out report.json] [--csv points.csv] [--seed u64]
//   rbmlab simulate --config file [--out traj.csv] [--seed u64]
//   rbmlab oracle --params file [--out tables.json]
//
// Exit codes: 0 success, 1 runtime failure, 2 config or schema error,
// 3 acceptance criterion failure.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rbmlab/errors.hpp"
#include "rbmlab/harness.hpp"

namespace {

using rbmlab::Json;

void write_output(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary);
  if (!out) throw rbmlab::ConfigError("cannot write " + *path);
  out << text;
}

// Accepts "start:stop:count" or a comma-separated list.
Json parse_grid(const std::string& text) {
  const auto colon = std::count(text.begin(), text.end(), ':');
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw rbmlab::ConfigError("--t: cannot parse '" + s + "'");
    }
  };
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, colon == 2 ? ':' : ',');) parts.push_back(item);
  if (colon == 2) {
    const double count = number(parts.at(2));
    if (count < 1 || count != std::floor(count)) throw rbmlab::ConfigError("--t: count must be a positive integer");
    return Json{{"start", number(parts.at(0))}, {"stop", number(parts.at(1))},
                {"count", static_cast<std::size_t>(count)}};
  }
  Json list = Json::array();
  for (const auto& p : parts) list.push_back(number(p));
  return list;
}

struct ExperimentFlags {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::string> csv;
  std::optional<std::uint64_t> seed;
  // verify-batching
  std::optional<std::size_t> n, p, anchor, samples;
  // hierarchy
  std::optional<double> gamma;
  std::optional<std::size_t> k_max, l_max;
  std::optional<std::string> grid;
  std::vector<int> r_list;
  // bench
  bool assert_slopes = false;
};

int run_experiment_command(const std::string& name, const ExperimentFlags& f) {
  const auto kind = rbmlab::experiment_from_string(name);
  Json user = f.config ? rbmlab::load_json_file(*f.config) : Json::object();
  if (!user.is_object()) throw rbmlab::ConfigError("config must be a JSON object");
  if (f.seed) user["sim"]["seed"] = *f.seed;
  auto& ex = user["experiment"];
  if (kind == rbmlab::ExperimentKind::verify_batching) {
    if (f.n.has_value() != f.p.has_value()) throw rbmlab::ConfigError("--n and --p go together");
    if (f.n) {
      const Json shapes = Json::array({Json::array({*f.n, *f.p})});
      ex["shapes"] = shapes;
      ex["uniformity"]["shapes"] = shapes;
      ex["drift"]["ns"] = Json::array({*f.n});
      if (*f.n > 8) ex["drift"]["enabled"] = false;
    }
    if (f.anchor) ex["anchors"] = Json::array({*f.anchor});
    if (f.samples) ex["uniformity"]["samples"] = *f.samples;
  }
  if (kind == rbmlab::ExperimentKind::hierarchy) {
    if (f.gamma) ex["gamma"] = *f.gamma;
    if (f.k_max) ex["k_max"] = *f.k_max;
    if (f.l_max) ex["l_max"] = *f.l_max;
    if (f.grid) ex["t"] = parse_grid(*f.grid);
    if (!f.r_list.empty()) ex["r_list"] = f.r_list;
  }
  if (kind == rbmlab::ExperimentKind::bench) {
    const char* env = std::getenv("RBMLAB_BENCH_ASSERT");
    if (f.assert_slopes || (env && std::string(env) == "1")) ex["assert"] = true;
  }
  if (ex.empty()) user.erase("experiment");

  const Json resolved = rbmlab::resolve_config(kind, user);
  const auto report = rbmlab::run_experiment(kind, resolved);
  write_output(f.out, rbmlab::render(report));
  if (f.csv) {
    write_output(*f.csv, kind == rbmlab::ExperimentKind::hierarchy ? rbmlab::hierarchy_csv(resolved)
                                                                      : rbmlab::render_points_csv(report));
  }
  for (const auto& v : report.verdicts)
    std::cerr << v.id << " " << (v.pass ? "PASS" : (v.advisory ? "FAIL (advisory)" : "FAIL")) << "  "
              << v.name << "  measured=" << rbmlab::format_double(v.measured) << "  tolerance: " << v.tolerance
              << "\n";
  return rbmlab::exit_code(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random batch method laboratory: simulation, exact oracles and rate experiments"};
  app.require_subcommand(1);

  ExperimentFlags flags;
  for (const auto& name : rbmlab::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", flags.config, "JSON config with sections model, sim, experiment");
    sub->add_option("--out", flags.out, "report path (default: stdout)");
    sub->add_option("--csv", flags.csv, "CSV point table path");
    sub->add_option("--seed", flags.seed, "override sim.seed");
    if (name == "verify-batching") {
      sub->add_option("--n", flags.n, "particle count");
      sub->add_option("--p", flags.p, "batch size");
      sub->add_option("--i", flags.anchor, "anchor particle (default: all)");
      sub->add_option("--samples", flags.samples, "draws for the sampler uniformity test");
    }
    if (name == "hierarchy") {
      sub->add_option("--gamma", flags.gamma, "rate gamma");
      sub->add_option("--kmax", flags.k_max, "largest k");
      sub->add_option("--lmax", flags.l_max, "largest l");
      sub->add_option("--t", flags.grid, "time grid: start:stop:count or t1,t2,...");
      sub->add_option("--r", flags.r_list, "moment orders for the sum bound")->delimiter(',');
    }
    if (name == "bench") sub->add_flag("--assert", flags.assert_slopes, "turn the cost-slope verdict into a hard check");
  }

  std::string sim_config;
  std::optional<std::string> sim_out;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "run one simulation and write CSV");
  simulate->add_option("--config", sim_config, "JSON config with sections model, sim")->required();
  simulate->add_option("--out", sim_out, "CSV path (default: stdout)");
  simulate->add_option("--seed", sim_seed, "override sim.seed");

  std::string oracle_params;
  std::optional<std::string> oracle_out;
  auto* oracle = app.add_subcommand("oracle", "exact moment tables for the linear model");
  oracle->add_option("--params", oracle_params, "JSON with a, kappa, sigma, m0, v0, n, t [, p, tau]")->required();
  oracle->add_option("--out", oracle_out, "JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rbmlab::kExitConfigError;
  }

  try {
    if (simulate->parsed()) {
      Json user = rbmlab::load_json_file(sim_config);
      if (!user.is_object()) throw rbmlab::ConfigError("config must be a JSON object");
      user.erase("experiment");
      if (sim_seed) user["sim"]["seed"] = *sim_seed;
      const Json resolved = rbmlab::resolve_simulate_config(user);
      write_output(sim_out, rbmlab::run_simulate_csv(resolved));
      return 0;
    }
    if (oracle->parsed()) {
      write_output(oracle_out, rbmlab::oracle_tables(rbmlab::load_json_file(oracle_params)).dump(2) + "\n");
      return 0;
    }
    for (const auto* sub : app.get_subcommands()) return run_experiment_command(sub->get_name(), flags);
  } catch (const rbmlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return rbmlab::kExitConfigError;
  } catch (const rbmlab::ValidationError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return rbmlab::kExitConfigError;
  } catch (const rbmlab::CapacityError& e) {
    std::cerr << "unsupported size: " << e.what() << "\n";
    return rbmlab::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
