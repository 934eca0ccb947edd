// Runs every experiment with its default configuration and prints one line per
// acceptance criterion. Exit status is nonzero if any non-advisory criterion
// fails or exceeds its runtime budget.

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "rbmlab/harness.hpp"

namespace {

using rbmlab::ExperimentKind;

struct Criterion {
  const char* id;
  ExperimentKind kind;
  double budget_seconds;
};

// Runtime budgets per criterion.
const std::vector<Criterion> kCriteria{
    {"AC1", ExperimentKind::verify_batching, 5.0},  {"AC2", ExperimentKind::verify_batching, 5.0},
    {"AC3", ExperimentKind::strong_coupling, 1.0},  {"AC4", ExperimentKind::converge_tau, 30.0},
    {"AC5", ExperimentKind::converge_n, 5.0},       {"AC6", ExperimentKind::converge_n, 5.0},
    {"AC7", ExperimentKind::converge_tau, 120.0},   {"AC8", ExperimentKind::moment_check, 120.0},
    {"AC9", ExperimentKind::hierarchy, 10.0},       {"AC10", ExperimentKind::converge_n, 600.0},
    {"AC11", ExperimentKind::bench, 300.0},
};

}  // namespace

int main() {
  const char* env = std::getenv("RBMLAB_BENCH_ASSERT");
  const bool bench_assert = env && std::string(env) == "1";

  std::map<ExperimentKind, rbmlab::ExperimentReport> reports;
  for (const auto& c : kCriteria) {
    if (reports.count(c.kind)) continue;
    rbmlab::Json user = rbmlab::Json::object();
    if (c.kind == ExperimentKind::bench && bench_assert) user["experiment"]["assert"] = true;
    const auto resolved = rbmlab::resolve_config(c.kind, user);
    std::cerr << "running " << rbmlab::to_string(c.kind) << "\n";
    reports.emplace(c.kind, rbmlab::run_experiment(c.kind, resolved));
  }

  bool ok = true;
  for (const auto& c : kCriteria) {
    const auto& report = reports.at(c.kind);
    std::vector<const rbmlab::Verdict*> found;
    for (const auto& v : report.verdicts)
      if (v.id == c.id) found.push_back(&v);
    const auto wall = report.wall_seconds.find(c.id);
    const double seconds = wall == report.wall_seconds.end() ? 0.0 : wall->second;

    bool pass = !found.empty();
    bool advisory = false;
    std::string detail;
    for (const auto* v : found) {
      pass = pass && v->pass;
      advisory = advisory || v->advisory;
      if (!detail.empty()) detail += "; ";
      detail += v->name + " measured=" + rbmlab::format_double(v->measured) + " tolerance: " + v->tolerance;
    }
    if (found.empty()) detail = "no verdict produced";
    const bool in_time = seconds < c.budget_seconds;
    const bool line_pass = pass && in_time;
    if (!line_pass && !advisory) ok = false;

    std::cout << std::left << std::setw(5) << c.id << (line_pass ? "PASS" : (advisory ? "FAIL (advisory)" : "FAIL"))
              << "  " << detail << "  runtime=" << std::fixed << std::setprecision(3) << seconds << "s (< "
              << std::setprecision(0) << c.budget_seconds << "s)" << std::defaultfloat << "\n";
  }
  return ok ? 0 : 1;
}
