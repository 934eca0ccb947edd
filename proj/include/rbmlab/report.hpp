#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rbmlab/metrics.hpp"

namespace rbmlab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

struct Verdict {
  std::string id;  // acceptance criterion id, e.g. "AC4"
  std::string name;
  bool pass = false;
  bool advisory = false;  // reported but excluded from the exit code
  double measured = 0.0;
  std::string tolerance;
  std::string detail;
};

struct RateSeries {
  std::string name;
  std::string x_label;
  std::string metric;
  std::vector<RatePoint> points;
  bool fitted = false;
  RateFit fit;
};

struct ExperimentReport {
  std::string experiment;
  Json inputs = Json::object();
  std::vector<RateSeries> series;
  Json tables = Json::object();
  std::vector<Verdict> verdicts;
  std::vector<std::string> notes;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  /// Wall-clock seconds per verdict id; the only non-deterministic content.
  std::map<std::string, double> wall_seconds;

  bool passed() const;
};

Json to_json(const Verdict& v);
Json to_json(const RateSeries& s);
Json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const Json& j);

/// Pretty-printed JSON with a trailing newline.
std::string render(const ExperimentReport& report);

/// `series,x,err,stderr` rows for every series point.
std::string render_points_csv(const ExperimentReport& report);

/// Shortest round-trip decimal form.
std::string format_double(double x);

}  // namespace rbmlab
