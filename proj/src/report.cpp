#include "rbmlab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace rbmlab {

bool ExperimentReport::passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(),
                     [](const Verdict& v) { return v.pass || v.advisory; });
}

namespace {

Json number(double x) {
  // JSON has no NaN or infinity; encode them as strings.
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double read_number(const Json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  return std::nan("");
}

}  // namespace

Json to_json(const Verdict& v) {
  return Json{{"id", v.id},           {"name", v.name},
              {"pass", v.pass},       {"advisory", v.advisory},
              {"measured", number(v.measured)}, {"tolerance", v.tolerance},
              {"detail", v.detail}};
}

Json to_json(const RateSeries& s) {
  Json points = Json::array();
  for (const auto& p : s.points)
    points.push_back(Json{{"x", number(p.x)}, {"err", number(p.err)}, {"stderr", number(p.std_error)}});
  Json j{{"name", s.name}, {"x", s.x_label}, {"metric", s.metric}, {"points", points}};
  if (s.fitted)
    j["fit"] = Json{{"slope", number(s.fit.slope)},
                    {"intercept", number(s.fit.intercept)},
                    {"r2", number(s.fit.r2)},
                    {"used", s.fit.used},
                    {"excluded", s.fit.excluded}};
  return j;
}

Json to_json(const ExperimentReport& report) {
  Json series = Json::array();
  for (const auto& s : report.series) series.push_back(to_json(s));
  Json verdicts = Json::array();
  for (const auto& v : report.verdicts) verdicts.push_back(to_json(v));
  Json wall = Json::object();
  for (const auto& [id, secs] : report.wall_seconds) wall[id] = number(secs);
  return Json{{"experiment", report.experiment},
              {"inputs", report.inputs},
              {"series", series},
              {"tables", report.tables},
              {"verdicts", verdicts},
              {"notes", report.notes},
              {"environment",
               Json{{"seed", report.seed}, {"version", report.version}, {"wall_seconds", wall}}}};
}

ExperimentReport report_from_json(const Json& j) {
  ExperimentReport r;
  r.experiment = j.at("experiment").get<std::string>();
  r.inputs = j.at("inputs");
  for (const auto& s : j.at("series")) {
    RateSeries series;
    series.name = s.at("name").get<std::string>();
    series.x_label = s.at("x").get<std::string>();
    series.metric = s.at("metric").get<std::string>();
    for (const auto& p : s.at("points"))
      series.points.push_back({read_number(p.at("x")), read_number(p.at("err")),
                               read_number(p.at("stderr"))});
    if (s.contains("fit")) {
      const auto& f = s.at("fit");
      series.fitted = true;
      series.fit.slope = read_number(f.at("slope"));
      series.fit.intercept = read_number(f.at("intercept"));
      series.fit.r2 = read_number(f.at("r2"));
      series.fit.used = f.at("used").get<std::size_t>();
      series.fit.excluded = f.at("excluded").get<std::size_t>();
    }
    r.series.push_back(std::move(series));
  }
  r.tables = j.at("tables");
  for (const auto& v : j.at("verdicts"))
    r.verdicts.push_back({v.at("id").get<std::string>(), v.at("name").get<std::string>(),
                          v.at("pass").get<bool>(), v.at("advisory").get<bool>(),
                          read_number(v.at("measured")), v.at("tolerance").get<std::string>(),
                          v.at("detail").get<std::string>()});
  r.notes = j.at("notes").get<std::vector<std::string>>();
  const auto& env = j.at("environment");
  r.seed = env.at("seed").get<std::uint64_t>();
  r.version = env.at("version").get<std::string>();
  for (const auto& [id, secs] : env.at("wall_seconds").items()) r.wall_seconds[id] = read_number(secs);
  return r;
}

std::string render(const ExperimentReport& report) { return to_json(report).dump(2) + "\n"; }

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

std::string render_points_csv(const ExperimentReport& report) {
  std::string out = "series,x,err,stderr\n";
  for (const auto& s : report.series)
    for (const auto& p : s.points)
      out += s.name + "," + format_double(p.x) + "," + format_double(p.err) + "," +
             format_double(p.std_error) + "\n";
  return out;
}

}  // namespace rbmlab
