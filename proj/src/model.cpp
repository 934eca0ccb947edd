#include "rbmlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "rbmlab/errors.hpp"

namespace rbmlab {

double ModelSpec::param(const std::string& name, double fallback) const {
  auto it = params.find(name);
  return it == params.end() ? fallback : it->second;
}

void ModelFamily::accumulate_kernel(std::span<const double> xi,
                                    std::span<const double> others,
                                    std::span<double> acc) const {
  const std::size_t d = xi.size();
  double z[16];
  double out[16];
  std::vector<double> zbuf;
  std::vector<double> obuf;
  double* zp = z;
  double* op = out;
  if (d > 16) {
    zbuf.resize(d);
    obuf.resize(d);
    zp = zbuf.data();
    op = obuf.data();
  }
  for (std::size_t row = 0; row * d < others.size(); ++row) {
    for (std::size_t k = 0; k < d; ++k) zp[k] = xi[k] - others[row * d + k];
    kernel({zp, d}, {op, d});
    for (std::size_t k = 0; k < d; ++k) acc[k] += op[k];
  }
}

bool ModelFamily::aggregate_interactions(std::span<const double>, std::size_t,
                                         std::span<double>) const {
  return false;
}

namespace {

class LinearFamily final : public ModelFamily {
 public:
  LinearFamily(double a, double kappa) : a_(a), kappa_(kappa) {}

  void drift0(std::span<const double> x, std::span<double> out) const override {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = -a_ * x[k];
  }
  void kernel(std::span<const double> z, std::span<double> out) const override {
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = -kappa_ * z[k];
  }
  void accumulate_kernel(std::span<const double> xi,
                         std::span<const double> others,
                         std::span<double> acc) const override {
    const std::size_t d = xi.size();
    if (d == 1) {
      const double x = xi[0];
      double s = acc[0];
      for (double y : others) s += -kappa_ * (x - y);
      acc[0] = s;
      return;
    }
    for (std::size_t row = 0; row * d < others.size(); ++row)
      for (std::size_t k = 0; k < d; ++k)
        acc[k] += -kappa_ * (xi[k] - others[row * d + k]);
  }
  bool aggregate_interactions(std::span<const double> coords, std::size_t dim,
                              std::span<double> out) const override {
    // sum_{j != i} -kappa (x_i - x_j) = -kappa ((N-1) x_i - (S - x_i)) = -kappa (N x_i - S)
    const std::size_t n = coords.size() / dim;
    for (std::size_t k = 0; k < dim; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += coords[i * dim + k];
      for (std::size_t i = 0; i < n; ++i)
        out[i * dim + k] = -kappa_ * (static_cast<double>(n) * coords[i * dim + k] - s);
    }
    return true;
  }
  double one_sided_lipschitz() const override { return -a_; }

 private:
  double a_;
  double kappa_;
};

class SineFamily final : public ModelFamily {
 public:
  SineFamily(double a, double kappa) : a_(a), kappa_(kappa) {}

  void drift0(std::span<const double> x, std::span<double> out) const override {
    out[0] = -a_ * x[0];
  }
  void kernel(std::span<const double> z, std::span<double> out) const override {
    out[0] = -kappa_ * std::sin(z[0]);
  }
  void accumulate_kernel(std::span<const double> xi,
                         std::span<const double> others,
                         std::span<double> acc) const override {
    const double x = xi[0];
    double s = acc[0];
    for (double y : others) s += -kappa_ * std::sin(x - y);
    acc[0] = s;
  }
  bool aggregate_interactions(std::span<const double> coords, std::size_t,
                              std::span<double> out) const override {
    // sin(x - y) = sin x cos y - cos x sin y; the j = i term cancels exactly.
    double sum_sin = 0.0;
    double sum_cos = 0.0;
    for (double y : coords) {
      sum_sin += std::sin(y);
      sum_cos += std::cos(y);
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double s = std::sin(coords[i]);
      const double c = std::cos(coords[i]);
      out[i] = -kappa_ * (s * sum_cos - c * sum_sin);
    }
    return true;
  }
  double one_sided_lipschitz() const override { return -a_; }
  std::size_t required_dim() const override { return 1; }

 private:
  double a_;
  double kappa_;
};

class CubicFamily final : public ModelFamily {
 public:
  CubicFamily(double a, double kappa) : a_(a), kappa_(kappa) {}

  void drift0(std::span<const double> x, std::span<double> out) const override {
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = -a_ * r2 * x[k];
  }
  void kernel(std::span<const double> z, std::span<double> out) const override {
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = -kappa_ * z[k];
  }
  // (x - y).(-|x|^2 x + |y|^2 y) <= 0 for all x, y.
  double one_sided_lipschitz() const override { return 0.0; }

 private:
  double a_;
  double kappa_;
};

void require_nonnegative(const ModelSpec& spec, const char* name) {
  const double v = spec.param(name, 1.0);
  if (!(v >= 0.0) || !std::isfinite(v))
    throw ValidationError(std::string("model parameter '") + name +
                          "' must be finite and >= 0");
}

std::map<std::string, FamilyFactory>& registry() {
  static std::map<std::string, FamilyFactory> families = {
      {"linear",
       [](const ModelSpec& s) -> std::shared_ptr<const ModelFamily> {
         require_nonnegative(s, "a");
         require_nonnegative(s, "kappa");
         return std::make_shared<LinearFamily>(s.param("a", 1.0), s.param("kappa", 1.0));
       }},
      {"sine",
       [](const ModelSpec& s) -> std::shared_ptr<const ModelFamily> {
         require_nonnegative(s, "a");
         require_nonnegative(s, "kappa");
         return std::make_shared<SineFamily>(s.param("a", 1.0), s.param("kappa", 1.0));
       }},
      {"cubic",
       [](const ModelSpec& s) -> std::shared_ptr<const ModelFamily> {
         require_nonnegative(s, "a");
         require_nonnegative(s, "kappa");
         return std::make_shared<CubicFamily>(s.param("a", 1.0), s.param("kappa", 1.0));
       }},
  };
  return families;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_family(const std::string& name, FamilyFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::vector<std::string> registered_families() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

Model::Model(ModelSpec spec, std::shared_ptr<const ModelFamily> family)
    : spec_(std::move(spec)), family_(std::move(family)) {}

double Model::b0(double x) const {
  double out = 0.0;
  family_->drift0({&x, 1}, {&out, 1});
  return out;
}

double Model::b(double z) const {
  double out = 0.0;
  family_->kernel({&z, 1}, {&out, 1});
  return out;
}

Model build_model(const ModelSpec& spec) {
  if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma))
    throw ValidationError("sigma must be finite and >= 0");
  if (spec.dim < 1) throw ValidationError("dim must be >= 1");
  FamilyFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(spec.family);
    if (it == registry().end())
      throw ConfigError("unknown model family '" + spec.family + "'");
    factory = it->second;
  }
  auto family = factory(spec);
  if (family->required_dim() != 0 && family->required_dim() != spec.dim)
    throw ValidationError("family '" + spec.family + "' requires dim = " +
                          std::to_string(family->required_dim()));
  return Model(spec, std::move(family));
}

void validate(const InitialLaw& law) {
  if (law.mean.empty()) throw ValidationError("initial law needs a mean of dimension >= 1");
  for (double m : law.mean)
    if (!std::isfinite(m)) throw ValidationError("initial mean must be finite");
  if (!(law.spread >= 0.0) || !std::isfinite(law.spread))
    throw ValidationError("initial spread must be finite and >= 0");
}

void sample_initial_point(const InitialLaw& law, RngStream& stream,
                          std::span<double> out) {
  const std::size_t d = law.dim();
  if (law.kind == InitialLaw::Kind::gaussian) {
    const double sd = std::sqrt(law.spread);
    for (std::size_t k = 0; k < d; ++k) out[k] = law.mean[k] + sd * stream.normal();
  } else {
    for (std::size_t k = 0; k < d; ++k)
      out[k] = law.mean[k] + law.spread * (2.0 * stream.uniform() - 1.0);
  }
}

std::vector<double> sample_initial(const InitialLaw& law, std::size_t count,
                                   RngStream& stream) {
  validate(law);
  if (count < 1) throw ValidationError("sample count must be >= 1");
  const std::size_t d = law.dim();
  std::vector<double> out(count * d);
  for (std::size_t i = 0; i < count; ++i)
    sample_initial_point(law, stream, std::span(out).subspan(i * d, d));
  return out;
}

LipschitzProbe probe_one_sided_lipschitz(const Model& model,
                                         std::span<const double> points) {
  const std::size_t d = model.dim();
  if (points.size() % d != 0)
    throw ValidationError("probe points must be a count x d array");
  const std::size_t count = points.size() / d;
  if (count < 2) throw ValidationError("probe needs at least two points");

  std::vector<double> drifts(points.size());
  for (std::size_t i = 0; i < count; ++i)
    model.drift0(points.subspan(i * d, d), std::span(drifts).subspan(i * d, d));

  LipschitzProbe probe;
  probe.estimate = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      double dot = 0.0;
      double dist2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double dx = points[i * d + k] - points[j * d + k];
        dot += dx * (drifts[i * d + k] - drifts[j * d + k]);
        dist2 += dx * dx;
      }
      if (dist2 == 0.0) {
        ++probe.pairs_skipped;
        continue;
      }
      ++probe.pairs_used;
      probe.estimate = std::max(probe.estimate, dot / dist2);
    }
  }
  if (probe.pairs_used == 0)
    throw ValidationError("no usable (non-coincident) pairs; " +
                          std::to_string(probe.pairs_skipped) + " skipped");
  return probe;
}

LipschitzProbe probe_one_sided_lipschitz(const Model& model,
                                         std::size_t sample_count,
                                         double radius, RngStream& stream) {
  if (sample_count < 2) throw ValidationError("sample_count must be >= 2");
  if (!(radius > 0.0)) throw ValidationError("radius must be > 0");
  const std::size_t d = model.dim();
  std::vector<double> points(sample_count * d);
  for (std::size_t i = 0; i < sample_count; ++i) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      points[i * d + k] = stream.normal();
      norm2 += points[i * d + k] * points[i * d + k];
    }
    const double r = radius * std::pow(stream.uniform(), 1.0 / static_cast<double>(d));
    const double scale = norm2 > 0.0 ? r / std::sqrt(norm2) : 0.0;
    for (std::size_t k = 0; k < d; ++k) points[i * d + k] *= scale;
  }
  return probe_one_sided_lipschitz(model, points);
}

}  // namespace rbmlab
