#pragma once

// Model families for first-order interacting particle systems
//
//   dX_i = b0(X_i) dt + 1/(N-1) sum_{j != i} b(X_i - X_j) dt + sqrt(2 sigma) dW_i
//
// Families come from a compiled registry. Built-in entries:
//   linear  b0(x) = -a x,        b(z) = -kappa z              (any d)
//   sine    b0(x) = -a x,        b(z) = -kappa sin(z)         (d = 1)
//   cubic   b0(x) = -a |x|^2 x,  b(z) = -kappa z              (any d)
// `a` defaults to 1 and `kappa` to 1 when absent from params.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rbmlab/rng.hpp"

namespace rbmlab {

struct ModelSpec {
  std::string family = "linear";
  std::map<std::string, double> params;
  double sigma = 1.0;
  std::size_t dim = 1;

  double param(const std::string& name, double fallback) const;
};

struct InitialLaw {
  enum class Kind { gaussian, uniform_bounded };
  Kind kind = Kind::gaussian;
  std::vector<double> mean{0.0};
  /// Isotropic variance for `gaussian`, support half-width for `uniform_bounded`.
  double spread = 1.0;

  std::size_t dim() const { return mean.size(); }
};

/// Drift and kernel evaluators of one registered family. Implementations are
/// immutable and may be shared across threads.
class ModelFamily {
 public:
  virtual ~ModelFamily() = default;

  virtual void drift0(std::span<const double> x, std::span<double> out) const = 0;
  virtual void kernel(std::span<const double> z, std::span<double> out) const = 0;

  /// acc += sum_j b(xi - others_j) over `others` (count x d, row-major), in
  /// row order.
  virtual void accumulate_kernel(std::span<const double> xi,
                                 std::span<const double> others,
                                 std::span<double> acc) const;

  /// Writes sum_{j != i} b(x_i - x_j) for every row in O(N d) when the kernel
  /// factorizes; returns false when it does not.
  virtual bool aggregate_interactions(std::span<const double> coords,
                                      std::size_t dim,
                                      std::span<double> out) const;

  virtual bool odd_kernel() const { return true; }
  /// Documented one-sided Lipschitz constant L0 of b0.
  virtual double one_sided_lipschitz() const = 0;
  virtual std::size_t required_dim() const { return 0; }
};

using FamilyFactory =
    std::function<std::shared_ptr<const ModelFamily>(const ModelSpec&)>;

/// Adds a compiled family to the registry. Re-registering a name replaces it.
void register_family(const std::string& name, FamilyFactory factory);
std::vector<std::string> registered_families();

class Model {
 public:
  Model(ModelSpec spec, std::shared_ptr<const ModelFamily> family);

  const ModelSpec& spec() const { return spec_; }
  const ModelFamily& family() const { return *family_; }
  double sigma() const { return spec_.sigma; }
  std::size_t dim() const { return spec_.dim; }

  void drift0(std::span<const double> x, std::span<double> out) const {
    family_->drift0(x, out);
  }
  void kernel(std::span<const double> z, std::span<double> out) const {
    family_->kernel(z, out);
  }
  /// Scalar conveniences for d = 1.
  double b0(double x) const;
  double b(double z) const;

 private:
  ModelSpec spec_;
  std::shared_ptr<const ModelFamily> family_;
};

/// Throws ConfigError for unknown families and ValidationError for invalid
/// sigma, dimension or parameters.
Model build_model(const ModelSpec& spec);

void validate(const InitialLaw& law);

/// count x d i.i.d. draws, row-major.
std::vector<double> sample_initial(const InitialLaw& law, std::size_t count,
                                   RngStream& stream);

/// One draw from the law.
void sample_initial_point(const InitialLaw& law, RngStream& stream,
                          std::span<double> out);

struct LipschitzProbe {
  /// max over usable pairs of (x-y).(b0(x)-b0(y)) / |x-y|^2. A lower bound on
  /// the true L0 since only finitely many pairs are examined.
  double estimate = 0.0;
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;
};

/// Samples `sample_count` points uniformly in the ball of `radius` and probes
/// all pairs.
LipschitzProbe probe_one_sided_lipschitz(const Model& model,
                                         std::size_t sample_count,
                                         double radius, RngStream& stream);

/// Probes all pairs of the given points (count x d). Coincident pairs are
/// skipped; throws ValidationError when no pair is usable.
LipschitzProbe probe_one_sided_lipschitz(const Model& model,
                                         std::span<const double> points);

}  // namespace rbmlab
