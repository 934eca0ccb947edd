#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rbmlab {

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Mean of |x|^q with its leave-one-out jackknife standard error.
Estimate empirical_moment(std::span<const double> samples, double q);

/// Empirical Wasserstein-1 distance between two sorted samples. Equal sizes
/// use the order-statistic matching mean |a_(i) - b_(i)|; unequal sizes use
/// the exact distance between the empirical measures, the integral of
/// |F_a - F_b|. Throws ValidationError on empty or unsorted input.
double w1_1d(std::span<const double> a, std::span<const double> b);

/// Sorts copies and calls w1_1d.
double w1_samples(std::vector<double> a, std::vector<double> b);

/// Mean over `directions` seeded random unit directions of the 1-d W1 between
/// projections. a and b are count x dim row-major.
double sliced_w1(std::span<const double> a, std::span<const double> b, std::size_t dim,
                 std::size_t directions = 64, std::uint64_t seed = 0x5EED);

struct HistTv {
  double tv = 0.0;  // 1/2 sum |p_a - p_b|; a lower bound on the true TV
  double out_of_range_a = 0.0;  // fraction of a clamped into the edge bins
  double out_of_range_b = 0.0;
};

/// Histogram total-variation surrogate on [lo, hi) with `bins` equal bins.
HistTv hist_tv(std::span<const double> a, std::span<const double> b, std::size_t bins,
               double lo, double hi);

/// Pinsker's inequality: TV <= sqrt(KL / 2) with TV = sup_A |P(A) - Q(A)|.
double pinsker_tv_bound(double kl);

struct GaussianFit {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
};

GaussianFit fit_gaussian(std::span<const double> samples);

struct TailFit {
  bool available = false;
  std::string reason;
  double coefficient = 0.0;  // C in P(|X| > t) <= 2 exp(-t^2 / C^2)
  double slope = 0.0;        // fitted decay rate of ln P against t^2
  double r2 = 0.0;
  std::size_t points = 0;
  bool heavy_tail = false;  // r2 below kTailR2Threshold

  static constexpr double kTailR2Threshold = 0.95;
};

/// Regresses ln P(|X| > t) on -t^2 over the empirical 90% to 99.9% quantile
/// range of |X|. Needs at least 100 samples.
TailFit subgaussian_tail(std::span<const double> samples);

struct RatePoint {
  double x = 0.0;
  double err = 0.0;
  double std_error = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // points with err <= 0
};

/// Least squares of ln err on ln x. Non-positive errors are excluded; throws
/// ValidationError with fewer than three usable points.
RateFit regress_rate(std::span<const RatePoint> points);

}  // namespace rbmlab
