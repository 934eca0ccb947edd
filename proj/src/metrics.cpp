#include "rbmlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbmlab/errors.hpp"
#include "rbmlab/rng.hpp"

namespace rbmlab {

Estimate empirical_moment(std::span<const double> samples, double q) {
  if (samples.size() < 2) throw ValidationError("empirical_moment needs at least two samples");
  if (!(q >= 1.0)) throw ValidationError("moment order q must be >= 1");
  const std::size_t n = samples.size();
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = std::pow(std::abs(samples[i]), q);
  const double total = std::accumulate(f.begin(), f.end(), 0.0);
  const double nd = static_cast<double>(n);
  const double mean = total / nd;
  // Leave-one-out replicates theta_i = (total - f_i) / (n - 1).
  double ss = 0.0;
  for (double fi : f) {
    const double theta = (total - fi) / (nd - 1.0);
    ss += (theta - mean) * (theta - mean);
  }
  return {mean, std::sqrt((nd - 1.0) / nd * ss)};
}

namespace {

void require_sorted(std::span<const double> x, const char* name) {
  if (x.empty()) throw ValidationError(std::string("w1_1d: sample '") + name + "' is empty");
  if (!std::is_sorted(x.begin(), x.end()))
    throw ValidationError(std::string("w1_1d: sample '") + name + "' must be sorted");
}

}  // namespace

double w1_1d(std::span<const double> a, std::span<const double> b) {
  require_sorted(a, "a");
  require_sorted(b, "b");
  if (a.size() == b.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(a.size());
  }
  // Integral of |F_a - F_b| by merging the two sorted samples.
  const double wa = 1.0 / static_cast<double>(a.size());
  const double wb = 1.0 / static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, total = 0.0;
  double x = std::min(a[0], b[0]);
  while (i < a.size() || j < b.size()) {
    const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    total += std::abs(fa - fb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) {
      fa += wa;
      ++i;
    }
    while (j < b.size() && b[j] == x) {
      fb += wb;
      ++j;
    }
  }
  return total;
}

double w1_samples(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return w1_1d(a, b);
}

double sliced_w1(std::span<const double> a, std::span<const double> b, std::size_t dim,
                 std::size_t directions, std::uint64_t seed) {
  if (dim == 0 || a.size() % dim != 0 || b.size() % dim != 0)
    throw ValidationError("sliced_w1: samples must be count x dim arrays");
  if (dim == 1) return w1_samples({a.begin(), a.end()}, {b.begin(), b.end()});
  if (directions == 0) throw ValidationError("sliced_w1 needs at least one direction");
  RngStream stream(seed, StreamTag::test, {dim, directions});
  std::vector<double> dir(dim);
  double total = 0.0;
  for (std::size_t s = 0; s < directions; ++s) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& v : dir) {
        v = stream.normal();
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    for (double& v : dir) v /= std::sqrt(norm2);
    auto project = [&](std::span<const double> x) {
      std::vector<double> out(x.size() / dim);
      for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t k = 0; k < dim; ++k) out[i] += dir[k] * x[i * dim + k];
      return out;
    };
    total += w1_samples(project(a), project(b));
  }
  return total / static_cast<double>(directions);
}

HistTv hist_tv(std::span<const double> a, std::span<const double> b, std::size_t bins,
               double lo, double hi) {
  if (bins < 2) throw ValidationError("hist_tv needs at least two bins");
  if (!(hi > lo)) throw ValidationError("hist_tv needs a non-empty range");
  if (a.empty() || b.empty()) throw ValidationError("hist_tv needs non-empty samples");
  auto histogram = [&](std::span<const double> x, double& outside) {
    std::vector<double> h(bins, 0.0);
    std::size_t clamped = 0;
    for (double v : x) {
      const double pos = (v - lo) / (hi - lo) * static_cast<double>(bins);
      long long idx = static_cast<long long>(std::floor(pos));
      if (idx < 0 || idx >= static_cast<long long>(bins)) {
        ++clamped;
        idx = std::clamp<long long>(idx, 0, static_cast<long long>(bins) - 1);
      }
      h[static_cast<std::size_t>(idx)] += 1.0;
    }
    for (double& c : h) c /= static_cast<double>(x.size());
    outside = static_cast<double>(clamped) / static_cast<double>(x.size());
    return h;
  };
  HistTv out;
  const auto ha = histogram(a, out.out_of_range_a);
  const auto hb = histogram(b, out.out_of_range_b);
  for (std::size_t i = 0; i < bins; ++i) out.tv += std::abs(ha[i] - hb[i]);
  out.tv = std::min(1.0, 0.5 * out.tv);
  return out;
}

double pinsker_tv_bound(double kl) {
  if (!(kl >= 0.0)) throw ValidationError("KL divergence must be >= 0");
  return std::sqrt(0.5 * kl);
}

GaussianFit fit_gaussian(std::span<const double> samples) {
  if (samples.size() < 2) throw ValidationError("fit_gaussian needs at least two samples");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return {mean, ss / (n - 1.0)};
}

TailFit subgaussian_tail(std::span<const double> samples) {
  TailFit fit;
  if (samples.size() < 100) {
    fit.reason = "fewer than 100 samples";
    return fit;
  }
  std::vector<double> mags(samples.size());
  std::transform(samples.begin(), samples.end(), mags.begin(),
                 [](double x) { return std::abs(x); });
  std::sort(mags.begin(), mags.end());
  const double n = static_cast<double>(mags.size());

  // Tail levels log-spaced from 10% down to 0.1%.
  constexpr int kLevels = 25;
  std::vector<double> xs, ys;
  double last_t = -1.0;
  for (int l = 0; l < kLevels; ++l) {
    const double tail = std::pow(10.0, -1.0 - 2.0 * l / (kLevels - 1));
    const auto idx = static_cast<std::size_t>(std::floor((1.0 - tail) * n));
    if (idx >= mags.size()) break;
    const double t = mags[idx];
    if (t <= last_t) continue;
    const auto above = static_cast<double>(
        mags.end() - std::upper_bound(mags.begin(), mags.end(), t));
    if (above <= 0.0) continue;
    last_t = t;
    xs.push_back(-t * t);
    ys.push_back(std::log(above / n));
  }
  fit.points = xs.size();
  if (xs.size() < 3) {
    fit.reason = "insufficient distinct tail points";
    return fit;
  }
  const double m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  if (!(fit.slope > 0.0)) {
    fit.reason = "tail does not decay in t^2";
    return fit;
  }
  fit.available = true;
  fit.coefficient = 1.0 / std::sqrt(fit.slope);
  fit.heavy_tail = fit.r2 < TailFit::kTailR2Threshold;
  return fit;
}

RateFit regress_rate(std::span<const RatePoint> points) {
  RateFit fit;
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    if (!(p.x > 0.0)) throw ValidationError("rate points need x > 0");
    if (!std::isfinite(p.err)) throw ValidationError("rate points need finite errors");
    if (p.err <= 0.0) {
      ++fit.excluded;
      continue;
    }
    xs.push_back(std::log(p.x));
    ys.push_back(std::log(p.err));
  }
  fit.used = xs.size();
  if (xs.size() < 3)
    throw ValidationError("regress_rate needs at least 3 points with err > 0, got " +
                          std::to_string(xs.size()));
  const double m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("regress_rate needs distinct x values");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace rbmlab
