#include "rbmlab/batching.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "rbmlab/errors.hpp"

namespace rbmlab {

BatchDivision::BatchDivision(std::vector<std::vector<std::uint32_t>> blocks) {
  if (blocks.empty()) throw ValidationError("division needs at least one block");
  p_ = blocks.front().size();
  std::size_t n = 0;
  for (auto& b : blocks) {
    if (b.size() != p_) throw ValidationError("division blocks must share one size");
    std::sort(b.begin(), b.end());
    n += b.size();
  }
  if (p_ == 0) throw ValidationError("division blocks must be non-empty");
  std::sort(blocks.begin(), blocks.end(),
            [](const auto& x, const auto& y) { return x.front() < y.front(); });

  constexpr std::uint32_t kUnset = ~0u;
  block_of_.assign(n, kUnset);
  order_.reserve(n);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::uint32_t i : blocks[b]) {
      if (i >= n) throw ValidationError("division index out of range");
      if (block_of_[i] != kUnset) throw ValidationError("division blocks overlap");
      block_of_[i] = static_cast<std::uint32_t>(b);
      order_.push_back(i);
    }
  }
}

std::vector<std::vector<std::uint32_t>> BatchDivision::blocks() const {
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t b = 0; b < block_count(); ++b) {
    auto s = block(b);
    out.emplace_back(s.begin(), s.end());
  }
  return out;
}

void validate_batch_shape(std::size_t n, std::size_t p) {
  if (p < 2) throw ValidationError("batch size p must be >= 2");
  if (n < p || n % p != 0)
    throw ValidationError("batch size p = " + std::to_string(p) +
                          " must divide n = " + std::to_string(n));
}

BatchDivision sample_division(std::size_t n, std::size_t p, RngStream& stream) {
  validate_batch_shape(n, p);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t k = n - 1; k > 0; --k) {
    const std::size_t r = stream.uniform_index(k + 1);
    std::swap(perm[k], perm[r]);
  }
  std::vector<std::vector<std::uint32_t>> blocks(n / p);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    blocks[b].assign(perm.begin() + b * p, perm.begin() + (b + 1) * p);
  return BatchDivision(std::move(blocks));
}

std::uint64_t division_count(std::size_t n, std::size_t p) {
  validate_batch_shape(n, p);
  // Product over blocks of C(remaining - 1, p - 1): the smallest remaining
  // element fixes its block, the rest are chosen freely.
  std::uint64_t count = 1;
  for (std::size_t remaining = n; remaining > 0; remaining -= p) {
    std::uint64_t c = 1;
    for (std::size_t k = 1; k < p; ++k) c = c * (remaining - k) / k;
    count *= c;
  }
  return count;
}

namespace {

void enumerate_rec(std::vector<std::uint32_t>& remaining, std::size_t p,
                   std::vector<std::vector<std::uint32_t>>& current,
                   std::vector<BatchDivision>& out) {
  if (remaining.empty()) {
    out.emplace_back(current);
    return;
  }
  const std::uint32_t first = remaining.front();
  const std::size_t m = remaining.size();
  // Choose p-1 companions for `first` from remaining[1..m) by index combination.
  std::vector<std::size_t> idx(p - 1);
  std::iota(idx.begin(), idx.end(), std::size_t{1});
  while (true) {
    std::vector<std::uint32_t> block{first};
    std::vector<bool> taken(m, false);
    taken[0] = true;
    for (std::size_t k : idx) {
      block.push_back(remaining[k]);
      taken[k] = true;
    }
    std::vector<std::uint32_t> rest;
    for (std::size_t k = 0; k < m; ++k)
      if (!taken[k]) rest.push_back(remaining[k]);
    current.push_back(block);
    enumerate_rec(rest, p, current, out);
    current.pop_back();

    // Next combination in lexicographic order.
    std::size_t pos = idx.size();
    while (pos > 0 && idx[pos - 1] == m - (idx.size() - pos + 1)) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t k = pos; k < idx.size(); ++k) idx[k] = idx[k - 1] + 1;
  }
}

std::vector<BatchDivision> all_divisions(std::size_t n, std::size_t p) {
  std::vector<std::uint32_t> remaining(n);
  std::iota(remaining.begin(), remaining.end(), 0u);
  std::vector<std::vector<std::uint32_t>> current;
  std::vector<BatchDivision> out;
  enumerate_rec(remaining, p, current, out);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<WeightedDivision> enumerate_divisions(std::size_t n, std::size_t p) {
  if (n > kMaxEnumerationN)
    throw CapacityError("exact enumeration supports n <= " +
                        std::to_string(kMaxEnumerationN) + ", got " + std::to_string(n));
  validate_batch_shape(n, p);
  auto divisions = all_divisions(n, p);
  const auto size = static_cast<std::int64_t>(divisions.size());
  std::vector<WeightedDivision> out;
  out.reserve(divisions.size());
  for (auto& d : divisions) out.push_back({std::move(d), Rational(1, size)});
  return out;
}

BatchDivision swap_batchmates(const BatchDivision& source, std::size_t i,
                              std::size_t j) {
  if (i >= source.n() || j >= source.n())
    throw ValidationError("particle index out of range");
  if (source.same_batch(i, j))
    throw ValidationError("swap partner must lie outside the anchor's batch");
  auto blocks = source.blocks();
  auto& bi = blocks[source.block_of(i)];
  auto& bj = blocks[source.block_of(j)];
  std::vector<std::uint32_t> new_i{static_cast<std::uint32_t>(i)};
  std::vector<std::uint32_t> new_j{static_cast<std::uint32_t>(j)};
  for (std::uint32_t x : bj)
    if (x != j) new_i.push_back(x);
  for (std::uint32_t x : bi)
    if (x != i) new_j.push_back(x);
  bi = std::move(new_i);
  bj = std::move(new_j);
  return BatchDivision(std::move(blocks));
}

BatchDivision couple_division(const BatchDivision& source, std::size_t i,
                              std::optional<std::size_t> partner) {
  if (i >= source.n()) throw ValidationError("anchor index out of range");
  if (!partner) return source;
  return swap_batchmates(source, i, *partner);
}

BatchDivision couple_division(const BatchDivision& source, std::size_t i,
                              RngStream& stream) {
  if (i >= source.n()) throw ValidationError("anchor index out of range");
  const std::size_t n = source.n();
  const std::size_t p = source.p();
  const double zeta = stream.uniform();
  if (p == n || zeta * static_cast<double>(n - 1) <= static_cast<double>(p - 1))
    return source;
  std::vector<std::size_t> outside;
  outside.reserve(n - p);
  for (std::size_t j = 0; j < n; ++j)
    if (!source.same_batch(i, j)) outside.push_back(j);
  const std::size_t j = outside[stream.uniform_index(outside.size())];
  return swap_batchmates(source, i, j);
}

CouplingLaw joint_coupling_law(std::size_t n, std::size_t p, std::size_t anchor) {
  if (n > kMaxCouplingN)
    throw CapacityError("exact coupling law supports n <= " +
                        std::to_string(kMaxCouplingN) + ", got " + std::to_string(n));
  validate_batch_shape(n, p);
  if (anchor >= n) throw ValidationError("anchor index out of range");

  const auto sources = enumerate_divisions(n, p);
  const Rational keep(static_cast<std::int64_t>(p - 1), static_cast<std::int64_t>(n - 1));
  const Rational move = Rational(1) - keep;

  std::map<std::pair<BatchDivision, BatchDivision>, Rational> joint;
  for (const auto& [src, weight] : sources) {
    joint[{src, src}] += weight * keep;
    if (n == p) continue;
    const Rational per_partner = weight * move / static_cast<std::int64_t>(n - p);
    for (std::size_t j = 0; j < n; ++j) {
      if (src.same_batch(anchor, j)) continue;
      joint[{src, swap_batchmates(src, anchor, j)}] += per_partner;
    }
  }

  CouplingLaw law;
  law.n = n;
  law.p = p;
  law.anchor = anchor;
  for (const auto& w : sources) law.support.push_back(w.division);
  law.coupled_marginal.assign(law.support.size(), Rational(0));
  auto index_of = [&](const BatchDivision& d) {
    auto it = std::lower_bound(law.support.begin(), law.support.end(), d);
    return static_cast<std::size_t>(it - law.support.begin());
  };

  // numerator[s][j] = P(j in source(anchor), coupled = s)
  std::vector<std::vector<Rational>> numerator(law.support.size(),
                                               std::vector<Rational>(n, Rational(0)));
  for (const auto& [key, prob] : joint) {
    const auto& [src, coupled] = key;
    law.outcomes.push_back({src, coupled, anchor, prob});
    const std::size_t s = index_of(coupled);
    law.coupled_marginal[s] += prob;
    for (std::uint32_t j : src.batch_of(anchor))
      if (j != anchor) numerator[s][j] += prob;
  }
  for (std::size_t s = 0; s < law.support.size(); ++s) {
    if (law.coupled_marginal[s] == Rational(0)) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == anchor) continue;
      law.conditional.push_back({s, j, numerator[s][j] / law.coupled_marginal[s]});
    }
  }
  return law;
}

bool CouplingLaw::marginal_is_uniform() const {
  const Rational expected(1, static_cast<std::int64_t>(support.size()));
  return std::all_of(coupled_marginal.begin(), coupled_marginal.end(),
                     [&](const Rational& r) { return r == expected; });
}

bool CouplingLaw::conditional_is_constant() const {
  const Rational expected(static_cast<std::int64_t>(p - 1), static_cast<std::int64_t>(n - 1));
  if (conditional.size() != support.size() * (n - 1)) return false;
  return std::all_of(conditional.begin(), conditional.end(),
                     [&](const ConditionalMembership& c) { return c.probability == expected; });
}

Rational CouplingLaw::total_probability() const {
  Rational total(0);
  for (const auto& o : outcomes) total += o.probability;
  return total;
}

UniformityTest division_uniformity(std::size_t n, std::size_t p,
                                   std::size_t samples, RngStream& stream) {
  const auto support = enumerate_divisions(n, p);
  UniformityTest test;
  test.samples = samples;
  test.support = support.size();
  test.counts.assign(support.size(), 0);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto d = sample_division(n, p, stream);
    auto it = std::lower_bound(support.begin(), support.end(), d,
                               [](const WeightedDivision& w, const BatchDivision& x) {
                                 return w.division < x;
                               });
    ++test.counts[static_cast<std::size_t>(it - support.begin())];
  }
  const double expected = static_cast<double>(samples) / static_cast<double>(support.size());
  for (std::uint64_t c : test.counts) {
    const double diff = static_cast<double>(c) - expected;
    test.chi_square += diff * diff / expected;
  }
  if (support.size() < 2) {
    test.p_value = 1.0;
  } else {
    boost::math::chi_squared dist(static_cast<double>(support.size() - 1));
    test.p_value = boost::math::cdf(boost::math::complement(dist, test.chi_square));
  }
  return test;
}

}  // namespace rbmlab
