#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <boost/rational.hpp>

#include "rbmlab/rng.hpp"

namespace rbmlab {

using Rational = boost::rational<std::int64_t>;

/// A partition of {0, ..., n-1} into n/p blocks of size p, kept in canonical
/// form: each block ascending, blocks ordered by their smallest element. Equal
/// partitions therefore compare equal element-wise.
class BatchDivision {
 public:
  /// Validates that `blocks` partition {0..n-1} into equal blocks and
  /// canonicalizes them. Throws ValidationError otherwise.
  explicit BatchDivision(std::vector<std::vector<std::uint32_t>> blocks);

  std::size_t n() const { return order_.size(); }
  std::size_t p() const { return p_; }
  std::size_t block_count() const { return n() / p_; }

  std::span<const std::uint32_t> block(std::size_t b) const {
    return std::span(order_).subspan(b * p_, p_);
  }
  /// Index of the block holding particle i.
  std::size_t block_of(std::size_t i) const { return block_of_[i]; }
  /// The block xi(i) containing particle i.
  std::span<const std::uint32_t> batch_of(std::size_t i) const {
    return block(block_of_[i]);
  }
  bool same_batch(std::size_t i, std::size_t j) const {
    return block_of_[i] == block_of_[j];
  }
  std::vector<std::vector<std::uint32_t>> blocks() const;
  /// Blocks concatenated in canonical order.
  std::span<const std::uint32_t> flat() const { return order_; }

  friend bool operator==(const BatchDivision& a, const BatchDivision& b) {
    return a.p_ == b.p_ && a.order_ == b.order_;
  }
  friend auto operator<=>(const BatchDivision& a, const BatchDivision& b) {
    return a.order_ <=> b.order_;
  }

 private:
  std::size_t p_ = 0;
  std::vector<std::uint32_t> order_;
  std::vector<std::uint32_t> block_of_;
};

/// Throws ValidationError unless p >= 2 and p divides n.
void validate_batch_shape(std::size_t n, std::size_t p);

/// Uniform random division: Fisher-Yates shuffle chunked into blocks of p.
BatchDivision sample_division(std::size_t n, std::size_t p, RngStream& stream);

/// n! / ((p!)^(n/p) (n/p)!)
std::uint64_t division_count(std::size_t n, std::size_t p);

struct WeightedDivision {
  BatchDivision division;
  Rational probability;
};

inline constexpr std::size_t kMaxEnumerationN = 12;
inline constexpr std::size_t kMaxCouplingN = 8;

/// Every division with its exact probability 1/|support|, in canonical
/// (lexicographic) order. Throws CapacityError for n > 12.
std::vector<WeightedDivision> enumerate_divisions(std::size_t n, std::size_t p);

/// Exchanges the p-1 batchmates of i with the p-1 batchmates of j.
/// Requires j outside the batch of i.
BatchDivision swap_batchmates(const BatchDivision& source, std::size_t i,
                              std::size_t j);

/// The coupled division with the random choices made explicit: `partner`
/// empty keeps the division, otherwise batchmates are swapped with it.
BatchDivision couple_division(const BatchDivision& source, std::size_t i,
                              std::optional<std::size_t> partner);

/// Draws zeta ~ U(0,1); keeps `source` when zeta <= (p-1)/(n-1), otherwise
/// swaps batchmates with a uniform j outside the batch of i.
BatchDivision couple_division(const BatchDivision& source, std::size_t i,
                              RngStream& stream);

struct CouplingOutcome {
  BatchDivision source;
  BatchDivision coupled;
  std::size_t anchor = 0;
  Rational probability;
};

struct ConditionalMembership {
  std::size_t coupled_index = 0;  // into CouplingLaw::support
  std::size_t j = 0;
  Rational probability;  // P(j in source(anchor) | coupled = support[coupled_index])
};

struct CouplingLaw {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t anchor = 0;
  std::vector<CouplingOutcome> outcomes;
  std::vector<BatchDivision> support;      // canonical order
  std::vector<Rational> coupled_marginal;  // aligned with support
  std::vector<ConditionalMembership> conditional;

  /// Marginal of the coupled division equals 1/|support| on every division.
  bool marginal_is_uniform() const;
  /// Every conditional probability equals (p-1)/(n-1).
  bool conditional_is_constant() const;
  Rational total_probability() const;
};

/// Exact joint law of (source, coupled) by enumeration of the source division,
/// the keep/swap branch and the partner j, in rational arithmetic.
/// Throws CapacityError for n > 8.
CouplingLaw joint_coupling_law(std::size_t n, std::size_t p, std::size_t anchor);

struct UniformityTest {
  std::size_t samples = 0;
  std::size_t support = 0;
  double chi_square = 0.0;
  double p_value = 0.0;
  std::vector<std::uint64_t> counts;  // aligned with enumerate_divisions order
};

/// Pearson chi-square goodness of fit of sample_division against the uniform
/// law on the enumerated support.
UniformityTest division_uniformity(std::size_t n, std::size_t p,
                                   std::size_t samples, RngStream& stream);

}  // namespace rbmlab
