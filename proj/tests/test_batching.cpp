#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "rbmlab/batching.hpp"
#include "rbmlab/errors.hpp"

using namespace rbmlab;

namespace {

using Blocks = std::vector<std::vector<std::uint32_t>>;

BatchDivision div(Blocks b) { return BatchDivision(std::move(b)); }

}  // namespace

TEST(BatchDivision, Canonicalizes) {
  const BatchDivision d = div({{3, 2}, {1, 0}});
  EXPECT_EQ(d.blocks(), (Blocks{{0, 1}, {2, 3}}));
  EXPECT_EQ(d, div({{0, 1}, {2, 3}}));
  EXPECT_TRUE(d.same_batch(2, 3));
  EXPECT_FALSE(d.same_batch(1, 2));
  EXPECT_EQ(d.block_of(3), 1u);
}

TEST(BatchDivision, RejectsInvalidPartitions) {
  EXPECT_THROW(div({{0, 1}, {1, 2}}), ValidationError);
  EXPECT_THROW(div({{0, 1}, {2}}), ValidationError);
  EXPECT_THROW(div({{0, 1}, {2, 5}}), ValidationError);
}

TEST(BatchShape, PMustDivideN) {
  EXPECT_THROW(validate_batch_shape(5, 2), ValidationError);
  EXPECT_THROW(validate_batch_shape(4, 1), ValidationError);
  EXPECT_NO_THROW(validate_batch_shape(6, 3));
  RngStream s(1, {1});
  EXPECT_THROW(sample_division(5, 2, s), ValidationError);
}

TEST(SampleDivision, TwoParticlesSingleDivision) {
  RngStream s(1, {2});
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_division(2, 2, s).blocks(), (Blocks{{0, 1}}));
}

TEST(SampleDivision, SixByThreeHasTenOutcomes) {
  RngStream s(1, {3});
  std::set<BatchDivision> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(sample_division(6, 3, s));
  EXPECT_EQ(seen.size(), 10u);
}

TEST(SampleDivision, FourByTwoUniformChiSquare) {
  RngStream s(2024, {4});
  const UniformityTest t = division_uniformity(4, 2, 30000, s);
  EXPECT_EQ(t.support, 3u);
  EXPECT_GT(t.p_value, 1e-3);
  for (auto c : t.counts) EXPECT_NEAR(static_cast<double>(c), 10000.0, 5.0 * std::sqrt(30000.0 * 2.0 / 9.0));
}

TEST(SampleDivision, UniformityAcrossShapes) {
  for (auto [n, p] : std::vector<std::pair<int, int>>{{6, 2}, {6, 3}, {8, 2}, {8, 4}}) {
    RngStream s(77, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(p)});
    EXPECT_GT(division_uniformity(n, p, 20000, s).p_value, 1e-3) << n << "," << p;
  }
}

TEST(Enumerate, Counts) {
  EXPECT_EQ(enumerate_divisions(4, 2).size(), 3u);
  EXPECT_EQ(enumerate_divisions(6, 2).size(), 15u);
  EXPECT_EQ(enumerate_divisions(6, 3).size(), 10u);
  EXPECT_EQ(enumerate_divisions(8, 2).size(), 105u);
  EXPECT_EQ(division_count(8, 2), 105u);
  EXPECT_EQ(division_count(12, 3), 15400u);
}

TEST(Enumerate, ProbabilitiesExact) {
  for (const auto& w : enumerate_divisions(4, 2)) EXPECT_EQ(w.probability, Rational(1, 3));
  const auto single = enumerate_divisions(5, 5);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].probability, Rational(1));
}

TEST(Enumerate, SortedAndDistinct) {
  const auto all = enumerate_divisions(6, 2);
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1].division, all[i].division);
}

TEST(Enumerate, CapacityGuard) { EXPECT_THROW(enumerate_divisions(14, 2), CapacityError); }

TEST(Coupling, KeepBranchReturnsSource) {
  const BatchDivision src = div({{0, 1}, {2, 3}});
  EXPECT_EQ(couple_division(src, 0, std::nullopt), src);
}

TEST(Coupling, SwapExample) {
  const BatchDivision src = div({{0, 1}, {2, 3}});
  EXPECT_EQ(couple_division(src, 0, 2).blocks(), (Blocks{{0, 3}, {1, 2}}));
}

TEST(Coupling, SwapLargerBatches) {
  const BatchDivision src = div({{0, 1, 2}, {3, 4, 5}});
  // i = 0 takes j = 4's batchmates {3, 5}; j takes {1, 2}.
  EXPECT_EQ(swap_batchmates(src, 0, 4).blocks(), (Blocks{{0, 3, 5}, {1, 2, 4}}));
}

TEST(Coupling, PartnerInsideBatchRejected) {
  const BatchDivision src = div({{0, 1}, {2, 3}});
  EXPECT_THROW(couple_division(src, 0, 1), ValidationError);
}

TEST(Coupling, SingleBatchAlwaysKept) {
  const BatchDivision src = div({{0, 1, 2, 3}});
  RngStream s(1, {5});
  for (int i = 0; i < 50; ++i) EXPECT_EQ(couple_division(src, 2, s), src);
}

TEST(Coupling, KeepFrequency) {
  const BatchDivision src = div({{0, 1}, {2, 3}, {4, 5}});
  RngStream s(8, {6});
  const int n = 50000;
  int kept = 0;
  for (int i = 0; i < n; ++i) kept += couple_division(src, 0, s) == src;
  const double p = 1.0 / 5.0;
  EXPECT_NEAR(kept / static_cast<double>(n), p, 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(JointLaw, FourByTwoExact) {
  const CouplingLaw law = joint_coupling_law(4, 2, 0);
  ASSERT_EQ(law.support.size(), 3u);
  for (const auto& m : law.coupled_marginal) EXPECT_EQ(m, Rational(1, 3));
  ASSERT_EQ(law.conditional.size(), 3u * 3u);
  for (const auto& c : law.conditional) EXPECT_EQ(c.probability, Rational(1, 3));
  EXPECT_TRUE(law.marginal_is_uniform());
  EXPECT_TRUE(law.conditional_is_constant());
  EXPECT_EQ(law.total_probability(), Rational(1));
}

TEST(JointLaw, SixByThreeConditionalTwoFifths) {
  const CouplingLaw law = joint_coupling_law(6, 3, 0);
  for (const auto& c : law.conditional) EXPECT_EQ(c.probability, Rational(2, 5));
  EXPECT_TRUE(law.marginal_is_uniform());
}

TEST(JointLaw, AllAnchorsAllShapes) {
  for (auto [n, p] : std::vector<std::pair<int, int>>{{4, 2}, {6, 2}, {6, 3}, {8, 2}, {8, 4}})
    for (int i = 0; i < n; ++i) {
      const CouplingLaw law = joint_coupling_law(n, p, i);
      EXPECT_TRUE(law.marginal_is_uniform()) << n << "," << p << "," << i;
      EXPECT_TRUE(law.conditional_is_constant()) << n << "," << p << "," << i;
    }
}

// Monte Carlo cross-check of the sampler against the exact joint law.
TEST(JointLaw, MatchesSampledCoupling) {
  const std::size_t n = 4, p = 2;
  const CouplingLaw law = joint_coupling_law(n, p, 1);
  std::map<std::pair<BatchDivision, BatchDivision>, double> exact;
  for (const auto& o : law.outcomes)
    exact[{o.source, o.coupled}] = boost::rational_cast<double>(o.probability);
  RngStream s(99, {7});
  std::map<std::pair<BatchDivision, BatchDivision>, int> counts;
  const int draws = 60000;
  for (int k = 0; k < draws; ++k) {
    const BatchDivision src = sample_division(n, p, s);
    ++counts[{src, couple_division(src, 1, s)}];
  }
  for (const auto& [key, c] : counts) {
    ASSERT_TRUE(exact.count(key));
    const double q = exact[key];
    EXPECT_NEAR(c / static_cast<double>(draws), q, 5.0 * std::sqrt(q * (1 - q) / draws));
  }
}

TEST(JointLaw, CapacityGuard) { EXPECT_THROW(joint_coupling_law(10, 2, 0), CapacityError); }
