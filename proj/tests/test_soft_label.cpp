#include <gtest/gtest.h>

#include <cmath>

#include "fenrec/soft_label.hpp"

using namespace fenrec;

namespace {
const ItemId a{1}, b{2}, c{3};
Node uniform_probs(std::size_t n) { return leaf(Tensor({n}, 1.0 / static_cast<double>(n)), false); }
}  // namespace

TEST(SoftLabel, GeometricWeights) {
  auto l = build_soft_label(std::vector<FutureItem>{{a, 0}, {b, 1}, {c, 2}}, 0.5);
  EXPECT_NEAR(l.probability(a), 4.0 / 7.0, 1e-15);
  EXPECT_NEAR(l.probability(b), 2.0 / 7.0, 1e-15);
  EXPECT_NEAR(l.probability(c), 1.0 / 7.0, 1e-15);
}

TEST(SoftLabel, SingleItemWindowIsOneHot) {
  for (double g : {0.1, 0.3, 1.0}) {
    auto l = build_soft_label(std::vector<FutureItem>{{b, 0}}, g);
    ASSERT_EQ(l.entries.size(), 1u);
    EXPECT_EQ(l.probability(b), 1.0);
  }
}

TEST(SoftLabel, DuplicatesMerge) {
  auto l = build_soft_label(std::vector<FutureItem>{{a, 0}, {a, 2}}, 0.5);
  ASSERT_EQ(l.entries.size(), 1u);
  EXPECT_DOUBLE_EQ(l.probability(a), 1.0);
  auto m = build_soft_label(std::vector<FutureItem>{{a, 0}, {b, 1}, {a, 2}}, 0.5);
  EXPECT_NEAR(m.probability(a), 5.0 / 7.0, 1e-15);
}

TEST(SoftLabel, Errors) {
  EXPECT_THROW(build_soft_label(std::vector<FutureItem>{}, 0.3), std::invalid_argument);
  EXPECT_THROW(build_soft_label(std::vector<FutureItem>{{a, 0}}, 0.0), ConfigError);
  EXPECT_THROW(build_soft_label(std::vector<FutureItem>{{a, 0}}, 1.5), ConfigError);
}

TEST(SoftLabel, MassAndMonotoneWeights) {
  auto l = build_soft_label(std::vector<FutureItem>{{a, 0}, {b, 1}, {c, 2}}, 0.3);
  double s = 0.0;
  for (const auto& [id, p] : l.entries) s += p;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_GT(l.probability(a), l.probability(b));
  EXPECT_GT(l.probability(b), l.probability(c));
}

TEST(RevisedCE, PerfectPredictionIsZero) {
  Node probs = leaf(Tensor::vector({0.0, 1.0, 0.0}), false);
  EXPECT_EQ(revised_cross_entropy(probs, one_hot_label(b)).item(), 0.0);
}

TEST(RevisedCE, UniformGivesLogN) {
  auto l = build_soft_label(std::vector<FutureItem>{{a, 0}, {b, 1}, {c, 2}}, 0.5);
  EXPECT_NEAR(revised_cross_entropy(uniform_probs(4), l).item(), std::log(4.0), 1e-15);
}

TEST(RevisedCE, OutOfCatalogThrows) {
  EXPECT_THROW(revised_cross_entropy(uniform_probs(2), one_hot_label(c)), std::out_of_range);
  EXPECT_THROW(revised_cross_entropy_from_logits(uniform_probs(2), one_hot_label(ItemId{0})), std::out_of_range);
}

TEST(RevisedCE, LogitFormMatchesProbabilityForm) {
  Node logits = leaf(Tensor::vector({0.5, -1.0, 2.0, 0.25}), false);
  auto l = build_soft_label(std::vector<FutureItem>{{c, 0}, {a, 1}, {b, 2}}, 0.3);
  EXPECT_NEAR(revised_cross_entropy_from_logits(logits, l).item(), revised_cross_entropy(softmax(logits), l).item(),
              1e-14);
}
