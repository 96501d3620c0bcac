#include <gtest/gtest.h>

#include <cmath>

#include "fenrec/losses.hpp"
#include "fenrec/verify.hpp"

using namespace fenrec;

namespace {
Node vec(std::vector<double> v) { return leaf(Tensor::vector(std::move(v))); }
ContrastiveConfig plain() {
  ContrastiveConfig c;
  c.upweighting_enabled = false;
  c.mixing_enabled = false;
  return c;
}
}  // namespace

TEST(InfoNCE, SaturatedPositive) {
  // h.h+ = 10, h.n = -10
  Node h = vec({1, 0}), p = vec({10, 0});
  std::vector<Node> negs{vec({-10, 0}), vec({-10, 5})};
  EXPECT_LT(info_nce(h, p, negs, plain())->item(), 1e-8);
}

TEST(InfoNCE, TwoEqualLogitsGiveLog2) {
  Node h = vec({1, 2}), p = vec({3, -1});
  std::vector<Node> negs{vec({-1, 1})};  // both inner products equal 1
  EXPECT_NEAR(info_nce(h, p, negs, plain())->item(), std::log(2.0), 1e-15);
}

TEST(InfoNCE, EmptyNegativesSkipped) {
  EXPECT_FALSE(info_nce(vec({1}), vec({1}), std::vector<Node>{}, plain()).has_value());
  EXPECT_FALSE(upweighted_loss(vec({1}), vec({1}), NegativeSet{}, ContrastiveConfig{}).has_value());
}

TEST(InfoNCE, InvalidTemperatures) {
  ContrastiveConfig c;
  c.tau1 = 0.0;
  std::vector<Node> negs{vec({1})};
  EXPECT_THROW(info_nce(vec({1}), vec({1}), negs, c), ConfigError);
}

TEST(MixedNegative, MuZeroIsBitIdentical) {
  Node h = vec({0.3, -1.2, 0.8}), p = vec({0.1, -1, 1});
  std::vector<Node> negs{vec({1, 1, 1}), vec({-0.5, 2, 0})};
  auto sets = build_negative_sets(std::vector<Node>{h, negs[0]}, std::vector<Node>{p, negs[1]},
                                  std::vector<ItemId>{ItemId{1}, ItemId{2}}, 0.3);
  ContrastiveConfig c = plain();
  c.mixing_enabled = true;
  c.mu = 0.0;
  EXPECT_EQ(mixed_negative_loss(h, p, sets[0], c)->item(), info_nce(h, p, negs, c)->item());
  c.mu = 0.1;
  EXPECT_GT(mixed_negative_loss(h, p, sets[0], c)->item(), info_nce(h, p, negs, c)->item());
}

TEST(Upweighted, OrthogonalNegativeContributesExpMargin) {
  ContrastiveConfig c;
  c.mu = 0.0;
  Node h = vec({1, 0}), p = vec({2, 0});
  NegativeSet s;
  s.originals = {vec({0, 3})};
  const double xp = 2.0 * std::tanh(2.0 / 8.0);
  const double want = -xp + std::log(std::exp(xp) + std::exp(0.2));
  EXPECT_NEAR(upweighted_loss(h, p, s, c)->item(), want, 1e-15);
}

TEST(Upweighted, DisabledPathEqualsInfoNCE) {
  Node h = vec({0.3, -1.2}), p = vec({0.1, -1});
  NegativeSet s;
  s.originals = {vec({1, 1}), vec({-0.5, 2})};
  EXPECT_NEAR(upweighted_loss(h, p, s, plain())->item(), info_nce(h, p, s.originals, plain())->item(), 1e-9);
}

TEST(TotalLoss, Arithmetic) {
  Node rec = leaf(Tensor::scalar(0.0));
  Node l2 = leaf(Tensor::scalar(std::log(2.0)));
  EXPECT_DOUBLE_EQ(total_loss(rec, l2, l2, 1.0).item(), 2 * std::log(2.0));
  Node r = leaf(Tensor::scalar(0.7));
  EXPECT_EQ(total_loss(r, l2, l2, 0.0).item(), 0.7);
}

TEST(Suites, Reductions) { EXPECT_TRUE(verify::reductions().passed()); }
TEST(Suites, LossOracles) { EXPECT_TRUE(verify::loss_oracles().passed()); }
TEST(Suites, LossProperties) { EXPECT_TRUE(verify::loss_properties().passed()); }
TEST(Suites, LossGradients) {
  auto r = verify::loss_gradients();
  EXPECT_TRUE(r.passed()) << (r.notes.empty() ? "" : r.notes.front());
}
