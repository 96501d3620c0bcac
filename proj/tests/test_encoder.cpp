#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fenrec/encoder.hpp"
#include "fenrec/soft_label.hpp"
#include "fenrec/verify/oracles.hpp"

using namespace fenrec;

namespace {
EncoderParams small(std::size_t n = 6, std::size_t d = 8, std::size_t L = 5, double dropout = 0.2,
                    std::uint64_t seed = 3) {
  return EncoderParams::initialize({n, d, L, dropout}, seed);
}
std::vector<ItemId> prefix(std::initializer_list<int> v, std::size_t L) {
  std::vector<ItemId> items;
  for (int i : v) items.push_back(ItemId{i});
  return pad_prefix(items, L);
}
std::vector<double> vals(const Node& n) { return {n.value().values().begin(), n.value().values().end()}; }
}  // namespace

TEST(Encoder, InitPaddingRowZeroAndFinite) {
  auto p = small();
  for (double v : p.item_embedding.row(0)) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(p.all_finite());
  EXPECT_EQ(p.item_embedding.rows(), 7u);
  EXPECT_EQ(p.ffn_in.cols(), 32u);
}

TEST(Encoder, DeterministicWithoutDropout) {
  auto p = small();
  auto x = prefix({1, 4, 2}, 5);
  EXPECT_EQ(encode(x, p, false, 1).value(), encode(x, p, false, 999).value());
}

TEST(Encoder, DropoutSeedsDiffer) {
  auto p = small();
  auto x = prefix({1, 4, 2}, 5);
  EXPECT_NE(encode(x, p, true, 1).value(), encode(x, p, true, 2).value());
  EXPECT_EQ(encode(x, p, true, 1).value(), encode(x, p, true, 1).value());
}

TEST(Encoder, AllPaddingPrefixThrows) {
  auto p = small();
  std::vector<ItemId> x(5, kPaddingItem);
  EXPECT_THROW(encode(x, p, false, 0), std::invalid_argument);
}

TEST(Encoder, OutOfCatalogThrows) {
  auto p = small();
  EXPECT_THROW(encode(prefix({9}, 5), p, false, 0), std::out_of_range);
}

TEST(Encoder, NonZeroRepresentation) {
  auto p = small();
  for (int i = 1; i <= 6; ++i) EXPECT_GT(oracle::norm(vals(encode(prefix({i}, 5), p, false, 0))), 0.0);
}

TEST(Encoder, PermutationSensitive) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto p = small(6, 8, 5, 0.2, seed);
    EXPECT_NE(encode(prefix({1, 2}, 5), p, false, 0).value(), encode(prefix({2, 1}, 5), p, false, 0).value());
  }
}

TEST(Encoder, DualViewsWithZeroDropoutAreEqual) {
  auto p = small(6, 8, 5, 0.0);
  EncoderGraph g(p);
  auto [h, hp] = g.encode_dual_views(prefix({1, 2, 3}, 5), 11, 12);
  EXPECT_EQ(h.value(), hp.value());
}

TEST(Encoder, DualViewsNotCollinearAtHalfDropout) {
  auto p = EncoderParams::initialize({50, 64, 10, 0.5}, 5);
  EncoderGraph g(p, false);
  Rng rng(9);
  int collinear = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<ItemId> items;
    const std::size_t len = 1 + rng.below(10);
    for (std::size_t i = 0; i < len; ++i) items.push_back(ItemId{static_cast<std::int32_t>(1 + rng.below(50))});
    auto [h, hp] = g.encode_dual_views(pad_prefix(items, 10), 2 * k, 2 * k + 1);
    const auto a = vals(h), b = vals(hp);
    if (oracle::dot(a, b) >= oracle::norm(a) * oracle::norm(b) * (1 - 1e-12)) ++collinear;
  }
  EXPECT_EQ(collinear, 0);
}

TEST(Encoder, SameSeedPairReproduces) {
  auto p = small();
  EncoderGraph g(p);
  auto x = prefix({3, 3, 1}, 5);
  auto a = g.encode_dual_views(x, 4, 5);
  auto b = g.encode_dual_views(x, 4, 5);
  EXPECT_EQ(a.first.value(), b.first.value());
  EXPECT_EQ(a.second.value(), b.second.value());
}

TEST(Encoder, TruncatesToMaxLen) {
  auto p = small(6, 8, 3);
  std::vector<ItemId> long_seq{ItemId{1}, ItemId{2}, ItemId{3}, ItemId{4}, ItemId{5}};
  std::vector<ItemId> tail{ItemId{3}, ItemId{4}, ItemId{5}};
  EXPECT_EQ(encode(long_seq, p, false, 0).value(), encode(tail, p, false, 0).value());
}

TEST(Scoring, LengthIsNAndSumsToOne) {
  auto p = small();
  EncoderGraph g(p);
  auto probs = g.score_all(encode(prefix({2}, 5), p, false, 0));
  ASSERT_EQ(probs.size(), 6u);
  double s = 0.0;
  for (double v : probs.value().values()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Scoring, IdenticalEmbeddingsGiveEqualProbabilities) {
  auto p = small(2, 4);
  for (std::size_t i = 0; i < 4; ++i) p.item_embedding.at(2, i) = p.item_embedding.at(1, i);
  EncoderGraph g(p);
  auto probs = g.score_all(leaf(Tensor::vector({0.3, -0.1, 2.0, 0.7}), false));
  EXPECT_DOUBLE_EQ(probs.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(probs.value()[1], 0.5);
}

TEST(Scoring, PaddingRowGetsNoGradient) {
  auto p = small();
  EncoderGraph g(p);
  auto h = g.encode(prefix({1, 2, 3}, 5), true, 3);
  backward(revised_cross_entropy_from_logits(g.score_logits(h), build_soft_label(
                                                                   std::vector<FutureItem>{{ItemId{4}, 0}, {ItemId{5}, 1}}, 0.3)));
  const Tensor grad = g.gradients()[0];
  for (double v : grad.row(0)) EXPECT_EQ(v, 0.0);
  double other = 0.0;
  for (double v : grad.row(1)) other += std::abs(v);
  EXPECT_GT(other, 0.0);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto p = small(6, 8, 5, 0.2, 77);
  std::stringstream buf;
  write_checkpoint(buf, p);
  auto q = read_checkpoint(buf);
  EXPECT_TRUE(p == q);
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream buf("not a checkpoint\n");
  EXPECT_THROW(read_checkpoint(buf), ParseError);
}
