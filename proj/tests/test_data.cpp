#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fenrec/data.hpp"
#include "fenrec/synthetic.hpp"

using namespace fenrec;

namespace {
std::vector<int> ids(std::span<const ItemId> v) {
  std::vector<int> out;
  for (auto i : v) out.push_back(i.value);
  return out;
}
std::vector<ItemId> items(std::initializer_list<int> v) {
  std::vector<ItemId> out;
  for (int i : v) out.push_back(ItemId{i});
  return out;
}
}  // namespace

TEST(Load, DuplicatesPreservedAndShortDropped) {
  std::istringstream in("u1 5 9 9 2\nu2 7 3\n");
  auto d = parse_interactions(in, 3);
  ASSERT_EQ(d.sequences.size(), 1u);
  EXPECT_EQ(d.sequences[0].user_id, "u1");
  EXPECT_EQ(ids(d.sequences[0].items), (std::vector<int>{1, 2, 2, 3}));
  ASSERT_EQ(d.remap.size(), 3u);
  EXPECT_EQ(d.remap[0].original_id, 5);
  EXPECT_EQ(d.remap[1].original_id, 9);
  EXPECT_EQ(d.remap[2].original_id, 2);
}

TEST(Load, DenseRemapInFirstAppearanceOrder) {
  std::istringstream in("a 10 20 30\nb 30 20 10\nc 20 20 20\n");
  auto d = parse_interactions(in, 3);
  EXPECT_EQ(d.catalog_size, 3u);
  EXPECT_EQ(ids(d.sequences[0].items), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(ids(d.sequences[1].items), (std::vector<int>{3, 2, 1}));
}

TEST(Load, ParseErrorCarriesLineNumber) {
  std::istringstream in("u1 1 2 3\nu2 4 x 6\n");
  try {
    parse_interactions(in, 3);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Load, EmptyFileIsAnError) {
  std::istringstream in("\n\n");
  EXPECT_THROW(parse_interactions(in, 3), ParseError);
  EXPECT_THROW(load_interactions("/nonexistent/file.txt"), ParseError);
}

TEST(Load, RemapRoundTrip) {
  std::istringstream in("u 100 -4 100 7\n");
  auto d = parse_interactions(in, 3);
  const auto path = (std::filesystem::temp_directory_path() / "fenrec_remap_test.tsv").string();
  write_remap(path, d.remap);
  auto back = read_remap(path);
  ASSERT_EQ(back.size(), d.remap.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].original_id, d.remap[i].original_id);
    EXPECT_EQ(back[i].item, d.remap[i].item);
  }
}

TEST(Split, LeaveOneOut) {
  std::vector<InteractionSequence> s{{"a", items({1, 2, 3, 4, 5})}, {"b", items({1, 2, 3})}};
  auto split = split_leave_one_out(s, 5);
  EXPECT_EQ(ids(split.users[0].train), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(split.users[0].valid_target.value, 4);
  EXPECT_EQ(ids(split.users[0].valid_input()), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(split.users[0].test_target.value, 5);
  EXPECT_EQ(ids(split.users[0].test_input()), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(ids(split.users[1].train), (std::vector<int>{1}));
  EXPECT_EQ(split.users[1].valid_target.value, 2);
  EXPECT_EQ(split.users[1].test_target.value, 3);
  EXPECT_EQ(split.users[0].full_length, 5u);
}

TEST(Split, OneTargetPerUser) {
  std::vector<InteractionSequence> s;
  for (int u = 0; u < 100; ++u) s.push_back({"u" + std::to_string(u), items({1, 2, 3, 4})});
  auto split = split_leave_one_out(s, 4);
  EXPECT_EQ(split.users.size(), 100u);
  EXPECT_THROW(split_leave_one_out(std::vector<InteractionSequence>{{"x", items({1, 2})}}, 2), std::invalid_argument);
}

TEST(Subsequences, WindowsAndTruncation) {
  const auto t = items({1, 2, 3, 4});  // a b c d
  auto s = enumerate_subsequences(t, 50);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].prefix_len, 1u);
  EXPECT_EQ(s[0].future_window, (std::vector<FutureItem>{{ItemId{2}, 0}, {ItemId{3}, 1}, {ItemId{4}, 2}}));
  EXPECT_EQ(s[2].future_window, (std::vector<FutureItem>{{ItemId{4}, 0}}));
  EXPECT_EQ(ids(std::span(s[2].prefix).last(3)), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(s[2].prefix.size(), 50u);
  EXPECT_TRUE(s[2].prefix[46].is_padding());
}

TEST(Subsequences, CountAndNextItemInvariant) {
  const auto t = items({4, 1, 4, 2, 3, 3});
  auto s = enumerate_subsequences(t, 3);
  EXPECT_EQ(s.size(), 5u);
  for (const auto& x : s) {
    EXPECT_EQ(x.target(), t[x.prefix_len]);
    EXPECT_FALSE(x.future_window.empty());
    for (std::size_t k = 1; k < x.future_window.size(); ++k)
      EXPECT_EQ(x.future_window[k].offset, x.future_window[k - 1].offset + 1);
    EXPECT_LE(x.future_window.back().offset, 2);
    EXPECT_EQ(x.prefix.size(), 3u);
  }
  // t = 5 > max_len keeps the three most recent items
  EXPECT_EQ(ids(s[4].prefix), (std::vector<int>{4, 2, 3}));
}

TEST(Subsequences, TotalCountAcrossUsers) {
  std::vector<InteractionSequence> s{{"a", items({1, 2, 3, 4, 5, 6})}, {"b", items({1, 2, 3})}, {"c", items({2, 2, 2, 2})}};
  auto split = split_leave_one_out(s, 6);
  std::size_t want = 0;
  for (const auto& u : split.users) want += u.train.size() - 1;
  EXPECT_EQ(enumerate_training_samples(split, 50).size(), want);
}

TEST(Synthetic, DeterministicAndLoadable) {
  SyntheticSpec spec;
  std::ostringstream a, b;
  generate_synthetic(spec, a);
  generate_synthetic(spec, b);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  auto d = parse_interactions(in, 3);
  EXPECT_EQ(d.sequences.size(), 200u);
  EXPECT_LE(d.catalog_size, 500u);
  std::size_t max_id = 0;
  for (const auto& s : d.sequences) {
    EXPECT_GE(s.items.size(), 5u);
    EXPECT_LE(s.items.size(), 50u);
    for (auto i : s.items) max_id = std::max<std::size_t>(max_id, i.value);
  }
  EXPECT_EQ(max_id, d.catalog_size);
}

TEST(Synthetic, RejectsInvalidSizes) {
  std::ostringstream out;
  SyntheticSpec spec;
  spec.n_users = 0;
  EXPECT_THROW(generate_synthetic(spec, out), ConfigError);
  spec = {};
  spec.n_clusters = 0;
  EXPECT_THROW(generate_synthetic(spec, out), ConfigError);
}

TEST(Synthetic, SingleClusterWorks) {
  SyntheticSpec spec;
  spec.n_clusters = 1;
  spec.n_users = 20;
  std::ostringstream out;
  generate_synthetic(spec, out);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_interactions(in, 3).sequences.size(), 20u);
}
