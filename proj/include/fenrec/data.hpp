#pragma once

// Interaction ingestion, leave-one-out splitting and prefix enumeration.
//
// Input format: one user per line, whitespace separated; the first token is an
// opaque user id and the rest are integer item ids in chronological order.
// Item ids are remapped densely to [1, N] in order of first appearance among
// the retained sequences; 0 is the padding id.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fenrec/errors.hpp"

namespace fenrec {

struct ItemId {
  std::int32_t value = 0;

  constexpr bool is_padding() const noexcept { return value == 0; }
  friend constexpr auto operator<=>(ItemId, ItemId) = default;
};

inline constexpr ItemId kPaddingItem{0};

struct InteractionSequence {
  std::string user_id;
  std::vector<ItemId> items;
};

struct RemapEntry {
  std::int64_t original_id;
  ItemId item;
};

struct LoadedInteractions {
  std::vector<InteractionSequence> sequences;
  std::vector<RemapEntry> remap;  // in new-id order
  std::size_t catalog_size = 0;
};

struct FutureItem {
  ItemId item;
  int offset;  // 0 = immediate next item

  friend bool operator==(const FutureItem&, const FutureItem&) = default;
};

struct TrainingSample {
  std::vector<ItemId> prefix;  // left-padded with 0 to max_len, most recent items kept
  std::size_t prefix_len = 0;  // untruncated prefix length t
  std::vector<FutureItem> future_window;

  ItemId target() const { return future_window.front().item; }
};

struct UserSplit {
  std::string user_id;
  std::vector<ItemId> train;
  ItemId valid_target;
  ItemId test_target;
  std::size_t full_length = 0;

  std::vector<ItemId> valid_input() const { return train; }
  std::vector<ItemId> test_input() const {
    auto v = train;
    v.push_back(valid_target);
    return v;
  }
};

struct DatasetSplit {
  std::vector<UserSplit> users;
  std::size_t catalog_size = 0;
};

namespace detail {

inline bool parse_int64(const std::string& token, std::int64_t& out) {
  if (token.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(token, &pos, 10);
  } catch (const std::exception&) {
    return false;
  }
  return pos == token.size();
}

}  // namespace detail

inline LoadedInteractions parse_interactions(std::istream& in, std::size_t min_len) {
  struct RawLine {
    std::string user;
    std::vector<std::int64_t> items;
  };
  std::vector<RawLine> raw;
  std::string line;
  std::size_t line_no = 0;
  bool any_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    RawLine r;
    if (!(tokens >> r.user)) continue;
    any_content = true;
    std::string tok;
    while (tokens >> tok) {
      std::int64_t v = 0;
      if (!detail::parse_int64(tok, v)) throw ParseError("non-integer item token '" + tok + "'", line_no);
      r.items.push_back(v);
    }
    if (r.items.size() >= min_len) raw.push_back(std::move(r));
  }
  if (!any_content) throw ParseError("interaction file is empty");

  LoadedInteractions out;
  std::unordered_map<std::int64_t, std::int32_t> ids;
  for (auto& r : raw) {
    InteractionSequence seq{std::move(r.user), {}};
    seq.items.reserve(r.items.size());
    for (std::int64_t original : r.items) {
      auto [it, inserted] = ids.try_emplace(original, static_cast<std::int32_t>(ids.size() + 1));
      if (inserted) out.remap.push_back({original, ItemId{it->second}});
      seq.items.push_back(ItemId{it->second});
    }
    out.sequences.push_back(std::move(seq));
  }
  out.catalog_size = ids.size();
  return out;
}

inline LoadedInteractions load_interactions(const std::string& path, std::size_t min_len = 3) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open interaction file '" + path + "'");
  return parse_interactions(in, min_len);
}

/// Two columns per line: original_id new_id.
inline void write_remap(const std::string& path, std::span<const RemapEntry> remap) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write remap table '" + path + "'");
  for (const auto& e : remap) out << e.original_id << ' ' << e.item.value << '\n';
}

inline std::vector<RemapEntry> read_remap(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open remap table '" + path + "'");
  std::vector<RemapEntry> out;
  std::int64_t a = 0, b = 0;
  while (in >> a >> b) out.push_back({a, ItemId{static_cast<std::int32_t>(b)}});
  return out;
}

/// Leave-one-out: last item is the test target, second-to-last the validation target.
inline DatasetSplit split_leave_one_out(std::span<const InteractionSequence> seqs, std::size_t catalog_size) {
  DatasetSplit split;
  split.catalog_size = catalog_size;
  split.users.reserve(seqs.size());
  for (const auto& s : seqs) {
    if (s.items.size() < 3)
      throw std::invalid_argument("split_leave_one_out: user '" + s.user_id + "' has fewer than 3 items");
    UserSplit u;
    u.user_id = s.user_id;
    u.train.assign(s.items.begin(), s.items.end() - 2);
    u.valid_target = s.items[s.items.size() - 2];
    u.test_target = s.items.back();
    u.full_length = s.items.size();
    split.users.push_back(std::move(u));
  }
  return split;
}

inline DatasetSplit split_leave_one_out(const LoadedInteractions& data) {
  return split_leave_one_out(data.sequences, data.catalog_size);
}

/// The most recent max_len items of `items`, left-padded with 0 to max_len.
inline std::vector<ItemId> pad_prefix(std::span<const ItemId> items, std::size_t max_len) {
  std::vector<ItemId> out(max_len, kPaddingItem);
  const std::size_t n = std::min(items.size(), max_len);
  std::copy(items.end() - static_cast<std::ptrdiff_t>(n), items.end(), out.end() - static_cast<std::ptrdiff_t>(n));
  return out;
}

/// One sample per prefix length t in [1, len-1]. The future window holds the
/// items at positions t+1 .. min(t+1+horizon, len) of the training portion,
/// so it never reaches validation or test targets.
inline std::vector<TrainingSample> enumerate_subsequences(std::span<const ItemId> train_portion, std::size_t max_len,
                                                          std::size_t horizon = 2) {
  std::vector<TrainingSample> out;
  const std::size_t len = train_portion.size();
  if (len < 2) return out;
  out.reserve(len - 1);
  for (std::size_t t = 1; t < len; ++t) {
    TrainingSample s;
    s.prefix = pad_prefix(train_portion.first(t), max_len);
    s.prefix_len = t;
    const std::size_t last = std::min(t + horizon, len - 1);
    for (std::size_t p = t; p <= last; ++p) s.future_window.push_back({train_portion[p], static_cast<int>(p - t)});
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<TrainingSample> enumerate_training_samples(const DatasetSplit& split, std::size_t max_len,
                                                              std::size_t horizon = 2) {
  std::vector<TrainingSample> all;
  for (const auto& u : split.users) {
    auto s = enumerate_subsequences(u.train, max_len, horizon);
    all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return all;
}

}  // namespace fenrec
