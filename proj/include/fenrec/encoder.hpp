#pragma once

// Reference sequence encoder: one causal self-attention block followed by a
// position-wise feed-forward layer, read out at the most recent position.
//
//   X    = dropout(E[items] + P[0 .. L))          L = number of real items
//   q    = LN(x_L) Wq,  K = X Wk^T,  V = X Wv
//   a    = softmax(K q / sqrt(d))                  last query attends to all L keys
//   y    = LN(LN(x_L) + dropout((a^T V) Wo))
//   h    = LN(y + dropout(relu(y W1 + b1) W2 + b2)) * g + beta
//
// Only the last position is needed because a single causal block feeds the
// readout; earlier positions only contribute keys and values. Positions are
// counted from the first real item of the (truncated) prefix.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fenrec/data.hpp"
#include "fenrec/errors.hpp"
#include "fenrec/rng.hpp"
#include "fenrec/tensor.hpp"

namespace fenrec {

struct EncoderConfig {
  std::size_t num_items = 0;  // N; the embedding table has N + 1 rows
  std::size_t dim = 64;
  std::size_t max_len = 50;
  double dropout = 0.2;
};

struct EncoderParams {
  EncoderConfig config;
  Tensor item_embedding;      // (N+1) x d, row 0 = padding
  Tensor position_embedding;  // max_len x d
  Tensor query, key, value, output;  // d x d
  Tensor ffn_in;        // d x 4d
  Tensor ffn_in_bias;   // 4d
  Tensor ffn_out;       // 4d x d
  Tensor ffn_out_bias;  // d
  Tensor norm_gain;     // d
  Tensor norm_bias;     // d

  template <class F>
  void for_each(F&& f) {
    f("item_embedding", item_embedding);
    f("position_embedding", position_embedding);
    f("query", query);
    f("key", key);
    f("value", value);
    f("output", output);
    f("ffn_in", ffn_in);
    f("ffn_in_bias", ffn_in_bias);
    f("ffn_out", ffn_out);
    f("ffn_out_bias", ffn_out_bias);
    f("norm_gain", norm_gain);
    f("norm_bias", norm_bias);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<EncoderParams*>(this)->for_each([&](const char* name, Tensor& t) { f(name, std::as_const(t)); });
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, const Tensor& t) { ok = ok && t.all_finite(); });
    return ok;
  }

  friend bool operator==(const EncoderParams& a, const EncoderParams& b) {
    bool eq = a.config.num_items == b.config.num_items && a.config.dim == b.config.dim &&
              a.config.max_len == b.config.max_len && a.config.dropout == b.config.dropout;
    std::vector<const Tensor*> ta, tb;
    a.for_each([&](const char*, const Tensor& t) { ta.push_back(&t); });
    b.for_each([&](const char*, const Tensor& t) { tb.push_back(&t); });
    for (std::size_t i = 0; eq && i < ta.size(); ++i) eq = *ta[i] == *tb[i];
    return eq;
  }

  static EncoderParams initialize(const EncoderConfig& cfg, std::uint64_t seed) {
    if (cfg.num_items == 0 || cfg.dim == 0 || cfg.max_len == 0)
      throw ConfigError("encoder: num_items, dim and max_len must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("encoder: dropout must lie in [0, 1)");
    Rng rng(derive_seed(seed, {kInitTag}));
    const std::size_t d = cfg.dim, h = 4 * cfg.dim;
    auto uniform = [&](std::vector<std::size_t> shape, double bound) {
      Tensor t(std::move(shape));
      for (auto& v : t.values()) v = rng.uniform(-bound, bound);
      return t;
    };
    auto xavier = [&](std::size_t in, std::size_t out) {
      return uniform({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)));
    };
    EncoderParams p;
    p.config = cfg;
    const double emb_bound = std::sqrt(3.0 / static_cast<double>(d));
    p.item_embedding = uniform({cfg.num_items + 1, d}, emb_bound);
    for (auto& v : p.item_embedding.row(0)) v = 0.0;
    p.position_embedding = uniform({cfg.max_len, d}, emb_bound);
    p.query = xavier(d, d);
    p.key = xavier(d, d);
    p.value = xavier(d, d);
    p.output = xavier(d, d);
    p.ffn_in = xavier(d, h);
    p.ffn_in_bias = Tensor({h});
    p.ffn_out = xavier(h, d);
    p.ffn_out_bias = Tensor({d});
    p.norm_gain = Tensor({d}, 1.0);
    p.norm_bias = Tensor({d});
    return p;
  }
};

/// Leaf nodes bound to one parameter snapshot. Built once per training step.
class EncoderGraph {
 public:
  explicit EncoderGraph(const EncoderParams& params, bool requires_grad = true) : config_(params.config) {
    params.for_each([&](const char*, const Tensor& t) { leaves_.push_back(leaf(t, requires_grad)); });
  }

  const EncoderConfig& config() const { return config_; }
  const Node& item_embedding() const { return leaves_[0]; }
  std::span<const Node> leaves() const { return leaves_; }

  /// User representation for a padded prefix. Dropout masks are keyed by `seed`.
  Node encode(std::span<const ItemId> prefix, bool dropout_on, std::uint64_t seed) const {
    std::vector<std::size_t> items;
    for (ItemId id : prefix) {
      if (id.is_padding() && items.empty()) continue;
      if (id.value < 0 || static_cast<std::size_t>(id.value) > config_.num_items)
        throw std::out_of_range("encode: item id " + std::to_string(id.value) + " outside catalog");
      items.push_back(static_cast<std::size_t>(id.value));
    }
    if (items.empty()) throw std::invalid_argument("encode: prefix has no non-padding item");
    if (items.size() > config_.max_len) items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(config_.max_len));

    const double rate = dropout_on ? config_.dropout : 0.0;
    const std::size_t len = items.size();
    std::vector<std::size_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) positions[i] = i;

    const Node& E = leaves_[0];
    const Node& P = leaves_[1];
    Node x = add(gather_rows(E, items), gather_rows(P, positions));
    x = dropout(x, rate, derive_seed(seed, {0}));

    Node last = layer_norm(row(x, len - 1));
    Node q = vecmat(last, leaves_[2]);
    // K q = X (Wk q) and a^T V = (a^T X) Wv: with a single query the key and
    // value projections never need to be materialized.
    Node attn = softmax(scale(matvec(x, matvec(leaves_[3], q)), 1.0 / std::sqrt(static_cast<double>(config_.dim))));
    Node ctx = vecmat(vecmat(vecmat(attn, x), leaves_[4]), leaves_[5]);
    Node y = layer_norm(add(last, dropout(ctx, rate, derive_seed(seed, {1}))));

    Node hidden = relu(add(vecmat(y, leaves_[6]), leaves_[7]));
    Node ff = add(vecmat(hidden, leaves_[8]), leaves_[9]);
    Node z = layer_norm(add(y, dropout(ff, rate, derive_seed(seed, {2}))));
    return add(mul(z, leaves_[10]), leaves_[11]);
  }

  std::pair<Node, Node> encode_dual_views(std::span<const ItemId> prefix, std::uint64_t seed_a,
                                          std::uint64_t seed_b) const {
    return {encode(prefix, true, seed_a), encode(prefix, true, seed_b)};
  }

  /// h^T v_j for j in [1, N]; the padding row is excluded.
  Node score_logits(const Node& h) const { return matvec_tail(leaves_[0], h, 1); }

  /// softmax(h^T v_j) over j in [1, N]. Entry j-1 belongs to item j.
  Node score_all(const Node& h) const { return softmax(score_logits(h)); }

  /// Gradients of the bound leaves, in EncoderParams::for_each order.
  std::vector<Tensor> gradients() const {
    std::vector<Tensor> out;
    out.reserve(leaves_.size());
    for (const auto& l : leaves_) out.push_back(l.grad());
    return out;
  }

 private:
  EncoderConfig config_;
  std::vector<Node> leaves_;
};

inline Node encode(std::span<const ItemId> prefix, const EncoderParams& params, bool dropout_on, std::uint64_t seed) {
  return EncoderGraph(params, false).encode(prefix, dropout_on, seed);
}

/// Plain forward pass without a graph, for evaluation.
inline std::vector<double> encode_values(std::span<const ItemId> prefix, const EncoderParams& params) {
  const auto h = encode(prefix, params, false, 0).value().values();
  return {h.begin(), h.end()};
}

// ---------------------------------------------------------------------------
// Checkpoint format (text, exact round trip via hexadecimal floats):
//
//   fenrec-checkpoint 1
//   config <num_items> <dim> <max_len> <dropout>
//   tensor <name> <rank> <dim_0> ... <dim_{rank-1}>
//   <values, space separated, %a formatting>
//   ... one tensor/value-line pair per parameter, EncoderParams::for_each order

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ParseError("bad numeric token '" + s + "'");
  return v;
}

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (auto d : t.shape()) out << ' ' << d;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << hexfloat(t[i]);
  out << '\n';
}

inline Tensor read_tensor(std::istream& in, const std::string& expected_name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("checkpoint truncated before tensor '" + expected_name + "'");
  std::istringstream head(line);
  std::string tag, name;
  std::size_t rank = 0;
  head >> tag >> name >> rank;
  if (tag != "tensor" || name != expected_name)
    throw ParseError("checkpoint: expected tensor '" + expected_name + "', found '" + line + "'");
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape)
    if (!(head >> d)) throw ParseError("checkpoint: bad shape for '" + name + "'");
  if (!std::getline(in, line)) throw ParseError("checkpoint: missing values for '" + name + "'");
  std::istringstream body(line);
  std::vector<double> values;
  values.reserve(Tensor::count(shape));
  std::string tok;
  while (body >> tok) values.push_back(parse_hexfloat(tok));
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const EncoderParams& p) {
  out << "fenrec-checkpoint 1\n";
  out << "config " << p.config.num_items << ' ' << p.config.dim << ' ' << p.config.max_len << ' '
      << detail::hexfloat(p.config.dropout) << '\n';
  p.for_each([&](const char* name, const Tensor& t) { detail::write_tensor(out, name, t); });
}

inline EncoderParams read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "fenrec-checkpoint 1") throw ParseError("not a fenrec checkpoint");
  if (!std::getline(in, line)) throw ParseError("checkpoint: missing config line");
  std::istringstream cfg(line);
  std::string tag, dropout;
  EncoderParams p;
  cfg >> tag >> p.config.num_items >> p.config.dim >> p.config.max_len >> dropout;
  if (tag != "config") throw ParseError("checkpoint: expected config line");
  p.config.dropout = detail::parse_hexfloat(dropout);
  p.for_each([&](const char* name, Tensor& t) { t = detail::read_tensor(in, name); });
  return p;
}

inline void save_checkpoint(const std::string& path, const EncoderParams& p) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, p);
}

inline EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace fenrec
