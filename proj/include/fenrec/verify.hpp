#pragma once

// Property suites behind `fenrec verify` and the acceptance binary. Each suite
// compares library code against the scalar oracles in verify/oracles.hpp or
// checks an invariant over randomized instances, and reports the number of
// checks, failures and the largest error seen.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fenrec/data.hpp"
#include "fenrec/encoder.hpp"
#include "fenrec/losses.hpp"
#include "fenrec/metrics.hpp"
#include "fenrec/negatives.hpp"
#include "fenrec/rng.hpp"
#include "fenrec/soft_label.hpp"
#include "fenrec/tensor.hpp"
#include "fenrec/trainer.hpp"
#include "fenrec/verify/oracles.hpp"

namespace fenrec::verify {

using oracle::Vec;

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double max_error = 0.0;
  double seconds = 0.0;
  std::vector<std::string> notes;  // first few failure descriptions

  bool passed() const { return checks > 0 && failures == 0; }

  /// Records one comparison; `error` is the observed deviation, `ok` the verdict.
  void check(bool ok, double error, const std::string& what) {
    ++checks;
    if (std::isfinite(error)) max_error = std::max(max_error, error);
    if (!ok) {
      ++failures;
      if (notes.size() < 5) notes.push_back(what);
    }
  }
  void expect_close(double got, double want, double tol, const std::string& what) {
    const double err = std::abs(got - want);
    check(err <= tol, err, what + ": got " + std::to_string(got) + ", want " + std::to_string(want));
  }
};

/// Mixing rule under test: (anchor, negative, lambda) -> synthesized vector.
using MixFn = std::function<Vec(const Vec&, const Vec&, double)>;

inline Vec library_mix(const Vec& anchor, const Vec& negative, double lambda) {
  return mix_hard_negative_values(anchor, negative, lambda).values;
}

/// Mutant for mutation testing: the rescale factor |n| / |mix| is inverted.
inline Vec mutant_mix_rescale_flipped(const Vec& anchor, const Vec& negative, double lambda) {
  const double na = oracle::norm(anchor), nn = oracle::norm(negative);
  Vec m(anchor.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = lambda * anchor[i] / na + (1.0 - lambda) * negative[i] / nn;
  const double nm = oracle::norm(m);
  for (auto& v : m) v *= nm / nn;
  return m;
}

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  MixFn mix = library_mix;
  std::size_t lemma_pairs = 10000;
};

namespace detail {

inline Vec random_vec(Rng& rng, std::size_t d, double scale = 1.0) {
  Vec v(d);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline Node vec_leaf(const Vec& v, bool requires_grad = true) { return leaf(Tensor::vector(v), requires_grad); }

inline Vec values_of(const Node& n) {
  const auto v = n.value().values();
  return Vec(v.begin(), v.end());
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PairSet {
  std::vector<Vec> anchors, negatives;
  std::vector<double> lambdas;
};

// Pairs with a spread of norms; every tenth pair is nearly antiparallel.
inline PairSet lemma_pairs(std::uint64_t seed, std::size_t count, std::size_t d = 64) {
  Rng rng(derive_seed(seed, {1}));
  PairSet p;
  for (std::size_t k = 0; k < count; ++k) {
    Vec a = random_vec(rng, d, std::exp(rng.uniform(-3.0, 3.0)));
    Vec n = random_vec(rng, d, std::exp(rng.uniform(-3.0, 3.0)));
    if (k % 10 == 9) {
      const double s = -std::exp(rng.uniform(-2.0, 2.0));
      for (std::size_t i = 0; i < d; ++i) n[i] = s * a[i] + 1e-3 * rng.normal();
    }
    p.anchors.push_back(std::move(a));
    p.negatives.push_back(std::move(n));
    p.lambdas.push_back(0.1 * static_cast<double>(1 + k % 9));
  }
  return p;
}

// Gradient of a scalar graph function with respect to each input, by autodiff.
using GraphFn = std::function<Node(const std::vector<Node>&)>;

inline std::vector<Vec> autodiff_gradients(const GraphFn& f, const std::vector<Tensor>& inputs) {
  std::vector<Node> leaves;
  for (const auto& t : inputs) leaves.push_back(leaf(t));
  Node out = f(leaves);
  backward(out);
  std::vector<Vec> g;
  for (const auto& l : leaves) g.push_back(values_of(constant(l.grad())));
  return g;
}

inline double graph_value(const GraphFn& f, const std::vector<Tensor>& inputs) {
  std::vector<Node> leaves;
  for (const auto& t : inputs) leaves.push_back(constant(t));
  return f(leaves).item();
}

// Compares autodiff against central differences for every input; returns the worst relative error.
inline double gradient_error(const GraphFn& f, const std::vector<Tensor>& inputs) {
  const auto auto_g = autodiff_gradients(f, inputs);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto probe = [&](const Vec& x) {
      auto in = inputs;
      std::copy(x.begin(), x.end(), in[k].values().begin());
      return graph_value(f, in);
    };
    const auto v = inputs[k].values();
    const Vec fd = oracle::central_difference(probe, Vec(v.begin(), v.end()));
    worst = std::max(worst, oracle::relative_error(auto_g[k], fd));
  }
  return worst;
}

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Reduces any node to a scalar through a fixed random weighting.
inline Node weighted_sum(const Node& x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(x.shape());
  for (auto& v : w.values()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(x, constant(std::move(w))));
}

inline NegativeSet make_set(const std::vector<Node>& originals, const std::vector<Vec>& synthesized, double lambda) {
  NegativeSet s;
  s.originals = originals;
  s.lambda = lambda;
  if (!synthesized.empty()) {
    Tensor m({synthesized.size(), synthesized.front().size()});
    for (std::size_t k = 0; k < synthesized.size(); ++k) std::copy(synthesized[k].begin(), synthesized[k].end(), m.row(k).begin());
    s.synthesized = stop_gradient(constant(std::move(m)));
  }
  return s;
}

// A small corpus where two users share a target so the false-negative filter is exercised.
inline DatasetSplit tiny_split(std::size_t n_items, std::uint64_t seed, std::size_t users = 6) {
  Rng rng(seed);
  std::vector<InteractionSequence> seqs;
  for (std::size_t u = 0; u < users; ++u) {
    InteractionSequence s;
    s.user_id = "u" + std::to_string(u);
    const std::size_t len = 5 + rng.below(4);
    for (std::size_t t = 0; t < len; ++t) s.items.push_back(ItemId{static_cast<std::int32_t>(1 + rng.below(n_items))});
    seqs.push_back(std::move(s));
  }
  return split_leave_one_out(seqs, n_items);
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline SuiteResult lemma_dominance(const VerifyOptions& opt = {}) {
  SuiteResult r{"lemma_dominance"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto pairs = detail::lemma_pairs(opt.seed, opt.lemma_pairs);
  for (std::size_t k = 0; k < pairs.anchors.size(); ++k) {
    const auto& a = pairs.anchors[k];
    const auto& n = pairs.negatives[k];
    const Vec m = opt.mix(a, n, pairs.lambdas[k]);
    const double gap = oracle::dot(m, a) - oracle::dot(n, a);
    r.check(gap >= -1e-9, gap < 0.0 ? -gap : 0.0, "pair " + std::to_string(k) + " violates dominance by " + std::to_string(-gap));
  }
  r.seconds = detail::elapsed(t0);
  r.check(r.seconds < 5.0, 0.0, "runtime " + std::to_string(r.seconds) + " s exceeded 5 s");
  return r;
}

inline SuiteResult norm_preservation(const VerifyOptions& opt = {}) {
  SuiteResult r{"norm_preservation"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto pairs = detail::lemma_pairs(opt.seed, opt.lemma_pairs);
  for (std::size_t k = 0; k < pairs.anchors.size(); ++k) {
    const auto& n = pairs.negatives[k];
    const Vec m = opt.mix(pairs.anchors[k], n, pairs.lambdas[k]);
    const double nn = oracle::norm(n);
    const double rel = std::abs(oracle::norm(m) - nn) / nn;
    r.check(rel <= 1e-9, rel, "pair " + std::to_string(k) + " norm off by " + std::to_string(rel));
    // independent oracle for the direction as well
    const Vec o = oracle::mix(pairs.anchors[k], n, pairs.lambdas[k]);
    r.check(oracle::relative_error(m, o) <= 1e-9, oracle::relative_error(m, o), "pair " + std::to_string(k) + " differs from mixing oracle");
  }
  r.seconds = detail::elapsed(t0);
  return r;
}

inline SuiteResult lambda_monotonicity(const VerifyOptions& opt = {}) {
  SuiteResult r{"lambda_monotonicity"};
  Rng rng(derive_seed(opt.seed, {2}));
  for (int trial = 0; trial < 50; ++trial) {
    const Vec a = detail::random_vec(rng, 64), n = detail::random_vec(rng, 64);
    double prev = -2.0;
    for (int step = 1; step <= 19; ++step) {
      const double lambda = 0.05 * step;
      const double c = oracle::cosine(opt.mix(a, n, lambda), a);
      r.check(c >= prev - 1e-12, std::max(0.0, prev - c), "cosine decreased at lambda " + std::to_string(lambda));
      prev = c;
    }
  }
  return r;
}

inline SuiteResult reductions(const VerifyOptions& opt = {}) {
  SuiteResult r{"reductions"};
  Rng rng(derive_seed(opt.seed, {3}));
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.below(15), k = 1 + rng.below(8);
    const Vec hv = detail::random_vec(rng, d), pv = detail::random_vec(rng, d);
    std::vector<Node> negs;
    std::vector<Vec> neg_values, synth;
    for (std::size_t j = 0; j < k; ++j) {
      neg_values.push_back(detail::random_vec(rng, d));
      negs.push_back(detail::vec_leaf(neg_values.back()));
      synth.push_back(oracle::mix(hv, neg_values.back(), 0.3));
    }
    const Node h = detail::vec_leaf(hv), p = detail::vec_leaf(pv);
    const auto set = detail::make_set(negs, synth, 0.3);
    ContrastiveConfig plain;
    plain.tau1 = 0.5 + rng.uniform();
    plain.mu = 0.0;
    plain.margin = 0.0;
    plain.upweighting_enabled = false;
    const double nce = info_nce(h, p, negs, plain)->item();
    const double up = upweighted_loss(h, p, set, plain)->item();
    const double mixed = mixed_negative_loss(h, p, set, plain)->item();
    r.expect_close(up, nce, 1e-9, "upweighted(s=1,m=0,mu=0) vs InfoNCE");
    r.check(mixed == nce, std::abs(mixed - nce), "mixed(mu=0) not bit-identical to InfoNCE");
    r.expect_close(nce, oracle::info_nce(hv, pv, neg_values, plain.tau1), 1e-12, "InfoNCE vs oracle");
  }
  // soft label at a vanishing gamma, and a single-item window, against plain CE
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(6);
    const Vec scores = detail::random_vec(rng, n, 2.0);
    const Node logits = detail::vec_leaf(scores);
    std::vector<FutureItem> window;
    for (std::size_t off = 0; off < 3; ++off)
      window.push_back({ItemId{static_cast<std::int32_t>(1 + rng.below(n))}, static_cast<int>(off)});
    const double ce = oracle::soft_cross_entropy(oracle::softmax(scores), {{window[0].item.value, 1.0}});
    const double tiny = revised_cross_entropy_from_logits(logits, build_soft_label(window, 1e-8)).item();
    r.expect_close(tiny, ce, 1e-6, "gamma=1e-8 soft label vs CE");
    const double single =
        revised_cross_entropy_from_logits(logits, build_soft_label(std::span(window).first(1), 0.3)).item();
    r.expect_close(single, ce, 1e-12, "single-item window vs CE");
  }
  return r;
}

inline SuiteResult soft_label_algebra(const VerifyOptions& opt = {}) {
  SuiteResult r{"soft_label_algebra"};
  Rng rng(derive_seed(opt.seed, {4}));
  const ItemId a{1}, b{2}, c{3};
  const auto l = build_soft_label(std::vector<FutureItem>{{a, 0}, {b, 1}, {c, 2}}, 0.5);
  r.expect_close(l.probability(a), 4.0 / 7.0, 1e-15, "window at gamma 0.5, item a");
  r.expect_close(l.probability(b), 2.0 / 7.0, 1e-15, "window at gamma 0.5, item b");
  r.expect_close(l.probability(c), 1.0 / 7.0, 1e-15, "window at gamma 0.5, item c");
  for (int trial = 0; trial < 200; ++trial) {
    const double gamma = rng.uniform(0.01, 1.0);
    const std::size_t len = 1 + rng.below(5);
    std::vector<FutureItem> w;
    for (std::size_t off = 0; off < len; ++off) w.push_back({ItemId{static_cast<std::int32_t>(off + 1)}, static_cast<int>(off)});
    const auto s = build_soft_label(w, gamma);
    double total = 0.0;
    for (const auto& [id, p] : s.entries) total += p;
    r.expect_close(total, 1.0, 1e-12, "soft label mass");
    for (std::size_t off = 0; off + 1 < len; ++off) {
      const double ratio = s.entries[off].second / s.entries[off + 1].second;
      r.check(std::abs(ratio * gamma - 1.0) <= 1e-12, std::abs(ratio * gamma - 1.0), "adjacent ratio differs from 1/gamma");
    }
  }
  // soft CE on a random 5-item catalog vs direct summation
  for (int trial = 0; trial < 20; ++trial) {
    const Vec scores = detail::random_vec(rng, 5);
    const Vec probs = oracle::softmax(scores);
    std::vector<FutureItem> w;
    for (std::size_t off = 0; off < 3; ++off) w.push_back({ItemId{static_cast<std::int32_t>(1 + rng.below(5))}, static_cast<int>(off)});
    const auto label = build_soft_label(w, rng.uniform(0.1, 0.9));
    std::vector<std::pair<int, double>> plain;
    for (const auto& [id, p] : label.entries) plain.emplace_back(id.value, p);
    const double got = revised_cross_entropy(detail::vec_leaf(probs), label).item();
    r.expect_close(got, oracle::soft_cross_entropy(probs, plain), 1e-12, "revised CE vs direct sum");
  }
  // the soft label is the minimizer of the loss over the simplex (N = 4)
  const Vec y{4.0 / 7.0, 0.0, 2.0 / 7.0, 1.0 / 7.0};
  const Vec p = oracle::minimize_soft_ce_on_simplex(y);
  r.check(oracle::relative_error(p, y) <= 1e-3, oracle::relative_error(p, y), "projected-gradient minimizer differs from label");
  return r;
}

inline SuiteResult loss_oracles(const VerifyOptions& opt = {}) {
  SuiteResult r{"loss_oracles"};
  Rng rng(derive_seed(opt.seed, {5}));
  oracle::ContrastiveParams op;
  ContrastiveConfig cfg;  // tau1 1, tau2 8, mu 0.1, m 0.2
  for (int trial = 0; trial < 20; ++trial) {
    // random 4-vector InfoNCE
    const Vec h = detail::random_vec(rng, 4), p = detail::random_vec(rng, 4);
    std::vector<Vec> nv{detail::random_vec(rng, 4), detail::random_vec(rng, 4), detail::random_vec(rng, 4)};
    std::vector<Node> negs;
    for (const auto& v : nv) negs.push_back(detail::vec_leaf(v));
    r.expect_close(info_nce(detail::vec_leaf(h), detail::vec_leaf(p), negs, cfg)->item(),
                   oracle::info_nce(h, p, nv, 1.0), 1e-12, "InfoNCE 4-vector");
  }
  for (int trial = 0; trial < 20; ++trial) {
    // B=2 batch: anchor 0 sees sample 1's two views and their mixes
    const std::size_t d = 6;
    const Vec h0 = detail::random_vec(rng, d), p0 = detail::random_vec(rng, d);
    const Vec h1 = detail::random_vec(rng, d), p1 = detail::random_vec(rng, d);
    const std::vector<Node> anchors{detail::vec_leaf(h0), detail::vec_leaf(h1)};
    const std::vector<Node> positives{detail::vec_leaf(p0), detail::vec_leaf(p1)};
    const std::vector<ItemId> targets{ItemId{1}, ItemId{2}};
    const auto sets = build_negative_sets(anchors, positives, targets, 0.3);
    const std::vector<Vec> orig{h1, p1};
    const std::vector<Vec> syn{oracle::mix(h0, h1, 0.3), oracle::mix(h0, p1, 0.3)};
    oracle::ContrastiveParams no_up = op;
    no_up.upweight = false;
    ContrastiveConfig mixed_cfg = cfg;
    mixed_cfg.upweighting_enabled = false;
    r.expect_close(mixed_negative_loss(anchors[0], positives[0], sets[0], mixed_cfg)->item(),
                   oracle::upweighted(h0, p0, orig, syn, no_up), 1e-12, "mixed-negative loss B=2");
    r.expect_close(upweighted_loss(anchors[0], positives[0], sets[0], cfg)->item(),
                   oracle::upweighted(h0, p0, orig, syn, op), 1e-12, "upweighted loss B=2");
  }
  // score_all on a hand-fixed N=3 table
  {
    EncoderParams params = EncoderParams::initialize({3, 2, 4, 0.0}, 1);
    params.item_embedding = Tensor::matrix(4, 2, {0, 0, 1.0, -0.5, 0.25, 2.0, -1.5, 0.75});
    EncoderGraph g(params, false);
    const Vec h{0.4, -1.2};
    const Vec got = detail::values_of(g.score_all(detail::vec_leaf(h, false)));
    const Vec want = oracle::softmax({1.0 * 0.4 + 0.6, 0.25 * 0.4 - 2.4, -1.5 * 0.4 - 0.9});
    r.check(got.size() == 3, 0.0, "score_all length");
    r.check(oracle::relative_error(got, want) <= 1e-12, oracle::relative_error(got, want), "score_all vs softmax oracle");
  }
  // single-item prefix against a hand-rolled forward pass
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 7, d = 6, L = 5;
    const auto params = EncoderParams::initialize({n, d, L, 0.2}, 100 + trial);
    const std::size_t item = 1 + rng.below(n);
    std::vector<ItemId> prefix(L, kPaddingItem);
    prefix.back() = ItemId{static_cast<std::int32_t>(item)};
    const Vec got = detail::values_of(encode(prefix, params, false, 0));

    auto row_of = [](const Tensor& t, std::size_t r) { return Vec(t.row(r).begin(), t.row(r).end()); };
    auto times = [](const Vec& x, const Tensor& m) {
      Vec out(m.cols(), 0.0);
      for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += x[i] * m.at(i, j);
      return out;
    };
    auto ln = [](Vec x) {
      double mu = 0.0, var = 0.0;
      for (double v : x) mu += v;
      mu /= static_cast<double>(x.size());
      for (double v : x) var += (v - mu) * (v - mu);
      var /= static_cast<double>(x.size());
      for (auto& v : x) v = (v - mu) / std::sqrt(var + 1e-8);
      return x;
    };
    auto plus = [](Vec a, const Vec& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
      return a;
    };
    Vec x = plus(row_of(params.item_embedding, item), row_of(params.position_embedding, 0));
    // one key: attention weight is exactly 1, so the context is x Wv Wo
    Vec y = ln(plus(ln(x), times(times(x, params.value), params.output)));
    Vec hidden = plus(times(y, params.ffn_in), Vec(params.ffn_in_bias.values().begin(), params.ffn_in_bias.values().end()));
    for (auto& v : hidden) v = std::max(v, 0.0);
    Vec ff = plus(times(hidden, params.ffn_out), Vec(params.ffn_out_bias.values().begin(), params.ffn_out_bias.values().end()));
    Vec z = ln(plus(y, ff));
    for (std::size_t i = 0; i < d; ++i) z[i] = z[i] * params.norm_gain[i] + params.norm_bias[i];
    r.check(oracle::relative_error(got, z) <= 1e-12, oracle::relative_error(got, z), "single-item encoder vs hand-rolled forward");
  }
  return r;
}

inline SuiteResult loss_properties(const VerifyOptions& opt = {}) {
  SuiteResult r{"loss_properties"};
  Rng rng(derive_seed(opt.seed, {6}));
  ContrastiveConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 8;
    const Vec hv = detail::random_vec(rng, d), pv = detail::random_vec(rng, d);
    std::vector<Node> negs;
    std::vector<Vec> syn;
    for (int j = 0; j < 4; ++j) {
      const Vec n = detail::random_vec(rng, d);
      negs.push_back(detail::vec_leaf(n));
      syn.push_back(oracle::mix(hv, n, 0.3));
    }
    const Node h = detail::vec_leaf(hv), p = detail::vec_leaf(pv);
    const auto with_syn = detail::make_set(negs, syn, 0.3);
    const auto without = detail::make_set(negs, {}, 0.3);
    // monotone penalty: synthesized negatives never lower the loss
    const double a = mixed_negative_loss(h, p, with_syn, cfg)->item();
    const double b = info_nce(h, p, negs, cfg)->item();
    r.check(a > b, b - a, "mu > 0 did not increase the mixed-negative loss");
    const double c = upweighted_loss(h, p, with_syn, cfg)->item();
    const double e = upweighted_loss(h, p, without, cfg)->item();
    r.check(c >= e, e - c, "synthesized negatives lowered the upweighted loss");
  }
  // upweighting orders negatives by similarity
  for (int trial = 0; trial < 50; ++trial) {
    const double x1 = rng.uniform(0.1, 20.0), x2 = rng.uniform(0.0, x1 * 0.99);
    auto contribution = [&](double x) { return std::exp((x * std::tanh(x / cfg.tau2) + cfg.margin) / cfg.tau1); };
    Node xs = leaf(Tensor::vector({x1, x2}), false);
    Node up = add_scalar(mul(xs, similarity_weight(xs, cfg.tau2)), cfg.margin);
    const double c1 = std::exp(up.value()[0]), c2 = std::exp(up.value()[1]);
    r.check(c1 > c2, 0.0, "more similar negative contributed less");
    r.expect_close(c1, contribution(x1), 1e-9 * contribution(x1), "denominator contribution");
  }
  // orthogonal negative contributes e^{m / tau1} exactly
  {
    Node xs = leaf(Tensor::vector({0.0}), false);
    Node up = scale(add_scalar(mul(xs, similarity_weight(xs, cfg.tau2)), cfg.margin), 1.0 / cfg.tau1);
    r.expect_close(std::exp(up.value()[0]), std::exp(cfg.margin / cfg.tau1), 0.0, "orthogonal negative contribution");
  }
  // stabilization: gradients stay finite for |h| up to 100
  for (double norm_h : {1.0, 10.0, 50.0, 100.0}) {
    const std::size_t d = 8;
    Vec hv = detail::random_vec(rng, d), pv = hv;
    const double s = norm_h / oracle::norm(hv);
    for (auto& v : hv) v *= s;
    for (auto& v : pv) v *= s;
    std::vector<Node> negs;
    std::vector<Vec> syn;
    for (int j = 0; j < 4; ++j) {
      Vec n = detail::random_vec(rng, d);
      const double t = norm_h / oracle::norm(n);
      for (auto& v : n) v *= t;
      negs.push_back(detail::vec_leaf(n));
      syn.push_back(oracle::mix(hv, n, 0.3));
    }
    Node h = detail::vec_leaf(hv), p = detail::vec_leaf(pv);
    Node loss = *upweighted_loss(h, p, detail::make_set(negs, syn, 0.3), cfg);
    backward(loss);
    bool finite = std::isfinite(loss.item()) && h.grad().all_finite() && p.grad().all_finite();
    for (const auto& n : negs) finite = finite && n.grad().all_finite();
    r.check(finite, 0.0, "non-finite loss or gradient at |h| = " + std::to_string(norm_h));
  }
  // alpha = 0 returns the recommendation loss itself
  {
    Node rec = leaf(Tensor::scalar(1.25));
    Node t = total_loss(rec, leaf(Tensor::scalar(3.0)), leaf(Tensor::scalar(4.0)), 0.0);
    r.check(t.item() == 1.25, std::abs(t.item() - 1.25), "alpha = 0 total");
  }
  return r;
}

// Gradient checks on the tensor primitives over random small shapes.
inline SuiteResult primitive_gradients(const VerifyOptions& opt = {}) {
  SuiteResult r{"primitive_gradients"};
  Rng rng(derive_seed(opt.seed, {7}));
  using detail::GraphFn;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(8), k = 1 + rng.below(8);
    const std::uint64_t ws = derive_seed(opt.seed, {7, static_cast<std::uint64_t>(trial)});
    auto vec = [&](std::size_t len, double s = 1.0) { return detail::random_tensor(rng, {len}, s); };
    auto mat = [&](std::size_t a, std::size_t b) { return detail::random_tensor(rng, {a, b}); };
    Tensor positive = vec(n);
    for (auto& v : positive.values()) v = 0.5 + std::abs(v);
    Tensor away_from_kink = vec(n);
    for (auto& v : away_from_kink.values()) v += v >= 0 ? 0.1 : -0.1;
    const std::size_t pick = rng.below(n);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < 3; ++i) ids.push_back(rng.below(m));

    struct Case {
      const char* name;
      GraphFn f;
      std::vector<Tensor> in;
    };
    auto W = [ws](const Node& x) { return detail::weighted_sum(x, ws); };
    const std::vector<Case> cases{
        {"add", [&](auto& x) { return W(add(x[0], x[1])); }, {vec(n), vec(n)}},
        {"sub", [&](auto& x) { return W(sub(x[0], x[1])); }, {vec(n), vec(n)}},
        {"mul", [&](auto& x) { return W(mul(x[0], x[1])); }, {vec(n), vec(n)}},
        {"scale", [&](auto& x) { return W(scale(x[0], -1.7)); }, {vec(n)}},
        {"add_scalar", [&](auto& x) { return W(mul(add_scalar(x[0], 0.3), x[0])); }, {vec(n)}},
        {"exp", [&](auto& x) { return W(exp(x[0])); }, {vec(n)}},
        {"log", [&](auto& x) { return W(log(x[0])); }, {positive}},
        {"tanh", [&](auto& x) { return W(tanh(x[0])); }, {vec(n, 2.0)}},
        {"relu", [&](auto& x) { return W(relu(x[0])); }, {away_from_kink}},
        {"sum", [&](auto& x) { return mul(sum(x[0]), sum(x[0])); }, {mat(n, m)}},
        {"mean", [&](auto& x) { return exp(mean(x[0])); }, {vec(n)}},
        {"inner", [&](auto& x) { return tanh(inner(x[0], x[1])); }, {vec(n), vec(n)}},
        {"inner_each", [&](auto& x) { return W(inner_each(x[0], std::vector<Node>{x[1], x[2]})); }, {vec(n), vec(n), vec(n)}},
        {"l2_norm", [&](auto& x) { return l2_norm(x[0]); }, {vec(n)}},
        {"normalize", [&](auto& x) { return W(normalize(x[0])); }, {vec(n)}},
        {"logsumexp", [&](auto& x) { return logsumexp(x[0]); }, {vec(n, 3.0)}},
        {"softmax", [&](auto& x) { return W(softmax(x[0])); }, {vec(n, 2.0)}},
        {"log_softmax", [&](auto& x) { return W(log_softmax(x[0])); }, {vec(n, 2.0)}},
        {"layer_norm", [&](auto& x) { return W(layer_norm(x[0])); }, {vec(n + 2)}},
        {"matmul", [&](auto& x) { return W(matmul(x[0], x[1])); }, {mat(n, m), mat(m, k)}},
        {"matvec", [&](auto& x) { return W(matvec(x[0], x[1])); }, {mat(n, m), vec(m)}},
        {"matvec_tail", [&](auto& x) { return W(matvec_tail(x[0], x[1], 1)); }, {mat(n + 1, m), vec(m)}},
        {"vecmat", [&](auto& x) { return W(vecmat(x[0], x[1])); }, {vec(n), mat(n, m)}},
        {"gather_rows", [&](auto& x) { return W(gather_rows(x[0], ids)); }, {mat(m, k)}},
        {"row", [&](auto& x) { return W(row(x[0], ids[0])); }, {mat(m, k)}},
        {"element", [&](auto& x) { return exp(element(x[0], pick)); }, {vec(n)}},
        {"concat", [&](auto& x) { return W(concat(std::vector<Node>{x[0], x[1]})); }, {vec(n), vec(m)}},
        {"dropout", [&](auto& x) { return W(dropout(x[0], 0.3, ws)); }, {vec(n)}},
    };
    for (const auto& c : cases) {
      const double err = detail::gradient_error(c.f, c.in);
      r.check(err <= 1e-4, err, std::string(c.name) + " gradient off by " + std::to_string(err));
    }
  }
  return r;
}

// Gradient checks of every loss on a d=8, N=6, B=2 configuration, plus the stop-gradient contract.
inline SuiteResult loss_gradients(const VerifyOptions& opt = {}) {
  SuiteResult r{"loss_gradients"};
  Rng rng(derive_seed(opt.seed, {8}));
  const std::size_t d = 8, n_items = 6;
  ContrastiveConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    // L'_rec through score_all on a random soft label
    {
      const auto params = EncoderParams::initialize({n_items, d, 4, 0.0}, 7 + trial);
      std::vector<FutureItem> w{{ItemId{2}, 0}, {ItemId{5}, 1}, {ItemId{2}, 2}};
      const auto label = build_soft_label(w, 0.3);
      detail::GraphFn f = [&](const std::vector<Node>& x) {
        return revised_cross_entropy(softmax(matvec_tail(x[1], x[0], 1)), label);
      };
      const double err = detail::gradient_error(f, {detail::random_tensor(rng, {d}), params.item_embedding});
      r.check(err <= 1e-4, err, "revised CE gradient off by " + std::to_string(err));
    }
    // contrastive losses on a B=2 batch: inputs are h0, p0, h1, p1
    std::vector<Tensor> in;
    for (int i = 0; i < 4; ++i) in.push_back(detail::random_tensor(rng, {d}));
    // synthesized vectors are fixed at the unperturbed point, as the stop-gradient demands
    const auto vals = [&](int i) { return Vec(in[i].values().begin(), in[i].values().end()); };
    const std::vector<Vec> syn_fwd{oracle::mix(vals(0), vals(2), 0.3), oracle::mix(vals(0), vals(3), 0.3)};
    const std::vector<Vec> syn_rev{oracle::mix(vals(1), vals(2), 0.3), oracle::mix(vals(1), vals(3), 0.3)};
    auto set_for = [&](const std::vector<Node>& x, const std::vector<Vec>& syn) {
      return detail::make_set({x[2], x[3]}, syn, 0.3);
    };
    ContrastiveConfig mixed_cfg = cfg;
    mixed_cfg.upweighting_enabled = false;
    const std::vector<std::pair<const char*, detail::GraphFn>> fns{
        {"InfoNCE", [&](const std::vector<Node>& x) { return *info_nce(x[0], x[1], std::vector<Node>{x[2], x[3]}, cfg); }},
        {"mixed-negative",
         [&](const std::vector<Node>& x) { return *mixed_negative_loss(x[0], x[1], set_for(x, syn_fwd), mixed_cfg); }},
        {"upweighted",
         [&](const std::vector<Node>& x) { return *upweighted_loss(x[0], x[1], set_for(x, syn_fwd), cfg); }},
        {"total",
         [&](const std::vector<Node>& x) {
           Node rec = scale(sum(mul(x[0], x[0])), 0.1);
           return total_loss(rec, *upweighted_loss(x[0], x[1], set_for(x, syn_fwd), cfg),
                             *upweighted_loss(x[1], x[0], set_for(x, syn_rev), cfg), 0.1);
         }},
    };
    for (const auto& [name, f] : fns) {
      const double err = detail::gradient_error(f, in);
      r.check(err <= 1e-4, err, std::string(name) + " gradient off by " + std::to_string(err));
    }
  }

  // total loss through the encoder with the training-loop assembly
  {
    HyperParams hp;
    hp.dim = d;
    hp.max_len = 5;
    hp.warmup_epochs = 0;
    hp.alpha = 0.5;
    hp.seed = opt.seed;
    const auto split = detail::tiny_split(n_items, opt.seed);
    auto samples = enumerate_training_samples(split, hp.max_len, hp.horizon);
    std::vector<const TrainingSample*> batch;
    for (const auto& s : samples)
      if (batch.empty() || s.target() != batch.front()->target()) {
        batch.push_back(&s);
        if (batch.size() == 2) break;
      }
    const auto params = EncoderParams::initialize({n_items, d, hp.max_len, hp.dropout}, opt.seed);
    EncoderGraph graph(params);
    auto loss = build_batch_loss(graph, batch, hp, 0, 0);
    backward(loss.total);
    const auto grads = graph.gradients();
    FrozenNegatives frozen;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      frozen.forward.push_back(constant(loss.forward_sets[i].synthesized.value()));
      frozen.reverse.push_back(constant(loss.reverse_sets[i].synthesized.value()));
    }
    std::size_t k = 0;
    params.for_each([&](const char* name, const Tensor& t) {
      auto probe = [&](const Vec& x) {
        EncoderParams p = params;
        std::size_t j = 0;
        p.for_each([&](const char*, Tensor& u) {
          if (j++ == k) std::copy(x.begin(), x.end(), u.values().begin());
        });
        EncoderGraph g(p, false);
        return build_batch_loss(g, batch, hp, 0, 0, &frozen).total.item();
      };
      const Vec fd = oracle::central_difference(probe, Vec(t.values().begin(), t.values().end()));
      const Vec ad(grads[k].values().begin(), grads[k].values().end());
      const double err = oracle::relative_error(ad, fd);
      r.check(err <= 1e-4, err, std::string("encoder ") + name + " gradient off by " + std::to_string(err));
      ++k;
    });
  }

  // stop-gradient: the synthesized path sends nothing back to the negatives
  for (int trial = 0; trial < 10; ++trial) {
    Node h = leaf(detail::random_tensor(rng, {d})), n1 = leaf(detail::random_tensor(rng, {d}));
    Node syn = mix_hard_negative(h, n1, 0.3);
    backward(sum(mul(syn, h)));
    const Tensor g = n1.grad();
    double worst = 0.0;
    for (double v : g.values()) worst = std::max(worst, std::abs(v));
    r.check(worst == 0.0, worst, "negative received gradient through the synthesized path");
    // the anchor still gets the plain term's gradient, which equals the frozen mix
    const Tensor gh = h.grad();
    const double err = oracle::relative_error(Vec(gh.values().begin(), gh.values().end()), detail::values_of(syn));
    r.check(err == 0.0, err, "anchor gradient picked up the synthesized path");
  }
  return r;
}

inline SuiteResult metric_closed_forms(const VerifyOptions& opt = {}) {
  SuiteResult r{"metric_closed_forms"};
  Rng rng(derive_seed(opt.seed, {9}));
  const std::vector<std::size_t> three{3};
  r.expect_close(hr_ndcg(three, 10).ndcg, 0.5, 1e-15, "rank 3 at K=10");
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> ranks(1 + rng.below(30));
    for (auto& x : ranks) x = 1 + rng.below(60);
    for (int k : kCutoffs) {
      const auto m = hr_ndcg(ranks, k);
      r.check(m.ndcg <= m.hr, m.ndcg - m.hr, "NDCG exceeded HR");
      double want = 0.0;
      for (auto x : ranks) want += oracle::ndcg_at(x, static_cast<std::size_t>(k));
      r.expect_close(m.ndcg, want / static_cast<double>(ranks.size()), 1e-12, "NDCG vs direct sum");
    }
  }
  // rank_target vs a brute-force sort, with ties; scores are carried by a 1-d table
  for (int trial = 0; trial < 101; ++trial) {
    const std::size_t n = trial == 0 ? 5 : 2 + rng.below(49);
    Vec scores(n);
    for (auto& s : scores) s = std::round(rng.normal() * 4.0) / 4.0;
    if (trial == 0) scores = {0.5, 2.0, -1.0, 2.0, 0.1};
    Tensor table({n + 1, 1});
    for (std::size_t j = 0; j < n; ++j) table[j + 1] = scores[j];
    const std::size_t target = 1 + rng.below(n);
    const std::size_t got = rank_target(std::vector<double>{1.0}, table, ItemId{static_cast<std::int32_t>(target)});
    const std::size_t want = oracle::brute_force_rank(scores, target);
    r.check(got == want, std::abs(static_cast<double>(got) - static_cast<double>(want)), "rank_target vs sort");
  }
  // uniformity of 10 random unit vectors in d=64
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec> xs;
    for (int i = 0; i < 10; ++i) xs.push_back(detail::random_vec(rng, 64));
    r.expect_close(uniformity(xs), oracle::pairwise_uniformity(xs), 1e-12, "uniformity vs pairwise oracle");
  }
  return r;
}

// The alpha = 0, one-hot trainer must reproduce a plain cross-entropy loop exactly.
inline std::vector<double> plain_ce_batch_losses(const DatasetSplit& split, const HyperParams& hp, std::size_t epochs) {
  auto samples = enumerate_training_samples(split, hp.max_len, 0);
  auto params = EncoderParams::initialize({split.catalog_size, hp.dim, hp.max_len, hp.dropout}, hp.seed);
  AdamState adam;
  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(derive_seed(hp.seed, {kShuffleTag, epoch}));
    shuffle.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0, b = 0; start + 2 <= order.size(); start += hp.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      EncoderGraph g(params);
      std::vector<Node> terms;
      for (std::size_t slot = 0; slot < end - start; ++slot) {
        const auto& s = samples[order[start + slot]];
        Node h = g.encode(s.prefix, true, derive_seed(hp.seed, {kDropoutTag, epoch, b, slot, 0}));
        const auto t = static_cast<std::size_t>(s.target().value);
        terms.push_back(scale(element(log_softmax(g.score_logits(h)), t - 1), -1.0));
      }
      Node loss = scale(sum(concat(terms)), 1.0 / static_cast<double>(terms.size()));
      losses.push_back(loss.item());
      backward(loss);
      adam_step(params, adam, g.gradients(), hp);
    }
  }
  return losses;
}

inline SuiteResult baseline_trajectory(const VerifyOptions& opt = {}) {
  SuiteResult r{"baseline_trajectory"};
  HyperParams hp;
  hp.alpha = 0.0;
  hp.soft_labels_enabled = false;
  hp.dim = 8;
  hp.max_len = 6;
  hp.batch_size = 4;
  hp.seed = opt.seed;
  const auto split = detail::tiny_split(9, opt.seed, 8);
  Trainer trainer(split, hp);
  std::vector<double> got;
  for (int e = 0; e < 3; ++e) {
    auto s = trainer.run_epoch();
    got.insert(got.end(), s.batch_rec_losses.begin(), s.batch_rec_losses.end());
  }
  const auto want = plain_ce_batch_losses(split, hp, 3);
  r.check(got.size() == want.size(), 0.0, "batch counts differ");
  for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i)
    r.check(got[i] == want[i], std::abs(got[i] - want[i]), "batch " + std::to_string(i) + " loss differs");
  return r;
}

inline std::vector<SuiteResult> run_all(const VerifyOptions& opt = {}) {
  using Suite = SuiteResult (*)(const VerifyOptions&);
  const Suite suites[] = {lemma_dominance,    norm_preservation,   lambda_monotonicity, reductions,
                          soft_label_algebra, loss_oracles,        loss_properties,     primitive_gradients,
                          loss_gradients,     metric_closed_forms, baseline_trajectory};
  std::vector<SuiteResult> out;
  for (Suite s : suites) {
    const auto t0 = std::chrono::steady_clock::now();
    out.push_back(s(opt));
    out.back().seconds = detail::elapsed(t0);
  }
  return out;
}

inline bool all_passed(std::span<const SuiteResult> results) {
  return std::all_of(results.begin(), results.end(), [](const SuiteResult& r) { return r.passed(); });
}

inline void print_report(std::ostream& out, std::span<const SuiteResult> results) {
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %8s %8s %12s %9s  %s\n", "suite", "checks", "failures", "max_error", "seconds",
                "status");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-22s %8zu %8zu %12.3e %9.3f  %s\n", r.name.c_str(), r.checks, r.failures,
                  r.max_error, r.seconds, r.passed() ? "PASS" : "FAIL");
    out << line;
    for (const auto& n : r.notes) out << "    " << n << '\n';
  }
}

}  // namespace fenrec::verify
