#pragma once

// Enduring hard negatives.
//
//   h-_{i,n} = (lambda * h_i/|h_i| + (1 - lambda) * n/|n|) / |...| * |n|
//
// The synthesized vector keeps the negative's norm and leans toward the
// anchor's direction, so its inner product with the anchor is never below the
// original negative's. Synthesized vectors carry no gradient.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fenrec/data.hpp"
#include "fenrec/errors.hpp"
#include "fenrec/tensor.hpp"

namespace fenrec {

struct MixResult {
  std::vector<double> values;
  bool degenerate = false;  // near-antipodal mixture; values hold the original negative
};

inline void validate_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in (0, 1), got " + std::to_string(lambda));
}

namespace detail {

inline double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Writes the mix into `out` given precomputed norms; returns true when degenerate.
inline bool mix_into(std::span<const double> anchor, double na, std::span<const double> negative, double nn,
                     double lambda, std::span<double> out) {
  if (na <= kNormEpsilon || nn <= kNormEpsilon) throw DegenerateVectorError("mix_hard_negative: zero-norm operand");
  const double wa = lambda / na, wn = (1.0 - lambda) / nn;
  double nm = 0.0;
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    out[i] = wa * anchor[i] + wn * negative[i];
    nm += out[i] * out[i];
  }
  nm = std::sqrt(nm);
  if (nm <= kNormEpsilon) {
    std::copy(negative.begin(), negative.end(), out.begin());
    return true;
  }
  const double rescale = nn / nm;
  for (auto& v : out) v *= rescale;
  return false;
}

}  // namespace detail

inline MixResult mix_hard_negative_values(std::span<const double> anchor, std::span<const double> negative,
                                          double lambda) {
  if (anchor.size() != negative.size()) throw ShapeError("mix_hard_negative: dimension mismatch");
  MixResult out;
  out.values.resize(anchor.size());
  out.degenerate =
      detail::mix_into(anchor, detail::norm_of(anchor), negative, detail::norm_of(negative), lambda, out.values);
  return out;
}

/// Graph-level form: the result is a stop-gradient node.
inline Node mix_hard_negative(const Node& anchor, const Node& negative, double lambda) {
  validate_lambda(lambda);
  auto mixed = mix_hard_negative_values(anchor.value().values(), negative.value().values(), lambda);
  return stop_gradient(constant(Tensor::vector(std::move(mixed.values))));
}

struct NegativeSet {
  std::vector<Node> originals;  // h_j, h_j+ for every admissible j != i, in batch order
  Node synthesized;             // |originals| x d, stop-gradient; null when not generated
  double lambda = 0.0;
  std::size_t degenerate = 0;

  bool empty() const { return originals.empty(); }
  bool has_synthesized() const { return static_cast<bool>(synthesized); }
};

/// Per-anchor negative sets. Samples sharing the anchor's target item are left
/// out entirely. When `synthesize` is false only the originals are collected.
inline std::vector<NegativeSet> build_negative_sets(std::span<const Node> anchors, std::span<const Node> positives,
                                                    std::span<const ItemId> targets, double lambda,
                                                    bool synthesize = true) {
  const std::size_t B = anchors.size();
  if (B < 2) throw std::invalid_argument("build_negative_sets: batch needs at least 2 samples");
  if (positives.size() != B || targets.size() != B)
    throw ShapeError("build_negative_sets: anchors, positives and targets differ in length");
  if (synthesize) validate_lambda(lambda);

  std::vector<double> anchor_norms(B), positive_norms(B);
  if (synthesize)
    for (std::size_t j = 0; j < B; ++j) {
      if (anchors[j].size() != anchors[0].size() || positives[j].size() != anchors[0].size())
        throw ShapeError("build_negative_sets: representations differ in dimension");
      anchor_norms[j] = detail::norm_of(anchors[j].value().values());
      positive_norms[j] = detail::norm_of(positives[j].value().values());
    }

  std::vector<NegativeSet> sets(B);
  for (std::size_t i = 0; i < B; ++i) {
    auto& s = sets[i];
    s.lambda = lambda;
    for (std::size_t j = 0; j < B; ++j) {
      if (j == i || targets[j] == targets[i]) continue;
      s.originals.push_back(anchors[j]);
      s.originals.push_back(positives[j]);
    }
    if (!synthesize || s.originals.empty()) continue;
    const std::size_t d = anchors[i].size();
    Tensor mixed({s.originals.size(), d});
    std::size_t k = 0;
    for (std::size_t j = 0; j < B; ++j) {
      if (j == i || targets[j] == targets[i]) continue;
      const auto h = anchors[i].value().values();
      s.degenerate += detail::mix_into(h, anchor_norms[i], anchors[j].value().values(), anchor_norms[j], lambda,
                                       mixed.row(k++));
      s.degenerate += detail::mix_into(h, anchor_norms[i], positives[j].value().values(), positive_norms[j], lambda,
                                       mixed.row(k++));
    }
    s.synthesized = stop_gradient(constant(std::move(mixed)));
  }
  return sets;
}

/// Number of synthesized negatives whose inner product with the anchor falls
/// more than `tol` below the original negative's.
inline std::size_t count_dominance_violations(const Node& anchor, const NegativeSet& set, double tol = 1e-9) {
  if (!set.has_synthesized()) return 0;
  const auto h = anchor.value().values();
  const auto& syn = set.synthesized.value();
  std::size_t bad = 0;
  for (std::size_t k = 0; k < set.originals.size(); ++k) {
    double a = 0.0, b = 0.0;
    const auto n = set.originals[k].value().values();
    const auto m = syn.row(k);
    for (std::size_t i = 0; i < h.size(); ++i) {
      a += m[i] * h[i];
      b += n[i] * h[i];
    }
    bad += (a < b - tol) ? 1 : 0;
  }
  return bad;
}

}  // namespace fenrec
