#pragma once

// Contrastive objectives over one anchor and its negative set.
//
// Every loss has the form  -log( e^{l+} / sum_k e^{l_k} )  and is evaluated as
// logsumexp(logits) - l+, with the positive logit included in the logsumexp.
// A weight mu on a denominator term enters as an additive log(mu) on its logit.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fenrec/errors.hpp"
#include "fenrec/negatives.hpp"
#include "fenrec/tensor.hpp"

namespace fenrec {

struct ContrastiveConfig {
  double tau1 = 1.0;    // temperature
  double tau2 = 8.0;    // tanh scale of the similarity weight
  double mu = 0.1;      // weight of synthesized negatives
  double margin = 0.2;  // offset m added to original-negative exponents
  bool upweighting_enabled = true;
  bool mixing_enabled = true;

  void validate() const {
    if (!(tau1 > 0.0)) throw ConfigError("tau1 must be positive");
    if (!(tau2 > 0.0)) throw ConfigError("tau2 must be positive");
    if (!(mu >= 0.0)) throw ConfigError("mu must be non-negative");
  }
};

/// s(a, b) = tanh(a^T b / tau2) applied to precomputed inner products.
inline Node similarity_weight(const Node& inner_products, double tau2) {
  return tanh(scale(inner_products, 1.0 / tau2));
}

namespace detail {

inline Node contrastive_from_logits(const Node& positive_logit, std::vector<Node> parts) {
  parts.insert(parts.begin(), positive_logit);
  return sub(logsumexp(concat(parts)), positive_logit);
}

// x * s(x) for a vector (or scalar) of inner products x.
inline Node upweight(const Node& x, double tau2) { return mul(x, similarity_weight(x, tau2)); }

}  // namespace detail

/// InfoNCE with in-batch negatives. nullopt when there are no negatives.
inline std::optional<Node> info_nce(const Node& anchor, const Node& positive, std::span<const Node> negatives,
                                    const ContrastiveConfig& cfg) {
  cfg.validate();
  if (negatives.empty()) return std::nullopt;
  Node pos = scale(inner(anchor, positive), 1.0 / cfg.tau1);
  Node neg = scale(inner_each(anchor, negatives), 1.0 / cfg.tau1);
  return detail::contrastive_from_logits(pos, {neg});
}

/// InfoNCE whose denominator also holds mu * sum e^{h^T SG(h-)/tau1}.
/// Upweighting flags are ignored; mixing_enabled = false or mu = 0 drops the extra term.
inline std::optional<Node> mixed_negative_loss(const Node& anchor, const Node& positive, const NegativeSet& set,
                                               const ContrastiveConfig& cfg) {
  cfg.validate();
  if (set.empty()) return std::nullopt;
  Node pos = scale(inner(anchor, positive), 1.0 / cfg.tau1);
  std::vector<Node> parts{scale(inner_each(anchor, set.originals), 1.0 / cfg.tau1)};
  if (cfg.mixing_enabled && cfg.mu > 0.0 && set.has_synthesized())
    parts.push_back(add_scalar(scale(matvec(set.synthesized, anchor), 1.0 / cfg.tau1), std::log(cfg.mu)));
  return detail::contrastive_from_logits(pos, std::move(parts));
}

/// Full hard-negative-upweighted loss with mixed negatives.
///
///   -log  e^{x+ s+ / tau1} / ( e^{x+ s+ / tau1} + sum_n e^{(x_n s_n + m)/tau1}
///                              + mu sum_n e^{x-_n s-_n / tau1} )
///
/// With upweighting disabled, s = 1 and m = 0; with mixing disabled, mu = 0.
inline std::optional<Node> upweighted_loss(const Node& anchor, const Node& positive, const NegativeSet& set,
                                           const ContrastiveConfig& cfg) {
  cfg.validate();
  if (set.empty()) return std::nullopt;
  const double inv = 1.0 / cfg.tau1;
  Node xp = inner(anchor, positive);
  Node xn = inner_each(anchor, set.originals);
  Node pos, neg;
  if (cfg.upweighting_enabled) {
    pos = scale(detail::upweight(xp, cfg.tau2), inv);
    neg = scale(add_scalar(detail::upweight(xn, cfg.tau2), cfg.margin), inv);
  } else {
    pos = scale(xp, inv);
    neg = scale(xn, inv);
  }
  std::vector<Node> parts{neg};
  if (cfg.mixing_enabled && cfg.mu > 0.0 && set.has_synthesized()) {
    Node xs = matvec(set.synthesized, anchor);
    Node syn = cfg.upweighting_enabled ? detail::upweight(xs, cfg.tau2) : xs;
    parts.push_back(add_scalar(scale(syn, inv), std::log(cfg.mu)));
  }
  return detail::contrastive_from_logits(pos, std::move(parts));
}

/// L'_rec + alpha * (L'_cl(h, h+) + L'_cl(h+, h)).
inline Node total_loss(const Node& rec_loss, const Node& cl_anchor_to_pos, const Node& cl_pos_to_anchor, double alpha) {
  if (alpha == 0.0) return rec_loss;
  return add(rec_loss, scale(add(cl_anchor_to_pos, cl_pos_to_anchor), alpha));
}

}  // namespace fenrec
