#pragma once

// Time-dependent soft labels: the item at window offset k gets weight gamma^k,
// normalized over the offsets present. An item that appears more than once in
// the window collects the sum of its weights.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fenrec/data.hpp"
#include "fenrec/errors.hpp"
#include "fenrec/tensor.hpp"

namespace fenrec {

struct SoftLabel {
  std::vector<std::pair<ItemId, double>> entries;  // first-appearance order
  double gamma = 1.0;

  double probability(ItemId item) const {
    for (const auto& [id, p] : entries)
      if (id == item) return p;
    return 0.0;
  }
};

inline void validate_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1], got " + std::to_string(gamma));
}

inline SoftLabel build_soft_label(std::span<const FutureItem> window, double gamma) {
  validate_gamma(gamma);
  if (window.empty()) throw std::invalid_argument("build_soft_label: empty future window");
  SoftLabel label;
  label.gamma = gamma;
  double total = 0.0;
  for (const auto& f : window) {
    const double w = std::pow(gamma, f.offset);
    total += w;
    bool merged = false;
    for (auto& [id, p] : label.entries)
      if (id == f.item) {
        p += w;
        merged = true;
        break;
      }
    if (!merged) label.entries.emplace_back(f.item, w);
  }
  for (auto& e : label.entries) e.second /= total;
  return label;
}

/// One-hot label on the immediate next item.
inline SoftLabel one_hot_label(ItemId item) { return SoftLabel{{{item, 1.0}}, 1.0}; }

namespace detail {

inline std::size_t label_index(ItemId item, std::size_t num_items) {
  if (item.value < 1 || static_cast<std::size_t>(item.value) > num_items)
    throw std::out_of_range("soft label references item " + std::to_string(item.value) + " outside catalog of " +
                            std::to_string(num_items));
  return static_cast<std::size_t>(item.value - 1);
}

}  // namespace detail

/// -sum_i y'_i log probs_i, with probs as produced by score_all (entry j-1 = item j).
inline Node revised_cross_entropy(const Node& probs, const SoftLabel& label) {
  std::vector<Node> terms;
  for (const auto& [item, p] : label.entries)
    terms.push_back(scale(log(element(probs, detail::label_index(item, probs.size()))), -p));
  return sum(concat(terms));
}

/// Same loss evaluated from raw scores through a stabilized log-softmax.
inline Node revised_cross_entropy_from_logits(const Node& logits, const SoftLabel& label) {
  Node logp = log_softmax(logits);
  std::vector<Node> terms;
  for (const auto& [item, p] : label.entries)
    terms.push_back(scale(element(logp, detail::label_index(item, logits.size())), -p));
  return terms.size() == 1 ? terms.front() : sum(concat(terms));
}

}  // namespace fenrec
