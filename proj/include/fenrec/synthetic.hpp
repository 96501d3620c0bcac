#pragma once

// Cluster-structured synthetic interaction data.
//
// Items 1..n_items are dealt round-robin into n_clusters clusters. Every item
// gets three successor items from its own cluster (the Markov kernel, weights
// 0.6/0.3/0.1). Each user draws a preference cluster and a length in [5, 50],
// starts at a random item of that cluster and then, step by step,
//   with probability 0.6 follows the current item's kernel,
//   with probability 0.3 jumps to a uniform item of the user's cluster,
//   otherwise jumps to a uniform item of the whole catalog.

#include <array>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fenrec/errors.hpp"
#include "fenrec/rng.hpp"

namespace fenrec {

struct SyntheticSpec {
  std::size_t n_users = 200;
  std::size_t n_items = 500;
  std::size_t n_clusters = 5;
  std::uint64_t seed = 1;
  std::size_t min_length = 5;
  std::size_t max_length = 50;
  double follow_kernel = 0.6;
  double stay_in_cluster = 0.3;
};

inline void generate_synthetic(const SyntheticSpec& spec, std::ostream& out) {
  if (spec.n_users < 1 || spec.n_items < 1 || spec.n_clusters < 1)
    throw ConfigError("gen-synthetic: users, items and clusters must be at least 1");
  if (spec.n_clusters > spec.n_items) throw ConfigError("gen-synthetic: more clusters than items");
  if (spec.min_length < 1 || spec.max_length < spec.min_length) throw ConfigError("gen-synthetic: bad length range");

  Rng rng(spec.seed);
  std::vector<std::vector<std::uint64_t>> members(spec.n_clusters);
  for (std::uint64_t item = 1; item <= spec.n_items; ++item) members[(item - 1) % spec.n_clusters].push_back(item);

  constexpr double kKernelWeights[3] = {0.6, 0.3, 0.1};
  std::vector<std::array<std::uint64_t, 3>> successors(spec.n_items + 1);
  for (std::uint64_t item = 1; item <= spec.n_items; ++item) {
    const auto& pool = members[(item - 1) % spec.n_clusters];
    for (auto& s : successors[item]) s = pool[rng.below(pool.size())];
  }

  for (std::size_t u = 0; u < spec.n_users; ++u) {
    const auto& pool = members[rng.below(spec.n_clusters)];
    const std::size_t length = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
    std::uint64_t current = pool[rng.below(pool.size())];
    out << 'u' << u << ' ' << current;
    for (std::size_t t = 1; t < length; ++t) {
      const double r = rng.uniform();
      if (r < spec.follow_kernel) {
        const double k = rng.uniform();
        const std::size_t pick = k < kKernelWeights[0] ? 0 : (k < kKernelWeights[0] + kKernelWeights[1] ? 1 : 2);
        current = successors[current][pick];
      } else if (r < spec.follow_kernel + spec.stay_in_cluster) {
        current = pool[rng.below(pool.size())];
      } else {
        current = 1 + rng.below(spec.n_items);
      }
      out << ' ' << current;
    }
    out << '\n';
  }
}

inline void generate_synthetic(const SyntheticSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write synthetic dataset '" + path + "'");
  generate_synthetic(spec, out);
}

}  // namespace fenrec
