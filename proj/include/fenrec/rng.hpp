#pragma once

// Seeding scheme
// --------------
// A run has one master seed. Every random draw is keyed by a path of integers
// hashed into a fresh engine seed with derive_seed(master, {tag, a, b, ...}).
// Training uses the paths
//   {kShuffleTag, epoch}                       - per-epoch sample permutation
//   {kDropoutTag, epoch, batch, slot, view}    - per-view dropout masks
//   {kHistogramTag, epoch}                     - anchor picked for the similarity dump
//   {kInitTag}                                 - parameter initialization
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Conversions to doubles and bounded integers are done here instead
// of through <random> distributions, whose algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace fenrec {

inline constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;
inline constexpr std::uint64_t kDropoutTag = 0x44524f50ULL;
inline constexpr std::uint64_t kHistogramTag = 0x48495354ULL;
inline constexpr std::uint64_t kInitTag = 0x494e4954ULL;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Multiply-shift reduction; bias is below 2^-40 for n < 2^24.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fenrec
