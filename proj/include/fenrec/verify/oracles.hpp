#pragma once

// Independent reference computations for the property suites. Everything here
// works on plain std::vector<double> with scalar loops and does not touch the
// autodiff graph, so it can serve as an oracle for the library code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

namespace fenrec::oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Vec& a, const Vec& b) { return dot(a, b) / (norm(a) * norm(b)); }

/// -log( e^{p} / (e^{p} + sum_k w_k e^{x_k}) ) by direct summation, shifted by the max exponent.
inline double neg_log_ratio(double p, const Vec& xs, const Vec& weights) {
  double mx = p;
  for (double x : xs) mx = std::max(mx, x);
  double denom = std::exp(p - mx);
  for (std::size_t k = 0; k < xs.size(); ++k) denom += weights[k] * std::exp(xs[k] - mx);
  return -(p - mx) + std::log(denom);
}

inline double info_nce(const Vec& h, const Vec& hp, const std::vector<Vec>& negatives, double tau1) {
  Vec xs;
  for (const auto& n : negatives) xs.push_back(dot(h, n) / tau1);
  return neg_log_ratio(dot(h, hp) / tau1, xs, Vec(xs.size(), 1.0));
}

/// Anchor-mixed negative: normalize both, blend, rescale to the negative's length.
inline Vec mix(const Vec& anchor, const Vec& negative, double lambda) {
  const double na = norm(anchor), nn = norm(negative);
  Vec m(anchor.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = lambda * (anchor[i] / na) + (1.0 - lambda) * (negative[i] / nn);
  const double nm = norm(m);
  for (auto& v : m) v = v / nm * nn;
  return m;
}

struct ContrastiveParams {
  double tau1 = 1.0, tau2 = 8.0, mu = 0.1, m = 0.2;
  bool upweight = true;
};

/// Full contrastive objective with upweighting, margin and mu-weighted synthesized negatives.
inline double upweighted(const Vec& h, const Vec& hp, const std::vector<Vec>& negatives,
                         const std::vector<Vec>& synthesized, const ContrastiveParams& c) {
  auto s = [&](double x) { return c.upweight ? std::tanh(x / c.tau2) : 1.0; };
  const double xp = dot(h, hp);
  Vec xs, ws;
  for (const auto& n : negatives) {
    const double x = dot(h, n);
    xs.push_back((x * s(x) + (c.upweight ? c.m : 0.0)) / c.tau1);
    ws.push_back(1.0);
  }
  for (const auto& n : synthesized) {
    const double x = dot(h, n);
    xs.push_back(x * s(x) / c.tau1);
    ws.push_back(c.mu);
  }
  return neg_log_ratio(xp * s(xp) / c.tau1, xs, ws);
}

inline Vec softmax(const Vec& scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  Vec p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(scores[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

/// -sum p_i log probs[item_i - 1]
inline double soft_cross_entropy(const Vec& probs, const std::vector<std::pair<int, double>>& label) {
  double loss = 0.0;
  for (const auto& [item, p] : label) loss -= p * std::log(probs[static_cast<std::size_t>(item - 1)]);
  return loss;
}

/// 1-based position of `target` (1-based id) after sorting ids by score desc, id asc.
inline std::size_t brute_force_rank(const Vec& scores, std::size_t target) {
  std::vector<std::size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), std::size_t{1});
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a - 1] != scores[b - 1]) return scores[a - 1] > scores[b - 1];
    return a < b;
  });
  return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), target) - ids.begin()) + 1;
}

/// log of the pairwise mean of exp(-2 |x - y|^2) on normalized copies.
inline double pairwise_uniformity(std::vector<Vec> xs) {
  for (auto& x : xs) {
    const double n = norm(x);
    for (auto& v : x) v /= n;
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < xs.size(); ++a)
    for (std::size_t b = a + 1; b < xs.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < xs[a].size(); ++i) d2 += (xs[a][i] - xs[b][i]) * (xs[a][i] - xs[b][i]);
      total += std::exp(-2.0 * d2);
      ++pairs;
    }
  return std::log(total / static_cast<double>(pairs));
}

/// Euclidean projection onto the probability simplex (sort-based).
inline Vec project_to_simplex(const Vec& v) {
  Vec u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

/// Minimizes -sum y_i log p_i over the simplex by projected gradient descent,
/// starting from the uniform distribution. y is indexed like p.
inline Vec minimize_soft_ce_on_simplex(const Vec& y, std::size_t iterations = 20000, double step = 1e-3) {
  constexpr double kFloor = 1e-12;
  Vec p(y.size(), 1.0 / static_cast<double>(y.size()));
  for (std::size_t it = 0; it < iterations; ++it) {
    Vec next(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) next[i] = p[i] + step * y[i] / std::max(p[i], kFloor);
    p = project_to_simplex(next);
  }
  return p;
}

/// Central differences of f at x with step h.
inline Vec central_difference(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-5) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|) taken over whole vectors; 0 when both vanish.
inline double relative_error(const Vec& a, const Vec& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline double ndcg_at(std::size_t rank, std::size_t k) { return rank <= k ? 1.0 / std::log2(rank + 1.0) : 0.0; }

}  // namespace fenrec::oracle
