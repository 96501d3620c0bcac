#pragma once

// Full-catalog ranking metrics, item uniformity and the similarity histogram dump.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fenrec/data.hpp"
#include "fenrec/encoder.hpp"
#include "fenrec/negatives.hpp"
#include "fenrec/tensor.hpp"

namespace fenrec {

inline constexpr std::array<int, 3> kCutoffs{5, 10, 20};

/// 1-based rank of `target` by h^T v_j over all N items, descending, ties to the lower id.
inline std::size_t rank_target(std::span<const double> h, const Tensor& item_embedding, ItemId target) {
  const std::size_t n_items = item_embedding.rows() - 1;
  const std::size_t d = item_embedding.cols();
  if (target.value < 1 || static_cast<std::size_t>(target.value) > n_items)
    throw std::out_of_range("rank_target: target outside catalog");
  if (h.size() != d) throw ShapeError("rank_target: representation/embedding dimension mismatch");
  auto score = [&](std::size_t j) {
    double s = 0.0;
    const auto v = item_embedding.row(j);
    for (std::size_t i = 0; i < d; ++i) s += h[i] * v[i];
    return s;
  };
  const auto t = static_cast<std::size_t>(target.value);
  const double st = score(t);
  std::size_t rank = 1;
  for (std::size_t j = 1; j <= n_items; ++j) {
    if (j == t) continue;
    const double sj = score(j);
    if (sj > st || (sj == st && j < t)) ++rank;
  }
  return rank;
}

struct HitNdcg {
  double hr = 0.0;
  double ndcg = 0.0;
};

inline HitNdcg hr_ndcg(std::span<const std::size_t> ranks, int k) {
  HitNdcg out;
  if (ranks.empty()) return out;
  for (std::size_t r : ranks) {
    if (r < 1) throw std::invalid_argument("hr_ndcg: ranks are 1-based");
    if (r <= static_cast<std::size_t>(k)) {
      out.hr += 1.0;
      out.ndcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
  }
  out.hr /= static_cast<double>(ranks.size());
  out.ndcg /= static_cast<double>(ranks.size());
  return out;
}

/// log of the mean over unordered pairs of exp(-2 |x^ - y^|^2), vectors L2-normalized first.
inline double uniformity(std::span<const std::vector<double>> vectors) {
  if (vectors.size() < 2) throw std::invalid_argument("uniformity: needs at least 2 vectors");
  std::vector<std::vector<double>> unit;
  unit.reserve(vectors.size());
  for (const auto& v : vectors) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n <= kNormEpsilon) throw DegenerateVectorError("uniformity: zero vector");
    auto& u = unit.emplace_back(v);
    for (auto& x : u) x /= n;
  }
  std::vector<double> exponents;
  exponents.reserve(unit.size() * (unit.size() - 1) / 2);
  for (std::size_t a = 0; a < unit.size(); ++a)
    for (std::size_t b = a + 1; b < unit.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < unit[a].size(); ++i) d2 += (unit[a][i] - unit[b][i]) * (unit[a][i] - unit[b][i]);
      exponents.push_back(-2.0 * d2);
    }
  return logsumexp_value(exponents) - std::log(static_cast<double>(exponents.size()));
}

/// Item uniformity over the catalog rows 1..N.
inline double item_uniformity(const Tensor& item_embedding) {
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 1; j < item_embedding.rows(); ++j) {
    auto r = item_embedding.row(j);
    rows.emplace_back(r.begin(), r.end());
  }
  return uniformity(rows);
}

// ---------------------------------------------------------------------------

enum class LengthCohort { kShort, kMedium, kLong };

/// Cohorts by full interaction-sequence length: < 8, [8, 20), >= 20.
inline LengthCohort cohort_of(std::size_t length) {
  if (length < 8) return LengthCohort::kShort;
  if (length < 20) return LengthCohort::kMedium;
  return LengthCohort::kLong;
}

inline const char* cohort_name(LengthCohort c) {
  switch (c) {
    case LengthCohort::kShort: return "lt8";
    case LengthCohort::kMedium: return "8to20";
    case LengthCohort::kLong: return "ge20";
  }
  return "?";
}

struct CutoffMetrics {
  std::map<int, double> hr;
  std::map<int, double> ndcg;
  std::size_t n_users = 0;
};

struct MetricsReport {
  CutoffMetrics overall;
  std::map<std::string, CutoffMetrics> cohorts;
  double uniformity = 0.0;

  double ndcg(int k) const { return overall.ndcg.at(k); }
  double hr(int k) const { return overall.hr.at(k); }
};

inline CutoffMetrics cutoff_metrics(std::span<const std::size_t> ranks) {
  CutoffMetrics m;
  m.n_users = ranks.size();
  for (int k : kCutoffs) {
    auto r = hr_ndcg(ranks, k);
    m.hr[k] = r.hr;
    m.ndcg[k] = r.ndcg;
  }
  return m;
}

enum class EvalTarget { kValidation, kTest };

/// Ranks each user's held-out target against the whole catalog.
inline MetricsReport evaluate(const EncoderParams& params, const DatasetSplit& split, EvalTarget which) {
  EncoderGraph graph(params, false);
  const Tensor& table = params.item_embedding;
  std::vector<std::size_t> ranks;
  std::map<std::string, std::vector<std::size_t>> by_cohort;
  for (const auto& u : split.users) {
    const auto input = which == EvalTarget::kValidation ? u.valid_input() : u.test_input();
    const ItemId target = which == EvalTarget::kValidation ? u.valid_target : u.test_target;
    const auto prefix = pad_prefix(input, params.config.max_len);
    Node h = graph.encode(prefix, false, 0);
    const std::size_t r = rank_target(h.value().values(), table, target);
    ranks.push_back(r);
    by_cohort[cohort_name(cohort_of(u.full_length))].push_back(r);
  }
  MetricsReport report;
  report.overall = cutoff_metrics(ranks);
  for (const auto& [name, rs] : by_cohort) report.cohorts[name] = cutoff_metrics(rs);
  report.uniformity = item_uniformity(table);
  return report;
}

inline nlohmann::ordered_json to_json(const CutoffMetrics& m) {
  nlohmann::ordered_json j;
  j["n_users"] = m.n_users;
  for (int k : kCutoffs) j["hr@" + std::to_string(k)] = m.hr.at(k);
  for (int k : kCutoffs) j["ndcg@" + std::to_string(k)] = m.ndcg.at(k);
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["n_users"] = r.overall.n_users;
  nlohmann::ordered_json hr, ndcg;
  for (int k : kCutoffs) hr[std::to_string(k)] = r.overall.hr.at(k);
  for (int k : kCutoffs) ndcg[std::to_string(k)] = r.overall.ndcg.at(k);
  j["hr"] = hr;
  j["ndcg"] = ndcg;
  j["uniformity"] = r.uniformity;
  nlohmann::ordered_json cohorts;
  for (const char* name : {"lt8", "8to20", "ge20"}) {
    auto it = r.cohorts.find(name);
    if (it != r.cohorts.end()) cohorts[name] = to_json(it->second);
  }
  j["cohorts"] = cohorts;
  return j;
}

// ---------------------------------------------------------------------------
// Similarity histogram: inner products of one anchor with its original and
// synthesized negatives, bucketed into equal-width bins over the joint range.
// CSV columns: epoch,bucket_low,bucket_high,count_original,count_synthesized

struct SimilarityHistogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> original;
  std::vector<std::size_t> synthesized;
  double mean_original = 0.0;
  double mean_synthesized = 0.0;
};

inline SimilarityHistogram similarity_histogram(const Node& anchor, const NegativeSet& set, std::size_t bins = 40) {
  if (!set.has_synthesized() || set.empty())
    throw std::invalid_argument("similarity_histogram: negative set has no synthesized negatives");
  const auto h = anchor.value().values();
  std::vector<double> orig, syn;
  for (std::size_t k = 0; k < set.originals.size(); ++k) {
    double a = 0.0, b = 0.0;
    const auto n = set.originals[k].value().values();
    const auto m = set.synthesized.value().row(k);
    for (std::size_t i = 0; i < h.size(); ++i) {
      a += n[i] * h[i];
      b += m[i] * h[i];
    }
    orig.push_back(a);
    syn.push_back(b);
  }
  double lo = std::min(*std::min_element(orig.begin(), orig.end()), *std::min_element(syn.begin(), syn.end()));
  double hi = std::max(*std::max_element(orig.begin(), orig.end()), *std::max_element(syn.begin(), syn.end()));
  if (hi <= lo) hi = lo + 1.0;
  SimilarityHistogram out;
  out.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) out.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  out.original.assign(bins, 0);
  out.synthesized.assign(bins, 0);
  auto bucket = [&](double v) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  for (double v : orig) ++out.original[bucket(v)];
  for (double v : syn) ++out.synthesized[bucket(v)];
  for (double v : orig) out.mean_original += v;
  for (double v : syn) out.mean_synthesized += v;
  out.mean_original /= static_cast<double>(orig.size());
  out.mean_synthesized /= static_cast<double>(syn.size());
  return out;
}

inline void write_similarity_histogram(const std::string& path, int epoch, const SimilarityHistogram& hist) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write histogram '" + path + "'");
  out << "epoch,bucket_low,bucket_high,count_original,count_synthesized\n";
  char buf[256];
  for (std::size_t b = 0; b < hist.original.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%zu,%zu\n", epoch, hist.edges[b], hist.edges[b + 1],
                  hist.original[b], hist.synthesized[b]);
    out << buf;
  }
  if (!out) throw std::runtime_error("failed writing histogram '" + path + "'");
}

inline SimilarityHistogram export_similarity_histogram(const Node& anchor, const NegativeSet& set, int epoch,
                                                       const std::string& path) {
  auto hist = similarity_histogram(anchor, set);
  write_similarity_histogram(path, epoch, hist);
  return hist;
}

}  // namespace fenrec
