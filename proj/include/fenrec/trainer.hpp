#pragma once

// Epoch orchestration: batching, dual-view encoding, loss assembly, Adam
// updates, warm-up scheduling, early stopping and resumable state.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fenrec/config.hpp"
#include "fenrec/data.hpp"
#include "fenrec/encoder.hpp"
#include "fenrec/errors.hpp"
#include "fenrec/losses.hpp"
#include "fenrec/metrics.hpp"
#include "fenrec/negatives.hpp"
#include "fenrec/rng.hpp"
#include "fenrec/soft_label.hpp"
#include "fenrec/tensor.hpp"

namespace fenrec {

struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;
};

inline void adam_step(EncoderParams& params, AdamState& state, const std::vector<Tensor>& grads,
                      const HyperParams& hp) {
  std::vector<Tensor*> targets;
  params.for_each([&](const char*, Tensor& t) { targets.push_back(&t); });
  if (state.first.empty()) {
    for (auto* t : targets) {
      state.first.emplace_back(t->shape());
      state.second.emplace_back(t->shape());
    }
  }
  ++state.step;
  const double b1 = hp.adam_beta1, b2 = hp.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto p = targets[k]->values();
    auto m = state.first[k].values();
    auto v = state.second[k].values();
    const auto g = grads[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (g[i] == 0.0 && m[i] == 0.0 && v[i] == 0.0) continue;
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= hp.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + hp.adam_eps);
    }
  }
}

/// Stops after `patience` consecutive evaluations without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one evaluation; returns true when it is a new best.
  bool update(double metric) {
    if (!has_best_ || metric > best_) {
      best_ = metric;
      has_best_ = true;
      bad_ = 0;
      return true;
    }
    ++bad_;
    return false;
  }

  bool should_stop() const { return has_best_ && bad_ >= patience_; }
  double best() const { return best_; }
  bool has_best() const { return has_best_; }
  std::size_t bad_evaluations() const { return bad_; }
  void restore(bool has_best, double best, std::size_t bad) {
    has_best_ = has_best;
    best_ = best;
    bad_ = bad;
  }

 private:
  std::size_t patience_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t bad_ = 0;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double mu = 0.0;
  double mean_rec = 0.0;
  double mean_cl = 0.0;
  std::size_t batches = 0;
  std::size_t contrastive_skipped_batches = 0;  // every anchor lost all negatives
  std::size_t skipped_anchors = 0;
  std::size_t lemma_violations = 0;
  std::size_t degenerate_mixtures = 0;
  std::size_t synthesized_checked = 0;
  std::size_t mean_similarity_failures = 0;  // anchors whose synthesized mean fell below the original mean
  std::vector<double> batch_rec_losses;
  std::vector<double> batch_total_losses;
  std::optional<std::string> histogram_path;
};

struct EpochRecord {
  EpochSummary summary;
  double valid_ndcg10 = 0.0;
  double valid_hr10 = 0.0;
  bool improved = false;
};

inline nlohmann::ordered_json to_json(const EpochRecord& r) {
  const auto& s = r.summary;
  nlohmann::ordered_json j;
  j["epoch"] = s.epoch;
  j["mu"] = s.mu;
  j["mean_rec"] = s.mean_rec;
  j["mean_cl"] = s.mean_cl;
  j["batches"] = s.batches;
  j["contrastive_skipped_batches"] = s.contrastive_skipped_batches;
  j["skipped_anchors"] = s.skipped_anchors;
  j["lemma_violations"] = s.lemma_violations;
  j["degenerate_mixtures"] = s.degenerate_mixtures;
  j["synthesized_checked"] = s.synthesized_checked;
  j["mean_similarity_failures"] = s.mean_similarity_failures;
  j["valid_ndcg@10"] = r.valid_ndcg10;
  j["valid_hr@10"] = r.valid_hr10;
  j["improved"] = r.improved;
  j["histogram"] = s.histogram_path ? nlohmann::ordered_json(*s.histogram_path) : nlohmann::ordered_json(nullptr);
  return j;
}

struct TrainState {
  std::size_t epoch = 0;  // next epoch to run
  EncoderParams params;
  AdamState adam;
  EncoderParams best_params;
  std::size_t best_epoch = 0;
  bool has_best = false;
  double best_ndcg10 = 0.0;
  std::size_t bad_evaluations = 0;
};

struct TrainOptions {
  std::string out_dir;  // empty: no files written
  bool write_checkpoints = true;
};

/// Synthesized negatives to reuse instead of regenerating them from the
/// current representations (used when probing the loss numerically).
struct FrozenNegatives {
  std::vector<Node> forward;
  std::vector<Node> reverse;
};

struct BatchLoss {
  Node total;
  Node rec;
  std::optional<double> cl;
  std::vector<Node> anchors, positives, rec_terms;
  std::vector<NegativeSet> forward_sets, reverse_sets;
  bool synthesized = false;
  std::size_t skipped_anchors = 0;
  bool contrastive_skipped = false;
};

/// Loss graph of one batch. Slot i is encoded with dropout seeds
/// derive_seed(seed, {kDropoutTag, epoch, batch, i, view}).
inline BatchLoss build_batch_loss(const EncoderGraph& graph, std::span<const TrainingSample* const> batch,
                                  const HyperParams& hp, std::size_t epoch, std::size_t batch_index,
                                  const FrozenNegatives* frozen = nullptr) {
  const std::size_t B = batch.size();
  const bool contrastive = hp.alpha > 0.0;
  BatchLoss out;
  std::vector<ItemId> targets;
  for (std::size_t slot = 0; slot < B; ++slot) {
    const auto& s = *batch[slot];
    out.anchors.push_back(graph.encode(s.prefix, true, derive_seed(hp.seed, {kDropoutTag, epoch, batch_index, slot, 0})));
    if (contrastive)
      out.positives.push_back(
          graph.encode(s.prefix, true, derive_seed(hp.seed, {kDropoutTag, epoch, batch_index, slot, 1})));
    const SoftLabel label =
        hp.soft_labels_enabled ? build_soft_label(s.future_window, hp.gamma) : one_hot_label(s.target());
    out.rec_terms.push_back(revised_cross_entropy_from_logits(graph.score_logits(out.anchors.back()), label));
    targets.push_back(s.target());
  }
  out.rec = scale(sum(concat(out.rec_terms)), 1.0 / static_cast<double>(B));
  out.total = out.rec;
  if (!contrastive) return out;

  const ContrastiveConfig cfg = hp.contrastive(epoch);
  out.synthesized = cfg.mixing_enabled && cfg.mu > 0.0;
  out.forward_sets = build_negative_sets(out.anchors, out.positives, targets, hp.lambda, out.synthesized);
  out.reverse_sets = build_negative_sets(out.positives, out.anchors, targets, hp.lambda, out.synthesized);
  if (frozen && out.synthesized)
    for (std::size_t i = 0; i < B; ++i) {
      if (out.forward_sets[i].has_synthesized()) out.forward_sets[i].synthesized = frozen->forward.at(i);
      if (out.reverse_sets[i].has_synthesized()) out.reverse_sets[i].synthesized = frozen->reverse.at(i);
    }
  std::vector<Node> ab, ba;
  for (std::size_t i = 0; i < B; ++i) {
    auto l_ab = upweighted_loss(out.anchors[i], out.positives[i], out.forward_sets[i], cfg);
    auto l_ba = upweighted_loss(out.positives[i], out.anchors[i], out.reverse_sets[i], cfg);
    if (!l_ab || !l_ba) {
      ++out.skipped_anchors;
      continue;
    }
    ab.push_back(*l_ab);
    ba.push_back(*l_ba);
  }
  if (ab.empty()) {
    out.contrastive_skipped = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(ab.size());
  Node cl_ab = scale(sum(concat(ab)), inv);
  Node cl_ba = scale(sum(concat(ba)), inv);
  out.total = total_loss(out.rec, cl_ab, cl_ba, hp.alpha);
  out.cl = cl_ab.item() + cl_ba.item();
  return out;
}

class Trainer {
 public:
  Trainer(const DatasetSplit& split, const HyperParams& hp, TrainOptions options = {})
      : split_(split), hp_(hp), options_(std::move(options)) {
    hp_.validate();
    if (split_.users.empty()) throw std::invalid_argument("Trainer: empty dataset split");
    samples_ = enumerate_training_samples(split_, hp_.max_len, hp_.soft_labels_enabled ? hp_.horizon : 0);
    if (samples_.size() < 2) throw std::invalid_argument("Trainer: fewer than 2 training samples");
    EncoderConfig ec{split_.catalog_size, hp_.dim, hp_.max_len, hp_.dropout};
    state_.params = EncoderParams::initialize(ec, hp_.seed);
    state_.best_params = state_.params;
  }

  const TrainState& state() const { return state_; }
  TrainState& state() { return state_; }
  const HyperParams& hyper_params() const { return hp_; }
  std::span<const TrainingSample> samples() const { return samples_; }

  EpochSummary run_epoch() {
    const std::size_t epoch = state_.epoch;
    EpochSummary summary;
    summary.epoch = epoch;
    summary.mu = hp_.mu_at(epoch);

    std::vector<std::size_t> order(samples_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(hp_.seed, {kShuffleTag, epoch}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double rec_sum = 0.0, cl_sum = 0.0;
    std::size_t cl_batches = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += hp_.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + hp_.batch_size);
      if (end - start < 2) break;
      std::span<const std::size_t> batch(order.data() + start, end - start);
      const auto step = train_batch(epoch, b, batch, summary);
      rec_sum += step.rec;
      if (step.cl) {
        cl_sum += *step.cl;
        ++cl_batches;
      }
      ++summary.batches;
    }
    summary.mean_rec = summary.batches ? rec_sum / static_cast<double>(summary.batches) : 0.0;
    summary.mean_cl = cl_batches ? cl_sum / static_cast<double>(cl_batches) : 0.0;
    ++state_.epoch;
    return summary;
  }

  /// Runs epochs until max_epochs or early stopping; returns the per-epoch log.
  std::vector<EpochRecord> fit(const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    EarlyStopping stopper(hp_.patience);
    stopper.restore(state_.has_best, state_.best_ndcg10, state_.bad_evaluations);
    std::vector<EpochRecord> log;
    while (state_.epoch < hp_.max_epochs && !stopper.should_stop()) {
      EpochRecord rec;
      rec.summary = run_epoch();
      const auto valid = evaluate(state_.params, split_, EvalTarget::kValidation);
      rec.valid_ndcg10 = valid.ndcg(10);
      rec.valid_hr10 = valid.hr(10);
      rec.improved = stopper.update(rec.valid_ndcg10);
      if (rec.improved) {
        state_.best_params = state_.params;
        state_.best_epoch = rec.summary.epoch;
      }
      state_.has_best = stopper.has_best();
      state_.best_ndcg10 = stopper.best();
      state_.bad_evaluations = stopper.bad_evaluations();
      if (on_epoch) on_epoch(rec);
      log.push_back(std::move(rec));
    }
    return log;
  }

 private:
  struct StepResult {
    double rec = 0.0;
    std::optional<double> cl;
  };

  StepResult train_batch(std::size_t epoch, std::size_t batch_index, std::span<const std::size_t> batch,
                         EpochSummary& summary) {
    EncoderGraph graph(state_.params);
    std::vector<const TrainingSample*> members;
    for (std::size_t i : batch) members.push_back(&samples_[i]);
    BatchLoss loss = build_batch_loss(graph, members, hp_, epoch, batch_index);

    StepResult result;
    result.rec = loss.rec.item();
    result.cl = loss.cl;
    summary.skipped_anchors += loss.skipped_anchors;
    if (loss.contrastive_skipped) ++summary.contrastive_skipped_batches;
    if (loss.synthesized) {
      for (std::size_t i = 0; i < loss.forward_sets.size(); ++i) {
        if (loss.forward_sets[i].empty()) continue;
        record_dominance(loss.anchors[i], loss.forward_sets[i], summary);
        record_dominance(loss.positives[i], loss.reverse_sets[i], summary);
      }
      if (batch_index == 0) export_histogram(epoch, loss.anchors, loss.forward_sets, summary);
    }

    const double total = loss.total.item();
    if (!std::isfinite(total)) abort_on_nan(epoch, batch_index, batch, loss.rec_terms, total);
    backward(loss.total);
    adam_step(state_.params, state_.adam, graph.gradients(), hp_);
    summary.batch_rec_losses.push_back(result.rec);
    summary.batch_total_losses.push_back(total);
    return result;
  }

  void record_dominance(const Node& anchor, const NegativeSet& set, EpochSummary& summary) const {
    summary.lemma_violations += count_dominance_violations(anchor, set);
    summary.degenerate_mixtures += set.degenerate;
    summary.synthesized_checked += set.originals.size();
    const auto h = anchor.value().values();
    double orig = 0.0, syn = 0.0;
    for (std::size_t k = 0; k < set.originals.size(); ++k) {
      const auto n = set.originals[k].value().values();
      const auto m = set.synthesized.value().row(k);
      for (std::size_t i = 0; i < h.size(); ++i) {
        orig += n[i] * h[i];
        syn += m[i] * h[i];
      }
    }
    if (syn < orig) ++summary.mean_similarity_failures;
  }

  void export_histogram(std::size_t epoch, std::span<const Node> anchors, const std::vector<NegativeSet>& sets,
                        EpochSummary& summary) const {
    if (options_.out_dir.empty() || !hp_.export_histograms) return;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < sets.size(); ++i)
      if (!sets[i].empty()) eligible.push_back(i);
    if (eligible.empty()) return;
    Rng rng(derive_seed(hp_.seed, {kHistogramTag, epoch}));
    const std::size_t pick = eligible[rng.below(eligible.size())];
    const auto dir = std::filesystem::path(options_.out_dir) / "histograms";
    std::filesystem::create_directories(dir);
    char name[64];
    std::snprintf(name, sizeof name, "epoch_%03zu.csv", epoch);
    export_similarity_histogram(anchors[pick], sets[pick], static_cast<int>(epoch), (dir / name).string());
    summary.histogram_path = (std::filesystem::path("histograms") / name).string();
  }

  [[noreturn]] void abort_on_nan(std::size_t epoch, std::size_t batch_index, std::span<const std::size_t> batch,
                                 const std::vector<Node>& rec_terms, double total) const {
    nlohmann::ordered_json dump;
    dump["epoch"] = epoch;
    dump["batch"] = batch_index;
    dump["total_loss"] = std::isfinite(total) ? nlohmann::ordered_json(total) : nlohmann::ordered_json(std::to_string(total));
    dump["params_finite"] = state_.params.all_finite();
    auto& rows = dump["samples"] = nlohmann::ordered_json::array();
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
      const auto& s = samples_[batch[slot]];
      nlohmann::ordered_json r;
      std::vector<int> prefix;
      for (ItemId id : s.prefix)
        if (!id.is_padding()) prefix.push_back(id.value);
      r["prefix"] = prefix;
      r["target"] = s.target().value;
      const double l = rec_terms[slot].item();
      r["rec_loss"] = std::isfinite(l) ? nlohmann::ordered_json(l) : nlohmann::ordered_json(std::to_string(l));
      rows.push_back(std::move(r));
    }
    std::string where;
    if (!options_.out_dir.empty()) {
      std::filesystem::create_directories(options_.out_dir);
      where = (std::filesystem::path(options_.out_dir) / "nan_batch_dump.json").string();
      std::ofstream(where) << dump.dump(2) << '\n';
    }
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                       (where.empty() ? "" : "; batch dumped to " + where));
  }

  DatasetSplit split_;
  HyperParams hp_;
  TrainOptions options_;
  std::vector<TrainingSample> samples_;
  TrainState state_;
};

// ---------------------------------------------------------------------------
// Resumable state file: header lines, then checkpoint blocks and moment tensors.

inline void save_train_state(const std::string& path, const TrainState& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write train state '" + path + "'");
  out << "fenrec-train-state 1\n";
  out << "epoch " << s.epoch << '\n';
  out << "adam_step " << s.adam.step << '\n';
  out << "best " << (s.has_best ? 1 : 0) << ' ' << detail::hexfloat(s.best_ndcg10) << ' ' << s.best_epoch << ' '
      << s.bad_evaluations << '\n';
  write_checkpoint(out, s.params);
  write_checkpoint(out, s.best_params);
  out << "moments " << s.adam.first.size() << '\n';
  for (std::size_t k = 0; k < s.adam.first.size(); ++k) {
    detail::write_tensor(out, "m" + std::to_string(k), s.adam.first[k]);
    detail::write_tensor(out, "v" + std::to_string(k), s.adam.second[k]);
  }
}

inline TrainState load_train_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open train state '" + path + "'");
  std::string line, tag;
  TrainState s;
  if (!std::getline(in, line) || line != "fenrec-train-state 1") throw ParseError("not a fenrec train state");
  auto next = [&](const char* expected) {
    if (!std::getline(in, line)) throw ParseError(std::string("train state truncated before ") + expected);
    std::istringstream ls(line);
    ls >> tag;
    if (tag != expected) throw ParseError(std::string("train state: expected ") + expected);
    return ls;
  };
  next("epoch") >> s.epoch;
  next("adam_step") >> s.adam.step;
  {
    auto ls = next("best");
    int has = 0;
    std::string best;
    ls >> has >> best >> s.best_epoch >> s.bad_evaluations;
    s.has_best = has != 0;
    s.best_ndcg10 = detail::parse_hexfloat(best);
  }
  s.params = read_checkpoint(in);
  s.best_params = read_checkpoint(in);
  std::size_t n = 0;
  next("moments") >> n;
  for (std::size_t k = 0; k < n; ++k) {
    s.adam.first.push_back(detail::read_tensor(in, "m" + std::to_string(k)));
    s.adam.second.push_back(detail::read_tensor(in, "v" + std::to_string(k)));
  }
  return s;
}

}  // namespace fenrec
