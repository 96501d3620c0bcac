#pragma once

// Run directories: one training run per directory, holding
//
//   config.txt        resolved configuration (every key, defaults filled in)
//   remap.tsv         original item token -> dense id
//   train_log.jsonl   one JSON object per epoch
//   train_state.txt   resumable trainer state, rewritten after every epoch
//   checkpoint.txt    best-validation parameters
//   metrics.json      validation and test metrics of the best checkpoint
//   histograms/       similarity histograms (epochs with synthesized negatives)

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fenrec/config.hpp"
#include "fenrec/data.hpp"
#include "fenrec/encoder.hpp"
#include "fenrec/metrics.hpp"
#include "fenrec/trainer.hpp"

namespace fenrec {

inline constexpr const char* kOutDirEnv = "FENREC_OUT_DIR";

/// --out wins over the environment variable, which wins over the config file.
inline std::string resolve_out_dir(const ExperimentConfig& cfg, const std::string& cli_out = {}) {
  if (!cli_out.empty()) return cli_out;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return cfg.out_dir;
}

struct RunResult {
  std::string dir;
  MetricsReport validation;
  MetricsReport test;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> log;
};

inline nlohmann::ordered_json metrics_json(const RunResult& r) {
  nlohmann::ordered_json j;
  j["best_epoch"] = r.best_epoch;
  j["epochs_run"] = r.epochs_run;
  j["validation"] = to_json(r.validation);
  j["test"] = to_json(r.test);
  return j;
}

inline DatasetSplit load_split(const ExperimentConfig& cfg, LoadedInteractions* loaded = nullptr) {
  if (cfg.data.empty()) throw ConfigError("no dataset given (set data = PATH)");
  auto data = load_interactions(cfg.data, cfg.min_len);
  auto split = split_leave_one_out(data);
  if (loaded) *loaded = std::move(data);
  return split;
}

/// Trains, evaluates and writes every artifact into cfg.out_dir.
inline RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr, bool resume = false) {
  cfg.hp.validate();
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_config((dir / "config.txt").string(), cfg);

  LoadedInteractions data;
  const DatasetSplit split = load_split(cfg, &data);
  write_remap((dir / "remap.tsv").string(), data.remap);

  Trainer trainer(split, cfg.hp, TrainOptions{dir.string(), true});
  const auto state_path = dir / "train_state.txt";
  const bool resuming = resume && fs::exists(state_path);
  if (resuming) trainer.state() = load_train_state(state_path.string());

  std::ofstream log_file(dir / "train_log.jsonl", resuming ? std::ios::app : std::ios::trunc);
  if (!log_file) throw std::runtime_error("cannot write " + (dir / "train_log.jsonl").string());
  RunResult result;
  result.dir = dir.string();
  result.log = trainer.fit([&](const EpochRecord& rec) {
    log_file << to_json(rec).dump() << '\n';
    log_file.flush();
    save_train_state(state_path.string(), trainer.state());
    if (progress)
      *progress << "epoch " << rec.summary.epoch << "  rec " << rec.summary.mean_rec << "  cl " << rec.summary.mean_cl
                << "  mu " << rec.summary.mu << "  valid ndcg@10 " << rec.valid_ndcg10 << '\n';
  });

  const auto& st = trainer.state();
  save_checkpoint((dir / "checkpoint.txt").string(), st.best_params);
  result.best_epoch = st.best_epoch;
  result.epochs_run = st.epoch;
  result.validation = evaluate(st.best_params, split, EvalTarget::kValidation);
  result.test = evaluate(st.best_params, split, EvalTarget::kTest);
  std::ofstream(dir / "metrics.json") << metrics_json(result).dump(2) << '\n';
  return result;
}

/// Re-evaluates a finished run directory from its config and checkpoint.
inline MetricsReport evaluate_run(const std::string& run_dir, EvalTarget which = EvalTarget::kTest) {
  namespace fs = std::filesystem;
  const auto cfg = load_config((fs::path(run_dir) / "config.txt").string());
  const auto params = load_checkpoint((fs::path(run_dir) / "checkpoint.txt").string());
  const auto split = load_split(cfg);
  if (params.config.num_items != split.catalog_size)
    throw ConfigError("checkpoint catalog size does not match the dataset");
  return evaluate(params, split, which);
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& sweepable_params() {
  static const std::vector<std::string> p{"gamma", "lambda", "mu", "m", "tau2", "batch_size", "horizon"};
  return p;
}

struct SweepRow {
  std::string value;
  double ndcg20 = 0.0;
  double hr20 = 0.0;
  std::string dir;
};

/// One full run per value under out_root/<param>_<value>/, then out_root/sweep.csv.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& param,
                                       const std::vector<std::string>& values, const std::string& out_root,
                                       bool parallel = false, std::ostream* progress = nullptr) {
  const auto& allowed = sweepable_params();
  if (std::find(allowed.begin(), allowed.end(), param) == allowed.end())
    throw ConfigError("cannot sweep '" + param + "'; choose one of gamma, lambda, mu, m, tau2, batch_size, horizon");
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    set_config_value(c, param, v);
    c.hp.validate();
    c.out_dir = (std::filesystem::path(out_root) / (param + "_" + v)).string();
    configs.push_back(std::move(c));
  }
  std::vector<SweepRow> rows(values.size());
  auto one = [&](std::size_t i) {
    const auto r = run_experiment(configs[i], parallel ? nullptr : progress);
    rows[i] = {values[i], r.test.ndcg(20), r.test.hr(20), r.dir};
  };
  if (parallel) {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      pool.emplace_back([&, i] {
        try {
          one(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (progress) *progress << "sweep " << param << " = " << values[i] << '\n';
      one(i);
    }
  }
  std::filesystem::create_directories(out_root);
  std::ofstream csv(std::filesystem::path(out_root) / "sweep.csv");
  csv << "value,ndcg@20,hr@20\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.ndcg20, r.hr20);
    csv << r.value << buf;
  }
  return rows;
}

}  // namespace fenrec
