// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: fenrec_acceptance [work_dir]

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fenrec/fenrec.hpp"
#include "fenrec/verify.hpp"

namespace fs = std::filesystem;
using namespace fenrec;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Verdict from_suite(const verify::SuiteResult& r) {
  std::ostringstream d;
  d << r.checks << " checks, " << r.failures << " failures, max error " << fmt("%.3g", r.max_error);
  if (!r.notes.empty()) d << "; first failure: " << r.notes.front();
  return {r.passed(), d.str()};
}

Verdict combine(std::initializer_list<verify::SuiteResult> suites) {
  Verdict v{true, {}};
  for (const auto& s : suites) {
    const auto one = from_suite(s);
    v.pass = v.pass && one.pass;
    v.detail += (v.detail.empty() ? "" : " | ") + s.name + ": " + one.detail;
  }
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FENREC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------
// Desk-scale experiment shared by criteria 7 and 8.

constexpr int kSeeds = 3;
constexpr double kRunBudgetSeconds = 300.0;

struct Arm {
  const char* name;
  std::vector<std::string> overrides;
};

const std::vector<Arm>& desk_arms() {
  static const std::vector<Arm> arms{
      {"ce", {"alpha=0", "soft_labels_enabled=false", "upweighting_enabled=false", "mixing_enabled=false"}},
      {"ce_infonce", {"soft_labels_enabled=false", "upweighting_enabled=false", "mixing_enabled=false"}},
      {"fenrec", {}},
  };
  return arms;
}

ExperimentConfig desk_config(const fs::path& data) {
  std::ifstream in(fs::path(FENREC_SOURCE_DIR) / "configs" / "desk.conf");
  if (!in) throw std::runtime_error("configs/desk.conf not found");
  ExperimentConfig cfg;
  parse_config(in, cfg);
  cfg.data = data.string();
  return cfg;
}

struct DeskRun {
  std::string arm;
  std::uint64_t seed = 0;
  double test_ndcg10 = 0.0;
  double seconds = 0.0;
  bool nan_abort = false;
  std::string error;
  std::vector<EpochRecord> log;
  std::size_t warmup = 0;
};

struct DeskResults {
  std::vector<DeskRun> runs;
  bool done = false;
};

DeskResults& desk_results(const fs::path& work) {
  static DeskResults results;
  if (results.done) return results;
  results.done = true;
  const auto data = work / "desk" / "synthetic.txt";
  fs::create_directories(data.parent_path());
  SyntheticSpec spec;  // 200 users, 500 items, 5 clusters
  spec.seed = 1;
  generate_synthetic(spec, data.string());
  for (const auto& arm : desk_arms())
    for (int s = 1; s <= kSeeds; ++s) {
      ExperimentConfig cfg = desk_config(data);
      for (const auto& o : arm.overrides) apply_override(cfg, o);
      cfg.hp.seed = static_cast<std::uint64_t>(s);
      cfg.out_dir = (work / "desk" / (std::string(arm.name) + "_seed" + std::to_string(s))).string();
      fs::remove_all(cfg.out_dir);
      DeskRun run;
      run.arm = arm.name;
      run.seed = cfg.hp.seed;
      run.warmup = cfg.hp.warmup_epochs;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        auto r = run_experiment(cfg);
        run.test_ndcg10 = r.test.ndcg(10);
        run.log = std::move(r.log);
      } catch (const NumericError& e) {
        run.nan_abort = true;
        run.error = e.what();
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "  desk run " << run.arm << " seed " << run.seed << ": test NDCG@10 " << fmt("%.4f", run.test_ndcg10)
                << ", " << fmt("%.1f", run.seconds) << " s" << (run.error.empty() ? "" : ", error: " + run.error)
                << std::endl;
      results.runs.push_back(std::move(run));
    }
  return results;
}

double mean_ndcg(const DeskResults& r, const std::string& arm) {
  double s = 0.0;
  int n = 0;
  for (const auto& run : r.runs)
    if (run.arm == arm) {
      s += run.test_ndcg10;
      ++n;
    }
  return n ? s / n : 0.0;
}

// ---------------------------------------------------------------------------

Verdict criterion7(const fs::path& work) {
  const auto& r = desk_results(work);
  std::size_t epochs = 0, checked = 0, violations = 0, mean_failures = 0, histograms = 0;
  bool any_run = false;
  for (const auto& run : r.runs) {
    if (run.arm != "fenrec" || !run.error.empty()) continue;
    any_run = true;
    for (const auto& rec : run.log) {
      const auto& s = rec.summary;
      violations += s.lemma_violations;
      if (rec.summary.epoch < run.warmup) continue;
      ++epochs;
      checked += s.synthesized_checked;
      mean_failures += s.mean_similarity_failures;
      histograms += s.histogram_path.has_value();
    }
  }
  std::ostringstream d;
  d << epochs << " post-warm-up epochs, " << checked << " synthesized negatives checked, " << violations
    << " lemma violations, " << mean_failures << " anchors with synthesized mean below original mean, " << histograms
    << " histograms";
  return {any_run && epochs > 0 && checked > 0 && violations == 0 && mean_failures == 0, d.str()};
}

Verdict criterion8(const fs::path& work) {
  const auto& r = desk_results(work);
  bool ok = true;
  double slowest = 0.0;
  std::size_t nan = 0, errors = 0;
  for (const auto& run : r.runs) {
    slowest = std::max(slowest, run.seconds);
    nan += run.nan_abort;
    errors += !run.error.empty();
  }
  const double a = mean_ndcg(r, "ce"), b = mean_ndcg(r, "ce_infonce"), c = mean_ndcg(r, "fenrec");
  ok = ok && nan == 0 && errors == 0 && slowest <= kRunBudgetSeconds && c >= a;
  std::ostringstream d;
  d << "mean test NDCG@10: (a) CE " << fmt("%.4f", a) << ", (b) CE+InfoNCE " << fmt("%.4f", b) << ", (c) FENRec "
    << fmt("%.4f", c) << "; FENRec vs (b) " << (c >= b ? ">=" : "<") << " (reported, not gated); slowest run "
    << fmt("%.1f", slowest) << " s; NaN aborts " << nan << "; errors " << errors;
  return {ok, d.str()};
}

Verdict criterion9(const fs::path& work) {
  const auto root = work / "ablation";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto data = root / "data.txt";
  if (run_cli("gen-synthetic --users 60 --items 80 --seed 4 --out " + data.string(), root / "gen.log") != 0)
    return {false, "gen-synthetic failed"};
  const std::string base = "train --set data=" + data.string() +
                           " --set dim=16 --set max_len=20 --set batch_size=64 --set max_epochs=3"
                           " --set warmup_epochs=1 --seed 5";
  struct ArmSpec {
    std::string name, flags;
    std::vector<std::string> declared;
  };
  const std::vector<ArmSpec> arms{
      {"full", "", {}},
      {"minus_s", "--set soft_labels_enabled=false", {"soft_labels_enabled"}},
      {"minus_n", "--set mixing_enabled=false", {"mixing_enabled"}},
  };
  std::vector<std::map<std::string, std::string>> configs;
  std::vector<std::string> logs;
  for (const auto& arm : arms) {
    const auto out = root / arm.name;
    if (run_cli(base + " " + arm.flags + " --out " + out.string(), root / (arm.name + ".log")) != 0)
      return {false, "train failed for arm " + arm.name + ": " + slurp(root / (arm.name + ".log"))};
    std::map<std::string, std::string> kv;
    std::ifstream in(out / "config.txt");
    for (std::string line; std::getline(in, line);) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    configs.push_back(std::move(kv));
    logs.push_back(slurp(out / "train_log.jsonl"));
  }
  std::ostringstream d;
  bool ok = true;
  for (std::size_t i = 1; i < arms.size(); ++i) {
    std::vector<std::string> differing;
    for (const auto& [k, v] : configs[0])
      if (configs[i].at(k) != v) differing.push_back(k);
    if (configs[i].size() != configs[0].size() || differing != arms[i].declared) ok = false;
    d << arms[i].name << " differs in {";
    for (std::size_t k = 0; k < differing.size(); ++k) d << (k ? "," : "") << differing[k];
    d << "}; ";
  }
  const bool distinct = !logs[0].empty() && logs[0] != logs[1] && logs[0] != logs[2] && logs[1] != logs[2];
  d << "training logs " << (distinct ? "pairwise distinct" : "NOT distinct");
  return {ok && distinct, d.str()};
}

Verdict criterion10(const fs::path& work) {
  const auto root = work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto data = root / "data.txt";
  if (run_cli("gen-synthetic --users 60 --items 80 --seed 9 --out " + data.string(), root / "gen.log") != 0)
    return {false, "gen-synthetic failed"};
  const std::string args = "train --set data=" + data.string() +
                           " --set dim=16 --set max_len=20 --set batch_size=64 --set max_epochs=3"
                           " --set warmup_epochs=1 --seed 17";
  for (const char* name : {"a", "b"})
    if (run_cli(args + " --out " + (root / name).string(), root / (std::string(name) + ".log")) != 0)
      return {false, std::string("train failed: ") + slurp(root / (std::string(name) + ".log"))};
  const auto a = slurp(root / "a" / "metrics.json"), b = slurp(root / "b" / "metrics.json");
  const bool same = !a.empty() && a == b;
  const bool logs_same = slurp(root / "a" / "train_log.jsonl") == slurp(root / "b" / "train_log.jsonl");
  return {same, std::string("metrics.json ") + (same ? "byte-identical" : "DIFFERS") + " (" + std::to_string(a.size()) +
                    " bytes); train_log.jsonl " + (logs_same ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "fenrec_acceptance";
  fs::create_directories(work);
  verify::VerifyOptions opt;

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"1 dominance of synthesized negatives", [&] { return from_suite(verify::lemma_dominance(opt)); }},
      {"2 norm preservation", [&] { return from_suite(verify::norm_preservation(opt)); }},
      {"3 reduction identities", [&] { return from_suite(verify::reductions(opt)); }},
      {"4 soft-label algebra", [&] { return from_suite(verify::soft_label_algebra(opt)); }},
      {"5 gradient checks", [&] { return combine({verify::loss_gradients(opt), verify::primitive_gradients(opt)}); }},
      {"6 metric closed forms", [&] { return from_suite(verify::metric_closed_forms(opt)); }},
      {"7 synthesized negatives harder during training", [&] { return criterion7(work); }},
      {"8 desk-scale directional experiment", [&] { return criterion8(work); }},
      {"9 ablation harness", [&] { return criterion9(work); }},
      {"10 determinism", [&] { return criterion10(work); }},
  };

  std::vector<std::string> lines;
  bool all = true;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && v.pass;
    const std::string line = std::string(v.pass ? "PASS" : "FAIL") + "  criterion " + name + ": " + v.detail + " [" +
                             fmt("%.2f", secs) + " s]";
    std::cout << line << std::endl;
    lines.push_back(line);
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l.substr(0, l.find(':')) << '\n';
  return all ? 0 : 1;
}
