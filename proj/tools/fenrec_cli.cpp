// fenrec: train, evaluate, verify, sweep and generate desk-scale data.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fenrec/fenrec.hpp"
#include "fenrec/verify.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "configuration file (key = value lines)");
  cmd->add_option("--set", f.overrides, "override one key, KEY=VALUE; repeatable")->take_all();
  cmd->add_option("--out", f.out, "output directory (overrides FENREC_OUT_DIR and out_dir)");
  cmd->add_option("--seed", f.seed, "master seed")->check(CLI::NonNegativeNumber);
}

fenrec::ExperimentConfig build_config(const CommonFlags& f) {
  fenrec::ExperimentConfig cfg = f.config.empty() ? fenrec::ExperimentConfig{} : fenrec::load_config(f.config);
  for (const auto& o : f.overrides) fenrec::apply_override(cfg, o);
  if (f.seed >= 0) cfg.hp.seed = static_cast<std::uint64_t>(f.seed);
  cfg.out_dir = fenrec::resolve_out_dir(cfg, f.out);
  cfg.hp.validate();
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FENRec sequential recommendation: training and verification engine"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train one model and write a run directory");
  add_common(train, train_flags);
  train->add_flag("--resume", resume, "continue from train_state.txt in the run directory");

  std::string eval_dir, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "re-evaluate a run directory's checkpoint");
  eval->add_option("run_dir", eval_dir, "run directory written by train")->required();
  eval->add_option("--split", eval_split, "valid or test")->check(CLI::IsMember({"valid", "test"}));

  std::int64_t verify_seed = -1;
  std::string fault;
  auto* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_option("--seed", verify_seed, "seed for the randomized suites")->check(CLI::NonNegativeNumber);
  verify->add_option("--inject-fault", fault, "mutation sanity check")->check(CLI::IsMember({"rescale-sign"}));

  CommonFlags sweep_flags;
  std::string param, values;
  bool parallel = false;
  auto* sweep = app.add_subcommand("sweep", "train once per value of one hyperparameter");
  add_common(sweep, sweep_flags);
  sweep->add_option("--param", param, "gamma, lambda, mu, m, tau2, batch_size or horizon")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_flag("--parallel", parallel, "run the values concurrently");

  fenrec::SyntheticSpec spec;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synthetic", "write a cluster-structured synthetic dataset");
  gen->add_option("--users", spec.n_users, "number of users");
  gen->add_option("--items", spec.n_items, "number of items");
  gen->add_option("--clusters", spec.n_clusters, "number of clusters");
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--out", synth_out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto cfg = build_config(train_flags);
      const auto r = fenrec::run_experiment(cfg, &std::cerr, resume);
      std::cout << fenrec::metrics_json(r).dump(2) << '\n';
    } else if (*eval) {
      const auto which = eval_split == "valid" ? fenrec::EvalTarget::kValidation : fenrec::EvalTarget::kTest;
      std::cout << fenrec::to_json(fenrec::evaluate_run(eval_dir, which)).dump(2) << '\n';
    } else if (*verify) {
      fenrec::verify::VerifyOptions opt;
      if (verify_seed >= 0) opt.seed = static_cast<std::uint64_t>(verify_seed);
      if (fault == "rescale-sign") opt.mix = fenrec::verify::mutant_mix_rescale_flipped;
      const auto results = fenrec::verify::run_all(opt);
      fenrec::verify::print_report(std::cout, results);
      const bool ok = fenrec::verify::all_passed(results);
      std::cout << (ok ? "all suites passed" : "some suites FAILED") << '\n';
      return ok ? 0 : 1;
    } else if (*sweep) {
      auto cfg = build_config(sweep_flags);
      const auto rows = fenrec::run_sweep(cfg, param, split_list(values), cfg.out_dir, parallel, &std::cerr);
      std::cout << "value,ndcg@20,hr@20\n";
      for (const auto& r : rows) std::cout << r.value << ',' << r.ndcg20 << ',' << r.hr20 << '\n';
    } else if (*gen) {
      fenrec::generate_synthetic(spec, synth_out);
    }
  } catch (const fenrec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fenrec::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fenrec::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
