#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {
struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / "fenrec_cli_test_out.txt";
  const std::string cmd = std::string(FENREC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

fs::path root() {
  static const fs::path p = [] {
    auto d = fs::temp_directory_path() / "fenrec_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

fs::path dataset() {
  const auto path = root() / "data.txt";
  if (!fs::exists(path)) {
    auto r = cli("gen-synthetic --users 40 --items 30 --seed 3 --out " + path.string());
    EXPECT_EQ(r.code, 0) << r.out;
  }
  return path;
}

std::string small_run_flags() {
  return "--set data=" + dataset().string() +
         " --set dim=8 --set max_len=10 --set batch_size=32 --set max_epochs=2 --set warmup_epochs=1";
}
}  // namespace

TEST(Cli, HelpListsSubcommands) {
  auto r = cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"train", "eval", "verify", "sweep", "gen-synthetic"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST(Cli, GenSyntheticWritesUsers) {
  std::ifstream in(dataset());
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) lines += !line.empty();
  EXPECT_EQ(lines, 40u);
}

TEST(Cli, TrainThenEval) {
  const auto out = root() / "run";
  auto r = cli("train " + small_run_flags() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"config.txt", "remap.tsv", "train_log.jsonl", "checkpoint.txt", "metrics.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  std::ifstream in(out / "metrics.json");
  auto metrics = nlohmann::json::parse(in);
  auto e = cli("eval " + out.string() + " --split test");
  ASSERT_EQ(e.code, 0) << e.out;
  auto evaluated = nlohmann::json::parse(e.out);
  ASSERT_TRUE(evaluated["ndcg"]["10"].is_number());
  EXPECT_EQ(evaluated["ndcg"]["10"], metrics["test"]["ndcg"]["10"]);
  EXPECT_EQ(evaluated["hr"], metrics["test"]["hr"]);
}

TEST(Cli, ResumeAppendsToLog) {
  const auto out = root() / "resume";
  ASSERT_EQ(cli("train " + small_run_flags() + " --set max_epochs=1 --out " + out.string()).code, 0);
  auto r = cli("train " + small_run_flags() + " --resume --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(out / "train_log.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 2u);
}

TEST(Cli, UnknownKeyExitsWithConfigError) {
  auto r = cli("train " + small_run_flags() + " --set no_such_key=1 --out " + (root() / "bad").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("no_such_key"), std::string::npos);
  std::ofstream(root() / "bad.conf") << "gamma = 0.3\nwat = 1\n";
  EXPECT_EQ(cli("train --config " + (root() / "bad.conf").string()).code, 2);
}

TEST(Cli, MissingDataIsAnError) {
  EXPECT_NE(cli("train --set data=/nonexistent.txt --out " + (root() / "missing").string()).code, 0);
}

TEST(Cli, VerifyExitCodes) {
  auto ok = cli("verify");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);
  auto bad = cli("verify --inject-fault rescale-sign");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(Cli, SweepWritesCsv) {
  const auto out = root() / "sweep";
  auto r = cli("sweep " + small_run_flags() + " --set max_epochs=1 --param gamma --values 0.2,0.5 --out " +
               out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(out / "sweep.csv");
  std::string header, a, b;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  EXPECT_EQ(header, "value,ndcg@20,hr@20");
  EXPECT_EQ(a.rfind("0.2,", 0), 0u);
  EXPECT_EQ(b.rfind("0.5,", 0), 0u);
  EXPECT_TRUE(fs::exists(out / "gamma_0.2" / "metrics.json"));
  EXPECT_EQ(cli("sweep " + small_run_flags() + " --param dim --values 8 --out " + out.string()).code, 2);
}
