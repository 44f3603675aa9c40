#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ctxrep/harness/records.hpp"
#include "test_util.hpp"

using namespace ctxrep;
using namespace ctxrep::testing;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome cli(const std::string &args) {
  const std::string cmd = std::string(CTXREP_CLI_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE *pipe = popen(cmd.c_str(), "r");
  if (!pipe)
    return o;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;)
    o.output.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("ctxrep_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string &name) const { return (dir_ / name).string(); }

private:
  std::filesystem::path dir_;
};

std::size_t line_count(const std::string &file) {
  std::ifstream in(file);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);)
    ++n;
  return n;
}

} // namespace

TEST_F(CliTest, GenerateRunReportReplay) {
  const auto data = path("syn.jsonl"), recs = path("recs.jsonl"), csv = path("report.csv");
  auto o = cli("--seed 3 --out " + data + " gen-synthetic --num-samples 20 --num-lists 4");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_EQ(line_count(data), 21u);

  o = cli("--out " + recs + " run --dataset " + data + " --k-hat 2");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_EQ(read_records(recs).size(), 20u);
  for (const auto &r : read_records(recs))
    EXPECT_EQ(r.score, 1.0);

  o = cli("report --records " + recs + " --group-by k_hat,list_count --csv " + csv);
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_EQ(read_file(csv),
            "k_hat,list_count,count,failures,mean_score,mean_f1,accuracy,mean_logprob\n"
            "2,4,20,0,1.0000,,1.0000,\n");

  o = cli("replay --records " + recs + " --dataset " + data);
  EXPECT_EQ(o.code, 0) << o.output;
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(cli("run --no-such-flag").code, 1);
  EXPECT_EQ(cli("run").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("run --dataset " + path("missing.jsonl")).code, 1);
  EXPECT_EQ(cli("--model remote-model run --dataset x").code, 1);
}

TEST_F(CliTest, FailedSamplesExitTwo) {
  const auto data = path("qa.jsonl"), recs = path("recs.jsonl");
  ASSERT_EQ(cli("--out " + data + " gen-synthetic --num-samples 5 --num-lists 2 --format qa").code, 0);
  // Each sample has two noisy documents, so asking for nine fails them all.
  const auto o = cli("--out " + recs + " run --dataset " + data + " --num-noisy 9");
  EXPECT_EQ(o.code, 2) << o.output;
  EXPECT_EQ(read_records(recs).size(), 5u);
  EXPECT_TRUE(read_records(recs).front().error);
}

TEST_F(CliTest, JsonConfigSuppliesOptions) {
  const auto data = path("syn.jsonl"), recs = path("recs.jsonl"), cfg = path("run.json");
  ASSERT_EQ(cli("--out " + data + " gen-synthetic --num-samples 8 --num-lists 3").code, 0);
  {
    std::ofstream out(cfg);
    out << R"({"out": ")" << recs << R"(", "run": {"dataset": ")" << data << R"(", "k_hat": 2}})";
  }
  const auto o = cli("--config " + cfg + " run");
  ASSERT_EQ(o.code, 0) << o.output;
  const auto records = read_records(recs);
  ASSERT_EQ(records.size(), 8u);
  EXPECT_EQ(records.front().condition.k_hat, 2);
}

TEST_F(CliTest, TomlConfigSuppliesOptions) {
  const auto data = path("syn.jsonl"), recs = path("recs.jsonl"), cfg = path("run.toml");
  ASSERT_EQ(cli("--out " + data + " gen-synthetic --num-samples 4 --num-lists 3").code, 0);
  {
    std::ofstream out(cfg);
    out << "out = \"" << recs << "\"\n[run]\ndataset = \"" << data << "\"\nk-hat = 3\n";
  }
  ASSERT_EQ(cli("--config " + cfg + " run").code, 0);
  EXPECT_EQ(read_records(recs).front().condition.k_hat, 3);
}

TEST_F(CliTest, RenderPromptPrintsMessages) {
  const auto data = path("syn.jsonl");
  ASSERT_EQ(cli("--out " + data + " gen-synthetic --num-samples 2 --num-lists 2").code, 0);
  const auto o = cli("render-prompt --dataset " + data + " --k-hat 2");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("1 times more."), std::string::npos) << o.output;
}

TEST_F(CliTest, SweepsRun) {
  const auto data = path("qa.jsonl");
  ASSERT_EQ(cli("--out " + data + " gen-synthetic --num-samples 3 --num-lists 10 --format qa").code, 0);
  auto o = cli("permute-study --dataset " + data + " --k-hats 1,2");
  EXPECT_EQ(o.code, 0) << o.output;
  o = cli("position-sweep --dataset " + data);
  EXPECT_EQ(o.code, 0) << o.output;
  o = cli("repetition-sweep --dataset " + data + " --max-repetitions 2");
  EXPECT_EQ(o.code, 0) << o.output;
  o = cli("noise-sweep --samples-per-cell 5");
  EXPECT_EQ(o.code, 0) << o.output;
}
