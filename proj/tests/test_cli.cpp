#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "elucid/checkpoint.hpp"
#include "elucid/cli.hpp"

using namespace elucid;
namespace fs = std::filesystem;

namespace {

const std::string kToy = std::string(ELUCID_SOURCE_DIR) + "/data/toy_aec.conll";

struct Outcome {
  int status;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "elucid");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int status = cli::run(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("elucid_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

// Small, fast settings shared by the pipeline tests.
std::vector<std::string> quick(std::vector<std::string> args) {
  for (const char* a : {"--dim", "8", "--hidden", "8", "--pretrain-epochs", "1", "--epochs", "2"}) args.push_back(a);
  return args;
}

}  // namespace

TEST_F(CliTest, PipelineWritesDeclaredArtifacts) {
  const auto out = path("run");
  auto g = run_cli({"generate-cote", "--dataset", kToy, "--mock", "--out-dir", out});
  ASSERT_EQ(g.status, 0) << g.err;
  EXPECT_TRUE(fs::exists(out + "/cote_explain.jsonl"));
  EXPECT_TRUE(fs::exists(out + "/cote_explain.jsonl.meta.json"));
  EXPECT_NE(g.out.find("\"records\":66"), std::string::npos);

  // Every stderr line is a JSON object with a level and an event.
  std::istringstream lines(g.err);
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("level"));
    EXPECT_TRUE(j.contains("event"));
    EXPECT_TRUE(j.contains("ts"));
  }

  ASSERT_EQ(run_cli(quick({"pretrain", "--dataset", kToy, "--out-dir", out})).status, 0);
  auto f = run_cli(quick({"finetune", "--dataset", kToy, "--out-dir", out}));
  ASSERT_EQ(f.status, 0) << f.err;
  EXPECT_NE(f.out.find("Strict Match"), std::string::npos);
  for (const char* name : {"encoder.ckpt", "pretrain_log.jsonl", "model.ckpt", "report.json", "report.txt",
                           "test_predictions.jsonl", "finetune_log.jsonl"})
    EXPECT_TRUE(fs::exists(out + "/" + name)) << name;

  auto e = run_cli({"evaluate", "--dataset", kToy, "--out-dir", out, "--predictions", out + "/test_predictions.jsonl"});
  ASSERT_EQ(e.status, 0) << e.err;
  const auto report = nlohmann::json::parse(slurp(out + "/report.json"));
  const auto again = nlohmann::json::parse(slurp(out + "/eval_report.json"));
  EXPECT_EQ(report["reports"][0]["strict"]["macro_f1"], again["reports"][0]["strict"]["macro_f1"]);

  std::ofstream(path("in.txt")) << "The fire door is steel .\n\nlobby\n";
  auto p = run_cli({"predict", "--out-dir", out, "--input", path("in.txt"), "--output", path("pred.jsonl")});
  ASSERT_EQ(p.status, 0) << p.err;
  const auto preds = eval::read_predictions(slurp(path("pred.jsonl")));
  EXPECT_EQ(preds.size(), 3u);
  EXPECT_TRUE(preds.at("line-000002").empty());
}

TEST_F(CliTest, FlagsOverrideConfigFileWhichOverridesDefaults) {
  std::ofstream(path("cfg.toml")) << "epochs = 1\nseed = 99\nout-dir = \"" << path("from_file") << "\"\n";
  auto r = run_cli({"finetune", "--config", path("cfg.toml"), "--dataset", kToy, "--no-pretrain", "--epochs", "3",
                    "--dim", "8", "--hidden", "8"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto log = slurp(path("from_file") + "/finetune_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);

  std::ofstream(path("bad.toml")) << "epochz = 3\n";
  EXPECT_EQ(run_cli({"finetune", "--config", path("bad.toml")}).status, 2);
}

TEST_F(CliTest, ErrorsAreCodedAndNonZero) {
  auto r = run_cli({"finetune", "--out-dir", path("x")});
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err.rfind("missing_input: ", 0), 0u) << r.err;

  r = run_cli({"frobnicate"});
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("usage_error: ", 0), 0u) << r.err;

  std::ofstream(path("broken.conll")) << "a\tO\nb\tQ-X\n";
  r = run_cli({"generate-cote", "--mock", "--dataset", path("broken.conll"), "--out-dir", path("x")});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("parse_error: line 2"), std::string::npos) << r.err;

  std::ofstream(path("junk.ckpt")) << "junk";
  r = run_cli({"predict", "--model", path("junk.ckpt"), "--input", kToy, "--out-dir", path("x")});
  EXPECT_NE(r.err.find("checkpoint_format: "), std::string::npos) << r.err;

  r = run_cli({"finetune", "--dataset", kToy, "--corpus-fraction", "0", "--out-dir", path("x")});
  EXPECT_NE(r.err.find("config_error: "), std::string::npos) << r.err;

  r = run_cli({"ablate", "--dataset", kToy, "--out-dir", path("x")});
  EXPECT_NE(r.err.find("missing_input: missing corpus variants: explain"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("role"), std::string::npos);
}

TEST_F(CliTest, UnreachableEndpointAbortsWithoutLeavingACorpus) {
  auto r = run_cli({"generate-cote", "--dataset", kToy, "--endpoint", "http://127.0.0.1:9/v1", "--retries", "0",
                    "--backoff-ms", "0", "--timeout-ms", "200", "--out-dir", path("x")});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("corpus_abort: "), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("x/cote_explain.jsonl")));
}

TEST_F(CliTest, PredictRejectsOverlongLines) {
  const auto out = path("run");
  ASSERT_EQ(run_cli(quick({"finetune", "--dataset", kToy, "--no-pretrain", "--max-len", "20", "--out-dir", out}))
                .status,
            0);
  std::string longline;
  for (int i = 0; i < 25; ++i) longline += "beam ";
  std::ofstream(path("in.txt")) << "short line\n" << longline << "\n";
  auto r = run_cli({"predict", "--out-dir", out, "--input", path("in.txt")});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("input_too_long: line 2 has 25 tokens, above max_len 20"), std::string::npos) << r.err;

  std::ofstream(path("empty.txt")) << "";
  r = run_cli({"predict", "--out-dir", out, "--input", path("empty.txt"), "--output", path("e.jsonl")});
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(slurp(path("e.jsonl")), "");
}

TEST_F(CliTest, SchemeMismatchIsReported) {
  const auto out = path("run");
  ASSERT_EQ(run_cli(quick({"finetune", "--dataset", kToy, "--no-pretrain", "--out-dir", out})).status, 0);
  {
    std::ofstream other(path("other.conll"));
    for (int i = 0; i < 10; ++i) other << "a\tB-X\nb\tO\n\n";
  }
  auto r = run_cli(quick({"finetune", "--dataset", path("other.conll"), "--encoder", out + "/model.ckpt",
                          "--out-dir", path("second")}));
  EXPECT_NE(r.err.find("scheme_mismatch: "), std::string::npos) << r.err;
}

TEST_F(CliTest, ScaleRunsNestedFractions) {
  const auto out = path("run");
  ASSERT_EQ(run_cli({"generate-cote", "--dataset", kToy, "--mock", "--out-dir", out}).status, 0);
  auto r = run_cli(quick({"scale", "--dataset", kToy, "--out-dir", out, "--fractions", "0.5,1"}));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("50%"), std::string::npos);
  EXPECT_NE(r.out.find("100%"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(out + "/scaling.json"));
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_TRUE(fs::exists(out + "/scale/p50/model.ckpt"));
}
