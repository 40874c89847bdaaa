#include "mgpms/cli/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "mgpms/data/io.hpp"

namespace fs = std::filesystem;
using mgpms::cli::run;
using mgpms::data::read_text;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kTiny = {"--set",          "train.epochs=2",      "train.mc_samples=2",
                                        "network.embed=8", "network.ffn=16",      "network.layers=1",
                                        "network.heads=2", "predict.mc_samples=3"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "mgpms_cli_test";
    fs::remove_all(dir_);
    const auto r = call({"synth", "--n", "80", "--seed", "3", "--informative", "1", "--noise", "1", "--out",
                         (dir_ / "cohort").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = call(with({"train", "--cohort", (dir_ / "cohort").string(), "--out", (dir_ / "run").string()}, kTiny));
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, TrainWritesArtifacts) {
  for (const char* f : {"model.json", "training_log.jsonl", "run_config.json", "train_summary.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const auto log = read_text(dir_ / "run" / "training_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
  const auto cfg = mgpms::Json::parse(read_text(dir_ / "run" / "run_config.json"));
  EXPECT_EQ(cfg["train"]["epochs"], 2);
}

TEST_F(Cli, TrainIsByteReproducible) {
  const auto t = call(with({"train", "--cohort", (dir_ / "cohort" / "cohort.jsonl").string(), "--out",
                            (dir_ / "run2").string()},
                           kTiny));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(read_text(dir_ / "run" / "model.json"), read_text(dir_ / "run2" / "model.json"));
  EXPECT_EQ(read_text(dir_ / "run" / "training_log.jsonl"), read_text(dir_ / "run2" / "training_log.jsonl"));
}

TEST_F(Cli, PredictThenEvaluateExternal) {
  const auto model = (dir_ / "run" / "model.json").string();
  const auto cohort = (dir_ / "cohort").string();
  const auto p = call({"predict", "--model", model, "--cohort", cohort, "--out", (dir_ / "pred").string()});
  ASSERT_EQ(p.code, 0) << p.err;
  const auto csv = read_text(dir_ / "pred" / "predictions.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "patient_id,window,hour,logit,probability,mc_probability");

  const auto p2 = call({"predict", "--model", model, "--cohort", cohort, "--out", (dir_ / "pred2").string()});
  ASSERT_EQ(p2.code, 0);
  EXPECT_EQ(csv, read_text(dir_ / "pred2" / "predictions.csv"));

  const auto e = call({"evaluate", "--trajectories", (dir_ / "pred" / "predictions.csv").string(), "--cohort", cohort,
                       "--out", (dir_ / "ext").string(), "--column", "mc_probability", "--svg"});
  ASSERT_EQ(e.code, 0) << e.err;
  for (const char* f : {"timepoints.csv", "patient_metrics.csv", "class_curves.csv", "histogram.csv", "summary.json",
                        "class_curves.svg"})
    EXPECT_TRUE(fs::exists(dir_ / "ext" / f)) << f;
  EXPECT_EQ(read_text(dir_ / "ext" / "timepoints.csv").substr(0, 30), "metric,admission,0.5d,1d,2d,3d");

  const auto m = call({"evaluate", "--model", model, "--cohort", cohort, "--split", "all", "--out",
                       (dir_ / "own").string()});
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_EQ(read_text(dir_ / "own" / "timepoints.csv"), read_text(dir_ / "ext" / "timepoints.csv"));
}

TEST_F(Cli, EvaluateModelOnTestSplit) {
  const auto e = call({"evaluate", "--model", (dir_ / "run" / "model.json").string(), "--cohort",
                       (dir_ / "cohort").string(), "--out", (dir_ / "ev").string(), "--score", "probability"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto meta = mgpms::Json::parse(read_text(dir_ / "ev" / "summary.json"));
  const auto summary = mgpms::Json::parse(read_text(dir_ / "run" / "train_summary.json"));
  EXPECT_EQ(meta["patients"], summary["test_patients"]);
}

TEST_F(Cli, GridMismatchIsExplicit) {
  const auto r = call({"predict", "--model", (dir_ / "run" / "model.json").string(), "--cohort",
                       (dir_ / "cohort").string(), "--out", (dir_ / "bad").string(), "--set", "cohort.windows=18"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error: config: grid mismatch"), std::string::npos) << r.err;
}

TEST_F(Cli, VocabularyMismatchIsExplicit) {
  ASSERT_EQ(call({"synth", "--n", "20", "--informative", "2", "--noise", "1", "--out", (dir_ / "other").string()}).code,
            0);
  const auto r = call({"predict", "--model", (dir_ / "run" / "model.json").string(), "--cohort",
                       (dir_ / "other").string(), "--out", (dir_ / "bad").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: data:", 0), 0u) << r.err;
}

TEST_F(Cli, DivergenceKeepsLastGood) {
  const auto r = call(with({"train", "--cohort", (dir_ / "cohort").string(), "--out", (dir_ / "div").string()},
                           with(kTiny, {"train.learning_rate=1e300"})));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error: "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "div" / "model.last_good.json"));
  EXPECT_FALSE(fs::exists(dir_ / "div" / "model.json"));
}

TEST(CliErrors, UsageAndConfig) {
  auto r = call({});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: usage:", 0), 0u);
  r = call({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  r = call({"train", "--cohort", "x", "--out", "y", "--set", "train.epochz=3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error: config: unknown config key 'train.epochz'"), std::string::npos) << r.err;
  r = call({"train", "--cohort", "/nonexistent/cohort.jsonl", "--out", "y"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: data: no cohort file", 0), 0u) << r.err;
  r = call({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("importance"), std::string::npos);
}

TEST(CliErrors, EvaluateNeedsOneSource) {
  const auto r = call({"evaluate", "--cohort", "x", "--out", "y"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("exactly one of --model and --trajectories"), std::string::npos);
}
