#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adascan/commands.hpp"

using namespace adascan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ADASCAN_CLI_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr const char* kAcceptanceSynth = R"({"signal_frames":2})";

// One trained model shared by the trace/eval tests.
class TrainedCliModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    out_dir = new fs::path(fresh_dir("adascan_cli_model"));
    RunConfig cfg;
    cfg.synthetic = kAcceptanceSynth;
    cfg.out_dir = out_dir->string();
    train_exit = cmd_train(cfg);
  }
  static void TearDownTestSuite() {
    delete out_dir;
    out_dir = nullptr;
  }

  static fs::path* out_dir;
  static int train_exit;
};

fs::path* TrainedCliModel::out_dir = nullptr;
int TrainedCliModel::train_exit = -1;

}  // namespace

TEST(GenDataCmd, WritesLoadableDeterministicFiles) {
  const fs::path dir = fresh_dir("adascan_cli_gendata");
  RunConfig cfg;
  cfg.synthetic = R"({"train_count":30,"test_count":10})";
  cfg.out_dir = dir.string();
  ASSERT_EQ(cmd_gen_data(cfg), exit_code::ok);

  const Dataset train = load_jsonl((dir / "train.jsonl").string());
  const Dataset test = load_jsonl((dir / "test.jsonl").string());
  EXPECT_EQ(train.samples.size(), 30u);
  EXPECT_EQ(test.samples.size(), 10u);

  const std::string train_bytes = read_file(dir / "train.jsonl");
  const std::string test_bytes = read_file(dir / "test.jsonl");
  ASSERT_EQ(cmd_gen_data(cfg), exit_code::ok);
  EXPECT_EQ(read_file(dir / "train.jsonl"), train_bytes);
  EXPECT_EQ(read_file(dir / "test.jsonl"), test_bytes);
  fs::remove_all(dir);
}

TEST(GenDataCmd, SeedFlagOverridesConfigSeed) {
  const fs::path a = fresh_dir("adascan_cli_gendata_a");
  const fs::path b = fresh_dir("adascan_cli_gendata_b");
  RunConfig cfg;
  cfg.synthetic = R"({"train_count":10,"test_count":5})";
  cfg.out_dir = a.string();
  ASSERT_EQ(cmd_gen_data(cfg), exit_code::ok);
  cfg.out_dir = b.string();
  cfg.hyper.seed = 777;
  cfg.seed_explicit = true;
  ASSERT_EQ(cmd_gen_data(cfg), exit_code::ok);
  EXPECT_NE(read_file(a / "train.jsonl"), read_file(b / "train.jsonl"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_F(TrainedCliModel, TrainCommandSucceedsAndWritesArtifacts) {
  ASSERT_EQ(train_exit, exit_code::ok);
  EXPECT_TRUE(fs::exists(*out_dir / "model.json"));
  EXPECT_TRUE(fs::exists(*out_dir / "metrics.jsonl"));
  const ModelParams p = load_model((*out_dir / "model.json").string());
  EXPECT_EQ(p.dims().feat_dim, 16u);
  EXPECT_EQ(p.dims().num_classes, 4u);
}

TEST_F(TrainedCliModel, EvalReproducesTheLoggedTestAccuracyExactly) {
  ASSERT_EQ(train_exit, exit_code::ok);
  const auto rows = read_jsonl(*out_dir / "metrics.jsonl");
  nlohmann::json last_test;
  for (const auto& r : rows) {
    if (r["split"] == "test") last_test = r;
  }
  ASSERT_FALSE(last_test.is_null());

  RunConfig cfg;
  cfg.synthetic = kAcceptanceSynth;
  cfg.model_path = (*out_dir / "model.json").string();
  cfg.out_dir = out_dir->string();
  ASSERT_EQ(cmd_eval(cfg), exit_code::ok);
  const nlohmann::json eval = nlohmann::json::parse(read_file(*out_dir / "eval.json"));
  EXPECT_EQ(eval["accuracy"].get<double>(), last_test["accuracy"].get<double>());
  EXPECT_EQ(eval["mean_selected_fraction"].get<double>(),
            last_test["mean_selected_fraction"].get<double>());
}

TEST_F(TrainedCliModel, TraceEmitsOneWellFormedRowPerSample) {
  ASSERT_EQ(train_exit, exit_code::ok);
  RunConfig cfg;
  cfg.synthetic = kAcceptanceSynth;
  cfg.model_path = (*out_dir / "model.json").string();
  cfg.out_dir = out_dir->string();
  ASSERT_EQ(cmd_trace(cfg), exit_code::ok);

  const auto rows = read_jsonl(*out_dir / "trace.jsonl");
  ASSERT_EQ(rows.size(), 200u);  // test split size
  for (const auto& r : rows) {
    ASSERT_TRUE(r.contains("id") && r.contains("label") && r.contains("pred"));
    const auto& gammas = r["gammas"];
    const auto& selected = r["selected"];
    ASSERT_EQ(gammas.size(), 20u);
    ASSERT_EQ(selected.size(), 20u);
    EXPECT_EQ(gammas[0].get<double>(), 1.0);
    for (std::size_t t = 0; t < 20; ++t) {
      const double g = gammas[t].get<double>();
      EXPECT_GT(g, 0.0);
      EXPECT_LE(g, 1.0);
      EXPECT_EQ(selected[t].get<bool>(), g > 0.5);
    }
    ASSERT_TRUE(r.contains("signal_mask"));
    ASSERT_EQ(r["signal_mask"].size(), 20u);
  }
}

TEST_F(TrainedCliModel, TraceGammasMatchEvaluatePath) {
  ASSERT_EQ(train_exit, exit_code::ok);
  RunConfig cfg;
  cfg.synthetic = kAcceptanceSynth;
  cfg.model_path = (*out_dir / "model.json").string();
  cfg.out_dir = out_dir->string();
  ASSERT_EQ(cmd_trace(cfg), exit_code::ok);
  const ModelParams p = load_model((*out_dir / "model.json").string());
  const auto rows = read_jsonl(*out_dir / "trace.jsonl");
  SynthConfig sc;
  sc.signal_frames = 2;
  const SynthSplits splits = generate_synthetic(sc);
  // recompute the first sample's trace straight from the library
  Tape tape;
  const LossOutput res = total_loss(splits.test.samples[0], p, tape);
  ASSERT_EQ(rows[0]["id"], splits.test.samples[0].id);
  for (std::size_t t = 0; t < res.gammas.size(); ++t) {
    EXPECT_EQ(rows[0]["gammas"][t].get<double>(), res.gammas[t].item());
  }
}

TEST_F(TrainedCliModel, MaxPredictedGammaLandsOnSignalFrames) {
  ASSERT_EQ(train_exit, exit_code::ok);
  RunConfig cfg;
  cfg.synthetic = kAcceptanceSynth;
  cfg.model_path = (*out_dir / "model.json").string();
  cfg.out_dir = out_dir->string();
  ASSERT_EQ(cmd_trace(cfg), exit_code::ok);
  const auto rows = read_jsonl(*out_dir / "trace.jsonl");
  // gamma_1 is pinned to 1, so rank only the predicted entries
  std::size_t hits = 0;
  for (const auto& r : rows) {
    const auto& gammas = r["gammas"];
    std::size_t best = 1;
    for (std::size_t t = 2; t < gammas.size(); ++t) {
      if (gammas[t].get<double>() > gammas[best].get<double>()) best = t;
    }
    if (r["signal_mask"][best].get<bool>()) ++hits;
  }
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(rows.size()), 0.8);
}

TEST(TraceCmd, RequiresTheAdascanPooler) {
  RunConfig cfg;
  cfg.pooler = Pooler::mean;
  cfg.synthetic = "standard";
  cfg.model_path = "whatever.json";
  EXPECT_EQ(cmd_trace(cfg), exit_code::usage);
}

TEST(GradcheckCmd, PassesOnTheSeededInstance) {
  RunConfig cfg;
  EXPECT_EQ(cmd_gradcheck(cfg), exit_code::ok);
}

TEST(GradcheckCmd, ReportCoversEveryParameterBlock) {
  const GradcheckReport report = run_gradcheck(42);
  ASSERT_EQ(report.fd.block_max_rel_error.size(), kNumParamBlocks);
  for (double err : report.fd.block_max_rel_error) EXPECT_LT(err, 1e-4);
  EXPECT_TRUE(report.ok);
}

TEST(GradcheckCmd, CorruptedGradientRuleIsDetected) {
  const GradcheckReport report = run_gradcheck(42, [](std::vector<Tensor>& grads) {
    grads[2][0] += 0.5;  // break one coordinate of imp.w2
  });
  EXPECT_FALSE(report.ok);
  EXPECT_EQ(report.fd.worst_block, 2u);
}

TEST(TrainCmd, L1RegularizerSelectsFarFewerFramesThanEntropy) {
  // at matched strength the l1 penalty drives nearly every predicted
  // importance under the selection threshold
  const SynthSplits splits = generate_synthetic(standard_synth_config());
  ModelParams entropy = init_params(Dims{16, 4, 64, 32}, 42);
  entropy.hyper.lambda = 1.0;
  ModelParams l1 = entropy;
  l1.hyper.reg_kind = RegKind::l1;

  const Metrics entropy_m =
      train(splits.train, splits.test, std::move(entropy), Pooler::adascan).history.back()
          .test_metrics;
  const Metrics l1_m =
      train(splits.train, splits.test, std::move(l1), Pooler::adascan).history.back()
          .test_metrics;
  ASSERT_TRUE(entropy_m.mean_selected_fraction.has_value());
  ASSERT_TRUE(l1_m.mean_selected_fraction.has_value());
  EXPECT_LT(*l1_m.mean_selected_fraction, *entropy_m.mean_selected_fraction);
}

TEST(TrainCmd, SubsampleShortensEverySequence) {
  RunConfig cfg;
  cfg.synthetic = R"({"train_count":12,"test_count":6})";
  cfg.subsample = 5;
  const DataBundle data = resolve_train_data(cfg);
  for (const FeatureSequence& s : data.train.samples) EXPECT_EQ(s.length(), 5u);
  for (const FeatureSequence& s : data.test.samples) EXPECT_EQ(s.length(), 5u);
}

TEST(TrainCmd, MilUnderperformsAdascanOnTheStandardConfig) {
  const SynthSplits splits = generate_synthetic(standard_synth_config());
  ModelParams ada = init_params(Dims{16, 4, 64, 32}, 42);
  ModelParams mil = ada;
  const double ada_acc =
      train(splits.train, splits.test, std::move(ada), Pooler::adascan).history.back()
          .test_metrics.accuracy;
  const double mil_acc =
      train(splits.train, splits.test, std::move(mil), Pooler::mil).history.back()
          .test_metrics.accuracy;
  EXPECT_GT(ada_acc, mil_acc);
}

TEST(SweepCmd, DegenerateGridProducesOneRow) {
  RunConfig cfg;
  cfg.synthetic = R"({"train_count":60,"test_count":30,"seq_len":8,"feat_dim":8})";
  cfg.hyper.epochs = 4;
  cfg.lambda_grid = {0.0};
  DataBundle data = resolve_train_data(cfg);
  const std::vector<SweepRow> rows = run_sweep(data, cfg);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].lambda, 0.0);
  EXPECT_GE(rows[0].selected_fraction, 0.0);
  EXPECT_LE(rows[0].selected_fraction, 1.0);
}

TEST(SweepCmd, WritesSortedCsv) {
  const fs::path dir = fresh_dir("adascan_cli_sweep");
  RunConfig cfg;
  cfg.synthetic = R"({"train_count":40,"test_count":20,"seq_len":6,"feat_dim":8})";
  cfg.hyper.epochs = 2;
  cfg.lambda_grid = {1.0, 0.0};  // out of order on purpose
  cfg.out_dir = dir.string();
  ASSERT_EQ(cmd_sweep(cfg), exit_code::ok);
  std::ifstream in(dir / "sweep.csv");
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "lambda,accuracy,mean_selected_fraction");
  EXPECT_EQ(row0.substr(0, 4), "0.0,");
  EXPECT_EQ(row1.substr(0, 4), "1.0,");
  fs::remove_all(dir);
}

TEST(UsageErrors, CommandLayerRejectsBadCombinations) {
  {
    RunConfig cfg;  // no data source
    EXPECT_EQ(cmd_train(cfg), exit_code::usage);
  }
  {
    RunConfig cfg;
    cfg.synthetic = "standard";
    cfg.data_path = "somewhere";
    EXPECT_EQ(cmd_train(cfg), exit_code::usage);
  }
  {
    RunConfig cfg;
    cfg.synthetic = "no-such-config";
    EXPECT_EQ(cmd_train(cfg), exit_code::usage);
  }
  {
    RunConfig cfg;
    cfg.synthetic = "standard";
    cfg.data_path = "x";
    EXPECT_EQ(cmd_gen_data(cfg), exit_code::usage);
  }
}

TEST(CliBinary, ExitCodesFollowTheContract) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train --help"), 0);
  EXPECT_EQ(run_cli(""), 2);                                   // missing subcommand
  EXPECT_EQ(run_cli("train --pooler bogus --synthetic standard"), 2);
  EXPECT_EQ(run_cli("eval --synthetic standard"), 2);          // missing --model
  EXPECT_EQ(run_cli("trace --model m.json --pooler mean --synthetic standard"), 2);
  EXPECT_EQ(run_cli("train --reg bogus --synthetic standard"), 2);
}

TEST(CliBinary, GradcheckSmokeRunsClean) { EXPECT_EQ(run_cli("gradcheck --seed 5"), 0); }

TEST(CliBinary, MeanPoolerTrainingSmoke) {
  const fs::path dir = fresh_dir("adascan_cli_mean_smoke");
  EXPECT_EQ(run_cli("train --pooler mean --synthetic default --seed 7 --epochs 3 --out " +
                    dir.string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "model.json"));
  EXPECT_TRUE(fs::exists(dir / "metrics.jsonl"));
  fs::remove_all(dir);
}
