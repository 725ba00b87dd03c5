// Drives the CLI binary end to end against a temp directory.
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixboost/config.hpp"
#include "mixboost/experiment.hpp"

using namespace mixboost;
namespace fs = std::filesystem;

namespace {

const char* cli_path() { return MIXBOOST_CLI_PATH; }

int run(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mixboost_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// a config small enough that train+eval+interactions complete in seconds
std::string tiny_config_text(const fs::path& out) {
  ExperimentConfig c;
  c.out_dir = out.string();
  c.train_count = 200;
  c.test_count = 60;
  c.epochs = 2;
  c.batch_size = 50;
  c.corrupt_count = 20;
  c.corrupt_severities = 1;
  c.perturb_count = 4;
  c.perturb_frames = 3;
  c.ood_count = 20;
  c.pgd_count = 10;
  c.pgd.num_steps = 3;
  c.profile_images = 2;
  c.profile_pairs = 3;
  c.profile_contexts = 3;
  c.aug.op = AugmentOp::cutout;
  c.lambda = 1.0;
  c.r1 = 0.7;
  return serialize_config(c);
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("train"), 1);            // missing --config
  EXPECT_EQ(run("no-such-verb"), 1);
}

TEST(Cli, MissingConfigFileExitsTwo) {
  EXPECT_EQ(run("train --config /nonexistent.cfg"), 2);
}

TEST(Cli, UnknownConfigKeysExitTwo) {
  TempDir tmp;
  const fs::path cfg = tmp.path / "bad.cfg";
  std::ofstream(cfg) << "train.lamda = 1\n";
  EXPECT_EQ(run("train --config " + cfg.string()), 2);
}

TEST(Cli, TrainEvalInteractionsProxyReportPipeline) {
  TempDir tmp;
  const fs::path cfg = tmp.path / "exp.cfg";
  std::ofstream(cfg) << tiny_config_text(tmp.path / "runs");

  ASSERT_EQ(run("train --config " + cfg.string()), 0);
  const ExperimentConfig parsed = load_config(cfg.string());
  const fs::path dir = experiment_dir(parsed);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir / "train_log.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "config.cfg"));

  // a second train without --force must refuse
  EXPECT_EQ(run("train --config " + cfg.string()), 2);
  EXPECT_EQ(run("train --force --config " + cfg.string()), 0);

  ASSERT_EQ(run("eval --config " + cfg.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "report.csv"));

  ASSERT_EQ(run("interactions --config " + cfg.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "profile.json"));
  EXPECT_TRUE(fs::exists(dir / "profile.svg"));

  ASSERT_EQ(run("proxy --config " + cfg.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "proxy.json"));

  EXPECT_EQ(run("report --config " + cfg.string()), 0);

  // eval without --force must refuse now that report.json exists
  EXPECT_EQ(run("eval --config " + cfg.string()), 2);

  // the SVG parses as XML (well-formed enough for a strict reader)
  std::ifstream svg(dir / "profile.svg");
  std::stringstream ss;
  ss << svg.rdbuf();
  const std::string text = ss.str();
  EXPECT_EQ(text.find("<?xml"), 0u);
  EXPECT_NE(text.find("</svg>"), std::string::npos);

  // profile JSON reloaded and re-plotted reproduces identical SVG bytes
  const auto prof = profile_from_json(
      nlohmann::ordered_json::parse(mixboost::detail::read_text(dir / "profile.json")));
  const std::string replot = profile_svg(prof, "interaction profile " + config_hash(parsed));
  EXPECT_EQ(replot, text);
}

TEST(Cli, EvalWithoutCheckpointExitsTwo) {
  TempDir tmp;
  const fs::path cfg = tmp.path / "exp.cfg";
  std::ofstream(cfg) << tiny_config_text(tmp.path / "runs");
  EXPECT_EQ(run("eval --config " + cfg.string()), 2);
}

TEST(Cli, MissingCifarWithFallbackDisabledExitsTwo) {
  TempDir tmp;
  ExperimentConfig c;
  c.out_dir = (tmp.path / "runs").string();
  c.dataset_kind = "cifar10";
  c.synth_fallback = false;
  c.epochs = 1;
  c.train_count = 100;
  c.test_count = 50;
  const fs::path cfg = tmp.path / "nofallback.cfg";
  std::ofstream(cfg) << serialize_config(c);
  EXPECT_EQ(run("train --config " + cfg.string()), 2);
}

TEST(Cli, GridRunsEveryCellAndWritesTheTable) {
  TempDir tmp;
  ExperimentConfig c = load_config([&] {
    const fs::path cfg = tmp.path / "grid.cfg";
    std::ofstream(cfg) << tiny_config_text(tmp.path / "runs");
    return cfg.string();
  }());
  c.grid_r1 = {0.7, 0.5};
  c.grid_lambda = {0.0, 1.0};
  c.epochs = 1;
  c.train_count = 100;
  c.test_count = 40;
  const fs::path cfg = tmp.path / "grid.cfg";
  std::ofstream(cfg, std::ios::trunc) << serialize_config(c);

  ASSERT_EQ(run("grid --config " + cfg.string()), 0);
  const fs::path table = grid_dir(c) / "grid.csv";
  ASSERT_TRUE(fs::exists(table));
  std::ifstream f(table);
  std::string line;
  int rows = 0;
  while (std::getline(f, line)) ++rows;
  EXPECT_EQ(rows, 1 + 4);  // header + 2x2 cells
}

TEST(Cli, CorrelateNeedsThreeVariants) {
  TempDir tmp;
  fs::create_directories(tmp.path / "only_one");
  EXPECT_EQ(run("correlate --dir " + tmp.path.string()), 2);
}
