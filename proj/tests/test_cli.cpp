#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "relapse/pipeline.hpp"
#include "support.hpp"

using namespace relapse;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTinyConfig = R"({
  "features": {"welch_segment": 128},
  "model": {"n_trees": 20},
  "experiment": {"cells": ["sleep_step_5min", "awake_step_5min"]},
  "generator": {"n_subjects": 3, "n_days": 20, "relapse_fraction": 0.2, "motion_hz": 0.2, "rr_hz": 1.0,
                "hide_test_labels": false}
})";

int run_cli(const fs::path& run, const std::string& args, const fs::path& config = {}) {
    std::string cmd = std::string(RELAPSE_CLI_PATH) + " --out '" + run.string() + "'";
    if (!config.empty()) cmd += " --config '" + config.string() + "'";
    cmd += " " + args + " > '" + (run.parent_path() / "cli.out").string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, StagesChainThroughTheRunDirectory) {
    relapse::testing::TempDir tmp("cli");
    const auto cfg = tmp / "config.json";
    relapse::testing::write_text(cfg, kTinyConfig);
    const auto run = tmp / "run";
    ASSERT_EQ(run_cli(run, "generate", cfg), 0);
    EXPECT_TRUE(fs::exists(run / "data" / "subject_03" / "rr.csv"));
    EXPECT_TRUE(fs::exists(run / "data" / "ground_truth.json"));
    ASSERT_EQ(run_cli(run, "preprocess", cfg), 0);
    EXPECT_TRUE(fs::exists(run / "preprocess_report.json"));
    ASSERT_EQ(run_cli(run, "extract", cfg), 0);
    const auto features = csv::read_file(paths::features(run));

    // Re-running a stage reproduces its output byte for byte.
    ASSERT_EQ(run_cli(run, "extract", cfg), 0);
    EXPECT_EQ(csv::read_file(paths::features(run)), features);

    const auto cell = ExperimentCell::parse("sleep_step_5min");
    ASSERT_EQ(run_cli(run, "train --cell sleep_step_5min", cfg), 0);
    EXPECT_TRUE(fs::exists(paths::model(run, cell)));
    EXPECT_TRUE(fs::exists(paths::model(run, awake_counterpart(cell))));
    EXPECT_TRUE(fs::exists(paths::scaler(run, cell)));
    EXPECT_TRUE(fs::exists(paths::matrix(run, cell)));
    ASSERT_EQ(run_cli(run, "score --cell sleep_step_5min", cfg), 0);
    EXPECT_FALSE(read_day_scores(paths::scores(run, cell)).empty());
    ASSERT_EQ(run_cli(run, "evaluate --cell sleep_step_5min", cfg), 0);
    const auto rep = nlohmann::json::parse(csv::read_file(paths::report(run, cell)));
    EXPECT_EQ(rep["cell"], "sleep_step_5min");

    ASSERT_EQ(run_cli(run, "experiment", cfg), 0);
    const auto grid = nlohmann::json::parse(csv::read_file(run / "report.json"));
    EXPECT_EQ(grid["cells"].size(), 2u);
    EXPECT_TRUE(fs::exists(run / "report.txt"));
    EXPECT_NE(csv::read_file(run / "run.log").find("stage=experiment"), std::string::npos);
    EXPECT_TRUE(fs::exists(run / "config.json"));
}

TEST(Cli, MissingArtifactsExitWithTwo) {
    relapse::testing::TempDir tmp("cli-missing");
    EXPECT_EQ(run_cli(tmp / "run", "extract"), 2);
    EXPECT_EQ(run_cli(tmp / "run", "score --cell sleep_step_5min"), 2);
    EXPECT_EQ(run_cli(tmp / "run", "evaluate"), 2);
}

TEST(Cli, RelapseDayInTrainingSplitExitsWithTwo) {
    relapse::testing::TempDir tmp("cli-leak");
    const auto cfg = tmp / "config.json";
    relapse::testing::write_text(cfg, kTinyConfig);
    const auto run = tmp / "run";
    ASSERT_EQ(run_cli(run, "generate", cfg), 0);
    ASSERT_EQ(run_cli(run, "preprocess", cfg), 0);
    ASSERT_EQ(run_cli(run, "extract", cfg), 0);
    auto days = read_day_table(paths::days(run));
    auto& first = days.begin()->second;
    ASSERT_EQ(first.split, Split::train);
    first.label = Label::relapse;
    write_day_table(paths::days(run), days);
    EXPECT_EQ(run_cli(run, "train --cell aggregate_step_5min", cfg), 2);
}

TEST(Cli, UsageErrorsExitWithOne) {
    relapse::testing::TempDir tmp("cli-usage");
    relapse::testing::write_text(tmp / "bad.json", R"({"model": {"trees": 5}})");
    EXPECT_EQ(run_cli(tmp / "run", "generate", tmp / "bad.json"), 1);
    EXPECT_EQ(run_cli(tmp / "run", "train --cell sleep_hourly"), 1);
    EXPECT_EQ(run_cli(tmp / "run", "frobnicate"), 1);
}
