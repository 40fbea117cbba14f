// Command-line driver for the relapse-day detection pipeline.
//
// Exit codes: 0 success, 1 usage, 2 data contract violation, 3 internal error.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "relapse/config.hpp"
#include "relapse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace relapse;

namespace {

enum Exit { kOk = 0, kUsage = 1, kContract = 2, kInternal = 3 };

std::string default_run_dir(std::uint64_t seed) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return "runs/" + std::string(buf) + "-" + std::to_string(seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised relapse-day detection from wearable recordings"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, cell_tag = "sleep_step_5min";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--seed", seed, "Run seed (also the generator seed for 'generate')");
    app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "Run directory (default runs/<timestamp>-<seed>)");

    auto* gen = app.add_subcommand("generate", "Write a synthetic cohort to <out>/data");
    auto* pre = app.add_subcommand("preprocess", "Hampel-filter every subject into <out>/preprocessed");
    pre->add_option("--data", data_dir, "Subject directories (default <out>/data)");
    auto* ext = app.add_subcommand("extract", "Compute 5-minute features into <out>/features_5min.csv");
    auto* train = app.add_subcommand("train", "Fit scaler and forest for one experiment cell");
    auto* score = app.add_subcommand("score", "Score days for one experiment cell");
    auto* evaluate = app.add_subcommand("evaluate", "Compute ranking metrics for one experiment cell");
    for (auto* sub : {train, score, evaluate}) sub->add_option("--cell", cell_tag, "Experiment cell tag");
    auto* experiment = app.add_subcommand("experiment", "Run the full experiment grid");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        if (seed) {
            cfg.seed = *seed;
            cfg.generator.seed = *seed;
        }
        if (threads) cfg.threads = *threads;
        const ExperimentCell cell = ExperimentCell::parse(cell_tag);

        const fs::path run = out_dir.empty() ? fs::path(default_run_dir(cfg.seed)) : fs::path(out_dir);
        fs::create_directories(run);
        write_json(run / "config.json", to_json(cfg));
        StageLog log(run / "run.log");

        if (*gen) {
            stage_generate(cfg, run, &log);
        } else if (*pre) {
            stage_preprocess(cfg, data_dir.empty() ? paths::data(run) : fs::path(data_dir), run, &log);
        } else if (*ext) {
            stage_extract(cfg, run, &log);
        } else if (*train) {
            stage_train(cfg, run, cell, &log);
        } else if (*score) {
            stage_score(cfg, run, cell, &log);
        } else if (*evaluate) {
            const auto rep = stage_evaluate(cfg, run, cell, &log);
            std::printf("%s\n", to_json(rep).dump(2).c_str());
        } else if (*experiment) {
            const auto reports = stage_experiment(cfg, run, &log);
            std::printf("%s", render_grid(reports).c_str());
        }
        return kOk;
    } catch (const DataContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kContract;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kInternal;
    }
}
