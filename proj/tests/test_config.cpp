#include <gtest/gtest.h>

#include "relapse/config.hpp"
#include "support.hpp"

using namespace relapse;
using nlohmann::json;

TEST(Config, DefaultsRoundTrip) {
    const PipelineConfig c;
    EXPECT_EQ(to_json(config_from_json(to_json(c))).dump(), to_json(c).dump());
}

TEST(Config, OverlayChangesOnlyNamedKeys) {
    const auto c = config_from_json(json::parse(R"({
        "seed": 7,
        "features": {"welch_segment": 128, "lf_band": [0.05, 0.15]},
        "model": {"n_trees": 10, "day_pooling": "max"},
        "eval": {"aggregate_mode": "harmonic"},
        "experiment": {"cells": ["sleep_step_5min", "awake_nostep_daily"]},
        "generator": {"n_days": 30, "anomaly_profile": {"arousal_hr_swing": 0}}
    })"));
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.features.welch_segment, 128u);
    EXPECT_EQ(c.features.bands.lf_lo, 0.05);
    EXPECT_EQ(c.features.bands.hf_hi, 0.40);
    EXPECT_EQ(c.model.n_trees, 10u);
    EXPECT_EQ(c.model.psi, 256u);
    EXPECT_EQ(c.model.day_pooling, DayPooling::max);
    EXPECT_EQ(c.eval.aggregate_mode, AggregateMode::harmonic);
    ASSERT_EQ(c.cells.size(), 2u);
    EXPECT_EQ(c.cells[1].tag(), "awake_nostep_daily");
    EXPECT_EQ(c.generator.n_days, 30u);
    EXPECT_EQ(c.generator.anomaly.arousal_hr_swing, 0.0);
    EXPECT_EQ(c.generator.anomaly.sleep_hr_shift, AnomalyProfile{}.sleep_hr_shift);

    const auto back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
    for (const char* text : {R"({"sed": 1})", R"({"hampel": {"window": 3}})", R"({"features": {"segment": 1}})",
                             R"({"model": {"trees": 1}})", R"({"eval": {"mode": "harmonic"}})",
                             R"({"experiment": {"cell": []}})", R"({"generator": {"subjects": 1}})",
                             R"({"generator": {"anomaly_profile": {"hr_shift": 1}}})", R"({"ingest": {"tz": 1}})",
                             R"({"dataset": {"scaling": true}})"})
        EXPECT_THROW(config_from_json(json::parse(text)), ConfigError) << text;
}

TEST(Config, BadValuesAreRejected) {
    for (const char* text :
         {R"({"seed": "x"})", R"({"model": {"n_trees": "many"}})", R"({"features": {"lf_band": [0.04]}})",
          R"({"features": {"psd_source": "ecg"}})", R"({"eval": {"aggregate_mode": "mean"}})",
          R"({"experiment": {"cells": ["sleep_5min"]}})", R"({"model": {"day_pooling": "median"}})",
          R"({"hampel": []})"})
        EXPECT_THROW(config_from_json(json::parse(text)), ConfigError) << text;
}

TEST(Config, LoadFromFile) {
    relapse::testing::TempDir tmp("cfg");
    relapse::testing::write_text(tmp / "c.json", R"({"threads": 3})");
    EXPECT_EQ(load_config(tmp / "c.json").threads, 3u);
    relapse::testing::write_text(tmp / "bad.json", "{ not json");
    EXPECT_THROW(load_config(tmp / "bad.json"), ConfigError);
    EXPECT_THROW(load_config(tmp / "absent.json"), DataContractError);
}
