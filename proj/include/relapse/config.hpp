#pragma once

// Merged pipeline configuration. JSON in, JSON out; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relapse/csv.hpp"
#include "relapse/dataset.hpp"
#include "relapse/eval.hpp"
#include "relapse/features.hpp"
#include "relapse/iforest.hpp"
#include "relapse/preprocess.hpp"
#include "relapse/synthgen.hpp"

namespace relapse {

struct ModelConfig {
    std::size_t n_trees = 100;
    std::size_t psi = 256;
    DayPooling day_pooling = DayPooling::mean;
};

struct EvalConfig {
    AggregateMode aggregate_mode = AggregateMode::subject_mean;
    bool awake_fallback = true;
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    unsigned threads = 1;
    std::int64_t utc_offset_seconds = 0;
    PreprocessConfig hampel;
    FeatureConfig features;
    DatasetConfig dataset;
    ModelConfig model;
    EvalConfig eval;
    std::vector<ExperimentCell> cells = ExperimentCell::all();
    GenConfig generator;

    ForestConfig forest() const { return {model.n_trees, model.psi, seed, threads}; }
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::set<std::string> allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json to_json(const PipelineConfig& c) {
    const auto& f = c.features;
    std::vector<std::string> cells;
    for (const auto& cell : c.cells) cells.push_back(cell.tag());
    return {
        {"seed", c.seed},
        {"threads", c.threads},
        {"ingest", {{"utc_offset_seconds", c.utc_offset_seconds}}},
        {"hampel",
         {{"window_seconds", c.hampel.window_seconds},
          {"n_sigmas", c.hampel.n_sigmas},
          {"mad_scale", c.hampel.mad_scale},
          {"impute_quorum", c.hampel.impute_quorum}}},
        {"features",
         {{"interval_seconds", f.interval_seconds},
          {"lf_band", {f.bands.lf_lo, f.bands.lf_hi}},
          {"hf_band", {f.bands.hf_lo, f.bands.hf_hi}},
          {"welch_segment", f.welch_segment},
          {"welch_overlap", f.welch_overlap},
          {"remove_gravity", f.remove_gravity},
          {"psd_source", f.psd_source == PsdSource::rr ? "rr" : "bpm"},
          {"spectral_min_coverage", f.spectral_min_coverage}}},
        {"dataset", {{"require_steps", c.dataset.require_steps}, {"per_subject_scaling", c.dataset.per_subject_scaling}}},
        {"model",
         {{"n_trees", c.model.n_trees}, {"psi", c.model.psi}, {"day_pooling", to_string(c.model.day_pooling)}}},
        {"eval", {{"aggregate_mode", to_string(c.eval.aggregate_mode)}, {"awake_fallback", c.eval.awake_fallback}}},
        {"experiment", {{"cells", cells}}},
        {"generator", to_json(c.generator)},
    };
}

/// Overlays `j` on `base`. Throws ConfigError on unknown keys or bad values.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
    using detail::check_keys;
    using detail::take;
    check_keys(j, "", {"seed", "threads", "ingest", "hampel", "features", "dataset", "model", "eval", "experiment",
                       "generator"});
    take(j, "seed", c.seed);
    take(j, "threads", c.threads);
    if (j.contains("ingest")) {
        const auto& s = j["ingest"];
        check_keys(s, "ingest", {"utc_offset_seconds"});
        take(s, "utc_offset_seconds", c.utc_offset_seconds);
    }
    if (j.contains("hampel")) {
        const auto& s = j["hampel"];
        check_keys(s, "hampel", {"window_seconds", "n_sigmas", "mad_scale", "impute_quorum"});
        take(s, "window_seconds", c.hampel.window_seconds);
        take(s, "n_sigmas", c.hampel.n_sigmas);
        take(s, "mad_scale", c.hampel.mad_scale);
        take(s, "impute_quorum", c.hampel.impute_quorum);
    }
    if (j.contains("features")) {
        const auto& s = j["features"];
        auto& f = c.features;
        check_keys(s, "features", {"interval_seconds", "lf_band", "hf_band", "welch_segment", "welch_overlap",
                                   "remove_gravity", "psd_source", "spectral_min_coverage"});
        take(s, "interval_seconds", f.interval_seconds);
        auto band = [&](const char* key, double& lo, double& hi) {
            if (!s.contains(key)) return;
            std::vector<double> b;
            take(s, key, b);
            if (b.size() != 2) throw ConfigError(std::string("config: '") + key + "' must be [lo, hi]");
            lo = b[0];
            hi = b[1];
        };
        band("lf_band", f.bands.lf_lo, f.bands.lf_hi);
        band("hf_band", f.bands.hf_lo, f.bands.hf_hi);
        take(s, "welch_segment", f.welch_segment);
        take(s, "welch_overlap", f.welch_overlap);
        take(s, "remove_gravity", f.remove_gravity);
        take(s, "spectral_min_coverage", f.spectral_min_coverage);
        if (s.contains("psd_source")) {
            std::string v;
            take(s, "psd_source", v);
            if (v == "rr")
                f.psd_source = PsdSource::rr;
            else if (v == "bpm")
                f.psd_source = PsdSource::bpm;
            else
                throw ConfigError("config: psd_source must be 'rr' or 'bpm'");
        }
    }
    if (j.contains("dataset")) {
        const auto& s = j["dataset"];
        check_keys(s, "dataset", {"require_steps", "per_subject_scaling"});
        take(s, "require_steps", c.dataset.require_steps);
        take(s, "per_subject_scaling", c.dataset.per_subject_scaling);
    }
    try {
        if (j.contains("model")) {
            const auto& s = j["model"];
            check_keys(s, "model", {"n_trees", "psi", "day_pooling"});
            take(s, "n_trees", c.model.n_trees);
            take(s, "psi", c.model.psi);
            if (s.contains("day_pooling")) c.model.day_pooling = parse_day_pooling(s["day_pooling"].get<std::string>());
        }
        if (j.contains("eval")) {
            const auto& s = j["eval"];
            check_keys(s, "eval", {"aggregate_mode", "awake_fallback"});
            if (s.contains("aggregate_mode"))
                c.eval.aggregate_mode = parse_aggregate_mode(s["aggregate_mode"].get<std::string>());
            take(s, "awake_fallback", c.eval.awake_fallback);
        }
        if (j.contains("experiment")) {
            const auto& s = j["experiment"];
            check_keys(s, "experiment", {"cells"});
            if (s.contains("cells")) {
                c.cells.clear();
                for (const auto& t : s["cells"]) c.cells.push_back(ExperimentCell::parse(t.get<std::string>()));
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (j.contains("generator")) {
        const auto& s = j["generator"];
        auto& g = c.generator;
        check_keys(s, "generator", {"n_subjects", "n_days", "relapse_fraction", "seed", "motion_hz", "rr_hz",
                                    "missing_fraction", "missing_sleep_fraction", "utc_offset_seconds", "start_date",
                                    "hide_test_labels", "anomaly_profile"});
        take(s, "n_subjects", g.n_subjects);
        take(s, "n_days", g.n_days);
        take(s, "relapse_fraction", g.relapse_fraction);
        take(s, "seed", g.seed);
        take(s, "motion_hz", g.motion_hz);
        take(s, "rr_hz", g.rr_hz);
        take(s, "missing_fraction", g.missing_fraction);
        take(s, "missing_sleep_fraction", g.missing_sleep_fraction);
        take(s, "utc_offset_seconds", g.utc_offset_seconds);
        take(s, "start_date", g.start_date);
        take(s, "hide_test_labels", g.hide_test_labels);
        if (s.contains("anomaly_profile")) {
            const auto& a = s["anomaly_profile"];
            check_keys(a, "generator.anomaly_profile",
                       {"sleep_hr_shift", "sleep_fragmentation", "activity_var_multiplier", "lf_hf_shift", "arousal_hr_swing",
                        "awake_leak"});
            take(a, "sleep_hr_shift", g.anomaly.sleep_hr_shift);
            take(a, "sleep_fragmentation", g.anomaly.sleep_fragmentation);
            take(a, "activity_var_multiplier", g.anomaly.activity_var_multiplier);
            take(a, "lf_hf_shift", g.anomaly.lf_hf_shift);
            take(a, "arousal_hr_swing", g.anomaly.arousal_hr_swing);
            take(a, "awake_leak", g.anomaly.awake_leak);
        }
    }
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
    if (!std::filesystem::exists(path)) throw DataContractError("missing config file '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j, std::move(base));
}

}  // namespace relapse
