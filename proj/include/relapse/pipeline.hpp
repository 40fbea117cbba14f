#pragma once

// Stage orchestration. Every stage reads its predecessor's files from the
// run directory and writes its own, so stages can be re-run one at a time.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relapse/config.hpp"
#include "relapse/dataset.hpp"
#include "relapse/eval.hpp"
#include "relapse/features.hpp"
#include "relapse/iforest.hpp"
#include "relapse/ingest.hpp"
#include "relapse/preprocess.hpp"
#include "relapse/synthgen.hpp"

namespace relapse {

namespace fs = std::filesystem;

/// Wall-clock per stage, echoed to stderr and appended to run.log.
class StageLog {
public:
    explicit StageLog(fs::path log_file = {}, bool echo = true) : file_(std::move(log_file)), echo_(echo) {}

    void record(const std::string& stage, double seconds) {
        char line[256];
        std::snprintf(line, sizeof line, "stage=%s seconds=%.3f\n", stage.c_str(), seconds);
        if (echo_) std::fputs(line, stderr);
        if (!file_.empty()) std::ofstream(file_, std::ios::app) << line;
        entries_.emplace_back(stage, seconds);
    }

    void note(const std::string& msg) {
        if (echo_) std::fprintf(stderr, "%s\n", msg.c_str());
        if (!file_.empty()) std::ofstream(file_, std::ios::app) << msg << '\n';
    }

    const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }

private:
    fs::path file_;
    bool echo_;
    std::vector<std::pair<std::string, double>> entries_;
};

class StageTimer {
public:
    StageTimer(StageLog* log, std::string stage)
        : log_(log), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    StageTimer(const StageTimer&) = delete;
    StageTimer& operator=(const StageTimer&) = delete;
    ~StageTimer() {
        if (log_)
            log_->record(stage_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    }

private:
    StageLog* log_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// In-memory core

/// Hampel-filtered streams turned into 5-minute features.
inline std::vector<IntervalFeatures> subject_features(const SensorStreams& raw, const PipelineConfig& cfg,
                                                      PreprocessReport* report = nullptr) {
    auto pre = preprocess_streams(raw, cfg.hampel);
    if (report) *report = std::move(pre.report);
    return extract_intervals(pre.streams, cfg.features);
}

struct ScoredCell {
    ExperimentCell cell;
    Scaler scaler;
    ForestModel model;
    DayScores scores;
    std::size_t rows = 0;
    std::size_t train_rows = 0;
    std::size_t zero_rows = 0;
};

inline FeatureMatrix train_rows(const FeatureMatrix& m) {
    FeatureMatrix t = m.empty_like();
    for (std::size_t i = 0; i < m.rows(); ++i)
        if (m.meta[i].split == Split::train) t.push_row(m.meta[i], m.row(i));
    return t;
}

/// Select, standardize with train statistics, fit on train rows, pool day scores.
inline ScoredCell train_and_score(const FeatureMatrix& m5, const ExperimentCell& cell, const PipelineConfig& cfg,
                                  FeatureMatrix* standardized = nullptr) {
    ScoredCell out;
    out.cell = cell;
    const auto sel = select_cell(m5, cell, cfg.dataset);
    out.scaler = fit_scaler(sel, cfg.dataset);
    auto st = standardize_unit_norm(sel, out.scaler);
    out.zero_rows = st.zero_rows;
    const auto train = train_rows(st.matrix);
    out.model = fit(train, cfg.forest());
    out.scores = score_days(out.model, st.matrix, cfg.model.day_pooling, cfg.threads);
    out.rows = st.matrix.rows();
    out.train_rows = train.rows();
    if (standardized) *standardized = std::move(st.matrix);
    return out;
}

inline ExperimentCell awake_counterpart(ExperimentCell c) {
    c.segment = Segment::awake;
    return c;
}

/// Day scores with fallback days filled in from the awake counterpart when
/// the cell is a sleep cell. Returns the number of filled days.
inline std::size_t apply_awake_fallback(DayScores& scores, const DayScores& awake, const DayTable& days,
                                        std::vector<std::string>* warnings = nullptr) {
    const auto fb = awake_fallback_threshold(scores, days, awake);
    if (!fb.warning.empty() && warnings) warnings->push_back(fb.warning);
    std::size_t filled = 0;
    for (const auto& [k, v] : fb.scores)
        if (scores.emplace(k, v).second) ++filled;
    return filled;
}

inline EvalReport evaluate_cell(const ScoredCell& sc, const ScoredCell* awake, const DayTable& days,
                                const PipelineConfig& cfg, DayScores* final_scores = nullptr) {
    DayScores scores = sc.scores;
    std::vector<std::string> warnings;
    std::size_t filled = 0;
    if (sc.cell.segment == Segment::sleep && cfg.eval.awake_fallback && awake)
        filled = apply_awake_fallback(scores, awake->scores, days, &warnings);
    auto rep = evaluate_days(scores, days, sc.cell, cfg.eval.aggregate_mode);
    rep.counts.fallback_days = filled;
    rep.warnings.insert(rep.warnings.end(), warnings.begin(), warnings.end());
    if (sc.zero_rows) rep.warnings.push_back(std::to_string(sc.zero_rows) + " all-zero rows left unnormalized");
    if (final_scores) *final_scores = std::move(scores);
    return rep;
}

/// Runs every configured cell. A failing cell is reported, not fatal.
inline std::vector<EvalReport> run_grid(const FeatureMatrix& m5, const DayTable& days, const PipelineConfig& cfg,
                                        StageLog* log = nullptr) {
    std::map<ExperimentCell, ScoredCell> scored;
    std::map<ExperimentCell, std::string> failed;
    auto get = [&](const ExperimentCell& c) -> const ScoredCell* {
        if (auto it = scored.find(c); it != scored.end()) return &it->second;
        if (failed.count(c)) return nullptr;
        try {
            StageTimer t(log, "cell:" + c.tag());
            return &scored.emplace(c, train_and_score(m5, c, cfg)).first->second;
        } catch (const std::exception& e) {
            failed[c] = e.what();
            return nullptr;
        }
    };
    std::vector<EvalReport> out;
    for (const auto& cell : cfg.cells) {
        const auto* sc = get(cell);
        if (!sc) {
            EvalReport r;
            r.cell = cell;
            r.mode = cfg.eval.aggregate_mode;
            r.error = failed[cell];
            out.push_back(std::move(r));
            continue;
        }
        const ScoredCell* awake = nullptr;
        if (cell.segment == Segment::sleep && cfg.eval.awake_fallback) awake = get(awake_counterpart(cell));
        out.push_back(evaluate_cell(*sc, awake, days, cfg));
    }
    return out;
}

inline nlohmann::json grid_to_json(const std::vector<EvalReport>& reports) {
    nlohmann::json j;
    auto& cells = j["cells"] = nlohmann::json::array();
    const EvalReport* best = nullptr;
    for (const auto& r : reports) {
        cells.push_back(to_json(r));
        if (r.aggregate_hmean && (!best || *r.aggregate_hmean > *best->aggregate_hmean)) best = &r;
    }
    j["best_cell"] = best ? nlohmann::json(best->cell.tag()) : nlohmann::json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// File-based stages

namespace paths {
inline fs::path data(const fs::path& run) { return run / "data"; }
inline fs::path preprocessed(const fs::path& run) { return run / "preprocessed"; }
inline fs::path features(const fs::path& run) { return run / "features_5min.csv"; }
inline fs::path days(const fs::path& run) { return run / "days.csv"; }
inline fs::path matrix(const fs::path& run, const ExperimentCell& c) { return run / ("matrix_" + c.tag() + ".csv"); }
inline fs::path scaler(const fs::path& run, const ExperimentCell& c) { return run / ("scaler_" + c.tag() + ".json"); }
inline fs::path model(const fs::path& run, const ExperimentCell& c) { return run / ("model_" + c.tag() + ".json"); }
inline fs::path scores(const fs::path& run, const ExperimentCell& c) { return run / ("day_scores_" + c.tag() + ".csv"); }
inline fs::path report(const fs::path& run, const ExperimentCell& c) { return run / ("report_" + c.tag() + ".json"); }
}  // namespace paths

inline void require_artifact(const fs::path& p) {
    if (!fs::exists(p)) throw DataContractError("missing input artifact '" + p.string() + "'");
}

/// Subject directories (those holding days.csv) under root, sorted by name.
inline std::vector<fs::path> subject_dirs(const fs::path& root) {
    require_artifact(root);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / files::days)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw DataContractError("no subject directories under '" + root.string() + "'");
    return out;
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { csv::write_file(p, j.dump(2) + "\n"); }

inline nlohmann::json stage_generate(const PipelineConfig& cfg, const fs::path& run, StageLog* log = nullptr) {
    StageTimer t(log, "generate");
    return generate(cfg.generator, paths::data(run));
}

inline nlohmann::json to_json(const HampelStats& s) {
    return {{"replaced", s.replaced}, {"imputed", s.imputed}, {"still_missing", s.still_missing}};
}

inline void stage_preprocess(const PipelineConfig& cfg, const fs::path& data_dir, const fs::path& run,
                             StageLog* log = nullptr) {
    StageTimer t(log, "preprocess");
    nlohmann::json rep = nlohmann::json::object();
    for (const auto& dir : subject_dirs(data_dir)) {
        auto loaded = load_subject(dir, {cfg.utc_offset_seconds});
        auto pre = preprocess_streams(loaded.streams, cfg.hampel);
        write_subject(pre.streams, paths::preprocessed(run) / dir.filename());
        auto& r = rep[loaded.streams.subject_id];
        r["rejected_rows"] = loaded.report.rejected_rows();
        r["inversions"] = loaded.report.inversions();
        r["merged_sleep_intervals"] = loaded.report.merged_sleep_intervals;
        for (const auto& [ch, st] : pre.report.channels) r["channels"][ch] = to_json(st);
        r["warnings"] = pre.report.warnings;
    }
    write_json(run / "preprocess_report.json", rep);
}

inline void stage_extract(const PipelineConfig& cfg, const fs::path& run, StageLog* log = nullptr) {
    StageTimer t(log, "extract");
    std::vector<IntervalFeatures> all;
    std::vector<DayRecord> days;
    for (const auto& dir : subject_dirs(paths::preprocessed(run))) {
        auto loaded = load_subject(dir, {cfg.utc_offset_seconds});
        auto rows = extract_intervals(loaded.streams, cfg.features);
        all.insert(all.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
        days.insert(days.end(), loaded.streams.days.begin(), loaded.streams.days.end());
    }
    write_features_csv(paths::features(run), all);
    write_day_table(paths::days(run), make_day_table(days));
}

struct RunInputs {
    FeatureMatrix m5;
    DayTable days;
};

inline RunInputs load_run_inputs(const fs::path& run) {
    require_artifact(paths::features(run));
    require_artifact(paths::days(run));
    RunInputs in;
    in.days = read_day_table(paths::days(run));
    const auto rows = read_features_csv(paths::features(run));
    in.m5 = interval_stats(rows, in.days);
    return in;
}

inline void save_scaler(const fs::path& p, const Scaler& s) { write_json(p, to_json(s)); }

inline Scaler load_scaler(const fs::path& p) {
    require_artifact(p);
    return scaler_from_json(nlohmann::json::parse(csv::read_file(p)));
}

/// Fits the cell (and its awake counterpart for sleep cells with fallback).
inline void stage_train(const PipelineConfig& cfg, const fs::path& run, const ExperimentCell& cell,
                        StageLog* log = nullptr) {
    StageTimer t(log, "train");
    const auto in = load_run_inputs(run);
    std::vector<ExperimentCell> cells{cell};
    if (cell.segment == Segment::sleep && cfg.eval.awake_fallback) cells.push_back(awake_counterpart(cell));
    for (const auto& c : cells) {
        FeatureMatrix st;
        const auto sc = train_and_score(in.m5, c, cfg, &st);
        if (c == cell) write_matrix_csv(paths::matrix(run, c), st);
        save_scaler(paths::scaler(run, c), sc.scaler);
        save_model(paths::model(run, c), sc.model);
    }
}

inline void write_day_scores(const fs::path& p, const DayScores& scores, const DayScores& own) {
    std::string b = "subject_id,date,score,source\n";
    for (const auto& [k, v] : scores) {
        b += k.subject_id + ',' + k.date.str() + ',';
        csv::append_double(b, v);
        b += own.count(k) ? ",cell\n" : ",awake_fallback\n";
    }
    csv::write_file(p, b);
}

inline DayScores read_day_scores(const fs::path& p, std::size_t* fallback = nullptr) {
    require_artifact(p);
    csv::Reader r(p);
    csv::expect_header(r, {"subject_id", "date", "score", "source"}, p.filename().string());
    DayScores out;
    std::size_t fb = 0;
    while (r.next()) {
        const auto& f = r.fields();
        if (f.size() != 4) throw DataContractError("'" + p.string() + "' line " + std::to_string(r.line_no()) + ": expected 4 fields");
        const auto v = csv::parse_double(f[2], false);
        if (!v) throw DataContractError("'" + p.string() + "' line " + std::to_string(r.line_no()) + ": bad score");
        out[{std::string(f[0]), Date::parse(f[1])}] = *v;
        fb += f[3] == "awake_fallback";
    }
    if (fallback) *fallback = fb;
    return out;
}

/// Scores a trained cell using the saved scaler and model.
inline void stage_score(const PipelineConfig& cfg, const fs::path& run, const ExperimentCell& cell,
                        StageLog* log = nullptr) {
    StageTimer t(log, "score");
    const auto in = load_run_inputs(run);
    auto score_with_saved = [&](const ExperimentCell& c) {
        require_artifact(paths::model(run, c));
        const auto scaler = load_scaler(paths::scaler(run, c));
        const auto model = load_model(paths::model(run, c));
        const auto st = standardize_unit_norm(select_cell(in.m5, c, cfg.dataset), scaler);
        return score_days(model, st.matrix, cfg.model.day_pooling, cfg.threads);
    };
    const auto own = score_with_saved(cell);
    DayScores scores = own;
    if (cell.segment == Segment::sleep && cfg.eval.awake_fallback)
        apply_awake_fallback(scores, score_with_saved(awake_counterpart(cell)), in.days);
    write_day_scores(paths::scores(run, cell), scores, own);
}

inline EvalReport stage_evaluate(const PipelineConfig& cfg, const fs::path& run, const ExperimentCell& cell,
                                 StageLog* log = nullptr) {
    StageTimer t(log, "evaluate");
    require_artifact(paths::days(run));
    const auto days = read_day_table(paths::days(run));
    std::size_t fb = 0;
    const auto scores = read_day_scores(paths::scores(run, cell), &fb);
    auto rep = evaluate_days(scores, days, cell, cfg.eval.aggregate_mode);
    rep.counts.fallback_days = fb;
    write_json(paths::report(run, cell), to_json(rep));
    return rep;
}

inline std::vector<EvalReport> stage_experiment(const PipelineConfig& cfg, const fs::path& run,
                                                StageLog* log = nullptr) {
    StageTimer t(log, "experiment");
    const auto in = load_run_inputs(run);
    auto reports = run_grid(in.m5, in.days, cfg, log);
    write_json(run / "report.json", grid_to_json(reports));
    csv::write_file(run / "report.txt", render_grid(reports));
    return reports;
}

}  // namespace relapse
