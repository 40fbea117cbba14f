#pragma once

// Model-ready matrices: per-interval [mean, std] vectors, hourly and daily
// aggregation, sleep/awake/step cell selection and train-fitted scaling.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "relapse/core.hpp"
#include "relapse/csv.hpp"
#include "relapse/features.hpp"
#include "relapse/ingest.hpp"

namespace relapse {

enum class Segment { sleep, awake, aggregate };
enum class StepMode { with_step, without_step };
enum class Resolution { min5, min60, daily };

/// One cell of the segment x steps x resolution experiment grid.
struct ExperimentCell {
    Segment segment = Segment::sleep;
    StepMode steps = StepMode::with_step;
    Resolution resolution = Resolution::min5;

    auto operator<=>(const ExperimentCell&) const = default;

    /// e.g. "sleep_step_5min", "awake_nostep_60min", "aggregate_step_daily".
    std::string tag() const {
        static const char* seg[] = {"sleep", "awake", "aggregate"};
        static const char* res[] = {"5min", "60min", "daily"};
        return std::string(seg[static_cast<int>(segment)]) +
               (steps == StepMode::with_step ? "_step_" : "_nostep_") + res[static_cast<int>(resolution)];
    }

    static ExperimentCell parse(std::string_view tag) {
        for (const auto& c : all())
            if (c.tag() == tag) return c;
        throw std::invalid_argument("unknown experiment cell '" + std::string(tag) + "'");
    }

    /// All 18 cells in report order: rows (steps, segment), then resolution.
    static std::vector<ExperimentCell> all() {
        std::vector<ExperimentCell> out;
        for (auto st : {StepMode::without_step, StepMode::with_step})
            for (auto sg : {Segment::sleep, Segment::awake, Segment::aggregate})
                for (auto r : {Resolution::min5, Resolution::min60, Resolution::daily}) out.push_back({sg, st, r});
        return out;
    }
};

// ---------------------------------------------------------------------------
// Day table

using DayTable = std::map<DayKey, DayRecord>;

inline DayTable make_day_table(std::span<const DayRecord> days) {
    DayTable t;
    for (const auto& d : days) t[{d.subject_id, d.date}] = d;
    return t;
}

/// Combined days.csv for many subjects: subject_id,date,label,split.
inline void write_day_table(const std::filesystem::path& path, const DayTable& t) {
    std::string b = "subject_id,date,label,split\n";
    for (const auto& [k, d] : t) {
        b += d.subject_id + ',' + d.date.str() + ',';
        b += to_string(d.label);
        b += ',';
        b += to_string(d.split);
        b += '\n';
    }
    csv::write_file(path, b);
}

inline DayTable read_day_table(const std::filesystem::path& path) {
    csv::Reader r(path);
    csv::expect_header(r, {"subject_id", "date", "label", "split"}, path.filename().string());
    DayTable t;
    while (r.next()) {
        const auto& f = r.fields();
        if (f.size() != 4)
            throw DataContractError("'" + path.string() + "' line " + std::to_string(r.line_no()) +
                                    ": expected 4 fields");
        DayRecord d{std::string(csv::trim(f[0])), Date::parse(csv::trim(f[1])), parse_label(csv::trim(f[2])),
                    parse_split(csv::trim(f[3]))};
        t[{d.subject_id, d.date}] = d;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Feature matrix

struct RowMeta {
    std::string subject_id;
    Date date;
    double t_start = 0;
    double local_seconds = 0;
    Label label = Label::unlabeled;
    Split split = Split::test;
    bool is_sleep = false;
    bool has_steps = false;
    std::size_t weight = 1;  // number of base intervals pooled into this row
};

/// Row-major matrix with per-row provenance. Contains no missing values.
struct FeatureMatrix {
    std::vector<std::string> columns;
    std::vector<RowMeta> meta;
    std::vector<double> values;
    Resolution resolution = Resolution::min5;
    std::size_t dropped = 0;     // rows lacking a required feature group
    std::size_t unrecorded = 0;  // rows whose day has no DayRecord

    std::size_t dims() const { return columns.size(); }
    std::size_t rows() const { return meta.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * dims(), dims()}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * dims(), dims()}; }

    void push_row(RowMeta m, std::span<const double> v) {
        meta.push_back(std::move(m));
        values.insert(values.end(), v.begin(), v.end());
    }

    FeatureMatrix empty_like() const {
        FeatureMatrix m;
        m.columns = columns;
        m.resolution = resolution;
        return m;
    }
};

/// Base features in column order; the trailing five are the step group.
inline const std::vector<std::string>& base_feature_names() {
    static const std::vector<std::string> n = {"acc_energy", "gyro_energy", "bpm", "hrv_sdnn", "lf_power",
                                               "hf_power", "lf_fraction", "hf_fraction", "sin_t", "cos_t",
                                               "step_count", "dist", "cal", "stepsize", "speed"};
    return n;
}

inline constexpr std::size_t kStepBaseFeatures = 5;

inline bool is_step_column(std::string_view name) {
    for (std::size_t i = base_feature_names().size() - kStepBaseFeatures; i < base_feature_names().size(); ++i)
        if (name.starts_with(base_feature_names()[i] + ".")) return true;
    return false;
}

inline std::vector<std::size_t> step_column_indices(const FeatureMatrix& m) {
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < m.dims(); ++c)
        if (is_step_column(m.columns[c])) idx.push_back(c);
    return idx;
}

inline constexpr std::uint32_t kRequiredGroups = kAcc | kGyro | kHeart | kSpectral | kTime;

/// Per-interval vectors of [mean, std] for each base feature. Single-valued
/// features (SDNN, band powers, time encoding) carry a std of 0. Rows lacking
/// a required group are dropped and counted; absent step groups become zeros
/// with has_steps = false.
inline FeatureMatrix interval_stats(std::span<const IntervalFeatures> features, const DayTable& days,
                                    std::uint32_t required = kRequiredGroups) {
    FeatureMatrix m;
    for (const auto& n : base_feature_names()) {
        m.columns.push_back(n + ".mean");
        m.columns.push_back(n + ".std");
    }
    std::vector<double> v(m.dims());
    for (const auto& f : features) {
        if (!f.has(required)) {
            ++m.dropped;
            continue;
        }
        auto it = days.find({f.subject_id, f.date});
        if (it == days.end()) {
            ++m.unrecorded;
            continue;
        }
        const bool steps = f.has(kSteps);
        auto z = [](double x) { return is_missing(x) ? 0.0 : x; };
        const double pairs[15][2] = {
            {f.acc_energy, f.acc_energy_std},
            {f.gyro_energy, f.gyro_energy_std},
            {f.bpm_mean, f.bpm_std},
            {f.hrv_sdnn, 0},
            {f.lf_power, 0},
            {f.hf_power, 0},
            {f.lf_fraction, 0},
            {f.hf_fraction, 0},
            {f.sin_t, 0},
            {f.cos_t, 0},
            {steps ? f.step_count : 0, steps ? f.step_count_std : 0},
            {steps ? f.dist_mean : 0, steps ? f.dist_std : 0},
            {steps ? f.cal_mean : 0, steps ? f.cal_std : 0},
            {steps ? z(f.stepsize_mean) : 0, steps ? z(f.stepsize_std) : 0},
            {steps ? f.speed_mean : 0, steps ? f.speed_std : 0},
        };
        for (std::size_t i = 0; i < 15; ++i) {
            v[2 * i] = z(pairs[i][0]);
            v[2 * i + 1] = z(pairs[i][1]);
        }
        RowMeta meta{f.subject_id, f.date, f.t_start, f.local_seconds, it->second.label, it->second.split,
                     f.is_sleep, steps, 1};
        m.push_row(std::move(meta), v);
    }
    return m;
}

/// Averages rows sharing a coarser time key. Sleep and awake stay apart at
/// every resolution, so the aggregate segment is exactly the union of the two.
/// Step columns average only over constituents that had step data.
inline FeatureMatrix aggregate_resolution(const FeatureMatrix& m, Resolution target) {
    if (target == Resolution::min5 || target == m.resolution) return m;
    FeatureMatrix out = m.empty_like();
    out.resolution = target;
    out.dropped = m.dropped;
    out.unrecorded = m.unrecorded;

    using Key = std::tuple<std::string, Date, double, bool>;
    std::map<Key, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto& r = m.meta[i];
        if (target == Resolution::min60) {
            const double into_hour = std::fmod(r.local_seconds, 3600.0);
            groups[{r.subject_id, r.date, r.t_start - into_hour, r.is_sleep}].push_back(i);
        } else {
            groups[{r.subject_id, r.date, 0.0, r.is_sleep}].push_back(i);
        }
    }
    const auto step_cols = step_column_indices(m);
    std::vector<bool> is_step(m.dims(), false);
    for (auto c : step_cols) is_step[c] = true;

    std::vector<double> acc(m.dims());
    for (const auto& [key, idx] : groups) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::size_t n_steps = 0, weight = 0;
        for (auto i : idx) {
            const auto row = m.row(i);
            const bool st = m.meta[i].has_steps;
            n_steps += st;
            weight += m.meta[i].weight;
            for (std::size_t c = 0; c < m.dims(); ++c)
                if (!is_step[c] || st) acc[c] += row[c];
        }
        for (std::size_t c = 0; c < m.dims(); ++c) {
            const std::size_t n = is_step[c] ? n_steps : idx.size();
            acc[c] = n ? acc[c] / static_cast<double>(n) : 0.0;
        }
        const auto& first = m.meta[idx.front()];
        RowMeta meta = first;
        meta.has_steps = n_steps > 0;
        meta.weight = weight;
        if (target == Resolution::min60) {
            meta.t_start = std::get<2>(key);
            meta.local_seconds = first.local_seconds - std::fmod(first.local_seconds, 3600.0);
        }  // daily rows keep the time fields of the earliest constituent
        out.push_row(std::move(meta), acc);
    }
    return out;
}

struct DatasetConfig {
    bool require_steps = false;
    bool per_subject_scaling = false;
};

/// Rows of the chosen segment, aggregated to the cell's resolution, with the
/// step columns kept or dropped.
inline FeatureMatrix select_cell(const FeatureMatrix& m5, const ExperimentCell& cell, const DatasetConfig& cfg = {}) {
    FeatureMatrix seg = m5.empty_like();
    seg.dropped = m5.dropped;
    seg.unrecorded = m5.unrecorded;
    for (std::size_t i = 0; i < m5.rows(); ++i) {
        const auto& r = m5.meta[i];
        const bool keep = cell.segment == Segment::aggregate || (cell.segment == Segment::sleep) == r.is_sleep;
        if (keep) seg.push_row(r, m5.row(i));
    }
    FeatureMatrix agg = aggregate_resolution(seg, cell.resolution);

    FeatureMatrix out = agg.empty_like();
    out.dropped = agg.dropped;
    out.unrecorded = agg.unrecorded;
    std::vector<std::size_t> keep_cols;
    for (std::size_t c = 0; c < agg.dims(); ++c)
        if (cell.steps == StepMode::with_step || !is_step_column(agg.columns[c])) keep_cols.push_back(c);
    out.columns.clear();
    for (auto c : keep_cols) out.columns.push_back(agg.columns[c]);
    std::vector<double> v(keep_cols.size());
    for (std::size_t i = 0; i < agg.rows(); ++i) {
        if (cell.steps == StepMode::with_step && cfg.require_steps && !agg.meta[i].has_steps) {
            ++out.dropped;
            continue;
        }
        const auto row = agg.row(i);
        for (std::size_t j = 0; j < keep_cols.size(); ++j) v[j] = row[keep_cols[j]];
        out.push_row(agg.meta[i], v);
    }
    if (out.rows() == 0) throw std::runtime_error("experiment cell '" + cell.tag() + "' selects no rows");
    return out;
}

// ---------------------------------------------------------------------------
// Scaling

struct ColumnStats {
    std::vector<double> mean;
    std::vector<double> std;  // zero-variance columns stored as 1
};

/// Z-score parameters from train-split rows only.
struct Scaler {
    std::vector<std::string> columns;
    ColumnStats global;
    std::map<std::string, ColumnStats> per_subject;  // used when non-empty

    const ColumnStats& for_subject(const std::string& id) const {
        auto it = per_subject.find(id);
        return it == per_subject.end() ? global : it->second;
    }
};

namespace detail {

inline ColumnStats column_stats(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
    const std::size_t d = m.dims();
    ColumnStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    std::vector<bool> is_step(d, false);
    for (auto c : step_column_indices(m)) is_step[c] = true;
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<double> col;
        for (auto i : rows)
            if (!is_step[c] || m.meta[i].has_steps) col.push_back(m.row(i)[c]);
        if (col.empty()) continue;
        // Shifted sums keep a constant column's variance at exactly zero.
        double shift = 0;
        for (double v : col) shift += v - col[0];
        const double mean = col[0] + shift / static_cast<double>(col.size());
        double ss = 0;
        for (double v : col) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(col.size()));
        s.mean[c] = mean;
        s.std[c] = sd > 0 ? sd : 1.0;
    }
    return s;
}

}  // namespace detail

inline Scaler fit_scaler(const FeatureMatrix& m, const DatasetConfig& cfg = {}) {
    Scaler s;
    s.columns = m.columns;
    std::vector<std::size_t> train;
    std::map<std::string, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < m.rows(); ++i)
        if (m.meta[i].split == Split::train) {
            train.push_back(i);
            by_subject[m.meta[i].subject_id].push_back(i);
        }
    s.global = detail::column_stats(m, train);
    if (cfg.per_subject_scaling)
        for (const auto& [id, rows] : by_subject) s.per_subject[id] = detail::column_stats(m, rows);
    return s;
}

/// Column z-scoring; absent step groups are set to zero afterwards.
inline void apply_zscore(FeatureMatrix& m, const Scaler& s) {
    if (s.columns != m.columns) throw std::invalid_argument("scaler columns do not match matrix");
    const auto step_cols = step_column_indices(m);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto& st = s.for_subject(m.meta[i].subject_id);
        auto row = m.row(i);
        for (std::size_t c = 0; c < m.dims(); ++c) row[c] = (row[c] - st.mean[c]) / st.std[c];
        if (!m.meta[i].has_steps)
            for (auto c : step_cols) row[c] = 0.0;
    }
}

/// Scales every row to unit L2 norm. All-zero rows stay zero; returns how many.
inline std::size_t normalize_rows(FeatureMatrix& m) {
    std::size_t zero = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        double ss = 0;
        for (double v : row) ss += v * v;
        if (ss == 0) {
            ++zero;
            continue;
        }
        const double norm = std::sqrt(ss);
        for (double& v : row) v /= norm;
    }
    return zero;
}

struct StandardizeResult {
    FeatureMatrix matrix;
    std::size_t zero_rows = 0;
};

/// Train-statistics z-score followed by per-row unit-norm scaling.
inline StandardizeResult standardize_unit_norm(FeatureMatrix m, const Scaler& s) {
    apply_zscore(m, s);
    const std::size_t zero = normalize_rows(m);
    return {std::move(m), zero};
}

inline nlohmann::json to_json(const Scaler& s) {
    nlohmann::json j;
    j["columns"] = s.columns;
    j["mean"] = s.global.mean;
    j["std"] = s.global.std;
    if (!s.per_subject.empty()) {
        auto& ps = j["per_subject"];
        for (const auto& [id, st] : s.per_subject) ps[id] = {{"mean", st.mean}, {"std", st.std}};
    }
    return j;
}

inline Scaler scaler_from_json(const nlohmann::json& j) {
    Scaler s;
    s.columns = j.at("columns").get<std::vector<std::string>>();
    s.global.mean = j.at("mean").get<std::vector<double>>();
    s.global.std = j.at("std").get<std::vector<double>>();
    if (j.contains("per_subject"))
        for (const auto& [id, st] : j.at("per_subject").items())
            s.per_subject[id] = {st.at("mean").get<std::vector<double>>(), st.at("std").get<std::vector<double>>()};
    return s;
}

/// matrix_<cell>.csv: provenance columns followed by feature columns.
inline void write_matrix_csv(const std::filesystem::path& path, const FeatureMatrix& m) {
    csv::Writer w(path);
    auto& b = w.buf();
    b += "subject_id,date,t_start,label,split,is_sleep,has_steps";
    for (const auto& c : m.columns) b += ',' + c;
    b += '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto& r = m.meta[i];
        b += r.subject_id + ',' + r.date.str() + ',';
        csv::append_double(b, r.t_start);
        b += ',';
        b += to_string(r.label);
        b += ',';
        b += to_string(r.split);
        b += r.is_sleep ? ",1" : ",0";
        b += r.has_steps ? ",1" : ",0";
        for (double v : m.row(i)) {
            b += ',';
            csv::append_double(b, v);
        }
        b += '\n';
        w.maybe_flush();
    }
    w.close();
}

}  // namespace relapse
