#pragma once

// Canonical per-subject data schema, the CSV directory layout, and the
// sleep/awake and calendar-day views over a loaded subject.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "relapse/core.hpp"
#include "relapse/csv.hpp"

namespace relapse {

/// One motion sample. Channels are NaN when missing.
struct SensorSample {
    double t = 0;                      // UTC seconds
    double ax = 0, ay = 0, az = 0;     // g
    double gx = 0, gy = 0, gz = 0;     // deg/s

    bool operator==(const SensorSample&) const = default;
};

struct RRSample {
    double t = 0;
    double rr_ms = 0;  // NaN when missing

    bool operator==(const RRSample&) const = default;
};

struct StepEvent {
    double t_start = 0, t_end = 0;
    std::int64_t steps = 0;
    double distance_m = 0;
    double calories = 0;

    bool operator==(const StepEvent&) const = default;
};

/// Half-open [t_start, t_end).
struct SleepInterval {
    double t_start = 0, t_end = 0;

    bool operator==(const SleepInterval&) const = default;
};

struct DayRecord {
    std::string subject_id;
    Date date;
    Label label = Label::unlabeled;
    Split split = Split::test;

    bool operator==(const DayRecord&) const = default;
};

/// Everything recorded for one subject. Streams are sorted by time, sleep
/// intervals are disjoint. Treated as immutable once loaded.
struct SensorStreams {
    std::string subject_id;
    std::int64_t utc_offset_seconds = 0;
    std::vector<SensorSample> motion;
    std::vector<RRSample> rr;
    std::vector<StepEvent> steps;
    std::vector<SleepInterval> sleep;
    std::vector<DayRecord> days;

    const DayRecord* find_day(Date d) const {
        auto it = std::lower_bound(days.begin(), days.end(), d,
                                   [](const DayRecord& r, Date x) { return r.date < x; });
        return (it != days.end() && it->date == d) ? &*it : nullptr;
    }
};

namespace files {
inline constexpr const char* motion = "motion.csv";
inline constexpr const char* rr = "rr.csv";
inline constexpr const char* steps = "steps.csv";
inline constexpr const char* sleep = "sleep.csv";
inline constexpr const char* days = "days.csv";
}  // namespace files

struct LoadWarning {
    std::string file;
    std::size_t line = 0;
    std::string reason;
};

struct FileStats {
    std::size_t rows = 0;        // accepted
    std::size_t rejected = 0;
    std::size_t inversions = 0;  // out-of-order rows seen while reading
};

struct LoadReport {
    std::map<std::string, FileStats> files;
    std::size_t merged_sleep_intervals = 0;
    std::vector<LoadWarning> warnings;

    std::size_t rejected_rows() const {
        std::size_t n = 0;
        for (const auto& [_, s] : files) n += s.rejected;
        return n;
    }
    std::size_t inversions() const {
        std::size_t n = 0;
        for (const auto& [_, s] : files) n += s.inversions;
        return n;
    }
};

struct LoadedSubject {
    SensorStreams streams;
    LoadReport report;
};

/// Merges overlapping or touching intervals; output sorted and disjoint.
inline std::vector<SleepInterval> normalize_sleep(std::vector<SleepInterval> in,
                                                  std::size_t* merged = nullptr) {
    std::sort(in.begin(), in.end(),
              [](const SleepInterval& a, const SleepInterval& b) { return a.t_start < b.t_start; });
    std::vector<SleepInterval> out;
    for (const auto& s : in) {
        if (!out.empty() && s.t_start <= out.back().t_end) {
            out.back().t_end = std::max(out.back().t_end, s.t_end);
            if (merged) ++*merged;
        } else {
            out.push_back(s);
        }
    }
    return out;
}

namespace detail {

template <class Row>
void sort_by_time(std::vector<Row>& rows, FileStats& stats, std::vector<LoadWarning>& warnings,
                  const std::string& file, double Row::*key) {
    std::stable_sort(rows.begin(), rows.end(),
                     [key](const Row& a, const Row& b) { return a.*key < b.*key; });
    // Timestamps must be strictly increasing; keep the first of any duplicate.
    std::size_t w = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (w > 0 && rows[r].*key == rows[w - 1].*key) {
            ++stats.rejected;
            warnings.push_back({file, 0, "duplicate timestamp dropped"});
            continue;
        }
        rows[w++] = rows[r];
    }
    rows.resize(w);
    stats.rows = rows.size();
}

}  // namespace detail

struct LoadOptions {
    std::int64_t utc_offset_seconds = 0;
};

/// Reads and validates the five per-subject CSV files in `dir`. Bad rows are
/// rejected and reported; a missing file or a wrong header is fatal.
inline LoadedSubject load_subject(const std::filesystem::path& dir, const LoadOptions& opts = {}) {
    namespace fs = std::filesystem;
    LoadedSubject out;
    auto& s = out.streams;
    auto& rep = out.report;
    s.subject_id = dir.filename().string();
    if (s.subject_id.empty()) s.subject_id = dir.parent_path().filename().string();
    s.utc_offset_seconds = opts.utc_offset_seconds;

    for (const char* f : {files::motion, files::rr, files::steps, files::sleep, files::days})
        if (!fs::exists(dir / f))
            throw DataContractError("missing required file '" + (dir / f).string() + "'");

    auto reject = [&](const char* file, std::size_t line, std::string why) {
        ++rep.files[file].rejected;
        rep.warnings.push_back({file, line, std::move(why)});
    };

    {
        csv::Reader r(dir / files::motion);
        csv::expect_header(r, {"t", "ax", "ay", "az", "gx", "gy", "gz"}, files::motion);
        auto& st = rep.files[files::motion];
        double prev = -std::numeric_limits<double>::infinity();
        while (r.next()) {
            const auto& f = r.fields();
            if (f.size() != 7) {
                reject(files::motion, r.line_no(), "expected 7 fields");
                continue;
            }
            auto t = csv::parse_double(f[0], false);
            std::array<double, 6> ch{};
            bool ok = t.has_value();
            for (std::size_t i = 0; ok && i < 6; ++i) {
                auto v = csv::parse_double(f[i + 1], true);
                ok = v.has_value();
                if (ok) ch[i] = *v;
            }
            if (!ok) {
                reject(files::motion, r.line_no(), "unparseable value");
                continue;
            }
            if (*t < prev) ++st.inversions;
            prev = *t;
            s.motion.push_back({*t, ch[0], ch[1], ch[2], ch[3], ch[4], ch[5]});
        }
        if (st.inversions)
            rep.warnings.push_back({files::motion, 0,
                                    std::to_string(st.inversions) + " out-of-order rows re-sorted"});
        detail::sort_by_time(s.motion, st, rep.warnings, files::motion, &SensorSample::t);
    }
    {
        csv::Reader r(dir / files::rr);
        csv::expect_header(r, {"t", "rr_ms"}, files::rr);
        auto& st = rep.files[files::rr];
        double prev = -std::numeric_limits<double>::infinity();
        while (r.next()) {
            const auto& f = r.fields();
            if (f.size() != 2) {
                reject(files::rr, r.line_no(), "expected 2 fields");
                continue;
            }
            auto t = csv::parse_double(f[0], false);
            auto v = csv::parse_double(f[1], true);
            if (!t || !v) {
                reject(files::rr, r.line_no(), "unparseable value");
                continue;
            }
            if (!is_missing(*v) && *v <= 0) {
                reject(files::rr, r.line_no(), "rr_ms must be positive");
                continue;
            }
            if (*t < prev) ++st.inversions;
            prev = *t;
            s.rr.push_back({*t, *v});
        }
        if (st.inversions)
            rep.warnings.push_back({files::rr, 0,
                                    std::to_string(st.inversions) + " out-of-order rows re-sorted"});
        detail::sort_by_time(s.rr, st, rep.warnings, files::rr, &RRSample::t);
    }
    {
        csv::Reader r(dir / files::steps);
        csv::expect_header(r, {"t_start", "t_end", "steps", "distance_m", "calories"}, files::steps);
        auto& st = rep.files[files::steps];
        double prev = -std::numeric_limits<double>::infinity();
        while (r.next()) {
            const auto& f = r.fields();
            if (f.size() != 5) {
                reject(files::steps, r.line_no(), "expected 5 fields");
                continue;
            }
            auto a = csv::parse_double(f[0], false);
            auto b = csv::parse_double(f[1], false);
            auto n = csv::parse_int(f[2]);
            auto d = csv::parse_double(f[3], false);
            auto c = csv::parse_double(f[4], false);
            if (!a || !b || !n || !d || !c) {
                reject(files::steps, r.line_no(), "unparseable value");
                continue;
            }
            if (!(*b > *a) || *n < 0 || *d < 0 || *c < 0) {
                reject(files::steps, r.line_no(), "step event violates t_end > t_start or non-negativity");
                continue;
            }
            if (*a < prev) ++st.inversions;
            prev = *a;
            s.steps.push_back({*a, *b, *n, *d, *c});
        }
        std::stable_sort(s.steps.begin(), s.steps.end(),
                         [](const StepEvent& x, const StepEvent& y) { return x.t_start < y.t_start; });
        st.rows = s.steps.size();
    }
    {
        csv::Reader r(dir / files::sleep);
        csv::expect_header(r, {"t_start", "t_end"}, files::sleep);
        auto& st = rep.files[files::sleep];
        std::vector<SleepInterval> raw;
        while (r.next()) {
            const auto& f = r.fields();
            if (f.size() != 2) {
                reject(files::sleep, r.line_no(), "expected 2 fields");
                continue;
            }
            auto a = csv::parse_double(f[0], false);
            auto b = csv::parse_double(f[1], false);
            if (!a || !b || !(*b > *a)) {
                reject(files::sleep, r.line_no(), "invalid sleep interval");
                continue;
            }
            if (!raw.empty() && *a < raw.back().t_start) ++st.inversions;
            raw.push_back({*a, *b});
        }
        st.rows = raw.size();
        s.sleep = normalize_sleep(std::move(raw), &rep.merged_sleep_intervals);
        if (rep.merged_sleep_intervals)
            rep.warnings.push_back({files::sleep, 0,
                                    std::to_string(rep.merged_sleep_intervals) +
                                        " overlapping sleep intervals merged"});
    }
    {
        csv::Reader r(dir / files::days);
        csv::expect_header(r, {"date", "label", "split"}, files::days);
        auto& st = rep.files[files::days];
        while (r.next()) {
            const auto& f = r.fields();
            if (f.size() != 3) {
                reject(files::days, r.line_no(), "expected 3 fields");
                continue;
            }
            DayRecord rec;
            rec.subject_id = s.subject_id;
            try {
                rec.date = Date::parse(csv::trim(f[0]));
                rec.label = parse_label(csv::trim(f[1]));
                rec.split = parse_split(csv::trim(f[2]));
            } catch (const DataContractError& e) {
                reject(files::days, r.line_no(), e.what());
                continue;
            }
            if (rec.split == Split::train && rec.label == Label::relapse) {
                reject(files::days, r.line_no(), "train split day labelled relapse");
                continue;
            }
            s.days.push_back(std::move(rec));
        }
        std::stable_sort(s.days.begin(), s.days.end(),
                         [](const DayRecord& a, const DayRecord& b) { return a.date < b.date; });
        auto dup = std::unique(s.days.begin(), s.days.end(),
                               [](const DayRecord& a, const DayRecord& b) { return a.date == b.date; });
        if (dup != s.days.end()) {
            const auto n = static_cast<std::size_t>(std::distance(dup, s.days.end()));
            st.rejected += n;
            rep.warnings.push_back({files::days, 0, std::to_string(n) + " duplicate dates dropped"});
            s.days.erase(dup, s.days.end());
        }
        st.rows = s.days.size();
    }
    return out;
}

/// Writes `s` in the canonical directory layout (inverse of load_subject).
inline void write_subject(const SensorStreams& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        csv::Writer w(dir / files::motion);
        auto& b = w.buf();
        b += "t,ax,ay,az,gx,gy,gz\n";
        for (const auto& m : s.motion) {
            csv::append_double(b, m.t);
            for (double v : {m.ax, m.ay, m.az, m.gx, m.gy, m.gz}) {
                b += ',';
                csv::append_double(b, v);
            }
            b += '\n';
            w.maybe_flush();
        }
        w.close();
    }
    {
        csv::Writer w(dir / files::rr);
        auto& b = w.buf();
        b += "t,rr_ms\n";
        for (const auto& r : s.rr) {
            csv::append_double(b, r.t);
            b += ',';
            csv::append_double(b, r.rr_ms);
            b += '\n';
            w.maybe_flush();
        }
        w.close();
    }
    {
        std::string b = "t_start,t_end,steps,distance_m,calories\n";
        for (const auto& e : s.steps) {
            csv::append_double(b, e.t_start);
            b += ',';
            csv::append_double(b, e.t_end);
            b += ',';
            csv::append_int(b, e.steps);
            b += ',';
            csv::append_double(b, e.distance_m);
            b += ',';
            csv::append_double(b, e.calories);
            b += '\n';
        }
        csv::write_file(dir / files::steps, b);
    }
    {
        std::string b = "t_start,t_end\n";
        for (const auto& e : s.sleep) {
            csv::append_double(b, e.t_start);
            b += ',';
            csv::append_double(b, e.t_end);
            b += '\n';
        }
        csv::write_file(dir / files::sleep, b);
    }
    {
        std::string b = "date,label,split\n";
        for (const auto& d : s.days) {
            b += d.date.str();
            b += ',';
            b += to_string(d.label);
            b += ',';
            b += to_string(d.split);
            b += '\n';
        }
        csv::write_file(dir / files::days, b);
    }
}

enum class SleepState { awake, sleep };

/// The sleep interval containing `t`, if any. Intervals must be normalized.
inline const SleepInterval* containing_sleep(std::span<const SleepInterval> sleep, double t) {
    auto it = std::upper_bound(sleep.begin(), sleep.end(), t,
                               [](double x, const SleepInterval& s) { return x < s.t_start; });
    if (it == sleep.begin()) return nullptr;
    --it;
    return (t >= it->t_start && t < it->t_end) ? &*it : nullptr;
}

inline SleepState sleep_mask(const SensorStreams& s, double t) {
    return containing_sleep(s.sleep, t) ? SleepState::sleep : SleepState::awake;
}

/// Per-day views into a subject's streams. Spans point into the parent
/// SensorStreams, which must outlive the partition.
struct DayStreams {
    std::span<const SensorSample> motion;
    std::span<const RRSample> rr;
    std::span<const StepEvent> steps;   // by start time
    std::span<const SleepInterval> sleep;  // by start time
    const DayRecord* record = nullptr;

    std::size_t sample_count() const { return motion.size() + rr.size() + steps.size() + sleep.size(); }
};

/// Splits streams at local midnight. Events and sleep intervals belong to the
/// day on which they start. Every DayRecord gets an entry, even without data.
inline std::map<DayKey, DayStreams> partition_days(const SensorStreams& s) {
    std::map<DayKey, DayStreams> out;
    const auto off = s.utc_offset_seconds;
    for (const auto& d : s.days) out[{s.subject_id, d.date}].record = &d;

    auto assign = [&](auto const& vec, auto time_of, auto member) {
        using Elem = typename std::decay_t<decltype(vec)>::value_type;
        std::size_t i = 0;
        while (i < vec.size()) {
            const Date day = local_date(time_of(vec[i]), off);
            const double next_midnight = Date{day.days + 1}.local_midnight_utc(off);
            std::size_t j = i;
            while (j < vec.size() && time_of(vec[j]) < next_midnight) ++j;
            auto& entry = out[{s.subject_id, day}];
            entry.*member = std::span<const Elem>(vec.data() + i, j - i);
            if (!entry.record) entry.record = s.find_day(day);
            i = j;
        }
    };
    assign(s.motion, [](const SensorSample& x) { return x.t; }, &DayStreams::motion);
    assign(s.rr, [](const RRSample& x) { return x.t; }, &DayStreams::rr);
    assign(s.steps, [](const StepEvent& x) { return x.t_start; }, &DayStreams::steps);
    assign(s.sleep, [](const SleepInterval& x) { return x.t_start; }, &DayStreams::sleep);
    return out;
}

}  // namespace relapse
