#pragma once

// Per-interval feature vectors: movement energy, heart rate, HRV spectrum,
// time of day and step statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "relapse/core.hpp"
#include "relapse/csv.hpp"
#include "relapse/ingest.hpp"
#include "relapse/preprocess.hpp"
#include "relapse/spectral.hpp"

namespace relapse {

/// Feature groups; an interval records which ones could be computed.
enum Presence : std::uint32_t {
    kAcc = 1u << 0,
    kGyro = 1u << 1,
    kHeart = 1u << 2,
    kSpectral = 1u << 3,
    kTime = 1u << 4,
    kSteps = 1u << 5,
};

/// One fixed-width interval. Fields of absent groups are NaN.
struct IntervalFeatures {
    std::string subject_id;
    Date date;              // sleep rows belong to the day their sleep interval started
    double t_start = 0;     // UTC, aligned to local midnight
    bool is_sleep = false;

    double acc_energy = kMissing;
    double gyro_energy = kMissing;
    double bpm_mean = kMissing;
    double hrv_sdnn = kMissing;
    double lf_power = kMissing;
    double hf_power = kMissing;
    double lf_fraction = kMissing;
    double hf_fraction = kMissing;
    double sin_t = kMissing;
    double cos_t = kMissing;
    double step_count = kMissing;
    double dist_mean = kMissing;
    double cal_mean = kMissing;
    double stepsize_mean = kMissing;
    double speed_mean = kMissing;
    std::uint32_t presence = 0;

    // Within-interval spread of the per-sample (or per-event) quantities.
    double acc_energy_std = kMissing;
    double gyro_energy_std = kMissing;
    double bpm_std = kMissing;
    double step_count_std = kMissing;
    double dist_std = kMissing;
    double cal_std = kMissing;
    double stepsize_std = kMissing;
    double speed_std = kMissing;

    double local_seconds = 0;  // seconds from local midnight to t_start

    bool has(std::uint32_t groups) const { return (presence & groups) == groups; }
};

// ---------------------------------------------------------------------------
// Scalar feature operations

namespace detail {

struct MeanStd {
    double mean = 0;
    double std = 0;
    std::size_t n = 0;
};

/// Population mean and standard deviation (two-pass).
inline MeanStd mean_std(std::span<const double> v) {
    MeanStd r;
    r.n = v.size();
    if (v.empty()) return r;
    double s = 0;
    for (double x : v) s += x;
    r.mean = s / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size()));
    return r;
}

}  // namespace detail

/// (1/N) * sum of squared norms over samples with all three axes present.
inline std::optional<double> normalized_energy(std::span<const std::array<double, 3>> samples) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& v : samples) {
        if (is_missing(v[0]) || is_missing(v[1]) || is_missing(v[2])) continue;
        s += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        ++n;
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

struct HeartRate {
    double bpm_mean = 0;
    double hrv_sdnn = 0;
};

/// BPM from the mean RR interval and SDNN as the population std of RR.
/// Missing entries are skipped; needs two present values.
inline std::optional<HeartRate> bpm_and_sdnn(std::span<const double> rr_ms) {
    std::vector<double> present;
    present.reserve(rr_ms.size());
    for (double v : rr_ms)
        if (!is_missing(v)) present.push_back(v);
    if (present.size() < 2) return std::nullopt;
    const auto ms = detail::mean_std(present);
    return HeartRate{60000.0 / ms.mean, ms.std};
}

/// Daily sinusoidal encoding of a timestamp in local time.
inline std::pair<double, double> time_encoding(double t, std::int64_t utc_offset_seconds) {
    const double theta = 2 * std::numbers::pi * seconds_into_local_day(t, utc_offset_seconds) / kSecondsPerDay;
    return {std::sin(theta), std::cos(theta)};
}

/// The part of a step event that falls inside one interval.
struct StepPiece {
    std::int64_t steps = 0;   // apportioned count
    double distance_m = 0;    // apportioned by time overlap
    double calories = 0;
    double stepsize = kMissing;  // of the whole event; NaN when the event has no steps
    double speed = 0;            // of the whole event, m/s
};

/// Splits an event across consecutive intervals of `width` seconds whose
/// boundaries sit at `origin + k * width`. Shares follow the time overlap,
/// rounded to nearest with the rounding remainder given to the first piece,
/// so the counts always add back up to the event total.
inline std::vector<std::pair<std::int64_t, StepPiece>> apportion_event(const StepEvent& e, double origin,
                                                                      double width) {
    std::vector<std::pair<std::int64_t, StepPiece>> pieces;
    const double dur = e.t_end - e.t_start;
    const auto first = static_cast<std::int64_t>(std::floor((e.t_start - origin) / width));
    const double stepsize = e.steps > 0 ? e.distance_m / static_cast<double>(e.steps) : kMissing;
    const double speed = e.distance_m / dur;
    std::vector<double> frac;
    for (std::int64_t k = first;; ++k) {
        const double a = std::max(e.t_start, origin + static_cast<double>(k) * width);
        const double b = std::min(e.t_end, origin + static_cast<double>(k + 1) * width);
        if (a >= e.t_end) break;
        if (b > a) {
            StepPiece p;
            p.distance_m = e.distance_m * (b - a) / dur;
            p.calories = e.calories * (b - a) / dur;
            p.stepsize = stepsize;
            p.speed = speed;
            pieces.emplace_back(k, p);
            frac.push_back((b - a) / dur);
        }
    }
    auto distribute = [&](auto round_fn) {
        std::int64_t rest = e.steps;
        for (std::size_t j = 1; j < pieces.size(); ++j) {
            pieces[j].second.steps = round_fn(static_cast<double>(e.steps) * frac[j]);
            rest -= pieces[j].second.steps;
        }
        pieces[0].second.steps = rest;
        return rest >= 0;
    };
    if (!pieces.empty() && !distribute([](double v) { return std::llround(v); }))
        distribute([](double v) { return static_cast<std::int64_t>(std::floor(v)); });
    return pieces;
}

struct StepFeatures {
    double step_count = 0;
    double dist_mean = 0, cal_mean = 0, stepsize_mean = kMissing, speed_mean = 0;
    double step_count_std = 0, dist_std = 0, cal_std = 0, stepsize_std = kMissing, speed_std = 0;
};

/// Sum of step counts and unweighted means over the contributing pieces.
/// Step size averages only over events with a non-zero step count.
inline std::optional<StepFeatures> step_features(std::span<const StepPiece> pieces) {
    if (pieces.empty()) return std::nullopt;
    std::vector<double> cnt, dist, cal, size, speed;
    for (const auto& p : pieces) {
        cnt.push_back(static_cast<double>(p.steps));
        dist.push_back(p.distance_m);
        cal.push_back(p.calories);
        speed.push_back(p.speed);
        if (!is_missing(p.stepsize)) size.push_back(p.stepsize);
    }
    StepFeatures f;
    double total = 0;
    for (double c : cnt) total += c;
    f.step_count = total;
    f.step_count_std = detail::mean_std(cnt).std;
    const auto d = detail::mean_std(dist), c = detail::mean_std(cal), v = detail::mean_std(speed);
    f.dist_mean = d.mean;
    f.dist_std = d.std;
    f.cal_mean = c.mean;
    f.cal_std = c.std;
    f.speed_mean = v.mean;
    f.speed_std = v.std;
    if (!size.empty()) {
        const auto s = detail::mean_std(size);
        f.stepsize_mean = s.mean;
        f.stepsize_std = s.std;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Interval extraction

enum class PsdSource { rr, bpm };

struct FeatureConfig {
    double interval_seconds = 300;
    BandLimits bands;
    std::size_t welch_segment = 256;
    double welch_overlap = 0.5;
    bool remove_gravity = false;
    PsdSource psd_source = PsdSource::rr;
    double spectral_min_coverage = 0.5;  // fraction of RR rows present in the interval

    void validate() const {
        if (!(interval_seconds > 0) || std::fmod(kSecondsPerDay, interval_seconds) != 0)
            throw std::invalid_argument("features: interval_seconds must divide 86400");
        if (!(bands.lf_lo < bands.lf_hi && bands.lf_hi <= bands.hf_lo && bands.hf_lo < bands.hf_hi))
            throw std::invalid_argument("features: LF/HF bands must be ordered and disjoint");
    }
};

/// Non-overlapping intervals aligned to local midnight for every recorded day
/// (and every day with data). Output ordered by t_start.
inline std::vector<IntervalFeatures> extract_intervals(const SensorStreams& s, const FeatureConfig& cfg) {
    cfg.validate();
    const double width = cfg.interval_seconds;
    const auto off = s.utc_offset_seconds;
    const auto per_day = static_cast<std::int64_t>(kSecondsPerDay / width);
    const double origin = -static_cast<double>(off);  // a local midnight in UTC

    std::vector<Date> dates;
    for (const auto& d : s.days) dates.push_back(d.date);
    auto add_span = [&](double t0, double t1) {
        for (Date d = local_date(t0, off); d <= local_date(t1, off); d.days++) dates.push_back(d);
    };
    if (!s.motion.empty()) add_span(s.motion.front().t, s.motion.back().t);
    if (!s.rr.empty()) add_span(s.rr.front().t, s.rr.back().t);
    std::sort(dates.begin(), dates.end());
    dates.erase(std::unique(dates.begin(), dates.end()), dates.end());

    // Step pieces keyed by global interval index.
    std::vector<std::pair<std::int64_t, StepPiece>> pieces;
    for (const auto& e : s.steps)
        for (auto& p : apportion_event(e, origin, width)) pieces.push_back(std::move(p));
    std::stable_sort(pieces.begin(), pieces.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    const double rr_rate = nominal_rate<RRSample>(s.rr);

    std::vector<IntervalFeatures> out;
    out.reserve(dates.size() * static_cast<std::size_t>(per_day));
    std::size_t mi = 0, ri = 0, pi = 0;
    std::vector<double> e_acc, e_gyro, rr_vals, bpm_vals, series;
    std::vector<StepPiece> here;
    std::array<double, 3> grav{};

    for (const Date day : dates) {
        const double midnight = day.local_midnight_utc(off);
        for (std::int64_t k = 0; k < per_day; ++k) {
            const double a = midnight + static_cast<double>(k) * width;
            const double b = a + width;
            IntervalFeatures f;
            f.subject_id = s.subject_id;
            f.t_start = a;
            f.local_seconds = static_cast<double>(k) * width;
            const SleepInterval* sl = containing_sleep(s.sleep, a + width / 2);
            f.is_sleep = sl != nullptr;
            f.date = sl ? local_date(sl->t_start, off) : day;

            // Motion.
            while (mi < s.motion.size() && s.motion[mi].t < a) ++mi;
            std::size_t mj = mi;
            while (mj < s.motion.size() && s.motion[mj].t < b) ++mj;
            const auto motion = std::span(s.motion).subspan(mi, mj - mi);
            auto energies = [&](double SensorSample::*x, double SensorSample::*y, double SensorSample::*z,
                                std::vector<double>& e) {
                e.clear();
                grav = {0, 0, 0};
                std::size_t n = 0;
                if (cfg.remove_gravity) {
                    for (const auto& m : motion)
                        if (!is_missing(m.*x) && !is_missing(m.*y) && !is_missing(m.*z)) {
                            grav[0] += m.*x;
                            grav[1] += m.*y;
                            grav[2] += m.*z;
                            ++n;
                        }
                    if (n)
                        for (auto& g : grav) g /= static_cast<double>(n);
                }
                for (const auto& m : motion) {
                    if (is_missing(m.*x) || is_missing(m.*y) || is_missing(m.*z)) continue;
                    const double dx = m.*x - grav[0], dy = m.*y - grav[1], dz = m.*z - grav[2];
                    e.push_back(dx * dx + dy * dy + dz * dz);
                }
            };
            energies(&SensorSample::ax, &SensorSample::ay, &SensorSample::az, e_acc);
            if (!e_acc.empty()) {
                const auto ms = detail::mean_std(e_acc);
                f.acc_energy = ms.mean;
                f.acc_energy_std = ms.std;
                f.presence |= kAcc;
            }
            energies(&SensorSample::gx, &SensorSample::gy, &SensorSample::gz, e_gyro);
            if (!e_gyro.empty()) {
                const auto ms = detail::mean_std(e_gyro);
                f.gyro_energy = ms.mean;
                f.gyro_energy_std = ms.std;
                f.presence |= kGyro;
            }
            mi = mj;

            // Heart rate and HRV spectrum.
            while (ri < s.rr.size() && s.rr[ri].t < a) ++ri;
            std::size_t rj = ri;
            while (rj < s.rr.size() && s.rr[rj].t < b) ++rj;
            rr_vals.clear();
            bpm_vals.clear();
            for (std::size_t i = ri; i < rj; ++i)
                if (!is_missing(s.rr[i].rr_ms)) {
                    rr_vals.push_back(s.rr[i].rr_ms);
                    bpm_vals.push_back(60000.0 / s.rr[i].rr_ms);
                }
            if (auto hr = bpm_and_sdnn(rr_vals)) {
                f.bpm_mean = hr->bpm_mean;
                f.hrv_sdnn = hr->hrv_sdnn;
                f.bpm_std = detail::mean_std(bpm_vals).std;
                f.presence |= kHeart;

                const std::size_t rows = rj - ri;
                if (rr_rate > 0 && static_cast<double>(rr_vals.size()) >= cfg.spectral_min_coverage * static_cast<double>(rows)) {
                    const auto& src = cfg.psd_source == PsdSource::rr ? rr_vals : bpm_vals;
                    const double fill = detail::mean_std(src).mean;
                    series.clear();
                    std::size_t p = 0;
                    for (std::size_t i = ri; i < rj; ++i)
                        series.push_back(is_missing(s.rr[i].rr_ms) ? fill : src[p++]);
                    const auto psd = welch_psd(series, rr_rate, cfg.welch_segment, cfg.welch_overlap);
                    if (psd.freqs.back() >= cfg.bands.hf_hi) {
                        const auto bp = band_powers(psd, cfg.bands);
                        if (bp.lf_fraction) {
                            f.lf_power = bp.lf_power;
                            f.hf_power = bp.hf_power;
                            f.lf_fraction = *bp.lf_fraction;
                            f.hf_fraction = *bp.hf_fraction;
                            f.presence |= kSpectral;
                        }
                    }
                }
            }
            ri = rj;

            // Time of day.
            std::tie(f.sin_t, f.cos_t) = time_encoding(a, off);
            f.presence |= kTime;

            // Steps.
            const std::int64_t g = static_cast<std::int64_t>(std::llround((a - origin) / width));
            while (pi < pieces.size() && pieces[pi].first < g) ++pi;
            here.clear();
            while (pi < pieces.size() && pieces[pi].first == g) here.push_back(pieces[pi++].second);
            if (auto st = step_features(here)) {
                f.step_count = st->step_count;
                f.dist_mean = st->dist_mean;
                f.cal_mean = st->cal_mean;
                f.stepsize_mean = st->stepsize_mean;
                f.speed_mean = st->speed_mean;
                f.step_count_std = st->step_count_std;
                f.dist_std = st->dist_std;
                f.cal_std = st->cal_std;
                f.stepsize_std = st->stepsize_std;
                f.speed_std = st->speed_std;
                f.presence |= kSteps;
            }
            out.push_back(std::move(f));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// features_5min.csv

inline const std::vector<std::string_view>& feature_csv_header() {
    static const std::vector<std::string_view> h = {
        "subject_id", "date", "t_start", "is_sleep", "acc_energy", "gyro_energy", "bpm_mean", "hrv_sdnn",
        "lf_power", "hf_power", "lf_fraction", "hf_fraction", "sin_t", "cos_t", "step_count", "dist_mean",
        "cal_mean", "stepsize_mean", "speed_mean", "presence", "acc_energy_std", "gyro_energy_std", "bpm_std",
        "step_count_std", "dist_std", "cal_std", "stepsize_std", "speed_std", "local_seconds"};
    return h;
}

namespace detail {
inline std::array<double IntervalFeatures::*, 24> feature_csv_numeric() {
    using F = IntervalFeatures;
    return {&F::acc_energy,     &F::gyro_energy,     &F::bpm_mean,    &F::hrv_sdnn,       &F::lf_power,
            &F::hf_power,       &F::lf_fraction,     &F::hf_fraction, &F::sin_t,          &F::cos_t,
            &F::step_count,     &F::dist_mean,       &F::cal_mean,    &F::stepsize_mean,  &F::speed_mean,
            nullptr,            &F::acc_energy_std,  &F::gyro_energy_std, &F::bpm_std,    &F::step_count_std,
            &F::dist_std,       &F::cal_std,         &F::stepsize_std, &F::speed_std};
}
}  // namespace detail

inline void append_features_csv(std::string& b, const IntervalFeatures& f) {
    b += f.subject_id;
    b += ',';
    b += f.date.str();
    b += ',';
    csv::append_double(b, f.t_start);
    b += f.is_sleep ? ",1" : ",0";
    for (auto m : detail::feature_csv_numeric()) {
        b += ',';
        if (m)
            csv::append_double(b, f.*m);
        else
            csv::append_int(b, f.presence);
    }
    b += ',';
    csv::append_double(b, f.local_seconds);
    b += '\n';
}

inline void write_features_csv(const std::filesystem::path& path, std::span<const IntervalFeatures> rows) {
    csv::Writer w(path);
    auto& b = w.buf();
    for (std::size_t i = 0; i < feature_csv_header().size(); ++i) {
        if (i) b += ',';
        b += feature_csv_header()[i];
    }
    b += '\n';
    for (const auto& f : rows) {
        append_features_csv(b, f);
        w.maybe_flush();
    }
    w.close();
}

inline std::vector<IntervalFeatures> read_features_csv(const std::filesystem::path& path) {
    csv::Reader r(path);
    const std::string name = path.filename().string();
    csv::expect_header(r, feature_csv_header(), name);
    std::vector<IntervalFeatures> out;
    const auto numeric = detail::feature_csv_numeric();
    while (r.next()) {
        const auto& fl = r.fields();
        auto bad = [&](const char* why) {
            return DataContractError("'" + name + "' line " + std::to_string(r.line_no()) + ": " + why);
        };
        if (fl.size() != feature_csv_header().size()) throw bad("wrong field count");
        IntervalFeatures f;
        f.subject_id = std::string(csv::trim(fl[0]));
        f.date = Date::parse(csv::trim(fl[1]));
        auto t = csv::parse_double(fl[2], false);
        if (!t) throw bad("bad t_start");
        f.t_start = *t;
        f.is_sleep = csv::trim(fl[3]) == "1";
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            if (!numeric[i]) {
                auto p = csv::parse_int(fl[4 + i]);
                if (!p || *p < 0) throw bad("bad presence");
                f.presence = static_cast<std::uint32_t>(*p);
                continue;
            }
            auto v = csv::parse_double(fl[4 + i], true);
            if (!v) throw bad("unparseable value");
            f.*numeric[i] = *v;
        }
        auto ls = csv::parse_double(fl.back(), false);
        if (!ls) throw bad("bad local_seconds");
        f.local_seconds = *ls;
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace relapse
