#pragma once

// Seeded generator of wearable recordings with relapse-night anomalies.
// Output follows the ingest directory layout plus ground_truth.json.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relapse/core.hpp"
#include "relapse/csv.hpp"
#include "relapse/ingest.hpp"

namespace relapse {

/// Effects applied to the sleep period of a relapse day.
struct AnomalyProfile {
    double sleep_hr_shift = 0.3;           // night-mean HR shift in units of the subject's HR std
    double sleep_fragmentation = 4.0;      // extra restless episodes per night
    double activity_var_multiplier = 2.0;  // motion variance factor inside relapse episodes
    double lf_hf_shift = 3.0;              // LF/HF amplitude ratio factor inside relapse episodes
    double arousal_hr_swing = 2.0;         // HR std added in a relapse episode and removed in its rebound
    double awake_leak = 0.0;               // share of the effects that also reaches awake hours

    void validate() const {
        if (!(sleep_hr_shift > 0 && sleep_fragmentation > 0 && activity_var_multiplier > 0 && lf_hf_shift > 0 &&
              arousal_hr_swing >= 0))
            throw std::invalid_argument("anomaly profile: all multipliers must be > 0");
        if (!(awake_leak >= 0 && awake_leak <= 1)) throw std::invalid_argument("anomaly profile: awake_leak in [0, 1]");
    }
};

struct GenConfig {
    std::size_t n_subjects = 10;
    std::size_t n_days = 180;
    double relapse_fraction = 0.1;
    std::uint64_t seed = 42;
    double motion_hz = 20.0;
    double rr_hz = 5.0;
    double missing_fraction = 0.02;        // share of time in 5-30 min gaps, per channel
    double missing_sleep_fraction = 0.02;  // nights without a recorded sleep interval
    std::int64_t utc_offset_seconds = 0;
    std::string start_date = "2022-01-03";
    bool hide_test_labels = true;          // test days written as unlabeled
    AnomalyProfile anomaly;

    void validate() const {
        if (n_subjects < 1 || n_days < 5) throw std::invalid_argument("gen: need n_subjects >= 1 and n_days >= 5");
        if (!(relapse_fraction >= 0 && relapse_fraction < 0.5))
            throw std::invalid_argument("gen: relapse_fraction must lie in [0, 0.5)");
        if (!(motion_hz > 0 && rr_hz > 0)) throw std::invalid_argument("gen: sampling rates must be > 0");
        if (!(missing_fraction >= 0 && missing_fraction < 0.5))
            throw std::invalid_argument("gen: missing_fraction must lie in [0, 0.5)");
        if (!(missing_sleep_fraction >= 0 && missing_sleep_fraction <= 1))
            throw std::invalid_argument("gen: missing_sleep_fraction must lie in [0, 1]");
        Date::parse(start_date);
        anomaly.validate();
    }
};

/// Per-subject physiology constants.
struct SubjectParams {
    double hr_sleep_mean = 60;   // bpm
    double hr_awake_offset = 15; // bpm above sleep
    double hr_sigma = 3;         // stationary std of the HR fluctuation, bpm
    double lf_sleep_ms = 15, hf_sleep_ms = 30;
    double lf_awake_ms = 30, hf_awake_ms = 15;
    double sleep_start_hour = 22.5;
    double stride_m = 0.72;
    double cadence_spm = 105;
};

struct Interval {
    double t0 = 0, t1 = 0;
};

struct Episode {
    double t0 = 0, t1 = 0;
    bool relapse = false;  // carries the relapse effects; otherwise an ordinary arousal
    double rebound_end() const { return relapse ? 2 * t1 - t0 : t1; }  // relapse episodes rebound for as long
};

struct NightPlan {
    double start = 0, end = 0;
    bool recorded = true;
    bool relapse = false;
    double hr_offset_bpm = 0;      // nightly wander
    double relapse_shift_bpm = 0;  // night-mean HR shift, delivered as surges in relapse episodes
    double surge_bpm = 0;          // HR added inside each relapse episode
    double swing_bpm = 0;          // extra HR inside a relapse episode, removed again in its rebound
    double motion_var_mult = 1;
    double lf_hf_mult = 1;
    std::vector<Episode> episodes;
};

struct DayPlan {
    Date date;
    Label label = Label::normal;  // true label
    Split split = Split::train;
    NightPlan night;              // the sleep period starting this evening
    std::vector<StepEvent> steps;
    std::vector<Interval> motion_gaps, rr_gaps;
};

struct SubjectPlan {
    std::string subject_id;
    std::uint64_t seed = 0;
    SubjectParams params;
    std::vector<DayPlan> days;
};

inline std::string subject_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subject_%02zu", i + 1);
    return buf;
}

namespace detail {

inline double uniform(std::mt19937_64& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

inline bool bernoulli(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

inline std::size_t fractional_count(std::mt19937_64& rng, double mean) {
    const double fl = std::floor(mean);
    return static_cast<std::size_t>(fl) + (bernoulli(rng, mean - fl) ? 1 : 0);
}

template <class Span>
bool overlaps(const std::vector<Span>& v, double a, double b, double pad) {
    for (const auto& i : v)
        if (a < i.t1 + pad && b > i.t0 - pad) return true;
    return false;
}

}  // namespace detail

/// Labels, schedules, events and gaps for one subject. No samples yet.
inline SubjectPlan plan_subject(const GenConfig& cfg, std::size_t index) {
    using detail::uniform;
    SubjectPlan p;
    p.subject_id = subject_name(index);
    p.seed = derive_seed(cfg.seed, index);
    std::mt19937_64 rng(p.seed);
    auto& sp = p.params;
    sp.hr_sleep_mean = uniform(rng, 55, 75);
    sp.hr_awake_offset = uniform(rng, 12, 20);
    sp.hr_sigma = uniform(rng, 2.5, 4.0);
    sp.lf_sleep_ms = uniform(rng, 10, 20);
    sp.hf_sleep_ms = uniform(rng, 25, 40);
    sp.lf_awake_ms = uniform(rng, 25, 40);
    sp.hf_awake_ms = uniform(rng, 10, 20);
    sp.sleep_start_hour = uniform(rng, 22.0, 23.0);
    sp.stride_m = uniform(rng, 0.65, 0.80);
    sp.cadence_spm = uniform(rng, 95, 120);

    const std::size_t n = cfg.n_days;
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    const std::size_t n_test = n - n_train - n_val;
    const auto n_rel = static_cast<std::size_t>(std::llround(cfg.relapse_fraction * static_cast<double>(n)));
    const std::size_t rel_val = std::min(n_val, (n_rel + 1) / 2);
    const std::size_t rel_test = std::min(n_test, n_rel - std::min(n_rel, rel_val));

    const Date first = Date::parse(cfg.start_date);
    const double origin = first.local_midnight_utc(cfg.utc_offset_seconds);
    const double data_end = origin + static_cast<double>(n) * kSecondsPerDay;
    p.days.resize(n);
    for (std::size_t d = 0; d < n; ++d) {
        auto& day = p.days[d];
        day.date = Date{first.days + static_cast<std::int32_t>(d)};
        day.split = d < n_train ? Split::train : d < n_train + n_val ? Split::validation : Split::test;
    }
    // One contiguous relapse episode inside validation and one inside test.
    auto place = [&](std::size_t begin, std::size_t len, std::size_t count) {
        if (!count) return;
        const auto start = begin + std::uniform_int_distribution<std::size_t>(0, len - count)(rng);
        for (std::size_t d = start; d < start + count; ++d) p.days[d].label = Label::relapse;
    };
    place(n_train, n_val, rel_val);
    place(n_train + n_val, n_test, rel_test);

    const auto& an = cfg.anomaly;
    for (std::size_t d = 0; d < n; ++d) {
        auto& day = p.days[d];
        const double midnight = origin + static_cast<double>(d) * kSecondsPerDay;
        auto& night = day.night;
        night.start = midnight + 3600.0 * (sp.sleep_start_hour + uniform(rng, -0.75, 0.75));
        night.end = std::min(data_end, night.start + 3600.0 * uniform(rng, 6.0, 9.0));
        night.recorded = !detail::bernoulli(rng, cfg.missing_sleep_fraction);
        night.relapse = day.label == Label::relapse;
        night.hr_offset_bpm = std::normal_distribution<double>(0, 0.3 * sp.hr_sigma)(rng);
        const std::size_t n_ordinary = detail::fractional_count(rng, uniform(rng, 1.0, 5.0));
        std::size_t n_episodes = n_ordinary;
        if (night.relapse) {
            night.motion_var_mult = an.activity_var_multiplier;
            night.lf_hf_mult = an.lf_hf_shift;
            night.swing_bpm = an.arousal_hr_swing * sp.hr_sigma;
            n_episodes += std::max<std::size_t>(1, detail::fractional_count(rng, an.sleep_fragmentation));
        }
        for (std::size_t e = 0, tries = 0; e < n_episodes && tries < 50; ++tries) {
            const Episode probe{0, 60.0 * uniform(rng, 5, 15), e >= n_ordinary};
            const double span = probe.rebound_end();
            if (night.end - night.start < span + 1800) break;
            const double a = uniform(rng, night.start + 900, night.end - span - 900);
            const bool clash = std::any_of(night.episodes.begin(), night.episodes.end(), [&](const Episode& x) {
                return a < x.rebound_end() + 300 && a + span > x.t0 - 300;
            });
            if (clash) continue;
            night.episodes.push_back({a, a + probe.t1, probe.relapse});
            ++e;
        }
        std::sort(night.episodes.begin(), night.episodes.end(), [](auto& x, auto& y) { return x.t0 < y.t0; });
        if (night.relapse) {
            // Surges sized so the mean over the night rises by sleep_hr_shift std.
            night.relapse_shift_bpm = an.sleep_hr_shift * sp.hr_sigma;
            double inside = 0;
            for (const auto& e : night.episodes)
                if (e.relapse) inside += e.t1 - e.t0;
            if (inside > 0) night.surge_bpm = night.relapse_shift_bpm * (night.end - night.start) / inside;
        }

        // Walks fall between this morning's wake-up and this evening's bedtime.
        const double wake = d > 0 ? p.days[d - 1].night.end : midnight + 7 * 3600.0;
        const double lo = wake + 1800, hi = night.start - 1800;
        std::vector<Interval> taken;
        const std::size_t n_walks = 3 + std::uniform_int_distribution<std::size_t>(0, 5)(rng);
        for (std::size_t w = 0, tries = 0; w < n_walks && tries < 100; ++tries) {
            const double len = 60.0 * uniform(rng, 2, 30);
            if (hi - lo < len) break;
            const double a = std::floor(uniform(rng, lo, hi - len));
            if (detail::overlaps(taken, a, a + len, 120)) continue;
            taken.push_back({a, a + len});
            ++w;
        }
        std::sort(taken.begin(), taken.end(), [](auto& x, auto& y) { return x.t0 < y.t0; });
        for (const auto& w : taken) {
            StepEvent e;
            e.t_start = w.t0;
            e.t_end = w.t0 + std::round(w.t1 - w.t0);
            e.steps = std::llround(sp.cadence_spm / 60.0 * (e.t_end - e.t_start) * uniform(rng, 0.8, 1.0));
            e.distance_m = static_cast<double>(e.steps) * sp.stride_m * uniform(rng, 0.9, 1.1);
            e.calories = static_cast<double>(e.steps) * 0.045;
            day.steps.push_back(e);
        }

        auto gaps = [&](std::vector<Interval>& out) {
            const std::size_t k = detail::fractional_count(rng, cfg.missing_fraction * kSecondsPerDay / 1050.0);
            for (std::size_t g = 0; g < k; ++g) {
                const double len = 60.0 * uniform(rng, 5, 30);
                const double a = uniform(rng, midnight, midnight + kSecondsPerDay - len);
                if (!detail::overlaps(out, a, a + len, 3600)) out.push_back({a, a + len});
            }
            std::sort(out.begin(), out.end(), [](auto& x, auto& y) { return x.t0 < y.t0; });
        };
        gaps(day.motion_gaps);
        gaps(day.rr_gaps);
    }
    return p;
}

namespace detail {

enum class Activity { awake, walk, sleep, restless, relapse_episode, rebound };

struct Span {
    double t0, t1;
    Activity kind;
    std::size_t night;  // owning night for sleep and restless spans
    std::array<double, 3> gravity;
};

/// Non-overlapping sorted spans; anything uncovered is plain awake time.
inline std::vector<Span> build_timeline(const SubjectPlan& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Span> out;
    std::normal_distribution<double> nd(0, 1);
    auto posture = [&] {
        std::array<double, 3> g{nd(rng), nd(rng), 0.3 * nd(rng)};
        const double n = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        for (auto& v : g) v /= n;
        return g;
    };
    for (std::size_t d = 0; d < p.days.size(); ++d) {
        const auto& day = p.days[d];
        for (const auto& e : day.steps) out.push_back({e.t_start, e.t_end, Activity::walk, 0, {0, 0, 1}});
        const auto& night = day.night;
        double t = night.start;
        auto g = posture();
        for (const auto& ep : night.episodes) {
            out.push_back({t, ep.t0, Activity::sleep, d, g});
            out.push_back({ep.t0, ep.t1, ep.relapse ? Activity::relapse_episode : Activity::restless, d, g});
            g = posture();
            if (ep.relapse) out.push_back({ep.t1, ep.rebound_end(), Activity::rebound, d, g});
            t = ep.rebound_end();
        }
        out.push_back({t, night.end, Activity::sleep, d, g});
    }
    std::sort(out.begin(), out.end(), [](const Span& a, const Span& b) { return a.t0 < b.t0; });
    return out;
}

class Cursor {
public:
    explicit Cursor(const std::vector<Span>& spans) : s_(spans) {}

    /// Span covering t, or nullptr for awake time. Calls must be non-decreasing in t.
    const Span* at(double t) {
        while (i_ < s_.size() && s_[i_].t1 <= t) ++i_;
        return (i_ < s_.size() && s_[i_].t0 <= t) ? &s_[i_] : nullptr;
    }

private:
    const std::vector<Span>& s_;
    std::size_t i_ = 0;
};

inline bool in_gaps(const std::vector<Interval>& gaps, double t) {
    for (const auto& g : gaps)
        if (t >= g.t0 && t < g.t1) return true;
    return false;
}

}  // namespace detail

/// Produces samples day by day. Days must be requested in order.
class SubjectSimulator {
public:
    SubjectSimulator(const GenConfig& cfg, SubjectPlan plan)
        : cfg_(cfg),
          plan_(std::move(plan)),
          timeline_(detail::build_timeline(plan_, derive_seed(plan_.seed, 1))),
          motion_rng_(derive_seed(plan_.seed, 2)),
          rr_rng_(derive_seed(plan_.seed, 3)),
          motion_cursor_(timeline_),
          rr_cursor_(timeline_) {
        origin_ = Date::parse(cfg_.start_date).local_midnight_utc(cfg_.utc_offset_seconds);
    }

    const SubjectPlan& plan() const { return plan_; }

    void day(std::size_t d, std::vector<SensorSample>& motion, std::vector<RRSample>& rr) {
        motion.clear();
        rr.clear();
        emit_motion(d, motion);
        emit_rr(d, rr);
    }

    std::vector<SleepInterval> sleep_intervals() const {
        std::vector<SleepInterval> out;
        for (const auto& day : plan_.days)
            if (day.night.recorded && day.night.end > day.night.start) out.push_back({day.night.start, day.night.end});
        return out;
    }

    std::vector<StepEvent> step_events() const {
        std::vector<StepEvent> out;
        for (const auto& day : plan_.days) out.insert(out.end(), day.steps.begin(), day.steps.end());
        return out;
    }

    std::vector<DayRecord> day_records() const {
        std::vector<DayRecord> out;
        for (const auto& day : plan_.days) {
            Label l = day.label;
            if (cfg_.hide_test_labels && day.split == Split::test) l = Label::unlabeled;
            out.push_back({plan_.subject_id, day.date, l, day.split});
        }
        return out;
    }

private:
    // Sample i of a stream sits at origin + i / rate.
    std::pair<std::uint64_t, std::uint64_t> sample_range(std::size_t d, double rate) const {
        auto first = [&](std::size_t day) {
            return static_cast<std::uint64_t>(std::ceil(static_cast<double>(day) * kSecondsPerDay * rate - 1e-9));
        };
        return {first(d), first(d + 1)};
    }

    double leak(std::size_t d) const {
        return plan_.days[d].label == Label::relapse ? cfg_.anomaly.awake_leak : 0.0;
    }

    void emit_motion(std::size_t d, std::vector<SensorSample>& out) {
        using detail::Activity;
        const auto [i0, i1] = sample_range(d, cfg_.motion_hz);
        const double dt = 1.0 / cfg_.motion_hz;
        const double phi = std::exp(-dt / 600.0);
        std::normal_distribution<double> nd(0, 1);
        const auto& gaps = plan_.days[d].motion_gaps;
        const double awake_mult = 1 + leak(d) * (std::sqrt(cfg_.anomaly.activity_var_multiplier) - 1);
        out.reserve(i1 - i0);
        for (std::uint64_t i = i0; i < i1; ++i) {
            const double t = origin_ + static_cast<double>(i) / cfg_.motion_hz;
            activity_ = phi * activity_ + std::sqrt(1 - phi * phi) * 0.6 * nd(motion_rng_);
            const auto* s = motion_cursor_.at(t);
            std::array<double, 3> g{0, 0, 1};
            double sa, sg;
            if (!s) {
                const double level = std::exp(activity_);
                sa = 0.08 * level * awake_mult;
                sg = 15.0 * level * awake_mult;
            } else if (s->kind == Activity::walk) {
                sa = 0.35;
                sg = 80.0;
            } else if (s->kind == Activity::restless || s->kind == Activity::relapse_episode) {
                const double m = s->kind == Activity::relapse_episode
                                     ? std::sqrt(plan_.days[s->night].night.motion_var_mult)
                                     : 1.0;
                sa = 0.10 * m;
                sg = 20.0 * m;
                g = s->gravity;
            } else {
                sa = 0.008;
                sg = 0.4;
                g = s->gravity;
            }
            SensorSample x{t, g[0] + sa * nd(motion_rng_), g[1] + sa * nd(motion_rng_), g[2] + sa * nd(motion_rng_),
                           sg * nd(motion_rng_), sg * nd(motion_rng_), sg * nd(motion_rng_)};
            if (detail::in_gaps(gaps, t)) x.ax = x.ay = x.az = x.gx = x.gy = x.gz = kMissing;
            out.push_back(x);
        }
    }

    void emit_rr(std::size_t d, std::vector<RRSample>& out) {
        using detail::Activity;
        const auto& sp = plan_.params;
        const auto [i0, i1] = sample_range(d, cfg_.rr_hz);
        const double dt = 1.0 / cfg_.rr_hz;
        const double phi = std::exp(-dt / 30.0);
        const double innov = sp.hr_sigma * std::sqrt(1 - phi * phi);
        std::normal_distribution<double> nd(0, 1);
        const auto& gaps = plan_.days[d].rr_gaps;
        const auto& an = cfg_.anomaly;
        const double lk = leak(d);
        const double awake_ratio = std::pow(an.lf_hf_shift, 0.5 * lk);
        constexpr double two_pi = 2 * std::numbers::pi;
        out.reserve(i1 - i0);
        for (std::uint64_t i = i0; i < i1; ++i) {
            const double t = origin_ + static_cast<double>(i) / cfg_.rr_hz;
            hr_ar_ = phi * hr_ar_ + innov * nd(rr_rng_);
            phase_lf_ += two_pi * 0.10 * dt + 0.02 * nd(rr_rng_);
            phase_hf_ += two_pi * 0.28 * dt + 0.02 * nd(rr_rng_);
            const double hour = std::fmod((t - origin_) / 3600.0, 24.0);
            const double circadian = 2.0 * std::cos(two_pi * (hour - 16.0) / 24.0);
            const auto* s = rr_cursor_.at(t);
            double hr, lf, hf;
            if (s && s->kind != Activity::walk) {
                const auto& night = plan_.days[s->night].night;
                const bool surge = s->kind == Activity::relapse_episode;
                const bool rebound = s->kind == Activity::rebound;
                const double r = surge ? std::sqrt(night.lf_hf_mult) : rebound ? 1.0 / std::sqrt(night.lf_hf_mult) : 1.0;
                hr = sp.hr_sleep_mean + night.hr_offset_bpm + circadian;
                if (surge) hr += night.surge_bpm + night.swing_bpm;
                else if (night.surge_bpm == 0) hr += night.relapse_shift_bpm;
                if (rebound) hr -= night.swing_bpm;
                lf = sp.lf_sleep_ms * r;
                hf = sp.hf_sleep_ms / r;
            } else {
                const double r = awake_ratio;
                hr = sp.hr_sleep_mean + sp.hr_awake_offset + circadian + lk * an.sleep_hr_shift * sp.hr_sigma;
                if (s && s->kind == Activity::walk) hr += 25.0;
                lf = sp.lf_awake_ms * r;
                hf = sp.hf_awake_ms / r;
            }
            hr = std::max(35.0, hr + hr_ar_);
            double rr_ms = 60000.0 / hr + lf * std::sin(phase_lf_) + hf * std::sin(phase_hf_) + 4.0 * nd(rr_rng_);
            if (detail::in_gaps(gaps, t)) rr_ms = kMissing;
            out.push_back({t, rr_ms});
        }
    }

    GenConfig cfg_;
    SubjectPlan plan_;
    std::vector<detail::Span> timeline_;
    std::mt19937_64 motion_rng_, rr_rng_;
    detail::Cursor motion_cursor_, rr_cursor_;
    double origin_ = 0;
    double activity_ = 0, hr_ar_ = 0, phase_lf_ = 0, phase_hf_ = 0;
};

struct GeneratedSubject {
    SensorStreams streams;
    SubjectPlan plan;
};

/// Whole subject in memory. Suited to low sampling rates.
inline GeneratedSubject generate_subject(const GenConfig& cfg, std::size_t index) {
    cfg.validate();
    SubjectSimulator sim(cfg, plan_subject(cfg, index));
    GeneratedSubject out;
    auto& s = out.streams;
    s.subject_id = sim.plan().subject_id;
    s.utc_offset_seconds = cfg.utc_offset_seconds;
    std::vector<SensorSample> m;
    std::vector<RRSample> r;
    for (std::size_t d = 0; d < cfg.n_days; ++d) {
        sim.day(d, m, r);
        s.motion.insert(s.motion.end(), m.begin(), m.end());
        s.rr.insert(s.rr.end(), r.begin(), r.end());
    }
    s.steps = sim.step_events();
    s.sleep = sim.sleep_intervals();
    s.days = sim.day_records();
    out.plan = sim.plan();
    return out;
}

// ---------------------------------------------------------------------------
// Ground truth

inline nlohmann::json to_json(const GenConfig& c) {
    return {{"n_subjects", c.n_subjects},
            {"n_days", c.n_days},
            {"relapse_fraction", c.relapse_fraction},
            {"seed", c.seed},
            {"motion_hz", c.motion_hz},
            {"rr_hz", c.rr_hz},
            {"missing_fraction", c.missing_fraction},
            {"missing_sleep_fraction", c.missing_sleep_fraction},
            {"utc_offset_seconds", c.utc_offset_seconds},
            {"start_date", c.start_date},
            {"hide_test_labels", c.hide_test_labels},
            {"anomaly_profile",
             {{"sleep_hr_shift", c.anomaly.sleep_hr_shift},
              {"sleep_fragmentation", c.anomaly.sleep_fragmentation},
              {"activity_var_multiplier", c.anomaly.activity_var_multiplier},
              {"lf_hf_shift", c.anomaly.lf_hf_shift},
              {"arousal_hr_swing", c.anomaly.arousal_hr_swing},
              {"awake_leak", c.anomaly.awake_leak}}}};
}

inline nlohmann::json to_json(const SubjectPlan& p) {
    const auto& sp = p.params;
    nlohmann::json j;
    j["params"] = {{"hr_sleep_mean", sp.hr_sleep_mean}, {"hr_awake_offset", sp.hr_awake_offset},
                   {"hr_sigma", sp.hr_sigma},           {"lf_sleep_ms", sp.lf_sleep_ms},
                   {"hf_sleep_ms", sp.hf_sleep_ms},     {"lf_awake_ms", sp.lf_awake_ms},
                   {"hf_awake_ms", sp.hf_awake_ms}};
    auto& days = j["days"] = nlohmann::json::array();
    for (const auto& d : p.days) {
        nlohmann::json e;
        for (const auto& x : d.night.episodes) e.push_back({{"start", x.t0}, {"end", x.t1}, {"rebound_end", x.rebound_end()}, {"relapse", x.relapse}});
        nlohmann::json jd = {{"date", d.date.str()},
                             {"label", to_string(d.label)},
                             {"split", to_string(d.split)},
                             {"sleep", {{"start", d.night.start}, {"end", d.night.end}, {"recorded", d.night.recorded}}},
                             {"restless_episodes", e.is_null() ? nlohmann::json::array() : e}};
        if (d.night.relapse)
            jd["anomaly"] = {{"hr_shift_bpm", d.night.relapse_shift_bpm},
                             {"surge_bpm", d.night.surge_bpm},
                             {"swing_bpm", d.night.swing_bpm},
                             {"motion_var_multiplier", d.night.motion_var_mult},
                             {"lf_hf_multiplier", d.night.lf_hf_mult}};
        days.push_back(std::move(jd));
    }
    return j;
}

/// Writes one directory per subject plus ground_truth.json, streaming
/// samples day by day so high sampling rates never sit in memory.
inline nlohmann::json generate(const GenConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    nlohmann::json truth;
    truth["config"] = to_json(cfg);
    auto& subjects = truth["subjects"] = nlohmann::json::object();
    std::vector<SensorSample> m;
    std::vector<RRSample> r;
    for (std::size_t i = 0; i < cfg.n_subjects; ++i) {
        SubjectSimulator sim(cfg, plan_subject(cfg, i));
        const auto dir = out_dir / sim.plan().subject_id;
        SensorStreams meta;
        meta.subject_id = sim.plan().subject_id;
        meta.steps = sim.step_events();
        meta.sleep = sim.sleep_intervals();
        meta.days = sim.day_records();
        write_subject(meta, dir);  // motion and rr rewritten below

        csv::Writer wm(dir / files::motion), wr(dir / files::rr);
        wm.buf() += "t,ax,ay,az,gx,gy,gz\n";
        wr.buf() += "t,rr_ms\n";
        for (std::size_t d = 0; d < cfg.n_days; ++d) {
            sim.day(d, m, r);
            for (const auto& x : m) {
                auto& b = wm.buf();
                csv::append_double(b, x.t);
                for (double v : {x.ax, x.ay, x.az, x.gx, x.gy, x.gz}) {
                    b += ',';
                    csv::append_double(b, v);
                }
                b += '\n';
                wm.maybe_flush();
            }
            for (const auto& x : r) {
                auto& b = wr.buf();
                csv::append_double(b, x.t);
                b += ',';
                csv::append_double(b, x.rr_ms);
                b += '\n';
                wr.maybe_flush();
            }
        }
        wm.close();
        wr.close();
        subjects[sim.plan().subject_id] = to_json(sim.plan());
    }
    csv::write_file(out_dir / "ground_truth.json", truth.dump(2) + "\n");
    return truth;
}

/// Marks [t0, t0 + duration) missing on "motion" (all six axes) or "rr".
inline void inject_gap(SensorStreams& s, std::string_view channel, double t0, double duration) {
    if (duration < 0) throw std::invalid_argument("inject_gap: negative duration");
    auto apply = [&](auto& rows, auto mark) {
        if (rows.empty() || t0 < rows.front().t || t0 + duration > rows.back().t)
            throw std::out_of_range("inject_gap: window outside the channel's data range");
        if (duration == 0) return;
        auto it = std::lower_bound(rows.begin(), rows.end(), t0, [](const auto& r, double t) { return r.t < t; });
        for (; it != rows.end() && it->t < t0 + duration; ++it) mark(*it);
    };
    if (channel == "motion")
        apply(s.motion, [](SensorSample& x) { x.ax = x.ay = x.az = x.gx = x.gy = x.gz = kMissing; });
    else if (channel == "rr")
        apply(s.rr, [](RRSample& x) { x.rr_ms = kMissing; });
    else
        throw std::invalid_argument("inject_gap: unknown channel '" + std::string(channel) + "'");
}

}  // namespace relapse
