#pragma once

// Day-ranking metrics: ROC-AUC, average precision, their per-subject harmonic
// mean, the awake-score fallback and the grid report.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relapse/core.hpp"
#include "relapse/dataset.hpp"
#include "relapse/iforest.hpp"

namespace relapse {

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counted as 1/2.
/// Absent unless both classes occur.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    // Sum over positives of (#negatives below + half #negatives tied).
    double wins = 0;
    std::size_t neg_below = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i, p = 0, q = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? p : q) += 1;
            ++j;
        }
        wins += static_cast<double>(p) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(q));
        neg_below += q;
        pos += p;
        neg += q;
        i = j;
    }
    if (pos == 0 || neg == 0) return std::nullopt;
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Average precision over descending score thresholds; equal scores form one
/// threshold. Absent without positives.
inline std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("pr_auc: size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    const auto total_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
    if (total_pos == 0) return std::nullopt;
    double ap = 0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i, p = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            p += labels[order[j]] != 0;
            ++j;
        }
        tp += p;
        seen += j - i;
        if (p) ap += (static_cast<double>(p) / static_cast<double>(total_pos)) *
                     (static_cast<double>(tp) / static_cast<double>(seen));
        i = j;
    }
    return ap;
}

inline double harmonic_mean(double a, double b) { return (a + b) > 0 ? 2 * a * b / (a + b) : 0.0; }

struct SubjectMetrics {
    std::optional<double> roc_auc;
    std::optional<double> pr_auc;
    std::optional<double> hmean;
    std::size_t relapse_days = 0;
    std::size_t normal_days = 0;
};

enum class AggregateMode { subject_mean, harmonic };

inline AggregateMode parse_aggregate_mode(std::string_view s) {
    if (s == "subject_mean") return AggregateMode::subject_mean;
    if (s == "harmonic") return AggregateMode::harmonic;
    throw std::invalid_argument("unknown aggregate mode '" + std::string(s) + "'");
}

inline std::string to_string(AggregateMode m) { return m == AggregateMode::subject_mean ? "subject_mean" : "harmonic"; }

struct Aggregate {
    double value = 0;
    std::size_t eligible = 0;
    std::size_t excluded = 0;
};

/// subject_mean: arithmetic mean of per-subject harmonic means.
/// harmonic: harmonic mean of (mean ROC-AUC, mean PR-AUC) across subjects.
inline Aggregate harmonic_aggregate(const std::map<std::string, SubjectMetrics>& per_subject,
                                    AggregateMode mode = AggregateMode::subject_mean) {
    Aggregate out;
    double sum_h = 0, sum_roc = 0, sum_pr = 0;
    for (const auto& [id, m] : per_subject) {
        if (!m.roc_auc || !m.pr_auc) {
            ++out.excluded;
            continue;
        }
        ++out.eligible;
        sum_h += harmonic_mean(*m.roc_auc, *m.pr_auc);
        sum_roc += *m.roc_auc;
        sum_pr += *m.pr_auc;
    }
    if (out.eligible == 0) throw std::runtime_error("no subject has both ROC-AUC and PR-AUC defined");
    const auto n = static_cast<double>(out.eligible);
    out.value = mode == AggregateMode::subject_mean ? sum_h / n : harmonic_mean(sum_roc / n, sum_pr / n);
    return out;
}

// ---------------------------------------------------------------------------
// Awake fallback

struct FallbackResult {
    DayScores scores;  // awake scores mapped onto the sleep scale
    bool enabled = false;
    double scale = 1, shift = 0;
    double sleep_threshold = 0, awake_threshold = 0;
    std::string warning;
};

/// Score threshold maximizing TPR - FPR for "score >= threshold". Ties keep
/// the highest threshold. Absent unless both classes occur.
inline std::optional<double> youden_threshold(std::span<const double> scores, std::span<const int> labels) {
    std::size_t pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg) += 1;
    if (!pos || !neg) return std::nullopt;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    double best_j = -2, best_t = 0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? tp : fp) += 1;
            ++j;
        }
        const double jstat = static_cast<double>(tp) / static_cast<double>(pos) -
                             static_cast<double>(fp) / static_cast<double>(neg);
        if (jstat > best_j + 1e-12) {  // rounding ties keep the higher threshold
            best_j = jstat;
            best_t = scores[order[i]];
        }
        i = j;
    }
    return best_t;
}

namespace detail {

inline double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Affine map a*x + b sending the awake median and Youden threshold onto the
/// sleep ones. Falls back to a median shift when the awake threshold equals
/// its median, and to pass-through when no labelled days carry both classes.
inline FallbackResult awake_fallback_threshold(const DayScores& sleep_scores, const DayTable& days,
                                               const DayScores& awake_scores) {
    FallbackResult out;
    out.scores = awake_scores;
    auto labelled = [&](const DayScores& s, std::vector<double>& x, std::vector<int>& y) {
        for (const auto& [k, v] : s) {
            auto it = days.find(k);
            if (it == days.end() || it->second.label == Label::unlabeled) continue;
            x.push_back(v);
            y.push_back(it->second.label == Label::relapse);
        }
    };
    std::vector<double> xs, xa;
    std::vector<int> ys, ya;
    labelled(sleep_scores, xs, ys);
    labelled(awake_scores, xa, ya);
    const auto ts = youden_threshold(xs, ys);
    const auto ta = youden_threshold(xa, ya);
    if (!ts || !ta || awake_scores.empty()) {
        out.warning = "awake fallback disabled: no labelled days with both classes; awake scores passed through";
        return out;
    }
    std::vector<double> all_s, all_a;
    for (const auto& [k, v] : sleep_scores) all_s.push_back(v);
    for (const auto& [k, v] : awake_scores) all_a.push_back(v);
    const double ms = detail::median(all_s), ma = detail::median(all_a);
    out.enabled = true;
    out.sleep_threshold = *ts;
    out.awake_threshold = *ta;
    out.scale = (*ta != ma) ? (*ts - ms) / (*ta - ma) : 1.0;
    if (!(out.scale > 0)) out.scale = 1.0;
    out.shift = ms - out.scale * ma;
    for (auto& [k, v] : out.scores) v = out.scale * v + out.shift;
    return out;
}

// ---------------------------------------------------------------------------
// Report

struct EvalCounts {
    std::size_t relapse_days = 0;
    std::size_t normal_days = 0;
    std::size_t unscoreable_days = 0;
    std::size_t fallback_days = 0;
};

struct EvalReport {
    ExperimentCell cell;
    std::map<std::string, SubjectMetrics> per_subject;
    std::optional<double> aggregate_hmean;
    AggregateMode mode = AggregateMode::subject_mean;
    std::size_t excluded_subjects = 0;
    EvalCounts counts;
    std::vector<std::string> warnings;
    std::string error;  // non-empty when the cell failed
};

/// Ranks labelled, non-train days by score per subject. Labelled days with
/// no score are unscoreable and excluded.
inline EvalReport evaluate_days(const DayScores& scores, const DayTable& days, const ExperimentCell& cell,
                                AggregateMode mode = AggregateMode::subject_mean) {
    EvalReport rep;
    rep.cell = cell;
    rep.mode = mode;
    std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> by_subject;
    for (const auto& [k, d] : days) {
        if (d.split == Split::train || d.label == Label::unlabeled) continue;
        auto it = scores.find(k);
        if (it == scores.end()) {
            ++rep.counts.unscoreable_days;
            continue;
        }
        auto& [x, y] = by_subject[k.subject_id];
        x.push_back(it->second);
        y.push_back(d.label == Label::relapse);
        (d.label == Label::relapse ? rep.counts.relapse_days : rep.counts.normal_days) += 1;
    }
    for (const auto& [id, xy] : by_subject) {
        SubjectMetrics m;
        m.roc_auc = roc_auc(xy.first, xy.second);
        m.pr_auc = pr_auc(xy.first, xy.second);
        if (m.roc_auc && m.pr_auc) m.hmean = harmonic_mean(*m.roc_auc, *m.pr_auc);
        m.relapse_days = static_cast<std::size_t>(std::count(xy.second.begin(), xy.second.end(), 1));
        m.normal_days = xy.second.size() - m.relapse_days;
        rep.per_subject[id] = m;
    }
    try {
        const auto agg = harmonic_aggregate(rep.per_subject, mode);
        rep.aggregate_hmean = agg.value;
        rep.excluded_subjects = agg.excluded;
    } catch (const std::runtime_error& e) {
        rep.error = e.what();
    }
    return rep;
}

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["cell"] = r.cell.tag();
    j["aggregate_mode"] = to_string(r.mode);
    j["aggregate_hmean"] = detail::opt(r.aggregate_hmean);
    j["excluded_subjects"] = r.excluded_subjects;
    j["counts"] = {{"relapse_days", r.counts.relapse_days},
                   {"normal_days", r.counts.normal_days},
                   {"unscoreable_days", r.counts.unscoreable_days},
                   {"fallback_days", r.counts.fallback_days}};
    auto& ps = j["per_subject"] = nlohmann::json::object();
    for (const auto& [id, m] : r.per_subject)
        ps[id] = {{"roc_auc", detail::opt(m.roc_auc)},
                  {"pr_auc", detail::opt(m.pr_auc)},
                  {"hmean", detail::opt(m.hmean)},
                  {"relapse_days", m.relapse_days},
                  {"normal_days", m.normal_days}};
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

/// Fixed-width grid: rows are feature configurations, columns resolutions.
/// The best finished cell carries a '*'.
inline std::string render_grid(const std::vector<EvalReport>& reports) {
    const EvalReport* best = nullptr;
    for (const auto& r : reports)
        if (r.aggregate_hmean && (!best || *r.aggregate_hmean > *best->aggregate_hmean)) best = &r;
    auto find = [&](const ExperimentCell& c) -> const EvalReport* {
        for (const auto& r : reports)
            if (r.cell == c) return &r;
        return nullptr;
    };
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-20s %10s %10s %10s\n", "Features", "5-minute", "60-minute", "Aggregate");
    out += line;
    out += std::string(53, '-') + '\n';
    const char* seg_names[] = {"Sleep", "Awake", "Aggregate"};
    for (auto st : {StepMode::without_step, StepMode::with_step})
        for (auto sg : {Segment::sleep, Segment::awake, Segment::aggregate}) {
            std::string name = seg_names[static_cast<int>(sg)];
            if (st == StepMode::with_step) name += " + Step";
            std::snprintf(line, sizeof line, "%-20s", name.c_str());
            out += line;
            for (auto res : {Resolution::min5, Resolution::min60, Resolution::daily}) {
                const auto* r = find({sg, st, res});
                std::string cell;
                if (!r)
                    cell = "-";
                else if (!r->aggregate_hmean)
                    cell = "failed";
                else {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.1f %%", 100.0 * *r->aggregate_hmean);
                    cell = buf;
                    if (r == best) cell = "*" + cell;
                }
                std::snprintf(line, sizeof line, " %10s", cell.c_str());
                out += line;
            }
            out += '\n';
        }
    out += "\n* best cell in this run.\n";
    out += "Reference: on the original clinical cohort the best reported cell was Sleep + Step, 5-minute = 64.5 %.\n";
    out += "Synthetic runs are not expected to reproduce that value.\n";
    return out;
}

}  // namespace relapse
