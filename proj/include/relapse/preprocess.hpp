#pragma once

// Hampel identifier over a centered sliding window: replaces outliers with the
// window median and imputes missing entries when enough of the window is present.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "relapse/core.hpp"
#include "relapse/ingest.hpp"

namespace relapse {

struct HampelConfig {
    std::size_t window_half_width = 1;  // samples on each side of the center
    double n_sigmas = 3.0;
    double mad_scale = 1.4826;          // Gaussian consistency factor
    double impute_quorum = 0.25;        // fraction of the window that must be present

    void validate() const {
        if (window_half_width < 1) throw std::invalid_argument("hampel: window_half_width must be >= 1");
        if (!(n_sigmas > 0)) throw std::invalid_argument("hampel: n_sigmas must be > 0");
        if (!(mad_scale > 0)) throw std::invalid_argument("hampel: mad_scale must be > 0");
        if (!(impute_quorum >= 0 && impute_quorum <= 1))
            throw std::invalid_argument("hampel: impute_quorum must lie in [0, 1]");
    }
};

struct HampelStats {
    std::size_t replaced = 0;
    std::size_t imputed = 0;
    std::size_t still_missing = 0;
};

namespace detail {

/// Multiset of the present values inside the window, kept sorted.
class SortedWindow {
public:
    std::size_t size() const { return v_.size(); }

    void insert(double x) { v_.insert(v_.begin() + static_cast<std::ptrdiff_t>(upper(x)), x); }

    void erase(double x) { v_.erase(v_.begin() + static_cast<std::ptrdiff_t>(lower(x))); }

    /// Equivalent to erase(out) then insert(in) with a single shift.
    void replace(double out, double in) {
        const auto i = v_.begin() + static_cast<std::ptrdiff_t>(lower(out));
        if (in >= out) {
            auto k = v_.begin() + static_cast<std::ptrdiff_t>(upper(in));
            std::copy(i + 1, k, i);
            *(k - 1) = in;
        } else {
            auto k = v_.begin() + static_cast<std::ptrdiff_t>(upper(in));
            std::copy_backward(k, i, i + 1);
            *k = in;
        }
    }

    double median() const {
        const std::size_t n = v_.size();
        return (n % 2) ? v_[n / 2] : 0.5 * (v_[n / 2 - 1] + v_[n / 2]);
    }

    /// Median of |v - m|, exact, in O(log n) using the sorted order.
    double mad(double m) const {
        const std::size_t n = v_.size();
        const std::size_t p = static_cast<std::size_t>(std::lower_bound(v_.begin(), v_.end(), m) - v_.begin());
        if (n % 2) return kth(n / 2, m, p);
        return 0.5 * (kth(n / 2 - 1, m, p) + kth(n / 2, m, p));
    }

    const std::vector<double>& values() const { return v_; }

private:
    // Deviations split into two ascending runs: left of m (walking down) and
    // right of m (walking up). Selects rank k of their merge.
    double kth(std::size_t k, double m, std::size_t p) const {
        const std::size_t na = p, nb = v_.size() - p;
        auto A = [&](std::size_t i) { return m - v_[p - 1 - i]; };
        auto B = [&](std::size_t j) { return v_[p + j] - m; };
        std::size_t lo = (k + 1 > nb) ? k + 1 - nb : 0;
        std::size_t hi = std::min(k + 1, na);
        while (lo < hi) {
            const std::size_t a = (lo + hi) / 2;
            const std::size_t b = k + 1 - a;
            if (A(a) < B(b - 1))
                lo = a + 1;
            else
                hi = a;
        }
        const std::size_t a = lo, b = k + 1 - lo;
        double r = -std::numeric_limits<double>::infinity();
        if (a > 0) r = std::max(r, A(a - 1));
        if (b > 0) r = std::max(r, B(b - 1));
        return r;
    }

    // Branch-free bounds: first index with v >= x (lower) or v > x (upper).
    template <class Pred>
    std::size_t bound(Pred pred) const {
        std::size_t len = v_.size();
        if (len == 0) return 0;
        const double* base = v_.data();
        while (len > 1) {
            const std::size_t half = len / 2;
            base = pred(base[half]) ? base + half : base;
            len -= half;
        }
        return static_cast<std::size_t>(base - v_.data()) + (pred(*base) ? 1 : 0);
    }
    std::size_t lower(double x) const { return bound([x](double v) { return v < x; }); }
    std::size_t upper(double x) const { return bound([x](double v) { return v <= x; }); }

    std::vector<double> v_;
};

}  // namespace detail

/// Filters `x` (NaN = missing). Entry i is compared with the median and MAD
/// of the present values in [i - h, i + h] clipped to the sequence. When the
/// MAD is zero any value differing from the median counts as an outlier.
inline std::vector<double> hampel_filter(std::span<const double> x, const HampelConfig& cfg,
                                         HampelStats* stats = nullptr) {
    cfg.validate();
    const std::size_t n = x.size();
    const std::size_t h = cfg.window_half_width;
    std::vector<double> y(n);
    HampelStats local;
    detail::SortedWindow win;

    for (std::size_t j = 0; j < std::min(h + 1, n); ++j)
        if (!is_missing(x[j])) win.insert(x[j]);

    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            const bool has_in = i + h < n && !is_missing(x[i + h]);
            const bool has_out = i > h && !is_missing(x[i - h - 1]);
            if (has_in && has_out)
                win.replace(x[i - h - 1], x[i + h]);
            else if (has_in)
                win.insert(x[i + h]);
            else if (has_out)
                win.erase(x[i - h - 1]);
        }
        const std::size_t lo = i > h ? i - h : 0;
        const std::size_t hi = std::min(i + h, n - 1);
        const double window_len = static_cast<double>(hi - lo + 1);

        if (is_missing(x[i])) {
            if (win.size() > 0 && static_cast<double>(win.size()) >= cfg.impute_quorum * window_len) {
                y[i] = win.median();
                ++local.imputed;
            } else {
                y[i] = kMissing;
                ++local.still_missing;
            }
            continue;
        }
        const double med = win.median();
        const double mad = win.mad(med);
        const double dev = std::abs(x[i] - med);
        const bool outlier = (mad == 0) ? dev != 0 : dev > cfg.n_sigmas * cfg.mad_scale * mad;
        if (outlier) {
            y[i] = med;
            ++local.replaced;
        } else {
            y[i] = x[i];
        }
    }
    if (stats) *stats = local;
    return y;
}

/// Window and threshold settings expressed in seconds, converted to samples
/// per channel from the channel's observed sampling rate.
struct PreprocessConfig {
    double window_seconds = 3600;
    double n_sigmas = 3.0;
    double mad_scale = 1.4826;
    double impute_quorum = 0.25;
};

struct PreprocessReport {
    std::map<std::string, HampelStats> channels;
    std::vector<std::string> warnings;
};

struct PreprocessResult {
    SensorStreams streams;
    PreprocessReport report;
};

/// Median spacing of consecutive timestamps, converted to Hz. 0 if unknown.
template <class Row>
double nominal_rate(std::span<const Row> rows) {
    if (rows.size() < 2) return 0;
    std::vector<double> dt;
    dt.reserve(std::min<std::size_t>(rows.size() - 1, 100000));
    const std::size_t stride = std::max<std::size_t>(1, (rows.size() - 1) / 100000);
    for (std::size_t i = 1; i < rows.size(); i += stride) dt.push_back(rows[i].t - rows[i - 1].t);
    auto mid = dt.begin() + static_cast<std::ptrdiff_t>(dt.size() / 2);
    std::nth_element(dt.begin(), mid, dt.end());
    return *mid > 0 ? 1.0 / *mid : 0;
}

inline HampelConfig hampel_for_rate(double rate_hz, const PreprocessConfig& cfg) {
    HampelConfig h;
    h.window_half_width =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rate_hz * cfg.window_seconds / 2)));
    h.n_sigmas = cfg.n_sigmas;
    h.mad_scale = cfg.mad_scale;
    h.impute_quorum = cfg.impute_quorum;
    return h;
}

/// Filters every motion channel and the RR channel independently. Steps,
/// sleep and day records pass through untouched.
inline PreprocessResult preprocess_streams(const SensorStreams& in, const PreprocessConfig& cfg) {
    PreprocessResult out{in, {}};
    auto& s = out.streams;

    auto run = [&](const std::string& name, double rate, std::size_t n, auto get, auto set) {
        if (rate <= 0) {
            out.report.warnings.push_back(name + ": cannot infer sampling rate, passed through");
            return;
        }
        const HampelConfig h = hampel_for_rate(rate, cfg);
        if (n < 2 * (2 * h.window_half_width + 1)) {
            out.report.warnings.push_back(name + ": fewer than two windows of samples, passed through");
            return;
        }
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = get(i);
        HampelStats st;
        const auto y = hampel_filter(x, h, &st);
        for (std::size_t i = 0; i < n; ++i) set(i, y[i]);
        out.report.channels[name] = st;
    };

    const double motion_rate = nominal_rate<SensorSample>(s.motion);
    const std::size_t nm = s.motion.size();
    double SensorSample::*channels[] = {&SensorSample::ax, &SensorSample::ay, &SensorSample::az,
                                        &SensorSample::gx, &SensorSample::gy, &SensorSample::gz};
    const char* names[] = {"ax", "ay", "az", "gx", "gy", "gz"};
    for (int c = 0; c < 6; ++c) {
        auto member = channels[c];
        run(names[c], motion_rate, nm, [&](std::size_t i) { return s.motion[i].*member; },
            [&](std::size_t i, double v) { s.motion[i].*member = v; });
    }
    run("rr", nominal_rate<RRSample>(s.rr), s.rr.size(), [&](std::size_t i) { return s.rr[i].rr_ms; },
        [&](std::size_t i, double v) { s.rr[i].rr_ms = v; });
    return out;
}

}  // namespace relapse
