#pragma once

// Welch power spectral density and LF/HF band integration for RR series.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace relapse {

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

/// In-place iterative radix-2 FFT. Size must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// |X_k|^2 for k = 0..n/2 of a real sequence.
inline std::vector<double> power_spectrum(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> out(n / 2 + 1);
    if (is_pow2(n)) {
        std::vector<std::complex<double>> a(x.begin(), x.end());
        fft_pow2(a);
        for (std::size_t k = 0; k <= n / 2; ++k) out[k] = std::norm(a[k]);
    } else {
        // Direct DFT; only reached for non power-of-two segment lengths.
        for (std::size_t k = 0; k <= n / 2; ++k) {
            std::complex<double> acc;
            for (std::size_t t = 0; t < n; ++t) {
                const double ang = -2 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
                acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            out[k] = std::norm(acc);
        }
    }
    return out;
}

/// Periodic Hann window.
inline std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

}  // namespace detail

/// One-sided power spectral density.
struct PsdEstimate {
    std::vector<double> freqs;  // 0 .. fs/2, step = resolution
    std::vector<double> power;  // units^2 / Hz
    double resolution = 0;
    std::size_t segments = 0;
    bool zero_padded = false;   // input was shorter than one segment
};

/// Welch's method: Hann-windowed, mean-detrended segments with the given
/// fractional overlap, density-scaled so that the PSD integrates to the
/// signal variance.
inline PsdEstimate welch_psd(std::span<const double> x, double fs, std::size_t seg_len = 256,
                             double overlap = 0.5) {
    if (!(fs > 0)) throw std::invalid_argument("welch_psd: fs must be positive");
    if (seg_len < 2) throw std::invalid_argument("welch_psd: segment length must be >= 2");
    if (!(overlap >= 0 && overlap < 1)) throw std::invalid_argument("welch_psd: overlap must be in [0, 1)");

    PsdEstimate psd;
    const std::size_t nbins = seg_len / 2 + 1;
    psd.resolution = fs / static_cast<double>(seg_len);
    psd.freqs.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k) psd.freqs[k] = static_cast<double>(k) * psd.resolution;
    psd.power.assign(nbins, 0.0);

    auto accumulate = [&](std::span<const double> seg) {
        const std::size_t n = seg.size();
        const auto w = detail::hann(n);
        // Shifted mean keeps constant input exactly constant after detrending.
        double shift = 0;
        for (double v : seg) shift += v - seg[0];
        const double mean = seg[0] + shift / static_cast<double>(n);
        std::vector<double> buf(seg_len, 0.0);
        double wss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            buf[i] = (seg[i] - mean) * w[i];
            wss += w[i] * w[i];
        }
        if (wss <= 0) return;
        const auto p = detail::power_spectrum(buf);
        const double scale = 1.0 / (fs * wss);
        for (std::size_t k = 0; k < nbins; ++k) {
            const bool edge = k == 0 || (seg_len % 2 == 0 && k == seg_len / 2);
            psd.power[k] += p[k] * scale * (edge ? 1.0 : 2.0);
        }
        ++psd.segments;
    };

    if (x.size() < seg_len) {
        psd.zero_padded = true;
        if (x.size() >= 2) accumulate(x);
    } else {
        const std::size_t step = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(seg_len) * (1 - overlap))));
        for (std::size_t start = 0; start + seg_len <= x.size(); start += step)
            accumulate(x.subspan(start, seg_len));
    }
    if (psd.segments > 1)
        for (auto& v : psd.power) v /= static_cast<double>(psd.segments);
    return psd;
}

/// Sum of density times bin width; equals the windowed mean square.
inline double integrated_power(const PsdEstimate& psd) {
    double s = 0;
    for (double v : psd.power) s += v;
    return s * psd.resolution;
}

/// Integral of the piecewise-linear PSD over [lo, hi] (trapezoidal rule with
/// interpolated end points).
inline double band_integral(const PsdEstimate& psd, double lo, double hi) {
    const auto& f = psd.freqs;
    const auto& p = psd.power;
    double total = 0;
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        const double a = std::max(lo, f[k]);
        const double b = std::min(hi, f[k + 1]);
        if (b <= a) continue;
        const double slope = (p[k + 1] - p[k]) / (f[k + 1] - f[k]);
        const double pa = p[k] + slope * (a - f[k]);
        const double pb = p[k] + slope * (b - f[k]);
        total += 0.5 * (pa + pb) * (b - a);
    }
    return total;
}

struct BandLimits {
    double lf_lo = 0.04, lf_hi = 0.15;
    double hf_lo = 0.15, hf_hi = 0.40;
};

struct BandPowers {
    double lf_power = 0;
    double hf_power = 0;
    std::optional<double> lf_fraction;  // absent when lf + hf == 0
    std::optional<double> hf_fraction;
};

inline BandPowers band_powers(const PsdEstimate& psd, const BandLimits& bands = {}) {
    if (psd.freqs.empty() || psd.freqs.back() < bands.hf_hi)
        throw std::invalid_argument("band_powers: spectrum does not reach the HF upper bound");
    BandPowers out;
    out.lf_power = band_integral(psd, bands.lf_lo, bands.lf_hi);
    out.hf_power = band_integral(psd, bands.hf_lo, bands.hf_hi);
    const double total = out.lf_power + out.hf_power;
    if (total > 0) {
        out.lf_fraction = out.lf_power / total;
        out.hf_fraction = 1.0 - *out.lf_fraction;
    }
    return out;
}

}  // namespace relapse
