#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "relapse/features.hpp"
#include "relapse/spectral.hpp"
#include "relapse/synthgen.hpp"
#include "support.hpp"

using namespace relapse;
constexpr double kPi = std::numbers::pi;

namespace {

std::vector<double> sinusoid(std::size_t n, double fs, double f0, double amp, double offset = 0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = offset + amp * std::sin(2 * kPi * f0 * double(i) / fs + 0.3);
    return x;
}

// One-sided periodogram of a single Hann-windowed, mean-removed segment by direct summation.
std::vector<double> dft_periodogram(const std::vector<double>& x, double fs) {
    const std::size_t n = x.size();
    double mean = 0;
    for (double v : x) mean += v;
    mean /= double(n);
    std::vector<double> w(n), y(n);
    double wss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 * (1 - std::cos(2 * kPi * double(i) / double(n)));
        y[i] = (x[i] - mean) * w[i];
        wss += w[i] * w[i];
    }
    std::vector<double> p(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        std::complex<double> acc;
        for (std::size_t t = 0; t < n; ++t) acc += y[t] * std::polar(1.0, -2 * kPi * double(k) * double(t) / double(n));
        const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
        p[k] = std::norm(acc) / (fs * wss) * (edge ? 1 : 2);
    }
    return p;
}

}  // namespace

TEST(Welch, SingleSegmentMatchesDirectDft) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0, 1);
    for (std::size_t n : {64u, 100u, 256u}) {
        std::vector<double> x(n);
        for (auto& v : x) v = 5 + nd(rng);
        const auto psd = welch_psd(x, 4.0, n, 0.5);
        const auto ref = dft_periodogram(x, 4.0);
        ASSERT_EQ(psd.power.size(), ref.size());
        for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(psd.power[k], ref[k], 1e-9 * (1 + ref[k])) << n << " " << k;
    }
}

TEST(Welch, BinAlignedSinusoidPeakAndPower) {
    const double fs = 5, amp = 3;
    const std::size_t seg = 256, bin = 20;
    const double f0 = double(bin) * fs / double(seg);
    const auto psd = welch_psd(sinusoid(1500, fs, f0, amp, 7), fs, seg, 0.5);
    const auto peak = std::max_element(psd.power.begin(), psd.power.end()) - psd.power.begin();
    EXPECT_EQ(static_cast<std::size_t>(peak), bin);
    EXPECT_NEAR(integrated_power(psd), amp * amp / 2, 0.05 * amp * amp / 2);
}

TEST(Welch, WhiteNoisePowerIsVariance) {
    std::mt19937_64 rng(11);
    const double sigma = 2.5;
    std::normal_distribution<double> nd(0, sigma);
    std::vector<double> x(1500);
    for (auto& v : x) v = nd(rng);
    const auto psd = welch_psd(x, 5.0);
    EXPECT_NEAR(integrated_power(psd), sigma * sigma, 0.1 * sigma * sigma);
}

TEST(Welch, ConstantInputGivesZeroSpectrum) {
    const std::vector<double> x(600, 812.25);
    const auto psd = welch_psd(x, 5.0);
    for (double p : psd.power) EXPECT_EQ(p, 0.0);
}

TEST(Welch, ShortInputIsZeroPaddedSingleSegment) {
    const auto psd = welch_psd(sinusoid(100, 5, 0.3, 1), 5.0, 256);
    EXPECT_TRUE(psd.zero_padded);
    EXPECT_EQ(psd.segments, 1u);
    EXPECT_EQ(psd.freqs.size(), 129u);
}

TEST(BandPowers, LowAndHighFrequencyTones) {
    const auto lf = band_powers(welch_psd(sinusoid(1500, 5, 0.10, 40, 900), 5.0));
    ASSERT_TRUE(lf.lf_fraction);
    EXPECT_GT(*lf.lf_fraction, 0.95);
    const auto hf = band_powers(welch_psd(sinusoid(1500, 5, 0.30, 40, 900), 5.0));
    EXPECT_GT(*hf.hf_fraction, 0.95);
}

TEST(BandPowers, TrapezoidMatchesHandIntegral) {
    PsdEstimate psd;
    psd.resolution = 0.1;
    for (int k = 0; k <= 5; ++k) {
        psd.freqs.push_back(0.1 * k);
        psd.power.push_back(k);  // p(f) = 10 f
    }
    // Integral of 10 f over [0.04, 0.15] = 5 (0.15^2 - 0.04^2).
    EXPECT_NEAR(band_integral(psd, 0.04, 0.15), 5 * (0.0225 - 0.0016), 1e-12);
}

TEST(BandPowers, FractionsSumToOne) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(300 + rng() % 1500);
        for (auto& v : x) v = nd(rng) + 3 * std::sin(0.05 * double(&v - x.data()));
        const auto bp = band_powers(welch_psd(x, 5.0));
        ASSERT_TRUE(bp.lf_fraction);
        EXPECT_NEAR(*bp.lf_fraction + *bp.hf_fraction, 1.0, 1e-9);
        EXPECT_NEAR(*bp.lf_fraction, bp.lf_power / (bp.lf_power + bp.hf_power), 1e-12);
    }
}

TEST(Energy, NormalizedSumOfSquares) {
    using V = std::array<double, 3>;
    EXPECT_EQ(*normalized_energy(std::vector<V>{{0, 0, 0}, {0, 0, 0}}), 0.0);
    EXPECT_EQ(*normalized_energy(std::vector<V>(1, {1, 0, 0})), 1.0);
    EXPECT_EQ(*normalized_energy(std::vector<V>(17, {1, 0, 0})), 1.0);
    EXPECT_EQ(*normalized_energy(std::vector<V>{{3, 4, 0}}), 25.0);
    EXPECT_FALSE(normalized_energy(std::vector<V>{{kMissing, 0, 0}}));
}

TEST(HeartRate, BpmAndSdnn) {
    auto hr = bpm_and_sdnn(std::vector<double>{1000, 1000, 1000});
    EXPECT_DOUBLE_EQ(hr->bpm_mean, 60.0);
    EXPECT_DOUBLE_EQ(hr->hrv_sdnn, 0.0);
    EXPECT_DOUBLE_EQ(bpm_and_sdnn(std::vector<double>{500, 500})->bpm_mean, 120.0);
    hr = bpm_and_sdnn(std::vector<double>{800, 1200});
    EXPECT_DOUBLE_EQ(hr->bpm_mean, 60.0);
    EXPECT_DOUBLE_EQ(hr->hrv_sdnn, 200.0);
    EXPECT_FALSE(bpm_and_sdnn(std::vector<double>{800, kMissing}));
}

TEST(TimeEncoding, QuarterDays) {
    auto [s0, c0] = time_encoding(0, 0);
    EXPECT_NEAR(s0, 0, 1e-15);
    EXPECT_NEAR(c0, 1, 1e-15);
    auto [s6, c6] = time_encoding(6 * 3600, 0);
    EXPECT_NEAR(s6, 1, 1e-15);
    EXPECT_NEAR(c6, 0, 1e-15);
    auto [s12, c12] = time_encoding(12 * 3600 - 3600, 3600);  // noon at UTC+1
    EXPECT_NEAR(s12, 0, 1e-15);
    EXPECT_NEAR(c12, -1, 1e-15);
}

TEST(TimeEncoding, UnitCircle) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double t = std::uniform_real_distribution<double>(-1e9, 2e9)(rng);
        auto [s, c] = time_encoding(t, static_cast<std::int64_t>(rng() % 50000) - 25000);
        EXPECT_NEAR(s * s + c * c, 1.0, 1e-12);
    }
}

TEST(Steps, SingleEventArithmetic) {
    const StepEvent e{0, 60, 100, 80, 5};
    const auto pieces = apportion_event(e, 0, 300);
    ASSERT_EQ(pieces.size(), 1u);
    const auto f = step_features(std::vector<StepPiece>{pieces[0].second});
    EXPECT_DOUBLE_EQ(f->step_count, 100);
    EXPECT_DOUBLE_EQ(f->stepsize_mean, 0.8);
    EXPECT_DOUBLE_EQ(f->speed_mean, 80.0 / 60.0);
}

TEST(Steps, CountsAddUp) {
    std::vector<StepPiece> p(2);
    p[0].steps = 50;
    p[1].steps = 70;
    EXPECT_DOUBLE_EQ(step_features(p)->step_count, 120);
    EXPECT_DOUBLE_EQ(step_features(p)->step_count_std, 10);
    EXPECT_FALSE(step_features(std::vector<StepPiece>{}));
}

TEST(Steps, SpanningEventSplitsByTime) {
    // 40% of the event before the boundary at 300, 60% after.
    const auto pieces = apportion_event({260, 360, 101, 50, 10}, 0, 300);
    ASSERT_EQ(pieces.size(), 2u);
    EXPECT_EQ(pieces[0].first, 0);
    EXPECT_EQ(pieces[1].first, 1);
    EXPECT_EQ(pieces[1].second.steps, 61);  // round(60.6)
    EXPECT_EQ(pieces[0].second.steps, 40);  // remainder
    EXPECT_NEAR(pieces[0].second.distance_m, 20, 1e-12);
}

TEST(Steps, ApportioningConservesCounts) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 2000; ++i) {
        const double a = std::uniform_real_distribution<double>(0, 5000)(rng);
        const double len = std::uniform_real_distribution<double>(1, 2000)(rng);
        const StepEvent e{a, a + len, static_cast<std::int64_t>(rng() % 3000), 10, 1};
        std::int64_t total = 0;
        for (const auto& [k, p] : apportion_event(e, 0, 300)) {
            EXPECT_GE(p.steps, 0);
            total += p.steps;
        }
        EXPECT_EQ(total, e.steps);
    }
}

namespace {

SensorStreams one_day() {
    SensorStreams s;
    s.subject_id = "s";
    s.days = {{"s", Date{0}, Label::normal, Split::train}};
    for (int i = 0; i < 86400; i += 10) s.motion.push_back({double(i), 0, 0, 1, 1, 1, 1});
    for (int i = 0; i < 86400; i += 1) s.rr.push_back({double(i), 1000});
    return s;
}

}  // namespace

TEST(Extract, FullDayGives288Intervals) {
    const auto rows = extract_intervals(one_day(), {});
    ASSERT_EQ(rows.size(), 288u);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_DOUBLE_EQ(rows[k].t_start, 300.0 * double(k));
        EXPECT_TRUE(rows[k].has(kAcc | kGyro | kHeart | kTime));
        EXPECT_DOUBLE_EQ(rows[k].acc_energy, 1.0);
        EXPECT_DOUBLE_EQ(rows[k].gyro_energy, 3.0);
        EXPECT_DOUBLE_EQ(rows[k].bpm_mean, 60.0);
    }
}

TEST(Extract, MotionWithoutRRLacksHeartGroup) {
    auto s = one_day();
    for (auto& r : s.rr)
        if (r.t >= 600 && r.t < 900) r.rr_ms = kMissing;
    const auto rows = extract_intervals(s, {});
    EXPECT_TRUE(rows[2].has(kAcc));
    EXPECT_FALSE(rows[2].has(kHeart));
    EXPECT_FALSE(rows[2].has(kSpectral));
    EXPECT_TRUE(rows[3].has(kHeart));
}

TEST(Extract, SleepRowsBelongToTheNightsStartDate) {
    auto s = one_day();
    s.days.push_back({"s", Date{1}, Label::normal, Split::train});
    for (int i = 86400; i < 2 * 86400; i += 10) s.motion.push_back({double(i), 0, 0, 1, 0, 0, 0});
    s.sleep = {{23 * 3600.0, 31 * 3600.0}};
    const auto rows = extract_intervals(s, {});
    ASSERT_EQ(rows.size(), 576u);
    const auto& after_midnight = rows[288 + 12];  // 01:00 on day 1
    EXPECT_TRUE(after_midnight.is_sleep);
    EXPECT_EQ(after_midnight.date, Date{0});
    EXPECT_FALSE(rows[288 + 7 * 12].is_sleep);  // 07:00 is the end, awake
    EXPECT_EQ(rows[288 + 7 * 12].date, Date{1});
}

TEST(Extract, AgreesWithDirectRecomputationOnSyntheticData) {
    GenConfig g;
    g.n_subjects = 1;
    g.n_days = 5;
    g.motion_hz = 0.5;
    g.rr_hz = 1.0;
    const auto s = generate_subject(g, 0).streams;
    FeatureConfig fc;
    fc.welch_segment = 128;
    const auto rows = extract_intervals(s, fc);
    std::size_t checked = 0;
    for (const auto& f : rows) {
        if (!f.has(kAcc | kHeart)) continue;
        double e = 0, sum_rr = 0;
        std::size_t ne = 0, nr = 0;
        for (const auto& m : s.motion)
            if (m.t >= f.t_start && m.t < f.t_start + 300 && !std::isnan(m.ax)) {
                e += m.ax * m.ax + m.ay * m.ay + m.az * m.az;
                ++ne;
            }
        for (const auto& r : s.rr)
            if (r.t >= f.t_start && r.t < f.t_start + 300 && !std::isnan(r.rr_ms)) {
                sum_rr += r.rr_ms;
                ++nr;
            }
        EXPECT_NEAR(f.acc_energy, e / double(ne), 1e-12 * (1 + f.acc_energy));
        EXPECT_NEAR(f.bpm_mean, 60000.0 / (sum_rr / double(nr)), 1e-9);
        const bool in_sleep = std::any_of(s.sleep.begin(), s.sleep.end(), [&](const SleepInterval& x) {
            return f.t_start + 150 >= x.t_start && f.t_start + 150 < x.t_end;
        });
        EXPECT_EQ(f.is_sleep, in_sleep);
        if (++checked == 40) break;
    }
    EXPECT_EQ(checked, 40u);
}

TEST(FeaturesCsv, RoundTrip) {
    GenConfig g;
    g.n_subjects = 1;
    g.n_days = 5;
    g.motion_hz = 0.2;
    g.rr_hz = 1.0;
    FeatureConfig fc;
    fc.welch_segment = 128;
    const auto rows = extract_intervals(generate_subject(g, 0).streams, fc);
    relapse::testing::TempDir tmp("features");
    write_features_csv(tmp / "f.csv", rows);
    const auto back = read_features_csv(tmp / "f.csv");
    ASSERT_EQ(back.size(), rows.size());
    auto eq = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(back[i].presence, rows[i].presence);
        EXPECT_EQ(back[i].date, rows[i].date);
        EXPECT_EQ(back[i].is_sleep, rows[i].is_sleep);
        EXPECT_TRUE(eq(back[i].lf_fraction, rows[i].lf_fraction));
        EXPECT_TRUE(eq(back[i].bpm_std, rows[i].bpm_std));
        EXPECT_TRUE(eq(back[i].speed_mean, rows[i].speed_mean));
    }
}
