#include <gtest/gtest.h>

#include <random>
#include <set>

#include "relapse/eval.hpp"
#include "relapse/pipeline.hpp"

using namespace relapse;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
    return wins / pairs;
}

// Step-wise precision-recall integral over every distinct threshold.
double sweep_ap(const std::vector<double>& s, const std::vector<int>& y) {
    const std::set<double, std::greater<>> thresholds(s.begin(), s.end());
    double pos = 0;
    for (int v : y) pos += v;
    double ap = 0, prev_recall = 0;
    for (double t : thresholds) {
        double tp = 0, flagged = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) {
                flagged += 1;
                tp += y[i];
            }
        const double recall = tp / pos;
        ap += (recall - prev_recall) * (tp / flagged);
        prev_recall = recall;
    }
    return ap;
}

struct Instance {
    std::vector<double> s;
    std::vector<int> y;
};

Instance random_instance(std::mt19937_64& rng) {
    Instance in;
    const std::size_t n = 2 + rng() % 49;
    const bool coarse = rng() % 2;  // coarse scores force ties
    for (std::size_t i = 0; i < n; ++i) {
        in.s.push_back(coarse ? double(rng() % 5) : std::uniform_real_distribution<double>(0, 1)(rng));
        in.y.push_back(static_cast<int>(rng() % 2));
    }
    in.y[0] = 1;
    in.y[1] = 0;
    return in;
}

DayScores scores_of(std::initializer_list<std::pair<int, double>> v) {
    DayScores out;
    for (auto [d, s] : v) out[{"s", Date{d}}] = s;
    return out;
}

DayTable labelled_days(int n, std::set<int> relapse, Split split = Split::validation) {
    DayTable t;
    for (int d = 0; d < n; ++d)
        t[{"s", Date{d}}] = {"s", Date{d}, relapse.count(d) ? Label::relapse : Label::normal, split};
    return t;
}

}  // namespace

TEST(RocAuc, Examples) {
    EXPECT_EQ(*roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
    EXPECT_EQ(*roc_auc(std::vector<double>(6, 0.3), std::vector<int>{1, 0, 1, 0, 0, 1}), 0.5);
    EXPECT_FALSE(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}));
}

TEST(RocAuc, MatchesPairCounting) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 200; ++i) {
        const auto in = random_instance(rng);
        EXPECT_NEAR(*roc_auc(in.s, in.y), pair_count_auc(in.s, in.y), 1e-12);
    }
}

TEST(PrAuc, Examples) {
    EXPECT_EQ(*pr_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(*pr_auc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}), 0.25);
    EXPECT_FALSE(pr_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}));
}

TEST(PrAuc, MatchesThresholdSweep) {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 200; ++i) {
        const auto in = random_instance(rng);
        EXPECT_NEAR(*pr_auc(in.s, in.y), sweep_ap(in.s, in.y), 1e-12);
    }
}

TEST(HarmonicMean, ExamplesAndBounds) {
    EXPECT_DOUBLE_EQ(harmonic_mean(0.8, 0.8), 0.8);
    EXPECT_DOUBLE_EQ(harmonic_mean(0.5, 1.0), 2.0 / 3.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng);
        const double h = harmonic_mean(a, b);
        EXPECT_GE(h, std::min(a, b) - 1e-15);
        EXPECT_LE(h, std::max(a, b) + 1e-15);
    }
}

TEST(Aggregate, ModesAndExclusions) {
    std::map<std::string, SubjectMetrics> per;
    per["a"] = {0.5, 1.0, {}, 1, 1};
    per["b"] = {0.8, 0.8, {}, 1, 1};
    per["c"] = {std::nullopt, 0.3, {}, 0, 3};
    auto agg = harmonic_aggregate(per);
    EXPECT_EQ(agg.eligible, 2u);
    EXPECT_EQ(agg.excluded, 1u);
    EXPECT_DOUBLE_EQ(agg.value, (2.0 / 3.0 + 0.8) / 2);
    agg = harmonic_aggregate(per, AggregateMode::harmonic);
    EXPECT_DOUBLE_EQ(agg.value, harmonic_mean(0.65, 0.9));
    per.erase("a");
    per.erase("b");
    EXPECT_THROW(harmonic_aggregate(per), std::runtime_error);
}

TEST(Youden, MatchesExhaustiveSearch) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto in = random_instance(rng);
        double pos = 0, neg = 0;
        for (int v : in.y) (v ? pos : neg) += 1;
        double best_j = -2, best_t = 0;
        for (double t : in.s) {
            double tp = 0, fp = 0;
            for (std::size_t i = 0; i < in.s.size(); ++i)
                if (in.s[i] >= t) (in.y[i] ? tp : fp) += 1;
            const double j = tp / pos - fp / neg;
            if (j > best_j + 1e-12 || (std::abs(j - best_j) <= 1e-12 && t > best_t)) {
                best_j = j;
                best_t = t;
            }
        }
        EXPECT_EQ(*youden_threshold(in.s, in.y), best_t) << trial;
    }
}

TEST(AwakeFallback, IdenticalDistributionsMapToThemselves) {
    const auto days = labelled_days(6, {4, 5});
    const auto s = scores_of({{0, 0.40}, {1, 0.42}, {2, 0.41}, {3, 0.45}, {4, 0.60}, {5, 0.55}});
    const auto fb = awake_fallback_threshold(s, days, s);
    EXPECT_TRUE(fb.enabled);
    EXPECT_NEAR(fb.scale, 1.0, 1e-12);
    EXPECT_NEAR(fb.shift, 0.0, 1e-12);
    for (const auto& [k, v] : fb.scores) EXPECT_NEAR(v, s.at(k), 1e-12);
}

TEST(AwakeFallback, MapsMedianAndThreshold) {
    const auto days = labelled_days(6, {4, 5});
    const auto sleep = scores_of({{0, 0.40}, {1, 0.42}, {2, 0.41}, {3, 0.45}, {4, 0.60}, {5, 0.55}});
    DayScores awake;
    for (const auto& [k, v] : sleep) awake[k] = 3 * v - 1;  // same ranking, different scale
    const auto fb = awake_fallback_threshold(sleep, days, awake);
    EXPECT_NEAR(fb.scale, 1.0 / 3.0, 1e-12);
    for (const auto& [k, v] : fb.scores) EXPECT_NEAR(v, sleep.at(k), 1e-12);
}

TEST(AwakeFallback, FillsOnlyDaysWithoutSleepScores) {
    const auto days = labelled_days(8, {5, 6});
    DayScores sleep = scores_of({{0, 0.40}, {1, 0.42}, {2, 0.41}, {3, 0.45}, {4, 0.44}, {5, 0.60}, {6, 0.55}, {7, 0.43}});
    const DayScores awake = sleep;
    std::vector<std::string> warnings;
    auto full = sleep;
    EXPECT_EQ(apply_awake_fallback(full, awake, days, &warnings), 0u);
    EXPECT_EQ(full, sleep);

    for (int d : {1, 3, 7}) sleep.erase({"s", Date{d}});
    auto filled = sleep;
    EXPECT_EQ(apply_awake_fallback(filled, awake, days, &warnings), 3u);
    EXPECT_EQ(filled.size(), 8u);
    for (const auto& [k, v] : sleep) EXPECT_EQ(filled.at(k), v);
}

TEST(AwakeFallback, DisabledWithoutBothClasses) {
    const auto days = labelled_days(4, {});
    const auto s = scores_of({{0, 0.4}, {1, 0.5}});
    const auto fb = awake_fallback_threshold(s, days, s);
    EXPECT_FALSE(fb.enabled);
    EXPECT_FALSE(fb.warning.empty());
}

TEST(EvaluateDays, UsesLabelledNonTrainDaysOnly) {
    DayTable days = labelled_days(6, {4, 5});
    days[{"s", Date{0}}].split = Split::train;
    days[{"s", Date{1}}].label = Label::unlabeled;
    const ExperimentCell cell{};
    auto scores = scores_of({{0, 0.99}, {1, 0.99}, {2, 0.3}, {4, 0.9}, {5, 0.8}});
    const auto rep = evaluate_days(scores, days, cell);
    EXPECT_EQ(rep.counts.relapse_days, 2u);
    EXPECT_EQ(rep.counts.normal_days, 1u);
    EXPECT_EQ(rep.counts.unscoreable_days, 1u);  // day 3
    ASSERT_TRUE(rep.aggregate_hmean);
    EXPECT_EQ(*rep.aggregate_hmean, 1.0);
}

TEST(EvaluateDays, NoEligibleSubjectIsAnError) {
    const auto rep = evaluate_days(scores_of({{0, 0.5}}), labelled_days(1, {}), ExperimentCell{});
    EXPECT_FALSE(rep.aggregate_hmean);
    EXPECT_FALSE(rep.error.empty());
}

TEST(RenderGrid, LayoutAndBestCell) {
    std::vector<EvalReport> reps;
    for (const auto& c : ExperimentCell::all()) {
        EvalReport r;
        r.cell = c;
        r.aggregate_hmean = c.tag() == "awake_step_60min" ? 0.712 : 0.5;
        reps.push_back(r);
    }
    const auto text = render_grid(reps);
    EXPECT_NE(text.find("5-minute"), std::string::npos);
    EXPECT_NE(text.find("Awake + Step"), std::string::npos);
    EXPECT_NE(text.find("*71.2 %"), std::string::npos);
    EXPECT_NE(text.find("64.5 %"), std::string::npos);
}
