#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "relapse/iforest.hpp"
#include "support.hpp"

using namespace relapse;

namespace {

double harmonic_oracle(double n) {
    // c(n) = 2 H(n-1) - 2 (n-1) / n with H(i) ~ ln(i) + gamma.
    return 2 * (std::log(n - 1) + 0.5772156649) - 2 * (n - 1) / n;
}

std::vector<double> gaussian_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0, 1);
    std::vector<double> v(n * d);
    for (auto& x : v) x = nd(rng);
    return v;
}

ForestModel fit_rows(const std::vector<double>& v, std::size_t d, ForestConfig cfg) {
    std::vector<std::string> cols;
    for (std::size_t c = 0; c < d; ++c) cols.push_back("x" + std::to_string(c));
    return fit(MatrixView{v, v.size() / d, d}, cols, cfg);
}

}  // namespace

TEST(AvgPathLength, ClosedForm) {
    EXPECT_EQ(avg_path_length_c(1), 0.0);
    EXPECT_EQ(avg_path_length_c(0), 0.0);
    EXPECT_NEAR(avg_path_length_c(2), 0.1544313298, 1e-10);
    EXPECT_GT(avg_path_length_c(256), avg_path_length_c(128));
    for (double n : {3.0, 10.0, 50.0, 256.0}) EXPECT_NEAR(avg_path_length_c(n), harmonic_oracle(n), 1e-12);
}

TEST(PathLength, LeavesAddTheUnbuiltSubtree) {
    const std::vector<double> x{0.0};
    EXPECT_EQ(path_length(IsolationTree::leaf(1), x), 0.0);
    EXPECT_DOUBLE_EQ(path_length(IsolationTree::leaf(37), x), avg_path_length_c(37));
}

TEST(PathLength, DepthLimitedLeaf) {
    // A chain of 8 splits on x0 < 1 whose left branch ends in a leaf of 50.
    IsolationTree t = IsolationTree::leaf(58);
    std::int32_t at = 0;
    for (int d = 0; d < 8; ++d) at = t.split(at, 0, 1.0, static_cast<std::uint32_t>(50 + 7 - d), 1).first;
    EXPECT_EQ(t.depth(), 8u);
    EXPECT_NEAR(path_length(t, std::vector<double>{0.0}), 8 + avg_path_length_c(50), 1e-12);
    EXPECT_NEAR(path_length(t, std::vector<double>{2.0}), 1.0, 1e-12);
}

TEST(Score, FixedPoints) {
    ForestModel m;
    m.psi = 64;
    m.columns = {"x"};
    m.trees.assign(3, IsolationTree::leaf(64));
    EXPECT_NEAR(score(m, std::vector<double>{0.0}), 0.5, 1e-9);
    m.trees.assign(3, IsolationTree::leaf(1));
    EXPECT_EQ(score(m, std::vector<double>{0.0}), 1.0);
}

TEST(Fit, SubsampleClampedToRowCount) {
    const auto v = gaussian_rows(40, 3, 1);
    const auto m = fit_rows(v, 3, {20, 256, 5, 1});
    EXPECT_EQ(m.psi, 40u);
    for (const auto& t : m.trees) EXPECT_EQ(t.nodes[0].size, 40u);
}

TEST(Fit, IdenticalRowsGiveSingleLeaves) {
    const std::vector<double> v(300 * 2, 4.25);
    const auto m = fit_rows(v, 2, {10, 64, 5, 1});
    for (const auto& t : m.trees) {
        ASSERT_EQ(t.nodes.size(), 1u);
        EXPECT_EQ(t.nodes[0].size, 64u);
    }
}

TEST(Fit, AdjacentDoublesStillSplit) {
    const double a = 1.0, b = std::nextafter(1.0, 2.0);
    const std::vector<double> v{a, b, a, b};
    const auto m = fit_rows(v, 1, {5, 4, 1, 1});
    for (const auto& t : m.trees) EXPECT_GT(t.nodes.size(), 1u);
}

TEST(Fit, StructuralInvariants) {
    const auto v = gaussian_rows(2000, 4, 2);
    const auto m = fit_rows(v, 4, {50, 256, 9, 1});
    const auto limit = static_cast<std::size_t>(std::ceil(std::log2(256.0)));
    for (const auto& t : m.trees) {
        EXPECT_LE(t.depth(), limit);
        for (const auto& n : t.nodes)
            if (n.feature >= 0) {
                EXPECT_EQ(n.size, t.nodes[std::size_t(n.left)].size + t.nodes[std::size_t(n.right)].size);
                EXPECT_GT(t.nodes[std::size_t(n.left)].size, 0u);
                EXPECT_GT(t.nodes[std::size_t(n.right)].size, 0u);
            }
    }
}

TEST(Fit, DeterministicAndThreadIndependent) {
    const auto v = gaussian_rows(1000, 5, 3);
    const auto a = to_json(fit_rows(v, 5, {100, 256, 42, 1})).dump();
    const auto b = to_json(fit_rows(v, 5, {100, 256, 42, 1})).dump();
    const auto c = to_json(fit_rows(v, 5, {100, 256, 42, 4})).dump();
    const auto d = to_json(fit_rows(v, 5, {100, 256, 43, 1})).dump();
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    EXPECT_NE(a, d);
}

TEST(Fit, RejectsTooFewRowsAndRelapseRows) {
    EXPECT_THROW(fit_rows({1.0}, 1, {}), DataContractError);
    FeatureMatrix m;
    m.columns = {"x"};
    RowMeta r;
    r.label = Label::normal;
    m.push_row(r, std::vector<double>{1});
    m.push_row(r, std::vector<double>{2});
    EXPECT_NO_THROW(fit(m, ForestConfig{}));
    r.label = Label::relapse;
    m.push_row(r, std::vector<double>{3});
    EXPECT_THROW(fit(m, ForestConfig{}), DataContractError);
}

TEST(Score, FarOutlierScoresHighest) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::normal_distribution<double> nd(0, 0.1);
        std::vector<double> train(512);
        for (auto& x : train) x = nd(rng);
        const auto m = fit_rows(train, 1, {100, 64, seed, 1});
        double best_inlier = 0;
        for (double x : {0.0, 0.05, -0.05, 0.1}) best_inlier = std::max(best_inlier, score(m, std::vector<double>{x}));
        wins += score(m, std::vector<double>{10.0}) > best_inlier;
    }
    EXPECT_GE(wins, 95);
}

TEST(Score, AlwaysInUnitInterval) {
    const auto v = gaussian_rows(500, 3, 4);
    const auto m = fit_rows(v, 3, {30, 128, 1, 1});
    const auto probe = gaussian_rows(2000, 3, 5);
    for (std::size_t i = 0; i < 2000; ++i) {
        const double s = score(m, std::span<const double>(probe).subspan(3 * i, 3));
        EXPECT_GT(s, 0.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(Score, WrongWidthIsRejected) {
    const auto m = fit_rows(gaussian_rows(100, 2, 1), 2, {5, 16, 1, 1});
    EXPECT_THROW(score(m, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Serialization, RoundTripPreservesScores) {
    const auto v = gaussian_rows(800, 4, 6);
    const auto m = fit_rows(v, 4, {60, 128, 77, 1});
    relapse::testing::TempDir tmp("model");
    save_model(tmp / "m.json", m);
    const auto back = load_model(tmp / "m.json");
    EXPECT_EQ(back.psi, m.psi);
    EXPECT_EQ(back.columns, m.columns);
    EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
    const auto probe = gaussian_rows(300, 4, 8);
    for (std::size_t i = 0; i < 300; ++i) {
        const auto x = std::span<const double>(probe).subspan(4 * i, 4);
        EXPECT_NEAR(score(back, x), score(m, x), 1e-12);
    }
}

TEST(Serialization, InconsistentTreeCountIsRejected) {
    auto j = to_json(fit_rows(gaussian_rows(50, 1, 1), 1, {3, 16, 1, 1}));
    j["meta"]["n_trees"] = 4;
    EXPECT_THROW(forest_from_json(j), DataContractError);
}

TEST(DayPoolingTest, MeanAndMax) {
    FeatureMatrix m;
    m.columns = {"x"};
    auto add = [&](const char* s, int d) {
        RowMeta r;
        r.subject_id = s;
        r.date = Date{d};
        m.push_row(r, std::vector<double>{0});
    };
    add("a", 0);
    add("a", 1);
    add("a", 1);
    add("b", 1);
    const std::vector<double> s{0.7, 0.2, 0.6, 0.5};
    auto mean = pool_days(m, s);
    EXPECT_EQ(mean.size(), 3u);
    EXPECT_EQ(mean.at({"a", Date{0}}), 0.7);
    EXPECT_DOUBLE_EQ(mean.at({"a", Date{1}}), 0.4);
    EXPECT_EQ(pool_days(m, s, DayPooling::max).at({"a", Date{1}}), 0.6);
}

TEST(DayPoolingTest, IdenticalRowsGiveEqualDayScores) {
    const auto model = fit_rows(gaussian_rows(200, 2, 1), 2, {20, 64, 1, 1});
    FeatureMatrix m;
    m.columns = model.columns;
    for (int d = 0; d < 2; ++d)
        for (int k = 0; k < 3; ++k) {
            RowMeta r;
            r.subject_id = "s";
            r.date = Date{d};
            m.push_row(r, std::vector<double>{0.3, -1.2});
        }
    const auto days = score_days(model, m);
    EXPECT_EQ(days.at({"s", Date{0}}), days.at({"s", Date{1}}));
}
