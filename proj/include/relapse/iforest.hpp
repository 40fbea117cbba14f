#pragma once

// Isolation Forest novelty detector: random axis-aligned trees grown on
// subsamples of inlier rows; short average isolation paths mean anomalies.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "relapse/core.hpp"
#include "relapse/csv.hpp"
#include "relapse/dataset.hpp"

namespace relapse {

inline constexpr double kEulerGamma = 0.5772156649;

/// Average path length of an unsuccessful BST search among n points.
inline double avg_path_length_c(double n) {
    if (n <= 1) return 0.0;
    const double h = std::log(n - 1) + kEulerGamma;
    return 2.0 * h - 2.0 * (n - 1) / n;
}

/// Flat array of nodes; node 0 is the root. Leaves have feature == -1.
struct IsolationTree {
    struct Node {
        std::int32_t feature = -1;
        double value = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::uint32_t size = 0;
    };
    std::vector<Node> nodes;

    static IsolationTree leaf(std::uint32_t size) { return {{Node{-1, 0, -1, -1, size}}}; }

    /// Appends a leaf and returns its index.
    std::int32_t add_leaf(std::uint32_t size) {
        nodes.push_back({-1, 0, -1, -1, size});
        return static_cast<std::int32_t>(nodes.size() - 1);
    }

    /// Turns leaf `at` into a split over two fresh children; returns (left, right).
    std::pair<std::int32_t, std::int32_t> split(std::int32_t at, std::int32_t feature, double value,
                                                std::uint32_t left_size, std::uint32_t right_size) {
        const auto l = add_leaf(left_size);
        const auto r = add_leaf(right_size);
        auto& n = nodes[static_cast<std::size_t>(at)];
        n.feature = feature;
        n.value = value;
        n.left = l;
        n.right = r;
        return {l, r};
    }

    std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            const auto& n = nodes[static_cast<std::size_t>(i)];
            best = std::max(best, d);
            if (n.feature >= 0) {
                stack.push_back({n.left, d + 1});
                stack.push_back({n.right, d + 1});
            }
        }
        return best;
    }
};

/// Edges to the reached leaf plus c(leaf size) for the unbuilt subtree.
inline double path_length(const IsolationTree& tree, std::span<const double> x) {
    std::size_t i = 0;
    double edges = 0;
    while (tree.nodes[i].feature >= 0) {
        const auto& n = tree.nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.value ? n.left : n.right);
        edges += 1;
    }
    return edges + avg_path_length_c(tree.nodes[i].size);
}

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t psi = 256;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    void validate() const {
        if (n_trees < 1) throw std::invalid_argument("iforest: n_trees must be >= 1");
        if (psi < 2) throw std::invalid_argument("iforest: psi must be >= 2");
    }
};

struct ForestModel {
    std::vector<IsolationTree> trees;
    std::size_t psi = 0;  // effective subsample size min(psi, N)
    std::uint64_t seed = 0;
    std::vector<std::string> columns;

    std::size_t n_trees() const { return trees.size(); }
    std::size_t dims() const { return columns.size(); }
};

/// Dense row-major view used for fitting.
struct MatrixView {
    std::span<const double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

namespace detail {

inline IsolationTree grow_tree(const MatrixView& m, std::size_t psi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(m.rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first psi entries become the subsample.
    for (std::size_t i = 0; i < psi; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, m.rows - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(psi);
    const std::size_t limit = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(psi))));

    IsolationTree tree = IsolationTree::leaf(static_cast<std::uint32_t>(psi));
    struct Task {
        std::int32_t node;
        std::size_t begin, end, depth;
    };
    std::vector<Task> stack{{0, 0, psi, 0}};
    std::vector<std::size_t> candidates;
    std::vector<double> lo(m.cols), hi(m.cols);
    while (!stack.empty()) {
        const Task t = stack.back();
        stack.pop_back();
        if (t.depth >= limit || t.end - t.begin <= 1) continue;
        std::fill(lo.begin(), lo.end(), std::numeric_limits<double>::infinity());
        std::fill(hi.begin(), hi.end(), -std::numeric_limits<double>::infinity());
        for (std::size_t k = t.begin; k < t.end; ++k)
            for (std::size_t c = 0; c < m.cols; ++c) {
                const double v = m.at(idx[k], c);
                lo[c] = std::min(lo[c], v);
                hi[c] = std::max(hi[c], v);
            }
        candidates.clear();
        for (std::size_t c = 0; c < m.cols; ++c)
            if (lo[c] < hi[c]) candidates.push_back(c);
        if (candidates.empty()) continue;

        const std::size_t f = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
        // Strictly inside (lo, hi); adjacent doubles leave only hi, which still separates.
        double v = hi[f];
        if (std::nextafter(lo[f], hi[f]) < hi[f]) {
            std::uniform_real_distribution<double> u(lo[f], hi[f]);
            do v = u(rng);
            while (!(v > lo[f] && v < hi[f]));
        }

        const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(t.begin),
                                        idx.begin() + static_cast<std::ptrdiff_t>(t.end),
                                        [&](std::size_t r) { return m.at(r, f) < v; });
        const std::size_t split_at = static_cast<std::size_t>(mid - idx.begin());
        auto [l, r] = tree.split(t.node, static_cast<std::int32_t>(f), v,
                                 static_cast<std::uint32_t>(split_at - t.begin),
                                 static_cast<std::uint32_t>(t.end - split_at));
        stack.push_back({r, split_at, t.end, t.depth + 1});
        stack.push_back({l, t.begin, split_at, t.depth + 1});
    }
    return tree;
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Grows cfg.n_trees trees; tree i is seeded with derive_seed(cfg.seed, i)
/// so the model does not depend on the thread count.
inline ForestModel fit(const MatrixView& m, std::vector<std::string> columns, const ForestConfig& cfg) {
    cfg.validate();
    if (m.rows < 2) throw DataContractError("iforest: need at least 2 training rows, got " + std::to_string(m.rows));
    if (m.cols != columns.size()) throw std::invalid_argument("iforest: column names do not match matrix width");
    ForestModel model;
    model.psi = std::min(cfg.psi, m.rows);
    model.seed = cfg.seed;
    model.columns = std::move(columns);
    model.trees.resize(cfg.n_trees);
    detail::parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t i) {
        model.trees[i] = detail::grow_tree(m, model.psi, derive_seed(cfg.seed, i));
    });
    return model;
}

/// Fits on a labelled matrix; every row must be a normal day.
inline ForestModel fit(const FeatureMatrix& train, const ForestConfig& cfg) {
    for (std::size_t i = 0; i < train.rows(); ++i)
        if (train.meta[i].label != Label::normal)
            throw DataContractError("iforest: training row for " + train.meta[i].subject_id + " " +
                                    train.meta[i].date.str() + " has label '" + std::string(to_string(train.meta[i].label)) +
                                    "'; only normal rows may be used for fitting");
    return fit(MatrixView{train.values, train.rows(), train.dims()}, train.columns, cfg);
}

inline double mean_path_length(const ForestModel& model, std::span<const double> x) {
    if (x.size() != model.dims())
        throw std::invalid_argument("iforest: vector has " + std::to_string(x.size()) + " values, model expects " +
                                    std::to_string(model.dims()));
    double s = 0;
    for (const auto& t : model.trees) s += path_length(t, x);
    return s / static_cast<double>(model.n_trees());
}

/// s = 2^(-E[h] / c(psi)); in (0, 1], higher is more anomalous.
inline double score(const ForestModel& model, std::span<const double> x) {
    return std::exp2(-mean_path_length(model, x) / avg_path_length_c(static_cast<double>(model.psi)));
}

inline std::vector<double> score_rows(const ForestModel& model, const FeatureMatrix& m, unsigned threads = 1) {
    if (m.columns != model.columns) throw std::invalid_argument("iforest: matrix columns do not match model");
    std::vector<double> out(m.rows());
    const std::size_t chunk = 4096;
    const std::size_t n_chunks = (m.rows() + chunk - 1) / chunk;
    detail::parallel_for(n_chunks, threads, [&](std::size_t c) {
        for (std::size_t i = c * chunk; i < std::min(m.rows(), (c + 1) * chunk); ++i) out[i] = score(model, m.row(i));
    });
    return out;
}

enum class DayPooling { mean, max };

inline DayPooling parse_day_pooling(std::string_view s) {
    if (s == "mean") return DayPooling::mean;
    if (s == "max") return DayPooling::max;
    throw std::invalid_argument("unknown day pooling '" + std::string(s) + "'");
}

inline std::string to_string(DayPooling p) { return p == DayPooling::mean ? "mean" : "max"; }

using DayScores = std::map<DayKey, double>;

/// Pools row scores per (subject, date). Days without rows are absent.
inline DayScores pool_days(const FeatureMatrix& m, std::span<const double> row_scores,
                           DayPooling pooling = DayPooling::mean) {
    std::map<DayKey, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto& [v, n] = acc[{m.meta[i].subject_id, m.meta[i].date}];
        if (pooling == DayPooling::mean)
            v += row_scores[i];
        else
            v = n ? std::max(v, row_scores[i]) : row_scores[i];
        ++n;
    }
    DayScores out;
    for (const auto& [k, vn] : acc)
        out[k] = pooling == DayPooling::mean ? vn.first / static_cast<double>(vn.second) : vn.first;
    return out;
}

inline DayScores score_days(const ForestModel& model, const FeatureMatrix& m, DayPooling pooling = DayPooling::mean,
                            unsigned threads = 1) {
    return pool_days(m, score_rows(model, m, threads), pooling);
}

// ---------------------------------------------------------------------------
// Serialization: {meta:{n_trees,psi,seed,columns}, trees:[nested nodes]}

namespace detail {

inline nlohmann::json node_to_json(const IsolationTree& t, std::int32_t i) {
    const auto& n = t.nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) return {{"size", n.size}};
    return {{"feature", n.feature},
            {"value", n.value},
            {"size", n.size},
            {"left", node_to_json(t, n.left)},
            {"right", node_to_json(t, n.right)}};
}

inline std::int32_t node_from_json(IsolationTree& t, const nlohmann::json& j) {
    const auto i = t.add_leaf(j.at("size").get<std::uint32_t>());
    if (j.contains("feature")) {
        const auto f = j.at("feature").get<std::int32_t>();
        const double v = j.at("value").get<double>();
        const auto l = node_from_json(t, j.at("left"));
        const auto r = node_from_json(t, j.at("right"));
        auto& n = t.nodes[static_cast<std::size_t>(i)];
        n.feature = f;
        n.value = v;
        n.left = l;
        n.right = r;
    }
    return i;
}

}  // namespace detail

inline nlohmann::json to_json(const ForestModel& m) {
    nlohmann::json j;
    j["meta"] = {{"n_trees", m.n_trees()}, {"psi", m.psi}, {"seed", m.seed}, {"columns", m.columns}};
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(detail::node_to_json(t, 0));
    return j;
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
    ForestModel m;
    const auto& meta = j.at("meta");
    m.psi = meta.at("psi").get<std::size_t>();
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.columns = meta.at("columns").get<std::vector<std::string>>();
    for (const auto& tj : j.at("trees")) {
        IsolationTree t;
        detail::node_from_json(t, tj);
        m.trees.push_back(std::move(t));
    }
    if (m.trees.size() != meta.at("n_trees").get<std::size_t>())
        throw DataContractError("model: n_trees does not match the number of serialized trees");
    if (m.trees.empty() || m.psi < 2) throw DataContractError("model: need n_trees >= 1 and psi >= 2");
    return m;
}

inline void save_model(const std::filesystem::path& path, const ForestModel& m) {
    csv::write_file(path, to_json(m).dump() + "\n");
}

inline ForestModel load_model(const std::filesystem::path& path) {
    return forest_from_json(nlohmann::json::parse(csv::read_file(path)));
}

}  // namespace relapse
