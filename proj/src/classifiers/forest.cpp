#include "lvdiag/classifiers.hpp"

#include "lvdiag/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lvdiag::clf {
namespace {

struct Grower {
    const Tensor& X;
    const Labels& y;
    const RfConfig& cfg;
    std::size_t max_features;
    Rng rng;
    Tree tree;

    double at(std::size_t i, std::size_t j) const { return X[i * X.dim(1) + j]; }

    int grow(std::vector<std::size_t>& idx, std::size_t depth) {
        std::size_t ones = 0;
        for (std::size_t i : idx) ones += std::size_t(y[i] == 1);
        const std::size_t n = idx.size();
        const int id = int(tree.nodes.size());
        TreeNode node;
        node.samples = n;
        node.impurity = gini(ones, n);
        node.label = 2 * ones > n ? 1 : 0;
        tree.nodes.push_back(node);
        if (depth >= cfg.max_depth || ones == 0 || ones == n || n < 2) return id;

        // Candidate features without replacement.
        const std::size_t p = X.dim(1);
        std::vector<std::size_t> features(p);
        std::iota(features.begin(), features.end(), std::size_t(0));
        for (std::size_t k = 0; k < max_features; ++k) std::swap(features[k], features[k + rng.index(p - k)]);

        double best = node.impurity;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> column(n);
        for (std::size_t k = 0; k < max_features; ++k) {
            const std::size_t f = features[k];
            for (std::size_t r = 0; r < n; ++r) column[r] = {at(idx[r], f), y[idx[r]]};
            std::sort(column.begin(), column.end());
            std::size_t left_ones = 0;
            for (std::size_t r = 0; r + 1 < n; ++r) {
                left_ones += std::size_t(column[r].second == 1);
                if (column[r].first == column[r + 1].first) continue;
                const std::size_t nl = r + 1, nr = n - nl;
                const double weighted =
                    (double(nl) * gini(left_ones, nl) + double(nr) * gini(ones - left_ones, nr)) / double(n);
                if (weighted < best) {
                    best = weighted;
                    best_feature = int(f);
                    best_threshold = 0.5 * (column[r].first + column[r + 1].first);
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) (at(i, std::size_t(best_feature)) <= best_threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        TreeNode& self = tree.nodes[std::size_t(id)];
        self.feature = best_feature;
        self.threshold = best_threshold;
        self.left = l;
        self.right = r;
        return id;
    }
};

} // namespace

double gini(std::size_t ones, std::size_t total) {
    if (total == 0) return 0.0;
    const double p = double(ones) / double(total);
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

int Tree::predict(std::span<const double> x) const {
    std::size_t k = 0;
    while (nodes[k].feature >= 0) k = std::size_t(x[std::size_t(nodes[k].feature)] <= nodes[k].threshold ? nodes[k].left : nodes[k].right);
    return nodes[k].label;
}

std::size_t Tree::depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
        const auto [k, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (nodes[k].feature >= 0) {
            stack.push_back({std::size_t(nodes[k].left), d + 1});
            stack.push_back({std::size_t(nodes[k].right), d + 1});
        }
    }
    return deepest;
}

double RfModel::vote(std::span<const double> x) const {
    std::size_t ones = 0;
    for (const Tree& t : trees) ones += std::size_t(t.predict(x));
    return double(ones) / double(trees.size());
}

RfModel rf_train(const Tensor& X, const Labels& y, const RfConfig& cfg) {
    if (X.rank() != 2 || X.dim(0) != y.size())
        throw ShapeError("rf_train: X " + shape_str(X.shape()) + " with " + std::to_string(y.size()) + " labels");
    if (y.size() < 2) throw std::invalid_argument("rf_train: need at least 2 samples");
    if (cfg.n_trees == 0) throw std::invalid_argument("rf_train: n_trees must be >= 1");
    for (int v : y)
        if (v != 0 && v != 1) throw std::invalid_argument("rf_train: labels must be 0 or 1");
    const std::size_t p = X.dim(1), n = y.size();
    const std::size_t m = cfg.max_features > 0 ? std::min(cfg.max_features, p)
                                               : std::size_t(std::ceil(std::sqrt(double(p))));
    RfModel model;
    model.config = cfg;
    for (std::size_t t = 0; t < cfg.n_trees; ++t) {
        Rng rng(derive_seed(cfg.seed, t));
        std::vector<std::size_t> idx(n);
        if (cfg.bootstrap) {
            for (auto& i : idx) i = rng.index(n);
        } else {
            std::iota(idx.begin(), idx.end(), std::size_t(0));
        }
        model.bootstrap_indices.push_back(idx);
        Grower g{X, y, cfg, m, std::move(rng), {}};
        g.grow(idx, 0);
        model.trees.push_back(std::move(g.tree));
    }
    return model;
}

} // namespace lvdiag::clf
