#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radpipe/common.hpp"

namespace radpipe {

struct Dataset {
    Eigen::MatrixXd X;  // n x d
    std::vector<int> y; // 1 = responder
    std::vector<std::string> names;

    std::size_t n_rows() const { return y.size(); }
    std::size_t n_features() const { return names.size(); }

    void validate() const {
        if (static_cast<std::size_t>(X.rows()) != y.size() ||
            static_cast<std::size_t>(X.cols()) != names.size())
            throw std::runtime_error("Dataset: inconsistent shapes");
        if (!X.allFinite()) throw std::runtime_error("Dataset: non-finite value");
        for (int l : y)
            if (l != 0 && l != 1) throw std::runtime_error("Dataset: labels must be 0/1");
    }
    void validate_for_training() const {
        validate();
        int c1 = std::accumulate(y.begin(), y.end(), 0);
        if (c1 == 0 || c1 == static_cast<int>(y.size()))
            throw std::runtime_error("Dataset: training needs both classes");
    }
};

// ---------------------------------------------------------------------------
// SMOTE: appends synthetic minority samples x + lambda*(x_nn - x) until the
// classes balance; neighbors are the k nearest minority samples.

inline Dataset smote(const Dataset& d, int k, std::uint64_t seed) {
    d.validate_for_training();
    const int n1 = std::accumulate(d.y.begin(), d.y.end(), 0);
    const int n0 = static_cast<int>(d.y.size()) - n1;
    if (n0 == n1) return d;
    const int minority_label = n1 < n0 ? 1 : 0;
    const int n_min = std::min(n0, n1), n_maj = std::max(n0, n1);
    if (n_min < 2) throw std::runtime_error("smote: minority class needs >= 2 samples");
    k = std::clamp(k, 1, n_min - 1);

    std::vector<int> minority;
    for (std::size_t i = 0; i < d.y.size(); ++i)
        if (d.y[i] == minority_label) minority.push_back(static_cast<int>(i));

    // k nearest minority neighbors per minority sample, ties by row index
    std::vector<std::vector<int>> nn(minority.size());
    for (std::size_t i = 0; i < minority.size(); ++i) {
        std::vector<std::pair<double, int>> dist;
        for (std::size_t j = 0; j < minority.size(); ++j) {
            if (j == i) continue;
            double d2 = (d.X.row(minority[i]) - d.X.row(minority[j])).squaredNorm();
            dist.emplace_back(d2, minority[j]);
        }
        std::sort(dist.begin(), dist.end());
        for (int q = 0; q < k; ++q) nn[i].push_back(dist[static_cast<std::size_t>(q)].second);
    }

    const int n_new = n_maj - n_min;
    Dataset out;
    out.names = d.names;
    out.y = d.y;
    out.X.resize(d.X.rows() + n_new, d.X.cols());
    out.X.topRows(d.X.rows()) = d.X;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int s = 0; s < n_new; ++s) {
        std::size_t base_pos = static_cast<std::size_t>(s) % minority.size();
        std::uniform_int_distribution<int> pick(0, k - 1);
        int neighbor = nn[base_pos][static_cast<std::size_t>(pick(rng))];
        double lambda = unit(rng);
        out.X.row(d.X.rows() + s) =
            d.X.row(minority[base_pos]) +
            lambda * (d.X.row(neighbor) - d.X.row(minority[base_pos]));
        out.y.push_back(minority_label);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Decision trees: CART with thresholds at midpoints of sorted unique values,
// ties broken by lowest feature index then lowest threshold. Zero-gain splits
// are allowed (a pure node, depth, or min_leaf stops growth), so XOR-style
// targets resolve at depth 2.

struct TreeNode {
    int feature = -1;  // -1: leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& nd = nodes[static_cast<std::size_t>(i)];
            i = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

namespace detail {

struct TreeGrowCfg {
    int max_depth = 6;
    int min_leaf = 1;
    int mtry = 0;      // <= 0 or >= d: consider all features
    bool gini = true;  // false: squared-error splits (boosting residuals)
};

// Leaf value: mean target under gini; Newton step sum(t)/sum(h) otherwise.
inline int grow_node(DecisionTree& tree, const Eigen::MatrixXd& X,
                     const std::vector<double>& target, const std::vector<double>* hess,
                     std::vector<int>& rows, int depth, const TreeGrowCfg& cfg,
                     std::mt19937_64* rng) {
    const int m = static_cast<int>(rows.size());
    double t_sum = 0.0, h_sum = 0.0;
    double t_min = target[static_cast<std::size_t>(rows[0])], t_max = t_min;
    for (int r : rows) {
        t_sum += target[static_cast<std::size_t>(r)];
        h_sum += hess ? (*hess)[static_cast<std::size_t>(r)] : 1.0;
        t_min = std::min(t_min, target[static_cast<std::size_t>(r)]);
        t_max = std::max(t_max, target[static_cast<std::size_t>(r)]);
    }
    auto make_leaf = [&]() {
        TreeNode leaf;
        leaf.value = cfg.gini ? t_sum / m : t_sum / std::max(h_sum, 1e-12);
        tree.nodes.push_back(leaf);
        return static_cast<int>(tree.nodes.size()) - 1;
    };
    if (depth >= cfg.max_depth || m < 2 * cfg.min_leaf || t_max - t_min < 1e-15)
        return make_leaf();

    const int d = static_cast<int>(X.cols());
    std::vector<int> candidates(static_cast<std::size_t>(d));
    std::iota(candidates.begin(), candidates.end(), 0);
    if (cfg.mtry > 0 && cfg.mtry < d && rng) {
        for (int i = 0; i < cfg.mtry; ++i) {
            std::uniform_int_distribution<int> pick(i, d - 1);
            std::swap(candidates[static_cast<std::size_t>(i)],
                      candidates[static_cast<std::size_t>(pick(*rng))]);
        }
        candidates.resize(static_cast<std::size_t>(cfg.mtry));
        std::sort(candidates.begin(), candidates.end());
    }

    // maximize sum over children of (sum target)^2/m (sse) or
    // (pos^2 + neg^2)/m (gini); both equal "negative impurity" up to constants
    auto node_score = [&](double sum, int count) {
        if (cfg.gini) {
            double neg = count - sum;
            return (sum * sum + neg * neg) / count;
        }
        return sum * sum / count;
    };
    const double parent_score = node_score(t_sum, m);
    double best_gain = -1.0;
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int>> vals(static_cast<std::size_t>(m));
    for (int f : candidates) {
        for (int i = 0; i < m; ++i)
            vals[static_cast<std::size_t>(i)] = {X(rows[static_cast<std::size_t>(i)], f),
                                                 rows[static_cast<std::size_t>(i)]};
        std::sort(vals.begin(), vals.end());
        double left_sum = 0.0;
        for (int i = 1; i < m; ++i) {
            left_sum += target[static_cast<std::size_t>(vals[static_cast<std::size_t>(i) - 1].second)];
            if (vals[static_cast<std::size_t>(i)].first ==
                vals[static_cast<std::size_t>(i) - 1].first)
                continue;
            if (i < cfg.min_leaf || m - i < cfg.min_leaf) continue;
            double gain =
                node_score(left_sum, i) + node_score(t_sum - left_sum, m - i) - parent_score;
            if (gain > best_gain) {
                double lo = vals[static_cast<std::size_t>(i) - 1].first;
                double hi = vals[static_cast<std::size_t>(i)].first;
                double thr = (lo + hi) / 2.0;
                if (thr >= hi) thr = lo;  // keep the partition consistent with x <= thr
                best_gain = gain;
                best_feature = f;
                best_threshold = thr;
            }
        }
    }
    if (best_feature < 0) return make_leaf();

    std::vector<int> left_rows, right_rows;
    for (int r : rows)
        (X(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);

    TreeNode node;
    node.feature = best_feature;
    node.threshold = best_threshold;
    tree.nodes.push_back(node);
    int self = static_cast<int>(tree.nodes.size()) - 1;
    tree.nodes[static_cast<std::size_t>(self)].left =
        grow_node(tree, X, target, hess, left_rows, depth + 1, cfg, rng);
    tree.nodes[static_cast<std::size_t>(self)].right =
        grow_node(tree, X, target, hess, right_rows, depth + 1, cfg, rng);
    return self;
}

inline DecisionTree grow_tree(const Eigen::MatrixXd& X, const std::vector<double>& target,
                              const std::vector<double>* hess, std::vector<int> rows,
                              const TreeGrowCfg& cfg, std::mt19937_64* rng) {
    DecisionTree tree;
    grow_node(tree, X, target, hess, rows, 0, cfg, rng);
    return tree;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Trained models. Scores are "higher means more likely class 1"; the decision
// threshold is 0 for the ridge margin and 0.5 for probability-style models.

enum class ModelKind { ridge, tree, forest, gbt };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::ridge: return "ridge";
        case ModelKind::tree: return "tree";
        case ModelKind::forest: return "forest";
        case ModelKind::gbt: return "gbt";
    }
    return "?";
}

inline ModelKind model_kind_from_name(const std::string& s) {
    if (s == "ridge") return ModelKind::ridge;
    if (s == "tree") return ModelKind::tree;
    if (s == "forest") return ModelKind::forest;
    if (s == "gbt") return ModelKind::gbt;
    throw ConfigError("unknown model kind: " + s);
}

struct RidgeParams { double lambda = 1.0; };
struct TreeParams { int max_depth = 6; int min_leaf = 2; };
struct ForestParams {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 2;
    int mtry = 0;  // 0: ceil(sqrt(d))
    bool bootstrap = true;
};
struct GbtParams {
    int n_rounds = 100;
    int depth = 3;
    double learning_rate = 0.1;
    int min_leaf = 2;
};

struct TrainedModel {
    ModelKind kind = ModelKind::ridge;
    double threshold = 0.0;

    Eigen::VectorXd weights;  // ridge
    double bias = 0.0;
    std::vector<DecisionTree> trees;  // tree (1), forest, gbt boosters
    double base_margin = 0.0;         // gbt
    double learning_rate = 0.0;       // gbt

    double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        switch (kind) {
            case ModelKind::ridge:
                return x.dot(weights) + bias;
            case ModelKind::tree:
                return trees[0].predict(x);
            case ModelKind::forest: {
                double s = 0.0;
                for (const auto& t : trees) s += t.predict(x);
                return s / static_cast<double>(trees.size());
            }
            case ModelKind::gbt: {
                double f = base_margin;
                for (const auto& t : trees) f += learning_rate * t.predict(x);
                return detail::sigmoid(f);
            }
        }
        return 0.0;
    }

    std::vector<double> scores(const Eigen::MatrixXd& X) const {
        std::vector<double> out(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            out[static_cast<std::size_t>(i)] = score(X.row(i));
        return out;
    }
};

// Least squares on +-1 targets with an unpenalized intercept, solved by
// normal equations.
inline TrainedModel train_ridge(const Dataset& d, const RidgeParams& p) {
    d.validate_for_training();
    if (p.lambda < 0.0) throw std::runtime_error("train_ridge: lambda must be >= 0");
    const Eigen::Index n = d.X.rows(), dim = d.X.cols();
    Eigen::MatrixXd a(n, dim + 1);
    a.leftCols(dim) = d.X;
    a.col(dim).setOnes();
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) t[i] = d.y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;

    Eigen::MatrixXd gram = a.transpose() * a;
    for (Eigen::Index j = 0; j < dim; ++j) gram(j, j) += p.lambda;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (!lu.isInvertible())
        throw std::runtime_error("train_ridge: singular normal equations (increase lambda)");
    Eigen::VectorXd sol = lu.solve(a.transpose() * t);

    TrainedModel m;
    m.kind = ModelKind::ridge;
    m.threshold = 0.0;
    m.weights = sol.head(dim);
    m.bias = sol[dim];
    return m;
}

inline TrainedModel train_tree(const Dataset& d, const TreeParams& p) {
    d.validate_for_training();
    std::vector<double> target(d.y.begin(), d.y.end());
    std::vector<int> rows(d.n_rows());
    std::iota(rows.begin(), rows.end(), 0);
    detail::TreeGrowCfg cfg{p.max_depth, p.min_leaf, 0, true};
    TrainedModel m;
    m.kind = ModelKind::tree;
    m.threshold = 0.5;
    m.trees.push_back(detail::grow_tree(d.X, target, nullptr, rows, cfg, nullptr));
    return m;
}

inline TrainedModel train_forest(const Dataset& d, const ForestParams& p, std::uint64_t seed) {
    d.validate_for_training();
    if (p.n_trees < 1) throw std::runtime_error("train_forest: n_trees must be >= 1");
    const int dim = static_cast<int>(d.X.cols());
    int mtry = p.mtry;
    if (mtry <= 0) mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim))));
    mtry = std::min(mtry, dim);
    std::vector<double> target(d.y.begin(), d.y.end());

    TrainedModel m;
    m.kind = ModelKind::forest;
    m.threshold = 0.5;
    m.trees.resize(static_cast<std::size_t>(p.n_trees));
    for (int t = 0; t < p.n_trees; ++t) {
        std::mt19937_64 rng(seed_mix(seed, static_cast<std::uint64_t>(t)));
        std::vector<int> rows;
        const int n = static_cast<int>(d.n_rows());
        if (p.bootstrap) {
            std::uniform_int_distribution<int> pick(0, n - 1);
            rows.resize(static_cast<std::size_t>(n));
            for (auto& r : rows) r = pick(rng);
        } else {
            rows.resize(static_cast<std::size_t>(n));
            std::iota(rows.begin(), rows.end(), 0);
        }
        detail::TreeGrowCfg cfg{p.max_depth, p.min_leaf, mtry, true};
        m.trees[static_cast<std::size_t>(t)] =
            detail::grow_tree(d.X, target, nullptr, rows, cfg, &rng);
    }
    return m;
}

// Stagewise logistic-loss boosting with squared-error trees on the gradient
// and Newton leaf values.
inline TrainedModel train_gbt(const Dataset& d, const GbtParams& p) {
    d.validate_for_training();
    if (p.n_rounds < 1) throw std::runtime_error("train_gbt: n_rounds must be >= 1");
    if (!(p.learning_rate > 0.0) || p.learning_rate > 1.0)
        throw std::runtime_error("train_gbt: learning_rate must be in (0,1]");
    const std::size_t n = d.n_rows();
    double prior = std::clamp(
        static_cast<double>(std::accumulate(d.y.begin(), d.y.end(), 0)) / static_cast<double>(n),
        1e-12, 1.0 - 1e-12);

    TrainedModel m;
    m.kind = ModelKind::gbt;
    m.threshold = 0.5;
    m.base_margin = std::log(prior / (1.0 - prior));
    m.learning_rate = p.learning_rate;

    std::vector<double> margin(n, m.base_margin);
    std::vector<double> grad(n), hess(n);
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    for (int round = 0; round < p.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            double prob = detail::sigmoid(margin[i]);
            grad[i] = d.y[i] - prob;
            hess[i] = std::max(prob * (1.0 - prob), 1e-12);
        }
        detail::TreeGrowCfg cfg{p.depth, p.min_leaf, 0, false};
        DecisionTree tree = detail::grow_tree(d.X, grad, &hess, rows, cfg, nullptr);
        for (std::size_t i = 0; i < n; ++i)
            margin[i] += p.learning_rate * tree.predict(d.X.row(static_cast<Eigen::Index>(i)));
        m.trees.push_back(std::move(tree));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Metrics.

// Rank-based AUC: ties contribute 1/2, equal to U1/(n0*n1).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::runtime_error("roc_auc: size mismatch");
    double n1 = 0.0;
    for (int l : labels) n1 += (l == 1);
    double n0 = static_cast<double>(labels.size()) - n1;
    if (n0 == 0.0 || n1 == 0.0) throw std::runtime_error("roc_auc: both classes required");

    // average ranks of the pooled scores
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double r1 = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) r1 += mean_rank;
        i = j + 1;
    }
    return (r1 - n1 * (n1 + 1.0) / 2.0) / (n0 * n1);
}

struct MetricSet {
    double auc = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // no predicted positives
};

inline MetricSet classification_metrics(const std::vector<double>& scores,
                                        const std::vector<int>& labels, double threshold) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::runtime_error("classification_metrics: size mismatch");
    MetricSet m;
    m.auc = roc_auc(scores, labels);
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] >= threshold;
        if (pred && labels[i] == 1) ++tp;
        else if (pred) ++fp;
        else if (labels[i] == 1) ++fn;
        else ++tn;
    }
    m.accuracy = (tp + tn) / static_cast<double>(scores.size());
    if (tp + fp == 0.0) {
        m.degenerate = true;
        m.precision = 0.0;
    } else {
        m.precision = tp / (tp + fp);
    }
    m.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

}  // namespace radpipe
