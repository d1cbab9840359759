#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "radpipe/models.hpp"
#include "radpipe/stats.hpp"
#include "radpipe/table.hpp"

namespace radpipe {

// ---------------------------------------------------------------------------
// Stratified folds: shuffle within class, deal round-robin.

struct FoldPlan {
    std::vector<std::vector<int>> test_indices;  // disjoint, covering all samples
    std::uint64_t seed = 0;
};

inline FoldPlan stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed) {
    if (k < 2) throw std::runtime_error("stratified_kfold: k must be >= 2");
    std::vector<int> class_count(2, 0);
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::runtime_error("stratified_kfold: labels must be 0/1");
        ++class_count[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < 2; ++c)
        if (class_count[static_cast<std::size_t>(c)] < k)
            throw std::runtime_error("stratified_kfold: class " + std::to_string(c) +
                                     " has fewer samples than folds");

    FoldPlan plan;
    plan.seed = seed;
    plan.test_indices.assign(static_cast<std::size_t>(k), {});
    for (int c = 0; c < 2; ++c) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) idx.push_back(static_cast<int>(i));
        std::mt19937_64 rng(seed_mix(seed, static_cast<std::uint64_t>(c)));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i)
            plan.test_indices[i % static_cast<std::size_t>(k)].push_back(idx[i]);
    }
    for (auto& fold : plan.test_indices) std::sort(fold.begin(), fold.end());
    return plan;
}

// Single stratified split; test_fraction of each class goes to the test side.
inline std::pair<std::vector<int>, std::vector<int>> stratified_holdout(
    const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0) || test_fraction >= 1.0)
        throw std::runtime_error("stratified_holdout: test_fraction must be in (0,1)");
    std::vector<int> train, test;
    for (int c = 0; c < 2; ++c) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) idx.push_back(static_cast<int>(i));
        if (idx.size() < 2)
            throw std::runtime_error("stratified_holdout: each class needs >= 2 samples");
        std::mt19937_64 rng(seed_mix(seed, static_cast<std::uint64_t>(c), 0x101));
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t n_test = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(idx.size()))),
            1, idx.size() - 1);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_test ? test : train).push_back(idx[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

// ---------------------------------------------------------------------------
// Configuration.

struct ModelConfig {
    ModelKind kind = ModelKind::forest;
    RidgeParams ridge;
    TreeParams tree;
    ForestParams forest;
    GbtParams gbt;

    double decision_threshold() const { return kind == ModelKind::ridge ? 0.0 : 0.5; }
};

inline TrainedModel train_model(const ModelConfig& mc, const Dataset& d, std::uint64_t seed) {
    switch (mc.kind) {
        case ModelKind::ridge: return train_ridge(d, mc.ridge);
        case ModelKind::tree: return train_tree(d, mc.tree);
        case ModelKind::forest: return train_forest(d, mc.forest, seed);
        case ModelKind::gbt: return train_gbt(d, mc.gbt);
    }
    throw std::runtime_error("train_model: bad kind");
}

struct NcvConfig {
    int outer_k = 5;
    int inner_k = 5;
    ModelConfig model;
    int max_features = 15;  // effective cap is min(max_features, n_train/7)
    double corr_threshold = 0.6;
    bool smote = true;
    int smote_k = 5;
    double screen_alpha = 0.0;  // 0: keep every feature (ranking only)
    int screen_top_m = 0;       // 0: no cap on SFS candidates after redundancy
    bool leaky_screening = false;  // diagnostic mode: stage-1 screening sees all rows
    std::uint64_t seed = 42;

    // test instrumentation: observe which rows each pipeline stage consumes
    std::function<void(int fold, const char* stage, const std::vector<int>& rows)> stage_hook;

    void validate() const {
        if (outer_k < 2 || inner_k < 2) throw ConfigError("ncv: outer_k and inner_k must be >= 2");
        if (max_features < 1) throw ConfigError("ncv: max_features must be >= 1");
        if (!(corr_threshold > 0.0) || corr_threshold > 1.0)
            throw ConfigError("ncv: corr_threshold must be in (0,1]");
        if (smote_k < 1) throw ConfigError("ncv: smote_k must be >= 1");
        if (screen_alpha < 0.0 || screen_alpha > 1.0)
            throw ConfigError("ncv: screen_alpha must be in [0,1]");
        if (screen_top_m < 0) throw ConfigError("ncv: screen_top_m must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Sequential forward selection, inner-CV scored.

struct SfsResult {
    std::vector<std::string> ordered_features;  // selection order
    std::vector<double> inner_auc_trace;        // best mean inner AUC per step
    int best_prefix_len = 0;

    std::vector<std::string> best_prefix() const {
        return {ordered_features.begin(), ordered_features.begin() + best_prefix_len};
    }
};

namespace detail {

inline Dataset subset_dataset(const FeatureTable& t, const std::vector<int>& rows,
                              const std::vector<int>& cols,
                              const std::vector<std::string>& col_names) {
    Dataset d;
    d.names = col_names;
    d.y.reserve(rows.size());
    d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        d.y.push_back(t.labels[static_cast<std::size_t>(rows[i])]);
        for (std::size_t j = 0; j < cols.size(); ++j)
            d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                t.values(rows[i], cols[j]);
    }
    return d;
}

}  // namespace detail

// Greedy forward selection on the given training rows. Each step scores every
// remaining candidate by mean inner-fold AUC of the configured model, with
// SMOTE applied to each inner-training fold only; ties go to the
// lexicographically smaller name. best_prefix is the shortest prefix
// attaining the trace maximum.
inline SfsResult sfs_select(const FeatureTable& t, const std::vector<int>& rows,
                            const std::vector<std::string>& candidates, const NcvConfig& cfg,
                            std::uint64_t fold_seed) {
    std::vector<int> labels_sub;
    for (int r : rows) labels_sub.push_back(t.labels[static_cast<std::size_t>(r)]);
    FoldPlan inner = stratified_kfold(labels_sub, cfg.inner_k, seed_mix(fold_seed, 0xF01D));

    // inner train/test row ids (global) per fold
    std::vector<std::vector<int>> inner_train(static_cast<std::size_t>(cfg.inner_k));
    std::vector<std::vector<int>> inner_test(static_cast<std::size_t>(cfg.inner_k));
    for (int f = 0; f < cfg.inner_k; ++f) {
        std::vector<char> is_test(rows.size(), 0);
        for (int local : inner.test_indices[static_cast<std::size_t>(f)])
            is_test[static_cast<std::size_t>(local)] = 1;
        for (std::size_t i = 0; i < rows.size(); ++i)
            (is_test[i] ? inner_test : inner_train)[static_cast<std::size_t>(f)].push_back(rows[i]);
    }

    std::vector<std::string> remaining = candidates;
    std::sort(remaining.begin(), remaining.end());
    remaining.erase(std::unique(remaining.begin(), remaining.end()), remaining.end());

    SfsResult res;
    std::vector<std::string> selected;
    std::vector<int> selected_cols;

    // sample-size guard: never select more than n_train/7 features
    const int cap = std::max(1, std::min(cfg.max_features, static_cast<int>(rows.size()) / 7));
    const int max_steps = std::min<int>(cap, static_cast<int>(remaining.size()));
    for (int step = 0; step < max_steps; ++step) {
        std::vector<double> cand_auc(remaining.size());
        parallel_for(remaining.size(), [&](std::size_t ci) {
            const std::string& cand = remaining[ci];
            std::vector<int> cols = selected_cols;
            cols.push_back(t.col_index(cand));
            std::vector<std::string> names = selected;
            names.push_back(cand);
            double auc_sum = 0.0;
            for (int f = 0; f < cfg.inner_k; ++f) {
                Dataset train = detail::subset_dataset(
                    t, inner_train[static_cast<std::size_t>(f)], cols, names);
                std::uint64_t eval_seed = seed_mix(fold_seed, static_cast<std::uint64_t>(f),
                                                   static_cast<std::uint64_t>(step),
                                                   hash_str(cand));
                if (cfg.smote) train = smote(train, cfg.smote_k, seed_mix(eval_seed, 0x5307E));
                TrainedModel model = train_model(cfg.model, train, seed_mix(eval_seed, 0x7A1));
                Dataset test = detail::subset_dataset(
                    t, inner_test[static_cast<std::size_t>(f)], cols, names);
                auc_sum += roc_auc(model.scores(test.X), test.y);
            }
            cand_auc[ci] = auc_sum / static_cast<double>(cfg.inner_k);
        });

        std::size_t best = 0;
        for (std::size_t ci = 1; ci < remaining.size(); ++ci)
            if (cand_auc[ci] > cand_auc[best] ||
                (cand_auc[ci] == cand_auc[best] && remaining[ci] < remaining[best]))
                best = ci;

        selected.push_back(remaining[best]);
        selected_cols.push_back(t.col_index(remaining[best]));
        res.inner_auc_trace.push_back(cand_auc[best]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    }
    res.ordered_features = selected;
    if (!res.inner_auc_trace.empty()) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < res.inner_auc_trace.size(); ++i)
            if (res.inner_auc_trace[i] > res.inner_auc_trace[arg]) arg = i;
        res.best_prefix_len = static_cast<int>(arg) + 1;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Nested cross-validation.

struct FoldReport {
    int fold = 0;
    std::vector<int> test_indices;
    int n_screen_kept = 0;
    std::vector<std::string> selected;  // best SFS prefix, selection order
    std::vector<double> inner_auc_trace;
    MetricSet metrics;
};

struct AggregateStat {
    double mean = 0.0;
    double stddev = 0.0;  // population, over folds
};

struct NcvReport {
    std::string model;
    std::uint64_t seed = 0;
    int outer_k = 0;
    int inner_k = 0;
    int max_features = 0;
    double corr_threshold = 0.0;
    bool smote = false;
    bool leaky_screening = false;
    std::vector<FoldReport> folds;
    AggregateStat auc, accuracy, precision, recall, f1;
    std::map<std::string, int> feature_counts;  // over fold selections
};

namespace detail {

inline AggregateStat aggregate_of(const std::vector<double>& v) {
    return {vec_mean(v), vec_std(v)};
}

// One outer evaluation: screen + redundancy + SFS on the training rows, SMOTE
// and final fit, metrics on the untouched test rows.
inline FoldReport evaluate_fold(const FeatureTable& t, const NcvConfig& cfg, int fold_id,
                                const std::vector<int>& train, const std::vector<int>& test) {
    auto hook = [&](const char* stage, const std::vector<int>& rows) {
        if (cfg.stage_hook) cfg.stage_hook(fold_id, stage, rows);
    };
    std::vector<int> all_rows(t.n_rows());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    const std::vector<int>& screen_rows = cfg.leaky_screening ? all_rows : train;
    hook("screen", screen_rows);

    ScreeningResult screening = univariate_screen(t, screen_rows);
    std::vector<std::string> kept = redundancy_filter(t, screen_rows, screening,
                                                      cfg.corr_threshold);
    if (cfg.screen_alpha > 0.0) {
        std::vector<std::string> filtered;
        for (const auto& name : kept)
            if (screening.by_name(name).p_value < cfg.screen_alpha) filtered.push_back(name);
        kept = std::move(filtered);
    }
    if (cfg.screen_top_m > 0 && static_cast<int>(kept.size()) > cfg.screen_top_m)
        kept.resize(static_cast<std::size_t>(cfg.screen_top_m));  // kept is ascending-p
    if (kept.empty()) throw std::runtime_error("ncv: screening removed every feature");

    hook("sfs", train);
    std::uint64_t fold_seed = seed_mix(cfg.seed, static_cast<std::uint64_t>(fold_id));
    SfsResult sfs = sfs_select(t, train, kept, cfg, fold_seed);

    FoldReport rep;
    rep.fold = fold_id;
    rep.test_indices = test;
    rep.n_screen_kept = static_cast<int>(kept.size());
    rep.selected = sfs.best_prefix();
    rep.inner_auc_trace = sfs.inner_auc_trace;

    std::vector<int> cols;
    for (const auto& name : rep.selected) cols.push_back(t.col_index(name));
    Dataset train_ds = subset_dataset(t, train, cols, rep.selected);
    hook("final_smote", train);
    if (cfg.smote) train_ds = smote(train_ds, cfg.smote_k, seed_mix(fold_seed, 0xF17));
    TrainedModel model = train_model(cfg.model, train_ds, seed_mix(fold_seed, 0x3A1));

    hook("evaluate", test);
    Dataset test_ds = subset_dataset(t, test, cols, rep.selected);
    rep.metrics =
        classification_metrics(model.scores(test_ds.X), test_ds.y, cfg.model.decision_threshold());
    return rep;
}

inline void finalize_report(NcvReport& rep, const NcvConfig& cfg) {
    rep.model = model_kind_name(cfg.model.kind);
    rep.seed = cfg.seed;
    rep.outer_k = cfg.outer_k;
    rep.inner_k = cfg.inner_k;
    rep.max_features = cfg.max_features;
    rep.corr_threshold = cfg.corr_threshold;
    rep.smote = cfg.smote;
    rep.leaky_screening = cfg.leaky_screening;
    std::vector<double> auc, acc, prec, rec, f1;
    for (const auto& f : rep.folds) {
        auc.push_back(f.metrics.auc);
        acc.push_back(f.metrics.accuracy);
        prec.push_back(f.metrics.precision);
        rec.push_back(f.metrics.recall);
        f1.push_back(f.metrics.f1);
        for (const auto& name : f.selected) rep.feature_counts[name]++;
    }
    rep.auc = aggregate_of(auc);
    rep.accuracy = aggregate_of(acc);
    rep.precision = aggregate_of(prec);
    rep.recall = aggregate_of(rec);
    rep.f1 = aggregate_of(f1);
}

}  // namespace detail

inline NcvReport run_nested_cv(const FeatureTable& t, const NcvConfig& cfg) {
    t.validate();
    cfg.validate();
    FoldPlan plan = stratified_kfold(t.labels, cfg.outer_k, cfg.seed);

    NcvReport rep;
    for (int f = 0; f < cfg.outer_k; ++f) {
        const auto& test = plan.test_indices[static_cast<std::size_t>(f)];
        std::vector<char> is_test(t.n_rows(), 0);
        for (int i : test) is_test[static_cast<std::size_t>(i)] = 1;
        std::vector<int> train;
        for (std::size_t i = 0; i < t.n_rows(); ++i)
            if (!is_test[i]) train.push_back(static_cast<int>(i));
        rep.folds.push_back(detail::evaluate_fold(t, cfg, f, train, test));
    }
    detail::finalize_report(rep, cfg);
    return rep;
}

// Optional 70/30-style variant: one stratified holdout split, same per-fold
// pipeline, reported as a single fold.
inline NcvReport run_holdout(const FeatureTable& t, const NcvConfig& cfg, double test_fraction) {
    t.validate();
    cfg.validate();
    auto [train, test] = stratified_holdout(t.labels, test_fraction, cfg.seed);
    NcvReport rep;
    rep.folds.push_back(detail::evaluate_fold(t, cfg, 0, train, test));
    detail::finalize_report(rep, cfg);
    return rep;
}

// ---------------------------------------------------------------------------
// Aggregation view and serialization.

// Features ranked by (count desc, name asc), truncated to top_m.
inline std::vector<std::pair<std::string, int>> rank_features(const NcvReport& rep,
                                                              std::size_t top_m = 5) {
    std::vector<std::pair<std::string, int>> ranked(rep.feature_counts.begin(),
                                                    rep.feature_counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > top_m) ranked.resize(top_m);
    return ranked;
}

inline nlohmann::json report_to_json(const NcvReport& rep) {
    nlohmann::json j;
    j["model"] = rep.model;
    j["seed"] = rep.seed;
    j["outer_k"] = rep.outer_k;
    j["inner_k"] = rep.inner_k;
    j["max_features"] = rep.max_features;
    j["corr_threshold"] = rep.corr_threshold;
    j["smote"] = rep.smote;
    j["leaky_screening"] = rep.leaky_screening;
    auto agg = [](const AggregateStat& a) {
        return nlohmann::json{{"mean", a.mean}, {"std", a.stddev}};
    };
    j["aggregate"] = {{"auc", agg(rep.auc)},
                      {"accuracy", agg(rep.accuracy)},
                      {"precision", agg(rep.precision)},
                      {"recall", agg(rep.recall)},
                      {"f1", agg(rep.f1)}};
    j["folds"] = nlohmann::json::array();
    for (const auto& f : rep.folds) {
        nlohmann::json jf;
        jf["fold"] = f.fold;
        jf["test_indices"] = f.test_indices;
        jf["n_screen_kept"] = f.n_screen_kept;
        jf["selected"] = f.selected;
        jf["inner_auc_trace"] = f.inner_auc_trace;
        jf["metrics"] = {{"auc", f.metrics.auc},           {"accuracy", f.metrics.accuracy},
                         {"precision", f.metrics.precision}, {"recall", f.metrics.recall},
                         {"f1", f.metrics.f1},             {"degenerate", f.metrics.degenerate}};
        j["folds"].push_back(jf);
    }
    j["feature_counts"] = rep.feature_counts;
    return j;
}

// Per-fold rows plus mean/std aggregate rows.
inline void write_metrics_csv(const NcvReport& rep, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "model,fold,auc,accuracy,precision,recall,f1\n";
    for (const auto& f : rep.folds)
        out << rep.model << ',' << f.fold << ',' << fmt_double(f.metrics.auc) << ','
            << fmt_double(f.metrics.accuracy) << ',' << fmt_double(f.metrics.precision) << ','
            << fmt_double(f.metrics.recall) << ',' << fmt_double(f.metrics.f1) << '\n';
    out << rep.model << ",mean," << fmt_double(rep.auc.mean) << ','
        << fmt_double(rep.accuracy.mean) << ',' << fmt_double(rep.precision.mean) << ','
        << fmt_double(rep.recall.mean) << ',' << fmt_double(rep.f1.mean) << '\n';
    out << rep.model << ",std," << fmt_double(rep.auc.stddev) << ','
        << fmt_double(rep.accuracy.stddev) << ',' << fmt_double(rep.precision.stddev) << ','
        << fmt_double(rep.recall.stddev) << ',' << fmt_double(rep.f1.stddev) << '\n';
}

inline void write_feature_counts_csv(const NcvReport& rep, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "feature,count\n";
    for (const auto& [name, count] : rank_features(rep, rep.feature_counts.size()))
        out << name << ',' << count << '\n';
}

}  // namespace radpipe
