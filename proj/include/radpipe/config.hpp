#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "radpipe/features.hpp"
#include "radpipe/ncv.hpp"
#include "radpipe/synth.hpp"

namespace radpipe {

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& scope) {
    if (!j.is_object()) throw ConfigError(scope + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || (it.key() == k);
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + scope);
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& scope) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + scope);
    }
}

}  // namespace detail

// Full pipeline configuration: extraction knobs plus nested-CV knobs. Unknown
// keys are rejected everywhere so typos fail fast.
struct RunConfig {
    double target_spacing_mm = 1.0;
    ExtractionConfig extraction;
    bool bias_correction = true;
    int bias_degree = 2;
    std::set<std::string> categorical_features{"clinical_sex"};
    NcvConfig ncv;
    std::string model_name = "forest";  // ridge|tree|forest|gbt|all
    double holdout_test_fraction = 0.3;

    void validate() const {
        if (!(target_spacing_mm > 0.0)) throw ConfigError("target_spacing_mm must be > 0");
        if (extraction.n_bins < 2) throw ConfigError("n_bins must be >= 2");
        for (double s : extraction.log_sigmas_mm)
            if (!(s > 0.0)) throw ConfigError("log_sigmas_mm entries must be > 0");
        if (extraction.wavelet_basis != "haar")
            throw ConfigError("wavelet_basis: only 'haar' is implemented");
        if (bias_degree < 1 || bias_degree > 3) throw ConfigError("bias_degree must be in {1,2,3}");
        if (model_name != "all") model_kind_from_name(model_name);
        if (!(holdout_test_fraction > 0.0) || holdout_test_fraction >= 1.0)
            throw ConfigError("holdout_test_fraction must be in (0,1)");
        ncv.validate();
    }
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
    detail::reject_unknown(j, {"seed", "extraction", "ncv"}, "config");
    RunConfig cfg;
    cfg.ncv.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.ncv.seed, "config");

    if (j.contains("extraction")) {
        const auto& e = j.at("extraction");
        detail::reject_unknown(e,
                               {"target_spacing_mm", "n_bins", "log_sigmas_mm", "wavelet",
                                "wavelet_basis", "bias_correction", "bias_degree"},
                               "extraction");
        cfg.target_spacing_mm =
            detail::get_or<double>(e, "target_spacing_mm", cfg.target_spacing_mm, "extraction");
        cfg.extraction.n_bins = detail::get_or<int>(e, "n_bins", cfg.extraction.n_bins, "extraction");
        cfg.extraction.log_sigmas_mm = detail::get_or<std::vector<double>>(
            e, "log_sigmas_mm", cfg.extraction.log_sigmas_mm, "extraction");
        cfg.extraction.wavelet =
            detail::get_or<bool>(e, "wavelet", cfg.extraction.wavelet, "extraction");
        cfg.extraction.wavelet_basis = detail::get_or<std::string>(
            e, "wavelet_basis", cfg.extraction.wavelet_basis, "extraction");
        cfg.bias_correction =
            detail::get_or<bool>(e, "bias_correction", cfg.bias_correction, "extraction");
        cfg.bias_degree = detail::get_or<int>(e, "bias_degree", cfg.bias_degree, "extraction");
    }

    if (j.contains("ncv")) {
        const auto& n = j.at("ncv");
        detail::reject_unknown(n,
                               {"outer_k", "inner_k", "model", "max_features", "corr_threshold",
                                "smote", "smote_k", "screen_alpha", "screen_top_m",
                                "categorical_features", "holdout_test_fraction", "models"},
                               "ncv");
        cfg.ncv.outer_k = detail::get_or<int>(n, "outer_k", cfg.ncv.outer_k, "ncv");
        cfg.ncv.inner_k = detail::get_or<int>(n, "inner_k", cfg.ncv.inner_k, "ncv");
        cfg.model_name = detail::get_or<std::string>(n, "model", cfg.model_name, "ncv");
        cfg.ncv.max_features = detail::get_or<int>(n, "max_features", cfg.ncv.max_features, "ncv");
        cfg.ncv.corr_threshold =
            detail::get_or<double>(n, "corr_threshold", cfg.ncv.corr_threshold, "ncv");
        cfg.ncv.smote = detail::get_or<bool>(n, "smote", cfg.ncv.smote, "ncv");
        cfg.ncv.smote_k = detail::get_or<int>(n, "smote_k", cfg.ncv.smote_k, "ncv");
        cfg.ncv.screen_alpha =
            detail::get_or<double>(n, "screen_alpha", cfg.ncv.screen_alpha, "ncv");
        cfg.ncv.screen_top_m = detail::get_or<int>(n, "screen_top_m", cfg.ncv.screen_top_m, "ncv");
        cfg.holdout_test_fraction = detail::get_or<double>(n, "holdout_test_fraction",
                                                           cfg.holdout_test_fraction, "ncv");
        if (n.contains("categorical_features")) {
            auto v = detail::get_or<std::vector<std::string>>(n, "categorical_features", {}, "ncv");
            cfg.categorical_features = {v.begin(), v.end()};
        }
        if (n.contains("models")) {
            const auto& m = n.at("models");
            detail::reject_unknown(m, {"ridge", "tree", "forest", "gbt"}, "models");
            if (m.contains("ridge")) {
                detail::reject_unknown(m.at("ridge"), {"lambda"}, "models.ridge");
                cfg.ncv.model.ridge.lambda = detail::get_or<double>(
                    m.at("ridge"), "lambda", cfg.ncv.model.ridge.lambda, "models.ridge");
            }
            if (m.contains("tree")) {
                const auto& t = m.at("tree");
                detail::reject_unknown(t, {"max_depth", "min_leaf"}, "models.tree");
                cfg.ncv.model.tree.max_depth =
                    detail::get_or<int>(t, "max_depth", cfg.ncv.model.tree.max_depth, "models.tree");
                cfg.ncv.model.tree.min_leaf =
                    detail::get_or<int>(t, "min_leaf", cfg.ncv.model.tree.min_leaf, "models.tree");
            }
            if (m.contains("forest")) {
                const auto& f = m.at("forest");
                detail::reject_unknown(f, {"n_trees", "max_depth", "min_leaf", "mtry", "bootstrap"},
                                       "models.forest");
                auto& fp = cfg.ncv.model.forest;
                fp.n_trees = detail::get_or<int>(f, "n_trees", fp.n_trees, "models.forest");
                fp.max_depth = detail::get_or<int>(f, "max_depth", fp.max_depth, "models.forest");
                fp.min_leaf = detail::get_or<int>(f, "min_leaf", fp.min_leaf, "models.forest");
                fp.mtry = detail::get_or<int>(f, "mtry", fp.mtry, "models.forest");
                fp.bootstrap = detail::get_or<bool>(f, "bootstrap", fp.bootstrap, "models.forest");
            }
            if (m.contains("gbt")) {
                const auto& g = m.at("gbt");
                detail::reject_unknown(g, {"n_rounds", "depth", "learning_rate", "min_leaf"},
                                       "models.gbt");
                auto& gp = cfg.ncv.model.gbt;
                gp.n_rounds = detail::get_or<int>(g, "n_rounds", gp.n_rounds, "models.gbt");
                gp.depth = detail::get_or<int>(g, "depth", gp.depth, "models.gbt");
                gp.learning_rate =
                    detail::get_or<double>(g, "learning_rate", gp.learning_rate, "models.gbt");
                gp.min_leaf = detail::get_or<int>(g, "min_leaf", gp.min_leaf, "models.gbt");
            }
        }
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config JSON in " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

inline CohortSpec parse_cohort_spec(const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"n_patients", "responder_fraction", "dims", "spacing_mm",
                            "lesion_radius_mm", "texture_effect", "clinical_effect", "seed"},
                           "cohort spec");
    CohortSpec spec;
    spec.n_patients = detail::get_or<int>(j, "n_patients", spec.n_patients, "cohort spec");
    spec.responder_fraction = detail::get_or<double>(j, "responder_fraction",
                                                     spec.responder_fraction, "cohort spec");
    spec.dims = detail::get_or<std::array<int, 3>>(j, "dims", spec.dims, "cohort spec");
    spec.spacing_mm = detail::get_or<double>(j, "spacing_mm", spec.spacing_mm, "cohort spec");
    spec.lesion_radius_mm = detail::get_or<std::array<double, 2>>(j, "lesion_radius_mm",
                                                                  spec.lesion_radius_mm,
                                                                  "cohort spec");
    spec.texture_effect =
        detail::get_or<double>(j, "texture_effect", spec.texture_effect, "cohort spec");
    spec.clinical_effect =
        detail::get_or<double>(j, "clinical_effect", spec.clinical_effect, "cohort spec");
    spec.seed = detail::get_or<std::uint64_t>(j, "seed", spec.seed, "cohort spec");
    spec.validate();
    return spec;
}

inline CohortSpec load_cohort_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cohort spec: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed cohort spec JSON in " + path.string() + ": " + e.what());
    }
    return parse_cohort_spec(j);
}

}  // namespace radpipe
