// radpipe: phantom-cohort generation, radiomic feature extraction, and
// leakage-free nested cross-validation over a feature table.
//
// Subcommands: synth, extract, ncv, report. Exit codes: 0 success,
// 1 runtime failure, 2 config/validation error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "radpipe/config.hpp"
#include "radpipe/ncv.hpp"
#include "radpipe/pipeline.hpp"
#include "radpipe/synth.hpp"

namespace fs = std::filesystem;
using namespace radpipe;

namespace {

RunConfig load_config_or_default(const std::string& config_path) {
    if (config_path.empty()) return RunConfig{};
    return load_run_config(config_path);
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    CohortSpec spec = spec_path.empty() ? CohortSpec{} : load_cohort_spec(spec_path);
    if (seed) spec.seed = *seed;
    spec.validate();
    auto patients = generate_cohort(spec, out_dir);
    int responders = 0;
    for (const auto& p : patients) responders += p.clinical.label;
    std::cout << "wrote " << patients.size() << " patients (" << responders << " responders) to "
              << out_dir << "\n";
    return 0;
}

int cmd_extract(const std::string& cohort_dir, const std::string& config_path,
                const std::string& out_csv) {
    RunConfig cfg = load_config_or_default(config_path);
    FeatureTable t = extract_cohort(cohort_dir, cfg);
    write_feature_csv(t, out_csv);
    std::cout << "wrote " << t.n_rows() << " patients x " << t.n_features() << " features to "
              << out_csv << "\n";
    return 0;
}

std::vector<std::string> model_list(const std::string& name) {
    if (name == "all") return {"ridge", "tree", "forest", "gbt"};
    model_kind_from_name(name);  // validates
    return {name};
}

void write_summary_csv(const std::vector<NcvReport>& reports, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "model,auc_mean,auc_std,accuracy_mean,accuracy_std,recall_mean,recall_std,"
           "precision_mean,precision_std,f1_mean,f1_std\n";
    for (const auto& r : reports)
        out << r.model << ',' << fmt_double(r.auc.mean) << ',' << fmt_double(r.auc.stddev) << ','
            << fmt_double(r.accuracy.mean) << ',' << fmt_double(r.accuracy.stddev) << ','
            << fmt_double(r.recall.mean) << ',' << fmt_double(r.recall.stddev) << ','
            << fmt_double(r.precision.mean) << ',' << fmt_double(r.precision.stddev) << ','
            << fmt_double(r.f1.mean) << ',' << fmt_double(r.f1.stddev) << '\n';
}

// Per-fold screening reports mirror what run_nested_cv does internally: same
// deterministic fold plan, same screening rows.
void write_screen_reports(const FeatureTable& t, const NcvConfig& cfg, bool holdout,
                          double test_fraction, const fs::path& out_dir) {
    std::vector<std::pair<int, std::vector<int>>> screen_sets;
    std::vector<int> all_rows(t.n_rows());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    if (holdout) {
        auto [train, test] = stratified_holdout(t.labels, test_fraction, cfg.seed);
        screen_sets.emplace_back(0, cfg.leaky_screening ? all_rows : train);
    } else {
        FoldPlan plan = stratified_kfold(t.labels, cfg.outer_k, cfg.seed);
        for (int f = 0; f < cfg.outer_k; ++f) {
            std::vector<char> is_test(t.n_rows(), 0);
            for (int i : plan.test_indices[static_cast<std::size_t>(f)])
                is_test[static_cast<std::size_t>(i)] = 1;
            std::vector<int> train;
            for (std::size_t i = 0; i < t.n_rows(); ++i)
                if (!is_test[i]) train.push_back(static_cast<int>(i));
            screen_sets.emplace_back(f, cfg.leaky_screening ? all_rows : train);
        }
    }
    for (const auto& [fold, rows] : screen_sets) {
        ScreeningResult screening = univariate_screen(t, rows);
        auto kept = redundancy_filter(t, rows, screening, cfg.corr_threshold);
        write_screen_report(out_dir / ("screening_fold" + std::to_string(fold) + ".csv"),
                            screening, kept);
    }
}

int cmd_ncv(const std::string& features_csv, const std::string& config_path,
            const std::string& out_dir, const std::string& model_override,
            std::optional<std::uint64_t> seed, bool holdout, bool leaky) {
    RunConfig cfg = load_config_or_default(config_path);
    if (!model_override.empty()) cfg.model_name = model_override;
    if (seed) cfg.ncv.seed = *seed;
    cfg.ncv.leaky_screening = leaky;
    cfg.validate();

    FeatureTable t = read_feature_csv(features_csv, cfg.categorical_features);
    fs::create_directories(out_dir);

    std::vector<NcvReport> reports;
    for (const auto& name : model_list(cfg.model_name)) {
        NcvConfig ncv_cfg = cfg.ncv;
        ncv_cfg.model.kind = model_kind_from_name(name);
        NcvReport rep = holdout ? run_holdout(t, ncv_cfg, cfg.holdout_test_fraction)
                                : run_nested_cv(t, ncv_cfg);
        write_metrics_csv(rep, fs::path(out_dir) / ("metrics_" + name + ".csv"));
        write_feature_counts_csv(rep, fs::path(out_dir) / ("features_" + name + ".csv"));
        std::ofstream jf(fs::path(out_dir) / ("report_" + name + ".json"), std::ios::trunc);
        if (!jf) throw std::runtime_error("cannot write report JSON");
        jf << report_to_json(rep).dump(2) << "\n";
        std::cout << name << ": AUC " << fmt_double(rep.auc.mean) << " +/- "
                  << fmt_double(rep.auc.stddev) << "\n";
        reports.push_back(std::move(rep));
    }
    write_summary_csv(reports, fs::path(out_dir) / "summary.csv");
    write_screen_reports(t, cfg.ncv, holdout, cfg.holdout_test_fraction, out_dir);
    return 0;
}

int cmd_report(const std::string& out_dir) {
    fs::path dir(out_dir);
    std::ifstream in(dir / "summary.csv");
    if (!in) throw std::runtime_error("no summary.csv in " + out_dir + " (run ncv first)");
    std::string line;
    std::getline(in, line);  // header
    struct Row {
        std::string model;
        std::vector<double> v;  // auc, acc, rec, prec, f1 as mean/std pairs
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = radpipe::detail::split_csv_line(line);
        if (cells.size() != 11) throw std::runtime_error("malformed summary.csv");
        Row r;
        r.model = cells[0];
        for (std::size_t i = 1; i < cells.size(); ++i) r.v.push_back(parse_double(cells[i]));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("summary.csv has no model rows");

    auto cell = [](double mean, double stddev) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.2f +/- %.2f", mean, stddev);
        return std::string(buf);
    };
    std::printf("%-8s %-15s %-15s %-15s %-15s %-15s\n", "model", "AUC", "accuracy", "recall",
                "precision", "F1");
    for (const auto& r : rows)
        std::printf("%-8s %-15s %-15s %-15s %-15s %-15s\n", r.model.c_str(),
                    cell(r.v[0], r.v[1]).c_str(), cell(r.v[2], r.v[3]).c_str(),
                    cell(r.v[4], r.v[5]).c_str(), cell(r.v[6], r.v[7]).c_str(),
                    cell(r.v[8], r.v[9]).c_str());

    for (const auto& r : rows) {
        std::ifstream ff(dir / ("features_" + r.model + ".csv"));
        if (!ff) throw std::runtime_error("missing features_" + r.model + ".csv");
        std::printf("\ntop features (%s):\n", r.model.c_str());
        std::getline(ff, line);  // header
        for (int i = 0; i < 5 && std::getline(ff, line); ++i) {
            auto cells = radpipe::detail::split_csv_line(line);
            if (cells.size() == 2)
                std::printf("  selected in %d fold(s): %s\n",
                            static_cast<int>(parse_double(cells[1])), cells[0].c_str());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"radiomics response-prediction pipeline"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, cohort_dir, config_path, out_csv, features_csv;
    std::string model_override;
    std::optional<std::uint64_t> seed;
    bool holdout = false, leaky = false;

    auto* synth = app.add_subcommand("synth", "generate a phantom cohort");
    synth->add_option("--spec", spec_path, "cohort spec JSON (defaults apply if omitted)");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--seed", seed, "override the spec seed");

    auto* extract = app.add_subcommand("extract", "extract the per-patient feature table");
    extract->add_option("--cohort", cohort_dir, "cohort directory (with clinical.csv)")->required();
    extract->add_option("--config", config_path, "pipeline config JSON");
    extract->add_option("--out", out_csv, "output feature CSV")->required();

    auto* ncv = app.add_subcommand("ncv", "run nested cross-validation");
    ncv->add_option("--features", features_csv, "feature CSV from extract")->required();
    ncv->add_option("--config", config_path, "pipeline config JSON");
    ncv->add_option("--out", out_dir, "output directory")->required();
    ncv->add_option("--model", model_override, "ridge|tree|forest|gbt|all (overrides config)");
    ncv->add_option("--seed", seed, "override the config seed");
    ncv->add_flag("--holdout", holdout, "single stratified holdout split instead of outer folds");
    ncv->add_flag("--leaky-screening", leaky,
                  "diagnostic: fit stage-1 screening on all rows (demonstrates leakage)");

    auto* report = app.add_subcommand("report", "print the aggregate table and top features");
    report->add_option("--dir", out_dir, "ncv output directory")->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(spec_path, out_dir, seed);
        if (extract->parsed()) return cmd_extract(cohort_dir, config_path, out_csv);
        if (ncv->parsed())
            return cmd_ncv(features_csv, config_path, out_dir, model_override, seed, holdout,
                           leaky);
        if (report->parsed()) return cmd_report(out_dir);
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
