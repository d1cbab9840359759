#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radpipe/common.hpp"
#include "radpipe/features.hpp"

namespace radpipe {

// Patients x named features, plus binary labels. Column kinds drive the
// choice of statistical test downstream.
struct FeatureTable {
    std::vector<std::string> patient_ids;
    std::vector<int> labels;  // 1 = responder
    std::vector<std::string> feature_names;
    std::vector<FeatureKind> kinds;
    Eigen::MatrixXd values;  // n_rows x n_features

    std::size_t n_rows() const { return patient_ids.size(); }
    std::size_t n_features() const { return feature_names.size(); }

    int col_index(const std::string& name) const {
        for (std::size_t j = 0; j < feature_names.size(); ++j)
            if (feature_names[j] == name) return static_cast<int>(j);
        throw std::runtime_error("no such feature column: " + name);
    }

    std::vector<double> column(int j, const std::vector<int>& rows) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (int r : rows) out.push_back(values(r, j));
        return out;
    }

    void validate() const {
        if (labels.size() != n_rows() || static_cast<std::size_t>(values.rows()) != n_rows() ||
            static_cast<std::size_t>(values.cols()) != n_features() ||
            kinds.size() != n_features())
            throw std::runtime_error("FeatureTable: inconsistent shapes");
        for (int l : labels)
            if (l != 0 && l != 1) throw std::runtime_error("FeatureTable: labels must be 0/1");
        if (!values.allFinite()) throw std::runtime_error("FeatureTable: non-finite value");
        std::set<std::string> seen(feature_names.begin(), feature_names.end());
        if (seen.size() != feature_names.size())
            throw std::runtime_error("FeatureTable: duplicate feature names");
    }
};

// CSV layout: patient_id,label,<feature names...>; locale-independent decimals.
inline void write_feature_csv(const FeatureTable& t, const std::filesystem::path& path) {
    t.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "patient_id,label";
    for (const auto& n : t.feature_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
        out << t.patient_ids[i] << ',' << t.labels[i];
        for (std::size_t j = 0; j < t.n_features(); ++j)
            out << ',' << fmt_double(t.values(i, j));
        out << '\n';
    }
    if (!out) throw std::runtime_error("short write: " + path.string());
}

inline FeatureTable read_feature_csv(const std::filesystem::path& path,
                                     const std::set<std::string>& categorical_names = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty feature CSV: " + path.string());
    auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "patient_id" || header[1] != "label")
        throw std::runtime_error("feature CSV must start with patient_id,label: " + path.string());

    FeatureTable t;
    t.feature_names.assign(header.begin() + 2, header.end());
    for (const auto& n : t.feature_names)
        t.kinds.push_back(categorical_names.count(n) ? FeatureKind::categorical
                                                     : FeatureKind::continuous);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("ragged row in " + path.string());
        t.patient_ids.push_back(cells[0]);
        int label = static_cast<int>(parse_double(cells[1]));
        t.labels.push_back(label);
        std::vector<double> vals;
        for (std::size_t j = 2; j < cells.size(); ++j) vals.push_back(parse_double(cells[j]));
        rows.push_back(std::move(vals));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(t.feature_names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    t.validate();
    return t;
}

}  // namespace radpipe
