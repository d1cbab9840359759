#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "radpipe/config.hpp"
#include "radpipe/features.hpp"
#include "radpipe/synth.hpp"
#include "radpipe/table.hpp"

namespace radpipe {

// Preprocessing chain: resample to isotropic spacing, simplified bias-field
// correction inside the mask, per-volume z-score.
inline std::pair<Volume3D, Mask3D> preprocess_volume(const Volume3D& vol_in, const Mask3D& mask_in,
                                                     const RunConfig& cfg) {
    std::array<double, 3> target{cfg.target_spacing_mm, cfg.target_spacing_mm,
                                 cfg.target_spacing_mm};
    Volume3D vol = resample_trilinear(vol_in, target);
    Mask3D mask = resample_mask_nearest(mask_in, vol_in.spacing, target);
    if (mask.foreground_count() == 0)
        throw std::runtime_error("mask is empty after resampling");
    if (cfg.bias_correction) vol = correct_bias_field(vol, mask, cfg.bias_degree);
    auto normalized = zscore_normalize(vol);
    return {std::move(normalized.first), std::move(mask)};
}

// Per-cohort extraction: one row per patient in clinical.csv order, radiomic
// columns first, then clinical_age / clinical_dose_gy / clinical_sex. Any
// patient failure aborts with the patient id named.
inline FeatureTable extract_cohort(const std::filesystem::path& cohort_dir, const RunConfig& cfg) {
    const auto records = read_clinical_csv(cohort_dir / "clinical.csv");
    if (records.empty()) throw std::runtime_error("cohort has no patients");

    std::vector<FeatureVector> vectors(records.size());
    std::vector<std::string> errors(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        try {
            auto lv = load_volume(cohort_dir / (records[i].patient_id + ".json"));
            if (!lv.mask) throw std::runtime_error("volume has no mask");
            auto [vol, mask] = preprocess_volume(lv.volume, *lv.mask, cfg);
            vectors[i] = extract_all(vol, mask, cfg.extraction);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < records.size(); ++i)
        if (!errors[i].empty())
            throw std::runtime_error("patient " + records[i].patient_id + ": " + errors[i]);

    FeatureTable t;
    for (const auto& f : vectors[0].features) {
        t.feature_names.push_back(f.name);
        t.kinds.push_back(f.kind);
    }
    t.feature_names.insert(t.feature_names.end(),
                           {"clinical_age", "clinical_dose_gy", "clinical_sex"});
    t.kinds.insert(t.kinds.end(), {FeatureKind::continuous, FeatureKind::continuous,
                                   FeatureKind::categorical});

    t.values.resize(static_cast<Eigen::Index>(records.size()),
                    static_cast<Eigen::Index>(t.feature_names.size()));
    const std::size_t n_rad = vectors[0].features.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (vectors[i].features.size() != n_rad)
            throw std::runtime_error("patient " + records[i].patient_id +
                                     ": inconsistent feature count");
        t.patient_ids.push_back(records[i].patient_id);
        t.labels.push_back(records[i].label);
        for (std::size_t j = 0; j < n_rad; ++j) {
            if (vectors[i].features[j].name != t.feature_names[j])
                throw std::runtime_error("patient " + records[i].patient_id +
                                         ": inconsistent feature order");
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                vectors[i].features[j].value;
        }
        t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_rad)) = records[i].age;
        t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_rad + 1)) =
            records[i].dose_gy;
        t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_rad + 2)) =
            records[i].sex;
    }
    t.validate();
    return t;
}

}  // namespace radpipe
