#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "radpipe/filters.hpp"
#include "radpipe/volume.hpp"

namespace radpipe {

// ---------------------------------------------------------------------------
// Volumetric response labelling: PR (reduction > 20%) is the responder class,
// SD and PD collapse to class 0. Exactly +-20% counts as SD.

struct ResponseLabel {
    int cls = 0;
    std::string sublabel;  // PR | SD | PD
};

inline ResponseLabel label_from_volumes(double v_baseline_cc, double v_followup_cc) {
    if (!(v_baseline_cc > 0.0) || !(v_followup_cc > 0.0))
        throw std::runtime_error("label_from_volumes: volumes must be > 0");
    double change = (v_followup_cc - v_baseline_cc) / v_baseline_cc;
    if (change < -0.20) return {1, "PR"};
    if (change > 0.20) return {0, "PD"};
    return {0, "SD"};
}

// ---------------------------------------------------------------------------
// Phantom cohort: ellipsoidal lesions over Gaussian background, lesion texture
// with class-dependent correlation length (texture_effect scales the gap, 0
// means labels are independent of everything), clinical covariates with a
// tunable label association.

struct CohortSpec {
    int n_patients = 104;
    double responder_fraction = 0.644;
    std::array<int, 3> dims{64, 64, 64};
    double spacing_mm = 1.0;
    std::array<double, 2> lesion_radius_mm{6.0, 14.0};
    double texture_effect = 0.0;
    double clinical_effect = 0.0;
    std::uint64_t seed = 7;

    void validate() const {
        if (n_patients < 2) throw ConfigError("cohort: n_patients must be >= 2");
        if (!(responder_fraction > 0.0) || !(responder_fraction < 1.0))
            throw ConfigError("cohort: responder_fraction must be in (0,1)");
        for (int d : dims)
            if (d < 16) throw ConfigError("cohort: dims must be >= 16");
        if (!(spacing_mm > 0.0)) throw ConfigError("cohort: spacing must be > 0");
        if (!(lesion_radius_mm[0] > 0.0) || lesion_radius_mm[1] < lesion_radius_mm[0])
            throw ConfigError("cohort: bad lesion radius range");
        double half_extent =
            (static_cast<double>(*std::min_element(dims.begin(), dims.end())) - 1.0) *
            spacing_mm / 2.0;
        if (lesion_radius_mm[1] + 3.0 * spacing_mm > half_extent)
            throw ConfigError("cohort: lesion radius exceeds the volume");
        if (texture_effect < 0.0 || texture_effect > 1.0)
            throw ConfigError("cohort: texture_effect must be in [0,1]");
        if (clinical_effect < 0.0 || clinical_effect > 1.0)
            throw ConfigError("cohort: clinical_effect must be in [0,1]");
    }
};

struct ClinicalRecord {
    std::string patient_id;
    double age = 0.0;
    double dose_gy = 0.0;
    int sex = 0;  // 1 = female
    int label = 0;
    std::string sublabel;
};

inline void write_clinical_csv(const std::vector<ClinicalRecord>& records,
                               const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "patient_id,age,dose_gy,sex,label,sublabel\n";
    for (const auto& r : records)
        out << r.patient_id << ',' << fmt_double(r.age) << ',' << fmt_double(r.dose_gy) << ','
            << r.sex << ',' << r.label << ',' << r.sublabel << '\n';
}

inline std::vector<ClinicalRecord> read_clinical_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "patient_id,age,dose_gy,sex,label,sublabel")
        throw std::runtime_error("bad clinical CSV header in " + path.string());
    std::vector<ClinicalRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 6) throw std::runtime_error("ragged clinical CSV row");
        ClinicalRecord r;
        r.patient_id = cells[0];
        r.age = parse_double(cells[1]);
        r.dose_gy = parse_double(cells[2]);
        r.sex = static_cast<int>(parse_double(cells[3]));
        r.label = static_cast<int>(parse_double(cells[4]));
        r.sublabel = cells[5];
        out.push_back(std::move(r));
    }
    return out;
}

// n_pos = round(n * fraction) ones, order shuffled by seed.
inline std::vector<int> assign_labels(int n, double responder_fraction, std::uint64_t seed) {
    int n_pos = static_cast<int>(std::lround(responder_fraction * n));
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n_pos; ++i) labels[static_cast<std::size_t>(i)] = 1;
    std::mt19937_64 rng(seed_mix(seed, 0xAB));
    std::shuffle(labels.begin(), labels.end(), rng);
    return labels;
}

namespace detail {

// white noise blurred to the requested correlation length, standardized to
// zero mean / unit std over the lesion voxels
inline Volume3D correlated_texture(const GridDims& d, double spacing, double corr_len_mm,
                                   std::mt19937_64& rng) {
    Volume3D field;
    field.dims = d;
    field.spacing = {spacing, spacing, spacing};
    field.data.resize(d.size());
    std::normal_distribution<double> white(0.0, 1.0);
    for (double& v : field.data) v = white(rng);
    int radius = static_cast<int>(std::ceil(4.0 * corr_len_mm / spacing));
    radius = std::min(radius, std::max(1, d.nx - 1));
    auto kernel = gaussian_kernel(corr_len_mm, spacing, radius);
    for (int axis = 0; axis < 3; ++axis) convolve_axis(field, axis, kernel);
    return field;
}

}  // namespace detail

struct SynthPatient {
    ClinicalRecord clinical;
    double baseline_cc = 0.0;
    double followup_cc = 0.0;
    std::array<double, 3> lesion_radii_mm{};
};

// Writes <id>.json/.raw/_mask.raw per patient plus clinical.csv; returns the
// per-patient metadata in file order.
inline std::vector<SynthPatient> generate_cohort(const CohortSpec& spec,
                                                 const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    const auto labels = assign_labels(spec.n_patients, spec.responder_fraction, spec.seed);
    const GridDims d{spec.dims[0], spec.dims[1], spec.dims[2]};
    const double h = spec.spacing_mm;

    std::vector<SynthPatient> patients;
    for (int pi = 0; pi < spec.n_patients; ++pi) {
        std::mt19937_64 rng(seed_mix(spec.seed, static_cast<std::uint64_t>(pi), 0xC0));
        const int label = labels[static_cast<std::size_t>(pi)];

        std::uniform_real_distribution<double> radius_dist(spec.lesion_radius_mm[0],
                                                           spec.lesion_radius_mm[1]);
        std::array<double, 3> radii{radius_dist(rng), radius_dist(rng), radius_dist(rng)};
        std::uniform_real_distribution<double> jitter(-2.0, 2.0);
        std::array<double, 3> center{(d.nx - 1) * h / 2.0 + jitter(rng),
                                     (d.ny - 1) * h / 2.0 + jitter(rng),
                                     (d.nz - 1) * h / 2.0 + jitter(rng)};

        Mask3D mask;
        mask.dims = d;
        mask.voxels.assign(d.size(), 0);
        std::size_t fg = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    double ex = (x * h - center[0]) / radii[0];
                    double ey = (y * h - center[1]) / radii[1];
                    double ez = (z * h - center[2]) / radii[2];
                    if (ex * ex + ey * ey + ez * ez <= 1.0) {
                        mask.voxels[d.index(x, y, z)] = 1;
                        ++fg;
                    }
                }

        // background noise
        Volume3D vol;
        vol.dims = d;
        vol.spacing = {h, h, h};
        vol.data.resize(d.size());
        std::normal_distribution<double> bg(60.0, 5.0);
        for (double& v : vol.data) v = bg(rng);

        // lesion: base intensity plus correlated texture; the correlation
        // length carries the class signal
        const double corr_len = 1.2 + 1.8 * spec.texture_effect * label;
        Volume3D texture = detail::correlated_texture(d, h, corr_len, rng);
        double t_mean = 0.0, t_sq = 0.0;
        for (std::size_t i = 0; i < texture.data.size(); ++i)
            if (mask.voxels[i]) {
                t_mean += texture.data[i];
                t_sq += texture.data[i] * texture.data[i];
            }
        t_mean /= static_cast<double>(fg);
        double t_std = std::sqrt(std::max(t_sq / static_cast<double>(fg) - t_mean * t_mean, 1e-12));
        for (std::size_t i = 0; i < vol.data.size(); ++i)
            if (mask.voxels[i])
                vol.data[i] = 100.0 + 12.0 * (texture.data[i] - t_mean) / t_std;

        // mild degree-1 acquisition bias over the whole volume
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x)
                    vol.at(x, y, z) *=
                        1.0 + 0.08 * (static_cast<double>(x) / d.nx - 0.5) +
                        0.05 * (static_cast<double>(y) / d.ny - 0.5);

        SynthPatient p;
        p.lesion_radii_mm = radii;
        p.baseline_cc = static_cast<double>(fg) * h * h * h / 1000.0;
        std::uniform_real_distribution<double> pr_change(-0.50, -0.25);
        std::uniform_real_distribution<double> sd_change(-0.15, 0.15);
        std::uniform_real_distribution<double> pd_change(0.25, 0.50);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double change;
        if (label == 1) {
            change = pr_change(rng);
        } else {
            // SD:PD roughly 32:5 among non-responders
            change = unit(rng) < 5.0 / 37.0 ? pd_change(rng) : sd_change(rng);
        }
        p.followup_cc = p.baseline_cc * (1.0 + change);
        ResponseLabel rl = label_from_volumes(p.baseline_cc, p.followup_cc);
        if (rl.cls != label)
            throw std::runtime_error("generate_cohort: label/volume inconsistency");

        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "p%03d", pi);
        p.clinical.patient_id = idbuf;
        p.clinical.label = label;
        p.clinical.sublabel = rl.sublabel;
        std::normal_distribution<double> age_dist(57.0, 13.0);
        std::normal_distribution<double> dose_dist(27.5, 2.0);
        p.clinical.age = age_dist(rng) + spec.clinical_effect * (label == 1 ? -5.0 : 5.0);
        p.clinical.dose_gy = dose_dist(rng) + spec.clinical_effect * (label == 1 ? 0.8 : -0.8);
        double p_female =
            std::clamp(0.80 + spec.clinical_effect * (label == 1 ? 0.08 : -0.08), 0.05, 0.95);
        p.clinical.sex = unit(rng) < p_female ? 1 : 0;

        save_volume(vol, &mask, out_dir / (p.clinical.patient_id + ".json"));
        patients.push_back(std::move(p));
    }

    std::vector<ClinicalRecord> records;
    for (const auto& p : patients) records.push_back(p.clinical);
    write_clinical_csv(records, out_dir / "clinical.csv");
    return patients;
}

}  // namespace radpipe
