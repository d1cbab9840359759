#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "radpipe/common.hpp"

namespace radpipe {

// Scalar 3D grid with physical spacing, x-fastest layout. Voxel (x,y,z) sits
// at physical position origin + (x*sx, y*sy, z*sz).
struct Volume3D {
    GridDims dims;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm, all > 0
    std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm
    std::vector<double> data;

    double at(int x, int y, int z) const { return data[dims.index(x, y, z)]; }
    double& at(int x, int y, int z) { return data[dims.index(x, y, z)]; }

    void validate() const {
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
            throw std::runtime_error("Volume3D: non-positive dims");
        if (data.size() != dims.size())
            throw std::runtime_error("Volume3D: data length does not match dims");
        for (double s : spacing)
            if (!(s > 0.0)) throw std::runtime_error("Volume3D: spacing must be > 0");
        for (double v : data)
            if (!std::isfinite(v)) throw std::runtime_error("Volume3D: non-finite voxel value");
    }
};

// Binary ROI on the same grid as its paired Volume3D.
struct Mask3D {
    GridDims dims;
    std::vector<std::uint8_t> voxels;  // 0 or 1

    bool at(int x, int y, int z) const { return voxels[dims.index(x, y, z)] != 0; }
    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto v : voxels) n += (v != 0);
        return n;
    }
    void validate() const {
        if (voxels.size() != dims.size())
            throw std::runtime_error("Mask3D: voxel count does not match dims");
        for (auto v : voxels)
            if (v > 1) throw std::runtime_error("Mask3D: voxel values must be 0 or 1");
    }
};

struct NormalizationParams {
    double mu = 0.0;
    double sigma = 1.0;  // > 0
};

// ---------------------------------------------------------------------------
// File I/O: JSON header + little-endian float32 raw (mask raw is uint8 {0,1}).
// The header references raw files by name, resolved relative to its directory.

namespace detail {

inline std::vector<char> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + p.string());
    in.seekg(0, std::ios::end);
    auto n = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> bytes(static_cast<std::size_t>(n));
    in.read(bytes.data(), n);
    if (!in) throw std::runtime_error("short read: " + p.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& p, const void* data, std::size_t n) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + p.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("short write: " + p.string());
}

inline std::array<double, 3> json_vec3(const nlohmann::json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw std::runtime_error(std::string("volume header: ") + key + " must be a 3-array");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

}  // namespace detail

struct LoadedVolume {
    Volume3D volume;
    std::optional<Mask3D> mask;
};

inline void save_volume(const Volume3D& vol, const Mask3D* mask,
                        const std::filesystem::path& header_path) {
    vol.validate();
    if (mask) {
        mask->validate();
        if (mask->dims != vol.dims)
            throw std::runtime_error("save_volume: mask dims differ from volume dims");
    }
    const auto dir = header_path.parent_path();
    const std::string stem = header_path.stem().string();
    const std::string data_name = stem + ".raw";
    const std::string mask_name = stem + "_mask.raw";

    std::vector<float> raw(vol.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(vol.data[i]);
    detail::write_file_bytes(dir / data_name, raw.data(), raw.size() * sizeof(float));
    if (mask)
        detail::write_file_bytes(dir / mask_name, mask->voxels.data(), mask->voxels.size());

    nlohmann::json j;
    j["dims"] = {vol.dims.nx, vol.dims.ny, vol.dims.nz};
    j["spacing_mm"] = {vol.spacing[0], vol.spacing[1], vol.spacing[2]};
    j["origin_mm"] = {vol.origin[0], vol.origin[1], vol.origin[2]};
    j["data_file"] = data_name;
    if (mask) j["mask_file"] = mask_name;
    std::ofstream out(header_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write header: " + header_path.string());
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("short write: " + header_path.string());
}

inline LoadedVolume load_volume(const std::filesystem::path& header_path) {
    std::ifstream in(header_path);
    if (!in) throw std::runtime_error("cannot open header: " + header_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed header " + header_path.string() + ": " + e.what());
    }
    static const char* known[] = {"dims", "spacing_mm", "origin_mm", "data_file", "mask_file"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || (it.key() == k);
        if (!ok)
            throw std::runtime_error("volume header: unknown key '" + it.key() + "'");
    }

    LoadedVolume out;
    const auto& d = j.at("dims");
    if (!d.is_array() || d.size() != 3)
        throw std::runtime_error("volume header: dims must be a 3-array");
    out.volume.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    out.volume.spacing = detail::json_vec3(j, "spacing_mm");
    out.volume.origin = detail::json_vec3(j, "origin_mm");

    const auto dir = header_path.parent_path();
    const auto bytes = detail::read_file_bytes(dir / j.at("data_file").get<std::string>());
    const std::size_t n = out.volume.dims.size();
    if (bytes.size() != n * sizeof(float))
        throw std::runtime_error("raw size mismatch for " + header_path.string() + ": expected " +
                                 std::to_string(n * sizeof(float)) + " bytes, got " +
                                 std::to_string(bytes.size()));
    out.volume.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
        out.volume.data[i] = static_cast<double>(f);
    }
    out.volume.validate();

    if (j.contains("mask_file")) {
        Mask3D m;
        m.dims = out.volume.dims;
        const auto mb = detail::read_file_bytes(dir / j.at("mask_file").get<std::string>());
        if (mb.size() != n)
            throw std::runtime_error("mask size mismatch for " + header_path.string());
        m.voxels.assign(mb.begin(), mb.end());
        m.validate();
        out.mask = std::move(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resampling. Output dims per axis: floor((n-1)*s_old/s_new) + 1, which keeps
// the voxel-center span. Out-of-grid queries clamp to edge voxels.

namespace detail {

inline GridDims resampled_dims(const GridDims& dims, const std::array<double, 3>& s_old,
                               const std::array<double, 3>& s_new) {
    for (double s : s_new)
        if (!(s > 0.0)) throw std::runtime_error("resample: target spacing must be > 0");
    auto out_n = [](int n, double so, double sn) {
        // the 1e-9 nudge keeps exact ratios (e.g. identity resampling) from
        // landing one ulp below an integer
        return static_cast<int>(std::floor((static_cast<double>(n) - 1.0) * so / sn + 1e-9)) + 1;
    };
    GridDims r{out_n(dims.nx, s_old[0], s_new[0]), out_n(dims.ny, s_old[1], s_new[1]),
               out_n(dims.nz, s_old[2], s_new[2])};
    if (r.nx < 1 || r.ny < 1 || r.nz < 1)
        throw std::runtime_error("resample: output dims < 1");
    return r;
}

}  // namespace detail

inline Volume3D resample_trilinear(const Volume3D& vol, const std::array<double, 3>& target_spacing) {
    vol.validate();
    Volume3D out;
    out.dims = detail::resampled_dims(vol.dims, vol.spacing, target_spacing);
    out.spacing = target_spacing;
    out.origin = vol.origin;
    out.data.resize(out.dims.size());

    auto clampd = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
    for (int z = 0; z < out.dims.nz; ++z) {
        double fz = clampd(z * target_spacing[2] / vol.spacing[2], 0.0, vol.dims.nz - 1.0);
        int z0 = static_cast<int>(fz);
        int z1 = std::min(z0 + 1, vol.dims.nz - 1);
        double wz = fz - z0;
        for (int y = 0; y < out.dims.ny; ++y) {
            double fy = clampd(y * target_spacing[1] / vol.spacing[1], 0.0, vol.dims.ny - 1.0);
            int y0 = static_cast<int>(fy);
            int y1 = std::min(y0 + 1, vol.dims.ny - 1);
            double wy = fy - y0;
            for (int x = 0; x < out.dims.nx; ++x) {
                double fx = clampd(x * target_spacing[0] / vol.spacing[0], 0.0, vol.dims.nx - 1.0);
                int x0 = static_cast<int>(fx);
                int x1 = std::min(x0 + 1, vol.dims.nx - 1);
                double wx = fx - x0;

                double c00 = vol.at(x0, y0, z0) * (1 - wx) + vol.at(x1, y0, z0) * wx;
                double c10 = vol.at(x0, y1, z0) * (1 - wx) + vol.at(x1, y1, z0) * wx;
                double c01 = vol.at(x0, y0, z1) * (1 - wx) + vol.at(x1, y0, z1) * wx;
                double c11 = vol.at(x0, y1, z1) * (1 - wx) + vol.at(x1, y1, z1) * wx;
                double c0 = c00 * (1 - wy) + c10 * wy;
                double c1 = c01 * (1 - wy) + c11 * wy;
                out.at(x, y, z) = c0 * (1 - wz) + c1 * wz;
            }
        }
    }
    return out;
}

inline Mask3D resample_mask_nearest(const Mask3D& mask, const std::array<double, 3>& spacing_old,
                                    const std::array<double, 3>& target_spacing) {
    mask.validate();
    Mask3D out;
    out.dims = detail::resampled_dims(mask.dims, spacing_old, target_spacing);
    out.voxels.resize(out.dims.size());

    auto nearest = [](int i, double sn, double so, int n) {
        int j = static_cast<int>(std::lround(i * sn / so));
        return std::clamp(j, 0, n - 1);
    };
    for (int z = 0; z < out.dims.nz; ++z) {
        int zs = nearest(z, target_spacing[2], spacing_old[2], mask.dims.nz);
        for (int y = 0; y < out.dims.ny; ++y) {
            int ys = nearest(y, target_spacing[1], spacing_old[1], mask.dims.ny);
            for (int x = 0; x < out.dims.nx; ++x) {
                int xs = nearest(x, target_spacing[0], spacing_old[0], mask.dims.nx);
                out.voxels[out.dims.index(x, y, z)] = mask.voxels[mask.dims.index(xs, ys, zs)];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-volume z-score standardization, z = (x - mu) / sigma, population sigma.

inline std::pair<Volume3D, NormalizationParams> zscore_normalize(const Volume3D& vol) {
    vol.validate();
    if (vol.data.size() < 2)
        throw std::runtime_error("zscore_normalize: need at least 2 voxels");
    double mu = vec_mean(vol.data);
    double sigma = vec_std(vol.data);
    if (sigma < 1e-12)
        throw std::runtime_error("zscore_normalize: degenerate input (sigma < 1e-12)");
    Volume3D out = vol;
    for (double& v : out.data) v = (v - mu) / sigma;
    return {std::move(out), NormalizationParams{mu, sigma}};
}

// ---------------------------------------------------------------------------
// Simplified multiplicative bias-field correction: least-squares fit of a
// degree-d polynomial (in per-axis normalized coordinates) to log-intensity
// over masked voxels, divide by exp(field - masked field mean), then rescale
// so the masked arithmetic mean is preserved exactly.

inline Volume3D correct_bias_field(const Volume3D& vol, const Mask3D& mask, int degree) {
    vol.validate();
    mask.validate();
    if (mask.dims != vol.dims)
        throw std::runtime_error("correct_bias_field: mask dims differ from volume dims");
    if (degree < 1 || degree > 3)
        throw std::runtime_error("correct_bias_field: degree must be in {1,2,3}");
    if (mask.foreground_count() == 0)
        throw std::runtime_error("correct_bias_field: empty mask");

    std::vector<std::array<int, 3>> expo;  // monomial exponents, total degree <= degree
    for (int a = 0; a <= degree; ++a)
        for (int b = 0; a + b <= degree; ++b)
            for (int c = 0; a + b + c <= degree; ++c) expo.push_back({a, b, c});
    const int t = static_cast<int>(expo.size());

    auto norm_coord = [](int i, int n) {
        return n > 1 ? 2.0 * i / (n - 1.0) - 1.0 : 0.0;
    };
    auto basis_at = [&](int x, int y, int z, Eigen::VectorXd& phi) {
        double u = norm_coord(x, vol.dims.nx);
        double v = norm_coord(y, vol.dims.ny);
        double w = norm_coord(z, vol.dims.nz);
        for (int k = 0; k < t; ++k)
            phi[k] = std::pow(u, expo[k][0]) * std::pow(v, expo[k][1]) * std::pow(w, expo[k][2]);
    };

    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(t, t);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(t);
    Eigen::VectorXd phi(t);
    for (int z = 0; z < vol.dims.nz; ++z)
        for (int y = 0; y < vol.dims.ny; ++y)
            for (int x = 0; x < vol.dims.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                double val = vol.at(x, y, z);
                if (!(val > 0.0))
                    throw std::runtime_error("correct_bias_field: non-positive intensity in mask");
                basis_at(x, y, z, phi);
                ata.selfadjointView<Eigen::Lower>().rankUpdate(phi);
                atb += phi * std::log(val);
            }
    Eigen::MatrixXd ata_full = ata.selfadjointView<Eigen::Lower>();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ata_full);
    if (qr.rank() < t)
        throw std::runtime_error("correct_bias_field: rank-deficient normal equations");
    Eigen::VectorXd coef = qr.solve(atb);

    // Evaluate the fitted log-field everywhere; center it on its masked mean.
    std::vector<double> field(vol.data.size());
    double field_sum = 0.0;
    std::size_t m = 0;
    for (int z = 0; z < vol.dims.nz; ++z)
        for (int y = 0; y < vol.dims.ny; ++y)
            for (int x = 0; x < vol.dims.nx; ++x) {
                basis_at(x, y, z, phi);
                double f = phi.dot(coef);
                field[vol.dims.index(x, y, z)] = f;
                if (mask.at(x, y, z)) {
                    field_sum += f;
                    ++m;
                }
            }
    double field_mean = field_sum / static_cast<double>(m);

    Volume3D out = vol;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = vol.data[i] / std::exp(field[i] - field_mean);

    double mean_in = 0.0, mean_out = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (mask.voxels[i]) {
            mean_in += vol.data[i];
            mean_out += out.data[i];
        }
    }
    double scale = mean_in / mean_out;
    for (double& v : out.data) v *= scale;
    return out;
}

}  // namespace radpipe
