#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radpipe/filters.hpp"
#include "radpipe/volume.hpp"

namespace radpipe {

enum class FeatureKind { continuous, categorical };

struct Feature {
    std::string name;
    double value = 0.0;
    FeatureKind kind = FeatureKind::continuous;
};

// Ordered, uniquely named, finite-valued feature list.
struct FeatureVector {
    std::vector<Feature> features;

    void add(std::string name, double value, FeatureKind kind = FeatureKind::continuous) {
        if (!std::isfinite(value))
            throw std::runtime_error("feature '" + name + "' is not finite");
        for (const auto& f : features)
            if (f.name == name) throw std::runtime_error("duplicate feature name: " + name);
        features.push_back({std::move(name), value, kind});
    }
    double get(const std::string& name) const {
        for (const auto& f : features)
            if (f.name == name) return f.value;
        throw std::runtime_error("no such feature: " + name);
    }
    std::size_t size() const { return features.size(); }
};

// Gray levels 1..n_levels inside the mask (0 outside), cropped to the ROI
// bounding box. A constant ROI maps to a single level with n_levels == 1.
struct DiscretizedROI {
    GridDims dims;
    std::vector<int> levels;
    int n_levels = 1;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::size_t n_voxels = 0;

    int level_at(int x, int y, int z) const { return levels[dims.index(x, y, z)]; }
};

// The 13 unique 3D offsets at Chebyshev distance 1 (26-neighborhood up to sign).
inline const std::array<std::array<int, 3>, 13>& texture_directions() {
    static const std::array<std::array<int, 3>, 13> dirs = [] {
        std::array<std::array<int, 3>, 13> d{};
        int k = 0;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    bool positive = dz > 0 || (dz == 0 && dy > 0) || (dz == 0 && dy == 0 && dx > 0);
                    if (positive) d[k++] = {dx, dy, dz};
                }
        return d;
    }();
    return dirs;
}

// ---------------------------------------------------------------------------
// Discretization: fixed bin count over the masked intensity range,
// level = min(Ng, floor((x - min) * Ng / (max - min)) + 1).

inline DiscretizedROI discretize(const Volume3D& vol, const Mask3D& mask, int n_bins) {
    vol.validate();
    mask.validate();
    if (mask.dims != vol.dims) throw std::runtime_error("discretize: mask/volume dims differ");
    if (n_bins < 2) throw std::runtime_error("discretize: n_bins must be >= 2");

    int x0 = vol.dims.nx, x1 = -1, y0 = vol.dims.ny, y1 = -1, z0 = vol.dims.nz, z1 = -1;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int z = 0; z < vol.dims.nz; ++z)
        for (int y = 0; y < vol.dims.ny; ++y)
            for (int x = 0; x < vol.dims.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                double v = vol.at(x, y, z);
                if (first) {
                    lo = hi = v;
                    first = false;
                } else {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                x0 = std::min(x0, x); x1 = std::max(x1, x);
                y0 = std::min(y0, y); y1 = std::max(y1, y);
                z0 = std::min(z0, z); z1 = std::max(z1, z);
            }
    if (first) throw std::runtime_error("discretize: empty mask");

    DiscretizedROI roi;
    roi.dims = {x1 - x0 + 1, y1 - y0 + 1, z1 - z0 + 1};
    roi.spacing = vol.spacing;
    roi.levels.assign(roi.dims.size(), 0);
    const bool constant = (hi - lo) < 1e-12;
    roi.n_levels = constant ? 1 : n_bins;
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (!mask.at(x, y, z)) continue;
                int level = 1;
                if (!constant) {
                    double t = (vol.at(x, y, z) - lo) * n_bins / (hi - lo);
                    level = std::min(n_bins, static_cast<int>(std::floor(t)) + 1);
                }
                roi.levels[roi.dims.index(x - x0, y - y0, z - z0)] = level;
                ++roi.n_voxels;
            }
    return roi;
}

// ---------------------------------------------------------------------------
// Shape features over the binary mask.

inline FeatureVector shape_features(const Mask3D& mask, const std::array<double, 3>& spacing) {
    mask.validate();
    const std::size_t m = mask.foreground_count();
    if (m == 0) throw std::runtime_error("shape_features: empty mask");
    const auto& d = mask.dims;
    const double sx = spacing[0], sy = spacing[1], sz = spacing[2];

    const double volume = static_cast<double>(m) * sx * sy * sz;

    double area = 0.0;
    std::vector<std::array<int, 3>> boundary;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                mean += Eigen::Vector3d(x * sx, y * sy, z * sz);
                double exposed = 0.0;
                auto bg = [&](int xx, int yy, int zz) {
                    return !d.contains(xx, yy, zz) || !mask.at(xx, yy, zz);
                };
                if (bg(x - 1, y, z)) exposed += sy * sz;
                if (bg(x + 1, y, z)) exposed += sy * sz;
                if (bg(x, y - 1, z)) exposed += sx * sz;
                if (bg(x, y + 1, z)) exposed += sx * sz;
                if (bg(x, y, z - 1)) exposed += sx * sy;
                if (bg(x, y, z + 1)) exposed += sx * sy;
                if (exposed > 0.0) boundary.push_back({x, y, z});
                area += exposed;
            }
    mean /= static_cast<double>(m);

    const double sphericity =
        std::pow(M_PI, 1.0 / 3.0) * std::pow(6.0 * volume, 2.0 / 3.0) / area;

    // maximum pairwise distance is attained between boundary voxels
    double diam2 = 0.0;
    for (std::size_t i = 0; i < boundary.size(); ++i)
        for (std::size_t j = i + 1; j < boundary.size(); ++j) {
            double dx = (boundary[i][0] - boundary[j][0]) * sx;
            double dy = (boundary[i][1] - boundary[j][1]) * sy;
            double dz = (boundary[i][2] - boundary[j][2]) * sz;
            diam2 = std::max(diam2, dx * dx + dy * dy + dz * dz);
        }

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                Eigen::Vector3d p(x * sx, y * sy, z * sz);
                cov += (p - mean) * (p - mean).transpose();
            }
    cov /= static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // ascending order from Eigen; lam[0] is the largest after reversal
    std::array<double, 3> lam{std::max(eig.eigenvalues()[2], 0.0),
                              std::max(eig.eigenvalues()[1], 0.0),
                              std::max(eig.eigenvalues()[0], 0.0)};
    const bool degenerate = lam[0] < 1e-12;

    FeatureVector out;
    out.add("VoxelVolume", volume);
    out.add("SurfaceArea", area);
    out.add("Sphericity", sphericity);
    out.add("Maximum3DDiameter", std::sqrt(diam2));
    out.add("MajorAxisLength", 4.0 * std::sqrt(lam[0]));
    out.add("MinorAxisLength", 4.0 * std::sqrt(lam[1]));
    out.add("LeastAxisLength", 4.0 * std::sqrt(lam[2]));
    out.add("Elongation", degenerate ? 1.0 : std::sqrt(lam[1] / lam[0]));
    out.add("Flatness", degenerate ? 1.0 : std::sqrt(lam[2] / lam[0]));
    return out;
}

// ---------------------------------------------------------------------------
// First-order statistics of the masked intensities. Entropy and Uniformity
// use the fixed-bin-count histogram shared with discretize().

namespace detail {

// linear interpolation between closest ranks, values sorted ascending
inline double percentile(const std::vector<double>& sorted, double p) {
    if (sorted.size() == 1) return sorted[0];
    double pos = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac;
}

}  // namespace detail

inline FeatureVector firstorder_features(const Volume3D& vol, const Mask3D& mask, int n_bins) {
    if (mask.dims != vol.dims)
        throw std::runtime_error("firstorder_features: mask/volume dims differ");
    std::vector<double> v;
    for (std::size_t i = 0; i < vol.data.size(); ++i)
        if (mask.voxels[i]) v.push_back(vol.data[i]);
    if (v.empty()) throw std::runtime_error("firstorder_features: empty mask");
    const double n = static_cast<double>(v.size());

    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double mean = vec_mean(v);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, energy = 0.0, mad = 0.0;
    for (double x : v) {
        double c = x - mean;
        m2 += c * c;
        m3 += c * c * c;
        m4 += c * c * c * c;
        energy += x * x;
        mad += std::abs(c);
    }
    m2 /= n; m3 /= n; m4 /= n; mad /= n;
    const double sigma = std::sqrt(m2);
    const double skewness = sigma > 1e-12 ? m3 / (sigma * sigma * sigma) : 0.0;
    const double kurtosis = sigma > 1e-12 ? m4 / (m2 * m2) - 3.0 : 0.0;  // Fisher excess

    // histogram entropy / uniformity on the discretized levels
    const double lo = sorted.front(), hi = sorted.back();
    std::vector<double> hist(static_cast<std::size_t>(n_bins), 0.0);
    if (hi - lo < 1e-12) {
        hist[0] = n;
    } else {
        for (double x : v) {
            int b = std::min(n_bins - 1, static_cast<int>(std::floor((x - lo) * n_bins / (hi - lo))));
            hist[static_cast<std::size_t>(b)] += 1.0;
        }
    }
    double entropy = 0.0, uniformity = 0.0;
    for (double h : hist) {
        if (h <= 0.0) continue;
        double p = h / n;
        entropy -= p * std::log2(p);
        uniformity += p * p;
    }

    FeatureVector out;
    out.add("Mean", mean);
    out.add("Median", detail::percentile(sorted, 50.0));
    out.add("Minimum", lo);
    out.add("Maximum", hi);
    out.add("Range", hi - lo);
    out.add("Variance", m2);
    out.add("Skewness", skewness);
    out.add("Kurtosis", kurtosis);
    out.add("Energy", energy);
    out.add("RootMeanSquared", std::sqrt(energy / n));
    out.add("MeanAbsoluteDeviation", mad);
    out.add("10Percentile", detail::percentile(sorted, 10.0));
    out.add("90Percentile", detail::percentile(sorted, 90.0));
    out.add("InterquartileRange",
            detail::percentile(sorted, 75.0) - detail::percentile(sorted, 25.0));
    out.add("Entropy", entropy);
    out.add("Uniformity", uniformity);
    return out;
}

// ---------------------------------------------------------------------------
// GLCM: symmetric co-occurrence matrix per direction, features averaged over
// directions with at least one voxel pair.

namespace detail {

// returns the normalized symmetric co-occurrence matrix, or empty if no pairs
inline std::vector<double> glcm_matrix(const DiscretizedROI& roi, const std::array<int, 3>& dir) {
    const int ng = roi.n_levels;
    std::vector<double> p(static_cast<std::size_t>(ng) * ng, 0.0);
    double total = 0.0;
    for (int z = 0; z < roi.dims.nz; ++z)
        for (int y = 0; y < roi.dims.ny; ++y)
            for (int x = 0; x < roi.dims.nx; ++x) {
                int i = roi.level_at(x, y, z);
                if (i == 0) continue;
                int xx = x + dir[0], yy = y + dir[1], zz = z + dir[2];
                if (!roi.dims.contains(xx, yy, zz)) continue;
                int j = roi.level_at(xx, yy, zz);
                if (j == 0) continue;
                p[static_cast<std::size_t>(i - 1) * ng + (j - 1)] += 1.0;
                p[static_cast<std::size_t>(j - 1) * ng + (i - 1)] += 1.0;
                total += 2.0;
            }
    if (total == 0.0) return {};
    for (double& v : p) v /= total;
    return p;
}

inline FeatureVector glcm_from_matrix(const std::vector<double>& p, int ng) {
    std::vector<double> px(static_cast<std::size_t>(ng), 0.0);
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < ng; ++j) px[i] += p[static_cast<std::size_t>(i) * ng + j];
    double mu = 0.0;
    for (int i = 0; i < ng; ++i) mu += (i + 1.0) * px[i];
    double var = 0.0;
    for (int i = 0; i < ng; ++i) var += (i + 1.0 - mu) * (i + 1.0 - mu) * px[i];

    double contrast = 0, dissim = 0, idm = 0, energy = 0, entropy = 0;
    double eij = 0, shade = 0, prom = 0;
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < ng; ++j) {
            double pij = p[static_cast<std::size_t>(i) * ng + j];
            if (pij == 0.0) continue;
            double di = static_cast<double>(i - j);
            double ij = (i + 1.0) * (j + 1.0);
            contrast += pij * di * di;
            dissim += pij * std::abs(di);
            idm += pij / (1.0 + di * di);
            energy += pij * pij;
            entropy -= pij * std::log2(pij);
            eij += pij * ij;
            double s = (i + 1.0) + (j + 1.0) - 2.0 * mu;
            shade += pij * s * s * s;
            prom += pij * s * s * s * s;
        }
    double correlation = var > 1e-12 ? (eij - mu * mu) / var : 0.0;

    FeatureVector out;
    out.add("Contrast", contrast);
    out.add("Dissimilarity", dissim);
    out.add("InverseDifferenceMoment", idm);
    out.add("JointEnergy", energy);
    out.add("JointEntropy", entropy);
    out.add("Correlation", correlation);
    out.add("Autocorrelation", eij);
    out.add("ClusterShade", shade);
    out.add("ClusterProminence", prom);
    out.add("JointAverage", mu);
    return out;
}

inline FeatureVector average_feature_vectors(const std::vector<FeatureVector>& vs) {
    FeatureVector out;
    for (std::size_t k = 0; k < vs[0].features.size(); ++k) {
        double s = 0.0;
        for (const auto& v : vs) s += v.features[k].value;
        out.add(vs[0].features[k].name, s / static_cast<double>(vs.size()));
    }
    return out;
}

}  // namespace detail

inline FeatureVector glcm_features_direction(const DiscretizedROI& roi,
                                             const std::array<int, 3>& dir) {
    auto p = detail::glcm_matrix(roi, dir);
    if (p.empty()) throw std::runtime_error("glcm: no valid neighbor pairs");
    return detail::glcm_from_matrix(p, roi.n_levels);
}

inline FeatureVector glcm_features(const DiscretizedROI& roi) {
    std::vector<FeatureVector> per_dir;
    for (const auto& dir : texture_directions()) {
        auto p = detail::glcm_matrix(roi, dir);
        if (!p.empty()) per_dir.push_back(detail::glcm_from_matrix(p, roi.n_levels));
    }
    if (per_dir.empty()) throw std::runtime_error("glcm: no valid neighbor pairs");
    return detail::average_feature_vectors(per_dir);
}

// ---------------------------------------------------------------------------
// GLRLM: maximal same-level runs along each direction, inside the mask.

namespace detail {

struct RunLengthMatrix {
    // counts[i][j]: runs of level i+1 with length j+1
    std::vector<std::vector<double>> counts;
    double n_runs = 0.0;
};

inline RunLengthMatrix glrlm_matrix(const DiscretizedROI& roi, const std::array<int, 3>& dir) {
    const int max_len = std::max({roi.dims.nx, roi.dims.ny, roi.dims.nz});
    RunLengthMatrix m;
    m.counts.assign(static_cast<std::size_t>(roi.n_levels),
                    std::vector<double>(static_cast<std::size_t>(max_len), 0.0));
    for (int z = 0; z < roi.dims.nz; ++z)
        for (int y = 0; y < roi.dims.ny; ++y)
            for (int x = 0; x < roi.dims.nx; ++x) {
                int lev = roi.level_at(x, y, z);
                if (lev == 0) continue;
                int px = x - dir[0], py = y - dir[1], pz = z - dir[2];
                if (roi.dims.contains(px, py, pz) && roi.level_at(px, py, pz) == lev)
                    continue;  // not the head of a maximal run
                int len = 1;
                int cx = x + dir[0], cy = y + dir[1], cz = z + dir[2];
                while (roi.dims.contains(cx, cy, cz) && roi.level_at(cx, cy, cz) == lev) {
                    ++len;
                    cx += dir[0]; cy += dir[1]; cz += dir[2];
                }
                m.counts[static_cast<std::size_t>(lev - 1)][static_cast<std::size_t>(len - 1)] += 1.0;
                m.n_runs += 1.0;
            }
    return m;
}

inline FeatureVector glrlm_from_matrix(const RunLengthMatrix& m, std::size_t n_voxels) {
    const double nr = m.n_runs;
    double sre = 0, lre = 0, gln = 0, rln = 0, mu_i = 0, mu_j = 0, entropy = 0, lgl = 0, hgl = 0;
    std::vector<double> row_sum(m.counts.size(), 0.0);
    std::vector<double> col_sum(m.counts.empty() ? 0 : m.counts[0].size(), 0.0);
    for (std::size_t i = 0; i < m.counts.size(); ++i)
        for (std::size_t j = 0; j < m.counts[i].size(); ++j) {
            double c = m.counts[i][j];
            if (c == 0.0) continue;
            row_sum[i] += c;
            col_sum[j] += c;
            double p = c / nr;
            double li = static_cast<double>(i + 1), lj = static_cast<double>(j + 1);
            sre += p / (lj * lj);
            lre += p * lj * lj;
            mu_i += p * li;
            mu_j += p * lj;
            entropy -= p * std::log2(p);
            lgl += p / (li * li);
            hgl += p * li * li;
        }
    for (double r : row_sum) gln += r * r;
    for (double c : col_sum) rln += c * c;
    double var_i = 0, var_j = 0;
    for (std::size_t i = 0; i < m.counts.size(); ++i)
        for (std::size_t j = 0; j < m.counts[i].size(); ++j) {
            double c = m.counts[i][j];
            if (c == 0.0) continue;
            double p = c / nr;
            var_i += p * (i + 1.0 - mu_i) * (i + 1.0 - mu_i);
            var_j += p * (j + 1.0 - mu_j) * (j + 1.0 - mu_j);
        }

    FeatureVector out;
    out.add("ShortRunEmphasis", sre);
    out.add("LongRunEmphasis", lre);
    out.add("GrayLevelNonUniformity", gln / nr);
    out.add("GrayLevelNonUniformityNormalized", gln / (nr * nr));
    out.add("RunLengthNonUniformity", rln / nr);
    out.add("RunLengthNonUniformityNormalized", rln / (nr * nr));
    out.add("RunPercentage", nr / static_cast<double>(n_voxels));
    out.add("GrayLevelVariance", var_i);
    out.add("RunVariance", var_j);
    out.add("RunEntropy", entropy);
    out.add("LowGrayLevelRunEmphasis", lgl);
    out.add("HighGrayLevelRunEmphasis", hgl);
    return out;
}

}  // namespace detail

inline FeatureVector glrlm_features_direction(const DiscretizedROI& roi,
                                              const std::array<int, 3>& dir) {
    if (roi.n_voxels == 0) throw std::runtime_error("glrlm: empty mask");
    return detail::glrlm_from_matrix(detail::glrlm_matrix(roi, dir), roi.n_voxels);
}

inline FeatureVector glrlm_features(const DiscretizedROI& roi) {
    if (roi.n_voxels == 0) throw std::runtime_error("glrlm: empty mask");
    std::vector<FeatureVector> per_dir;
    for (const auto& dir : texture_directions())
        per_dir.push_back(detail::glrlm_from_matrix(detail::glrlm_matrix(roi, dir), roi.n_voxels));
    return detail::average_feature_vectors(per_dir);
}

// ---------------------------------------------------------------------------
// GLSZM: 26-connected zones of equal gray level within the mask.

namespace detail {

// zone list as (level, size) pairs
inline std::vector<std::pair<int, int>> glszm_zones(const DiscretizedROI& roi) {
    std::vector<std::pair<int, int>> zones;
    std::vector<std::uint8_t> seen(roi.levels.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < roi.levels.size(); ++start) {
        if (roi.levels[start] == 0 || seen[start]) continue;
        const int lev = roi.levels[start];
        int size = 0;
        stack.clear();
        stack.push_back(start);
        seen[start] = 1;
        while (!stack.empty()) {
            std::size_t cur = stack.back();
            stack.pop_back();
            ++size;
            int cz = static_cast<int>(cur / (static_cast<std::size_t>(roi.dims.ny) * roi.dims.nx));
            std::size_t rem = cur % (static_cast<std::size_t>(roi.dims.ny) * roi.dims.nx);
            int cy = static_cast<int>(rem / roi.dims.nx);
            int cx = static_cast<int>(rem % roi.dims.nx);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0 && dz == 0) continue;
                        int nx = cx + dx, ny = cy + dy, nz = cz + dz;
                        if (!roi.dims.contains(nx, ny, nz)) continue;
                        std::size_t ni = roi.dims.index(nx, ny, nz);
                        if (seen[ni] || roi.levels[ni] != lev) continue;
                        seen[ni] = 1;
                        stack.push_back(ni);
                    }
        }
        zones.emplace_back(lev, size);
    }
    return zones;
}

}  // namespace detail

inline FeatureVector glszm_features(const DiscretizedROI& roi) {
    if (roi.n_voxels == 0) throw std::runtime_error("glszm: empty mask");
    const auto zones = detail::glszm_zones(roi);
    const double nz = static_cast<double>(zones.size());

    std::map<int, double> by_level, by_size;
    std::map<std::pair<int, int>, double> counts;
    for (const auto& [lev, size] : zones) {
        by_level[lev] += 1.0;
        by_size[size] += 1.0;
        counts[{lev, size}] += 1.0;
    }
    double sae = 0, lae = 0, mu_i = 0, mu_s = 0, entropy = 0;
    for (const auto& [key, c] : counts) {
        double p = c / nz;
        double li = key.first, s = key.second;
        sae += p / (s * s);
        lae += p * s * s;
        mu_i += p * li;
        mu_s += p * s;
        entropy -= p * std::log2(p);
    }
    double var_i = 0, var_s = 0;
    for (const auto& [key, c] : counts) {
        double p = c / nz;
        var_i += p * (key.first - mu_i) * (key.first - mu_i);
        var_s += p * (key.second - mu_s) * (key.second - mu_s);
    }
    double gln = 0, szn = 0;
    for (const auto& [lev, c] : by_level) gln += c * c;
    for (const auto& [s, c] : by_size) szn += c * c;

    FeatureVector out;
    out.add("SmallAreaEmphasis", sae);
    out.add("LargeAreaEmphasis", lae);
    out.add("GrayLevelNonUniformity", gln / nz);
    out.add("GrayLevelNonUniformityNormalized", gln / (nz * nz));
    out.add("SizeZoneNonUniformity", szn / nz);
    out.add("SizeZoneNonUniformityNormalized", szn / (nz * nz));
    out.add("ZonePercentage", nz / static_cast<double>(roi.n_voxels));
    out.add("GrayLevelVariance", var_i);
    out.add("ZoneVariance", var_s);
    out.add("ZoneEntropy", entropy);
    return out;
}

// ---------------------------------------------------------------------------
// Full per-patient extraction over original + derived images.

struct ExtractionConfig {
    int n_bins = 32;
    std::vector<double> log_sigmas_mm{1.0, 3.0, 5.0};
    bool wavelet = true;
    std::string wavelet_basis = "haar";  // single-level orthonormal Haar is the only basis so far
};

// 2x majority downsampling for wavelet-band masks; 4-of-8 ties go foreground.
inline Mask3D downsample_mask_majority(const Mask3D& mask) {
    GridDims d = mask.dims;
    GridDims out_d{(d.nx + 1) / 2, (d.ny + 1) / 2, (d.nz + 1) / 2};
    Mask3D out;
    out.dims = out_d;
    out.voxels.assign(out_d.size(), 0);
    for (int z = 0; z < out_d.nz; ++z)
        for (int y = 0; y < out_d.ny; ++y)
            for (int x = 0; x < out_d.nx; ++x) {
                int fg = 0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            // replicate-edge, matching pad_to_even
                            int sx = std::min(2 * x + dx, d.nx - 1);
                            int sy = std::min(2 * y + dy, d.ny - 1);
                            int sz = std::min(2 * z + dz, d.nz - 1);
                            fg += mask.at(sx, sy, sz) ? 1 : 0;
                        }
                out.voxels[out_d.index(x, y, z)] = fg >= 4 ? 1 : 0;
            }
    return out;
}

inline FeatureVector extract_all(const Volume3D& vol, const Mask3D& mask,
                                 const ExtractionConfig& cfg) {
    vol.validate();
    mask.validate();
    if (mask.dims != vol.dims) throw std::runtime_error("extract_all: mask/volume dims differ");
    if (mask.foreground_count() == 0) throw std::runtime_error("extract_all: empty mask");

    FeatureVector out;
    auto add_prefixed = [&out](const std::string& prefix, const FeatureVector& fv) {
        for (const auto& f : fv.features) out.add(prefix + f.name, f.value, f.kind);
    };

    add_prefixed("original_shape_", shape_features(mask, vol.spacing));

    auto add_image = [&](const std::string& image, const Volume3D& img, const Mask3D& m) {
        add_prefixed(image + "_firstorder_", firstorder_features(img, m, cfg.n_bins));
        DiscretizedROI roi = discretize(img, m, cfg.n_bins);
        add_prefixed(image + "_glcm_", glcm_features(roi));
        add_prefixed(image + "_glrlm_", glrlm_features(roi));
        add_prefixed(image + "_glszm_", glszm_features(roi));
    };

    add_image("original", vol, mask);
    for (double sigma : cfg.log_sigmas_mm)
        add_image("log_sigma_" + fmt_double(sigma) + "mm", log_filter(vol, sigma), mask);
    if (cfg.wavelet) {
        if (cfg.wavelet_basis != "haar")
            throw std::runtime_error("extract_all: unsupported wavelet basis '" +
                                     cfg.wavelet_basis + "'");
        WaveletBands wb = wavelet_decompose(vol);
        Mask3D band_mask = downsample_mask_majority(mask);
        if (band_mask.foreground_count() == 0)
            throw std::runtime_error("extract_all: wavelet-band mask is empty after downsampling");
        for (int b = 0; b < 8; ++b)
            add_image(std::string("wavelet_") + WaveletBands::labels[b], wb.bands[b], band_mask);
    }
    return out;
}

}  // namespace radpipe
