#include <catch2/catch_amalgamated.hpp>

#include <queue>
#include <random>
#include <set>

#include "radpipe/features.hpp"

using namespace radpipe;

namespace {

Volume3D make_volume(GridDims d, const std::function<double(int, int, int)>& f) {
    Volume3D v;
    v.dims = d;
    v.data.resize(d.size());
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) v.at(x, y, z) = f(x, y, z);
    return v;
}

Mask3D full_mask(GridDims d) {
    Mask3D m;
    m.dims = d;
    m.voxels.assign(d.size(), 1);
    return m;
}

DiscretizedROI roi_from_rows(GridDims d, const std::vector<int>& levels, int n_levels) {
    DiscretizedROI roi;
    roi.dims = d;
    roi.levels = levels;
    roi.n_levels = n_levels;
    roi.n_voxels = 0;
    for (int l : levels) roi.n_voxels += (l != 0);
    return roi;
}

// independent flood-fill oracle: BFS over an explicit coordinate queue
std::vector<std::pair<int, int>> zones_oracle(const DiscretizedROI& roi) {
    std::set<std::array<int, 3>> visited;
    std::vector<std::pair<int, int>> zones;
    for (int z = 0; z < roi.dims.nz; ++z)
        for (int y = 0; y < roi.dims.ny; ++y)
            for (int x = 0; x < roi.dims.nx; ++x) {
                if (roi.level_at(x, y, z) == 0 || visited.count({x, y, z})) continue;
                int lev = roi.level_at(x, y, z), size = 0;
                std::queue<std::array<int, 3>> q;
                q.push({x, y, z});
                visited.insert({x, y, z});
                while (!q.empty()) {
                    auto [cx, cy, cz] = q.front();
                    q.pop();
                    ++size;
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                std::array<int, 3> n{cx + dx, cy + dy, cz + dz};
                                if (!roi.dims.contains(n[0], n[1], n[2])) continue;
                                if (visited.count(n)) continue;
                                if (roi.level_at(n[0], n[1], n[2]) != lev) continue;
                                visited.insert(n);
                                q.push(n);
                            }
                }
                zones.emplace_back(lev, size);
            }
    std::sort(zones.begin(), zones.end());
    return zones;
}

}  // namespace

TEST_CASE("discretize maps the bin formula") {
    auto v = make_volume({4, 1, 1}, [](int x, int, int) { return 0.25 * x; });
    auto roi = discretize(v, full_mask(v.dims), 4);
    CHECK(roi.level_at(0, 0, 0) == 1);
    CHECK(roi.level_at(1, 0, 0) == 2);
    CHECK(roi.level_at(2, 0, 0) == 3);
    CHECK(roi.level_at(3, 0, 0) == 4);  // max clamps to Ng, never Ng+1
    CHECK(roi.n_levels == 4);
    CHECK(roi.n_voxels == 4);
}

TEST_CASE("discretize collapses a constant ROI to one level") {
    auto v = make_volume({3, 3, 1}, [](int, int, int) { return 5.0; });
    auto roi = discretize(v, full_mask(v.dims), 8);
    CHECK(roi.n_levels == 1);
    for (int l : roi.levels) CHECK(l == 1);
}

TEST_CASE("discretize requires a nonempty mask") {
    auto v = make_volume({2, 2, 2}, [](int, int, int) { return 1.0; });
    Mask3D m = full_mask(v.dims);
    std::fill(m.voxels.begin(), m.voxels.end(), 0);
    CHECK_THROWS_WITH(discretize(v, m, 4), Catch::Matchers::ContainsSubstring("empty mask"));
}

TEST_CASE("shape features of a single 1mm voxel") {
    Mask3D m;
    m.dims = {3, 3, 3};
    m.voxels.assign(27, 0);
    m.voxels[m.dims.index(1, 1, 1)] = 1;
    auto f = shape_features(m, {1, 1, 1});
    CHECK(f.get("VoxelVolume") == 1.0);
    CHECK(f.get("SurfaceArea") == 6.0);
    CHECK(f.get("Sphericity") ==
          Catch::Approx(std::pow(M_PI, 1.0 / 3) * std::pow(6.0, 2.0 / 3) / 6.0).margin(1e-12));
    CHECK(f.get("Sphericity") == Catch::Approx(0.806).margin(5e-4));
    CHECK(f.get("Maximum3DDiameter") == 0.0);
}

TEST_CASE("shape features of a 2x2x2 cube at 1mm") {
    Mask3D m;
    m.dims = {4, 4, 4};
    m.voxels.assign(m.dims.size(), 0);
    for (int z = 1; z <= 2; ++z)
        for (int y = 1; y <= 2; ++y)
            for (int x = 1; x <= 2; ++x) m.voxels[m.dims.index(x, y, z)] = 1;
    auto f = shape_features(m, {1, 1, 1});
    CHECK(f.get("VoxelVolume") == 8.0);
    CHECK(f.get("SurfaceArea") == 24.0);
    CHECK(f.get("Maximum3DDiameter") == Catch::Approx(std::sqrt(3.0)).margin(1e-12));
    CHECK(f.get("Elongation") == Catch::Approx(1.0).margin(1e-9));
    CHECK(f.get("Flatness") == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("shape elongation/flatness stay in [0,1] and track anisotropy") {
    std::mt19937_64 rng(40);
    for (int rep = 0; rep < 10; ++rep) {
        Mask3D m;
        m.dims = {12, 12, 12};
        m.voxels.assign(m.dims.size(), 0);
        std::uniform_int_distribution<int> coord(0, 11);
        for (int k = 0; k < 40; ++k) m.voxels[m.dims.index(coord(rng), coord(rng), coord(rng))] = 1;
        if (m.foreground_count() == 0) continue;
        auto f = shape_features(m, {1, 1, 1});
        CHECK(f.get("Elongation") >= 0.0);
        CHECK(f.get("Elongation") <= 1.0 + 1e-12);
        CHECK(f.get("Flatness") >= 0.0);
        CHECK(f.get("Flatness") <= 1.0 + 1e-12);
    }

    // a ball is isotropic; a 1-voxel-thick slab is flat
    Mask3D ball;
    ball.dims = {17, 17, 17};
    ball.voxels.assign(ball.dims.size(), 0);
    for (int z = 0; z < 17; ++z)
        for (int y = 0; y < 17; ++y)
            for (int x = 0; x < 17; ++x)
                if ((x - 8) * (x - 8) + (y - 8) * (y - 8) + (z - 8) * (z - 8) <= 36)
                    ball.voxels[ball.dims.index(x, y, z)] = 1;
    auto fb = shape_features(ball, {1, 1, 1});
    CHECK(fb.get("Elongation") > 0.95);
    CHECK(fb.get("Flatness") > 0.95);

    Mask3D slab;
    slab.dims = {9, 9, 9};
    slab.voxels.assign(slab.dims.size(), 0);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) slab.voxels[slab.dims.index(x, y, 4)] = 1;
    auto fs = shape_features(slab, {1, 1, 1});
    CHECK(fs.get("Flatness") == Catch::Approx(0.0).margin(1e-9));
    CHECK(fb.get("Sphericity") > fs.get("Sphericity"));
}

TEST_CASE("firstorder features on a hand case") {
    auto v = make_volume({4, 1, 1}, [](int x, int, int) { return 1.0 + x; });
    auto f = firstorder_features(v, full_mask(v.dims), 4);
    CHECK(f.get("Mean") == 2.5);
    CHECK(f.get("Variance") == 1.25);
    CHECK(f.get("Energy") == 30.0);
    CHECK(f.get("Minimum") == 1.0);
    CHECK(f.get("Maximum") == 4.0);
    CHECK(f.get("Range") == 3.0);
    CHECK(f.get("RootMeanSquared") == Catch::Approx(std::sqrt(30.0 / 4.0)).margin(1e-12));
    CHECK(f.get("Entropy") == Catch::Approx(2.0).margin(1e-12));  // 4 equal-mass bins
}

TEST_CASE("firstorder features on a constant ROI") {
    auto v = make_volume({3, 3, 3}, [](int, int, int) { return 7.0; });
    auto f = firstorder_features(v, full_mask(v.dims), 16);
    CHECK(f.get("Variance") == 0.0);
    CHECK(f.get("Entropy") == 0.0);
    CHECK(f.get("Uniformity") == 1.0);
    CHECK(f.get("Range") == 0.0);
    CHECK(f.get("Skewness") == 0.0);
    CHECK(f.get("Kurtosis") == 0.0);
}

TEST_CASE("firstorder entropy of two equal-mass levels is one bit") {
    auto v = make_volume({4, 1, 1}, [](int x, int, int) { return x < 2 ? 0.0 : 1.0; });
    auto f = firstorder_features(v, full_mask(v.dims), 32);
    CHECK(f.get("Entropy") == Catch::Approx(1.0).margin(1e-12));
    CHECK(f.get("Uniformity") == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("firstorder features match a direct-definition oracle") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(-3.0, 9.0);
    auto v = make_volume({6, 5, 4}, [&](int, int, int) { return dist(rng); });
    Mask3D m = full_mask(v.dims);
    std::bernoulli_distribution coin(0.6);
    for (auto& b : m.voxels) b = coin(rng) ? 1 : 0;
    const int n_bins = 16;
    auto f = firstorder_features(v, m, n_bins);

    std::vector<double> vals;
    for (std::size_t i = 0; i < v.data.size(); ++i)
        if (m.voxels[i]) vals.push_back(v.data[i]);
    double n = static_cast<double>(vals.size());
    double mean = 0;
    for (double x : vals) mean += x;
    mean /= n;
    double var = 0, sk = 0, ku = 0, energy = 0, mad = 0;
    for (double x : vals) {
        var += (x - mean) * (x - mean);
        sk += std::pow(x - mean, 3.0);
        ku += std::pow(x - mean, 4.0);
        energy += x * x;
        mad += std::abs(x - mean);
    }
    var /= n;
    CHECK(f.get("Mean") == Catch::Approx(mean).margin(1e-9));
    CHECK(f.get("Variance") == Catch::Approx(var).margin(1e-9));
    CHECK(f.get("Skewness") == Catch::Approx(sk / n / std::pow(var, 1.5)).margin(1e-9));
    CHECK(f.get("Kurtosis") == Catch::Approx(ku / n / (var * var) - 3.0).margin(1e-9));
    CHECK(f.get("Energy") == Catch::Approx(energy).margin(1e-9));
    CHECK(f.get("MeanAbsoluteDeviation") == Catch::Approx(mad / n).margin(1e-9));

    std::sort(vals.begin(), vals.end());
    auto pct = [&](double p) {
        double pos = (n - 1) * p / 100.0;
        auto lo = static_cast<std::size_t>(pos);
        if (lo + 1 >= vals.size()) return vals.back();
        return vals[lo] + (vals[lo + 1] - vals[lo]) * (pos - lo);
    };
    CHECK(f.get("Median") == Catch::Approx(pct(50)).margin(1e-9));
    CHECK(f.get("10Percentile") == Catch::Approx(pct(10)).margin(1e-9));
    CHECK(f.get("90Percentile") == Catch::Approx(pct(90)).margin(1e-9));
    CHECK(f.get("InterquartileRange") == Catch::Approx(pct(75) - pct(25)).margin(1e-9));
}

TEST_CASE("glcm hand case: 2x2 alternating columns, direction (1,0,0)") {
    auto roi = roi_from_rows({2, 2, 1}, {1, 2, 1, 2}, 2);
    auto f = glcm_features_direction(roi, {1, 0, 0});
    CHECK(f.get("Contrast") == Catch::Approx(1.0).margin(1e-12));
    CHECK(f.get("JointEntropy") == Catch::Approx(1.0).margin(1e-12));
    CHECK(f.get("Dissimilarity") == Catch::Approx(1.0).margin(1e-12));
    CHECK(f.get("JointEnergy") == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("glcm on a constant ROI is a single cell") {
    auto v = make_volume({3, 3, 1}, [](int, int, int) { return 2.0; });
    auto roi = discretize(v, full_mask(v.dims), 8);
    auto f = glcm_features(roi);
    CHECK(f.get("Contrast") == 0.0);
    CHECK(f.get("JointEnergy") == 1.0);
    CHECK(f.get("JointEntropy") == 0.0);
    CHECK(f.get("Correlation") == 0.0);  // degenerate-variance convention
}

TEST_CASE("glcm correlation of a checkerboard line is -1") {
    std::vector<int> levels(8);
    for (int x = 0; x < 8; ++x) levels[x] = (x % 2) + 1;
    auto roi = roi_from_rows({8, 1, 1}, levels, 2);
    auto f = glcm_features_direction(roi, {1, 0, 0});
    CHECK(f.get("Correlation") == Catch::Approx(-1.0).margin(1e-9));
}

TEST_CASE("glcm matrices are symmetric and sum to one") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> lev(0, 5);  // 0 = outside mask
    GridDims d{6, 5, 4};
    std::vector<int> levels(d.size());
    for (auto& l : levels) l = lev(rng);
    auto roi = roi_from_rows(d, levels, 5);
    for (const auto& dir : texture_directions()) {
        auto p = detail::glcm_matrix(roi, dir);
        if (p.empty()) continue;
        double sum = 0.0;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                sum += p[i * 5 + j];
                REQUIRE(p[i * 5 + j] == Catch::Approx(p[j * 5 + i]).margin(1e-15));
            }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("glcm requires at least one neighbor pair") {
    // two voxels far apart, no distance-1 neighbors
    std::vector<int> levels(27, 0);
    GridDims d{3, 3, 3};
    levels[d.index(0, 0, 0)] = 1;
    DiscretizedROI roi = roi_from_rows(d, levels, 2);
    roi.levels[d.index(0, 0, 0)] = 1;
    CHECK_THROWS_WITH(glcm_features(roi), Catch::Matchers::ContainsSubstring("neighbor"));
}

TEST_CASE("glrlm hand case: row [1,1,2] along the row") {
    auto roi = roi_from_rows({3, 1, 1}, {1, 1, 2}, 2);
    auto f = glrlm_features_direction(roi, {1, 0, 0});
    // runs: (1,len 2), (2,len 1); N_r = 2
    CHECK(f.get("GrayLevelNonUniformityNormalized") == Catch::Approx(0.5).margin(1e-12));
    CHECK(f.get("RunPercentage") == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(f.get("GrayLevelNonUniformity") == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("glrlm on a constant ROI") {
    auto v = make_volume({4, 2, 1}, [](int, int, int) { return 3.0; });
    auto roi = discretize(v, full_mask(v.dims), 8);
    auto f = glrlm_features_direction(roi, {1, 0, 0});
    CHECK(f.get("GrayLevelNonUniformityNormalized") == 1.0);
    // two runs of length 4 over 8 voxels
    CHECK(f.get("RunPercentage") == Catch::Approx(2.0 / 8.0).margin(1e-12));
}

TEST_CASE("glrlm with all-distinct levels has ShortRunEmphasis 1") {
    auto roi = roi_from_rows({4, 1, 1}, {1, 2, 3, 4}, 4);
    auto f = glrlm_features_direction(roi, {1, 0, 0});
    CHECK(f.get("ShortRunEmphasis") == 1.0);
    CHECK(f.get("LongRunEmphasis") == 1.0);
}

TEST_CASE("glrlm run lengths partition the mask along every direction") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> lev(0, 4);
    GridDims d{7, 6, 5};
    std::vector<int> levels(d.size());
    for (auto& l : levels) l = lev(rng);
    auto roi = roi_from_rows(d, levels, 4);
    for (const auto& dir : texture_directions()) {
        auto m = detail::glrlm_matrix(roi, dir);
        double visited = 0.0;
        for (std::size_t i = 0; i < m.counts.size(); ++i)
            for (std::size_t j = 0; j < m.counts[i].size(); ++j)
                visited += m.counts[i][j] * static_cast<double>(j + 1);
        REQUIRE(visited == Catch::Approx(static_cast<double>(roi.n_voxels)).margin(1e-9));
    }
}

TEST_CASE("glszm trivial cases") {
    auto v = make_volume({3, 2, 1}, [](int, int, int) { return 1.0; });
    auto roi = discretize(v, full_mask(v.dims), 4);
    auto f = glszm_features(roi);
    CHECK(f.get("ZonePercentage") == Catch::Approx(1.0 / 6.0).margin(1e-12));
    CHECK(f.get("GrayLevelNonUniformityNormalized") == 1.0);

    // two disjoint single-voxel islands of levels 1 and 2
    std::vector<int> levels(27, 0);
    GridDims d{3, 3, 3};
    levels[d.index(0, 0, 0)] = 1;
    levels[d.index(2, 2, 2)] = 2;
    auto roi2 = roi_from_rows(d, levels, 2);
    auto f2 = glszm_features(roi2);
    CHECK(f2.get("GrayLevelNonUniformityNormalized") == Catch::Approx(0.5).margin(1e-12));
    CHECK(f2.get("SizeZoneNonUniformityNormalized") == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("glszm zones match an independent flood-fill oracle") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        GridDims d{8, 8, 8};
        std::uniform_int_distribution<int> lev(0, 3);
        std::vector<int> levels(d.size());
        for (auto& l : levels) l = lev(rng);
        auto roi = roi_from_rows(d, levels, 3);
        if (roi.n_voxels == 0) continue;
        auto zones = detail::glszm_zones(roi);
        std::sort(zones.begin(), zones.end());
        REQUIRE(zones == zones_oracle(roi));
        // zones partition the mask: sizes sum to the masked voxel count
        std::size_t covered = 0;
        for (const auto& [_, size] : zones) covered += static_cast<std::size_t>(size);
        REQUIRE(covered == roi.n_voxels);
    }
}

TEST_CASE("glszm checkerboard zones connect diagonally") {
    GridDims d{4, 4, 1};
    std::vector<int> levels(d.size());
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) levels[d.index(x, y, 0)] = ((x + y) % 2) + 1;
    auto roi = roi_from_rows(d, levels, 2);
    auto zones = detail::glszm_zones(roi);
    std::sort(zones.begin(), zones.end());
    CHECK(zones == zones_oracle(roi));
    CHECK(zones.size() == 2);  // same-level cells touch diagonally
}

TEST_CASE("extract_all produces the expected catalogue") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    GridDims d{14, 14, 14};
    auto v = make_volume(d, [&](int, int, int) { return dist(rng); });
    v.spacing = {1, 1, 1};
    Mask3D m;
    m.dims = d;
    m.voxels.assign(d.size(), 0);
    for (int z = 3; z < 11; ++z)
        for (int y = 3; y < 11; ++y)
            for (int x = 3; x < 11; ++x) m.voxels[d.index(x, y, z)] = 1;

    ExtractionConfig cfg;
    cfg.log_sigmas_mm = {1.0};  // keep the kernel inside this small volume
    auto f = extract_all(v, m, cfg);
    // 9 shape + (1 original + 1 LoG + 8 wavelet) x (16 + 10 + 12 + 10)
    CHECK(f.size() == 9 + 10 * 48);
    CHECK_NOTHROW(f.get("original_shape_VoxelVolume"));
    CHECK_NOTHROW(f.get("original_glrlm_GrayLevelNonUniformityNormalized"));
    CHECK_NOTHROW(f.get("log_sigma_1mm_glcm_Contrast"));
    CHECK_NOTHROW(f.get("wavelet_HHH_glszm_ZoneEntropy"));
    for (const auto& feat : f.features) CHECK(std::isfinite(feat.value));

    // determinism: identical patient -> identical vector
    auto f2 = extract_all(v, m, cfg);
    REQUIRE(f.size() == f2.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(f.features[i].name == f2.features[i].name);
        CHECK(f.features[i].value == f2.features[i].value);
    }
}

TEST_CASE("extract_all with the default config yields the pinned count") {
    // regression constant: 9 shape + (1 + 3 LoG + 8 wavelet) * 48
    ExtractionConfig cfg;
    REQUIRE(cfg.n_bins == 32);
    REQUIRE(cfg.log_sigmas_mm == std::vector<double>{1.0, 3.0, 5.0});
    std::mt19937_64 rng(56);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    GridDims d{44, 44, 44};
    auto v = make_volume(d, [&](int, int, int) { return dist(rng); });
    v.spacing = {1, 1, 1};
    Mask3D m;
    m.dims = d;
    m.voxels.assign(d.size(), 0);
    for (int z = 14; z < 30; ++z)
        for (int y = 14; y < 30; ++y)
            for (int x = 14; x < 30; ++x) m.voxels[d.index(x, y, z)] = 1;
    auto f = extract_all(v, m, cfg);
    CHECK(f.size() == 585);
}

TEST_CASE("extract_all rejects an empty mask before any family runs") {
    auto v = make_volume({8, 8, 8}, [](int, int, int) { return 1.0; });
    v.spacing = {1, 1, 1};
    Mask3D m;
    m.dims = v.dims;
    m.voxels.assign(v.dims.size(), 0);
    CHECK_THROWS_WITH(extract_all(v, m, ExtractionConfig{}),
                      Catch::Matchers::ContainsSubstring("empty mask"));
}

TEST_CASE("matrix features are invariant to uniform intensity shift") {
    // integer-valued data keeps the shifted discretization bit-exact
    std::mt19937_64 rng(60);
    std::uniform_int_distribution<int> val(0, 7);
    GridDims d{6, 6, 6};
    auto v = make_volume(d, [&](int, int, int) { return static_cast<double>(val(rng)); });
    Mask3D m = full_mask(d);
    Volume3D shifted = v;
    for (double& x : shifted.data) x += 16.0;

    auto a = discretize(v, m, 8);
    auto b = discretize(shifted, m, 8);
    REQUIRE(a.levels == b.levels);
    auto fa = glcm_features(a), fb = glcm_features(b);
    for (std::size_t i = 0; i < fa.size(); ++i)
        CHECK(fa.features[i].value == fb.features[i].value);
    auto ga = glrlm_features(a), gb = glrlm_features(b);
    for (std::size_t i = 0; i < ga.size(); ++i)
        CHECK(ga.features[i].value == gb.features[i].value);
    auto za = glszm_features(a), zb = glszm_features(b);
    for (std::size_t i = 0; i < za.size(); ++i)
        CHECK(za.features[i].value == zb.features[i].value);
}

TEST_CASE("downsample_mask_majority keeps blocks with >= 4 foreground voxels") {
    Mask3D m;
    m.dims = {4, 2, 2};
    m.voxels.assign(m.dims.size(), 0);
    // left 2x2x2 block fully on, right block has a single voxel
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) m.voxels[m.dims.index(x, y, z)] = 1;
    m.voxels[m.dims.index(2, 0, 0)] = 1;
    auto ds = downsample_mask_majority(m);
    REQUIRE(ds.dims == GridDims{2, 1, 1});
    CHECK(ds.at(0, 0, 0));
    CHECK_FALSE(ds.at(1, 0, 0));
}
