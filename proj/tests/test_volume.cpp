#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "radpipe/volume.hpp"

using namespace radpipe;
namespace fs = std::filesystem;

namespace {

fs::path mk_tmpdir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("radpipe_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Volume3D make_volume(GridDims d, std::array<double, 3> spacing,
                     const std::function<double(int, int, int)>& f) {
    Volume3D v;
    v.dims = d;
    v.spacing = spacing;
    v.data.resize(d.size());
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) v.at(x, y, z) = f(x, y, z);
    return v;
}

}  // namespace

TEST_CASE("load_volume reads a hand-written header/raw pair") {
    auto dir = mk_tmpdir("load");
    {
        std::ofstream h(dir / "v.json");
        h << R"({"dims":[2,2,2],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"data_file":"v.raw"})";
    }
    std::vector<float> raw{0, 1, 2, 3, 4, 5, 6, 7};
    {
        std::ofstream r(dir / "v.raw", std::ios::binary);
        r.write(reinterpret_cast<const char*>(raw.data()), raw.size() * sizeof(float));
    }
    auto lv = load_volume(dir / "v.json");
    REQUIRE(lv.volume.data.size() == 8);
    CHECK(lv.volume.at(1, 0, 0) == 1.0);
    CHECK(lv.volume.at(0, 1, 0) == 2.0);
    CHECK(lv.volume.at(0, 0, 1) == 4.0);
    CHECK_FALSE(lv.mask.has_value());
    fs::remove_all(dir);
}

TEST_CASE("load_volume rejects size mismatch and missing files") {
    auto dir = mk_tmpdir("mismatch");
    {
        std::ofstream h(dir / "v.json");
        h << R"({"dims":[2,2,2],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"data_file":"v.raw"})";
    }
    std::vector<float> raw(7, 1.0f);  // one voxel short
    {
        std::ofstream r(dir / "v.raw", std::ios::binary);
        r.write(reinterpret_cast<const char*>(raw.data()), raw.size() * sizeof(float));
    }
    CHECK_THROWS_WITH(load_volume(dir / "v.json"), Catch::Matchers::ContainsSubstring("mismatch"));
    CHECK_THROWS(load_volume(dir / "absent.json"));
    fs::remove_all(dir);
}

TEST_CASE("save_volume/load_volume round-trip is bit-exact") {
    auto dir = mk_tmpdir("roundtrip");
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dist(-100.f, 100.f);
    auto vol = make_volume({4, 3, 5}, {1.0, 0.5, 2.0},
                           [&](int, int, int) { return static_cast<double>(dist(rng)); });
    vol.origin = {-3.0, 1.0, 2.5};
    Mask3D mask;
    mask.dims = vol.dims;
    mask.voxels.resize(vol.dims.size());
    std::bernoulli_distribution coin(0.4);
    for (auto& m : mask.voxels) m = coin(rng) ? 1 : 0;

    save_volume(vol, &mask, dir / "p.json");
    auto lv = load_volume(dir / "p.json");
    REQUIRE(lv.volume.dims == vol.dims);
    CHECK(lv.volume.spacing == vol.spacing);
    CHECK(lv.volume.origin == vol.origin);
    CHECK(lv.volume.data == vol.data);  // values were float32-representable
    REQUIRE(lv.mask.has_value());
    CHECK(lv.mask->voxels == mask.voxels);
    fs::remove_all(dir);
}

TEST_CASE("save_volume fails on unwritable directory") {
    Volume3D v = make_volume({2, 2, 2}, {1, 1, 1}, [](int, int, int) { return 1.0; });
    CHECK_THROWS(save_volume(v, nullptr, "/nonexistent_dir_radpipe/v.json"));
}

TEST_CASE("load_volume rejects unknown header keys and non-finite data") {
    auto dir = mk_tmpdir("strict");
    {
        std::ofstream h(dir / "v.json");
        h << R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"data_file":"v.raw","extra":1})";
    }
    {
        float f = 1.0f;
        std::ofstream r(dir / "v.raw", std::ios::binary);
        r.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
    CHECK_THROWS_WITH(load_volume(dir / "v.json"), Catch::Matchers::ContainsSubstring("unknown key"));

    {
        std::ofstream h(dir / "w.json");
        h << R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"data_file":"w.raw"})";
    }
    {
        float f = std::numeric_limits<float>::quiet_NaN();
        std::ofstream r(dir / "w.raw", std::ios::binary);
        r.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
    CHECK_THROWS_WITH(load_volume(dir / "w.json"), Catch::Matchers::ContainsSubstring("finite"));
    fs::remove_all(dir);
}

TEST_CASE("resample_trilinear of a constant volume is constant") {
    auto v = make_volume({5, 4, 3}, {2.0, 1.0, 1.5}, [](int, int, int) { return 3.25; });
    auto r = resample_trilinear(v, {0.7, 0.9, 1.1});
    for (double x : r.data) CHECK(x == Catch::Approx(3.25).margin(1e-12));
}

TEST_CASE("resample dims follow the voxel-center span formula") {
    auto v = make_volume({5, 5, 5}, {2.0, 2.0, 2.0}, [](int, int, int) { return 0.0; });
    auto r = resample_trilinear(v, {1.0, 1.0, 1.0});
    // extent (n-1)*s_old = 8 mm -> 9 centers at 1 mm
    CHECK(r.dims.nx == 9);
    CHECK(r.dims.ny == 9);
    CHECK(r.dims.nz == 9);
}

TEST_CASE("resample_trilinear reproduces a linear ramp exactly") {
    auto v = make_volume({5, 3, 3}, {2.0, 2.0, 2.0},
                         [](int x, int, int) { return static_cast<double>(x); });
    auto r = resample_trilinear(v, {1.0, 2.0, 2.0});
    REQUIRE(r.dims.nx == 9);
    for (int x = 0; x < 9; ++x) CHECK(r.at(x, 1, 1) == Catch::Approx(0.5 * x).margin(1e-12));
}

TEST_CASE("resampling to identical spacing is the identity") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-5, 5);
    auto v = make_volume({6, 5, 4}, {0.7, 1.3, 2.1}, [&](int, int, int) { return dist(rng); });
    auto r = resample_trilinear(v, v.spacing);
    REQUIRE(r.dims == v.dims);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        CHECK(r.data[i] == Catch::Approx(v.data[i]).margin(1e-9));
}

TEST_CASE("trilinear resampling reproduces affine functions of physical coordinates") {
    std::array<double, 3> sp{2.0, 1.5, 1.25};
    auto affine = [&](int x, int y, int z) {
        return 2.0 + 0.5 * (x * sp[0]) - 0.25 * (y * sp[1]) + 3.0 * (z * sp[2]);
    };
    auto v = make_volume({7, 6, 5}, sp, affine);
    std::array<double, 3> tgt{0.9, 1.1, 0.8};
    auto r = resample_trilinear(v, tgt);
    for (int z = 0; z < r.dims.nz; ++z)
        for (int y = 0; y < r.dims.ny; ++y)
            for (int x = 0; x < r.dims.nx; ++x) {
                double expect = 2.0 + 0.5 * (x * tgt[0]) - 0.25 * (y * tgt[1]) + 3.0 * (z * tgt[2]);
                REQUIRE(r.at(x, y, z) == Catch::Approx(expect).margin(1e-9));
            }
}

TEST_CASE("resample_mask_nearest keeps full and empty masks trivial") {
    Mask3D m;
    m.dims = {4, 4, 4};
    m.voxels.assign(m.dims.size(), 1);
    auto r = resample_mask_nearest(m, {2, 2, 2}, {0.9, 1.3, 0.5});
    for (auto v : r.voxels) CHECK(v == 1);

    std::fill(m.voxels.begin(), m.voxels.end(), 0);
    auto e = resample_mask_nearest(m, {2, 2, 2}, {1, 1, 1});
    for (auto v : e.voxels) CHECK(v == 0);
}

TEST_CASE("resample_mask_nearest matches brute-force nearest-center assignment") {
    Mask3D m;
    m.dims = {4, 3, 3};
    m.voxels.assign(m.dims.size(), 0);
    m.voxels[m.dims.index(2, 1, 1)] = 1;

    std::array<double, 3> so{2, 2, 2}, sn{1, 1, 1};
    auto r = resample_mask_nearest(m, so, sn);

    // independent oracle: nearest input center by scanning all candidates,
    // exact half-way ties resolve to the upper neighbor
    auto nearest = [](int i, double s_new, double s_old, int n) {
        double pos = i * s_new;
        int best = 0;
        double bd = std::abs(pos - 0.0);
        for (int j = 1; j < n; ++j) {
            double d = std::abs(pos - j * s_old);
            if (d < bd || (d == bd && j > best)) {
                bd = d;
                best = j;
            }
        }
        return best;
    };
    for (int z = 0; z < r.dims.nz; ++z)
        for (int y = 0; y < r.dims.ny; ++y)
            for (int x = 0; x < r.dims.nx; ++x) {
                bool expect = m.at(nearest(x, sn[0], so[0], m.dims.nx),
                                   nearest(y, sn[1], so[1], m.dims.ny),
                                   nearest(z, sn[2], so[2], m.dims.nz));
                REQUIRE(r.at(x, y, z) == expect);
            }
}

TEST_CASE("zscore_normalize standardizes and is invertible") {
    auto v = make_volume({2, 2, 2}, {1, 1, 1},
                         [](int x, int y, int z) { return 1.0 + x + 2 * y + 4 * z; });
    auto [z, params] = zscore_normalize(v);
    CHECK(std::abs(vec_mean(z.data)) < 1e-6);
    CHECK(std::abs(vec_std(z.data) - 1.0) < 1e-6);
    CHECK(params.mu == Catch::Approx(4.5));
    for (std::size_t i = 0; i < v.data.size(); ++i)
        CHECK(z.data[i] * params.sigma + params.mu == Catch::Approx(v.data[i]).margin(1e-9));

    // idempotence on already-standardized data
    auto [z2, p2] = zscore_normalize(z);
    CHECK(std::abs(p2.mu) < 1e-9);
    CHECK(p2.sigma == Catch::Approx(1.0).margin(1e-9));
    for (std::size_t i = 0; i < z.data.size(); ++i)
        CHECK(z2.data[i] == Catch::Approx(z.data[i]).margin(1e-9));
}

TEST_CASE("zscore_normalize rejects constant and single-voxel volumes") {
    auto v = make_volume({3, 3, 3}, {1, 1, 1}, [](int, int, int) { return 42.0; });
    CHECK_THROWS_WITH(zscore_normalize(v), Catch::Matchers::ContainsSubstring("degenerate"));
    auto single = make_volume({1, 1, 1}, {1, 1, 1}, [](int, int, int) { return 1.0; });
    CHECK_THROWS_WITH(zscore_normalize(single), Catch::Matchers::ContainsSubstring("2 voxels"));
}

TEST_CASE("correct_bias_field leaves a flat image unchanged") {
    auto v = make_volume({6, 6, 6}, {1, 1, 1}, [](int, int, int) { return 120.0; });
    Mask3D m;
    m.dims = v.dims;
    m.voxels.assign(v.dims.size(), 1);
    auto c = correct_bias_field(v, m, 2);
    for (double x : c.data) CHECK(x == Catch::Approx(120.0).margin(1e-9));
}

TEST_CASE("correct_bias_field removes an injected smooth field") {
    GridDims d{24, 10, 10};
    auto v = make_volume(d, {1, 1, 1}, [&](int x, int, int) {
        return 100.0 * (1.0 + 0.3 * (static_cast<double>(x) / d.nx));
    });
    Mask3D m;
    m.dims = d;
    m.voxels.assign(d.size(), 1);

    auto cv_of = [&](const Volume3D& vol) {
        std::vector<double> vals(vol.data.begin(), vol.data.end());
        return vec_std(vals) / vec_mean(vals);
    };
    double cv_before = cv_of(v);
    CHECK(cv_before > 0.05);

    auto c = correct_bias_field(v, m, 2);
    CHECK(cv_of(c) < 0.01);

    // masked mean preserved
    CHECK(vec_mean(c.data) == Catch::Approx(vec_mean(v.data)).epsilon(1e-3));
}

TEST_CASE("correct_bias_field rejects non-positive masked intensities") {
    auto v = make_volume({4, 4, 4}, {1, 1, 1}, [](int x, int, int) { return x == 0 ? 0.0 : 5.0; });
    Mask3D m;
    m.dims = v.dims;
    m.voxels.assign(v.dims.size(), 1);
    CHECK_THROWS_WITH(correct_bias_field(v, m, 1),
                      Catch::Matchers::ContainsSubstring("non-positive"));
}

TEST_CASE("correct_bias_field reports rank-deficient fits") {
    // single-slice volume: all x-dependent monomials vanish
    auto v = make_volume({1, 8, 8}, {1, 1, 1}, [](int, int y, int z) { return 10.0 + y + z; });
    Mask3D m;
    m.dims = v.dims;
    m.voxels.assign(v.dims.size(), 1);
    CHECK_THROWS_WITH(correct_bias_field(v, m, 2),
                      Catch::Matchers::ContainsSubstring("rank-deficient"));
}
