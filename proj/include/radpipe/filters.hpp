#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "radpipe/volume.hpp"

namespace radpipe {

// ---------------------------------------------------------------------------
// Laplacian of Gaussian: separable Gaussian blur (kernel truncated at radius
// ceil(4*sigma/spacing) per axis, renormalized to sum 1) followed by the
// 6-neighbor discrete Laplacian in physical units, scaled by sigma^2.
// Borders replicate the edge voxel.

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma_mm, double spacing_mm, int radius) {
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double d = i * spacing_mm;
        k[i + radius] = std::exp(-d * d / (2.0 * sigma_mm * sigma_mm));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// 1D convolution along `axis` with replicate-edge boundary.
inline void convolve_axis(Volume3D& vol, int axis, const std::vector<double>& kernel) {
    const GridDims d = vol.dims;
    const int radius = (static_cast<int>(kernel.size()) - 1) / 2;
    const int n = axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz);
    std::vector<double> line(n);
    auto idx = [&](int i, int a, int b) {
        if (axis == 0) return d.index(i, a, b);
        if (axis == 1) return d.index(a, i, b);
        return d.index(a, b, i);
    };
    const int na = axis == 0 ? d.ny : d.nx;
    const int nb = axis == 2 ? d.ny : d.nz;
    for (int b = 0; b < nb; ++b)
        for (int a = 0; a < na; ++a) {
            for (int i = 0; i < n; ++i) line[i] = vol.data[idx(i, a, b)];
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    int j = std::clamp(i + k, 0, n - 1);
                    acc += kernel[k + radius] * line[j];
                }
                vol.data[idx(i, a, b)] = acc;
            }
        }
}

}  // namespace detail

inline Volume3D log_filter(const Volume3D& vol, double sigma_mm) {
    vol.validate();
    if (!(sigma_mm > 0.0)) throw std::runtime_error("log_filter: sigma must be > 0");

    const std::array<int, 3> n{vol.dims.nx, vol.dims.ny, vol.dims.nz};
    std::array<int, 3> radius{};
    for (int a = 0; a < 3; ++a) {
        radius[a] = static_cast<int>(std::ceil(4.0 * sigma_mm / vol.spacing[a]));
        if (radius[a] >= n[a])
            throw std::runtime_error("log_filter: kernel radius exceeds volume extent");
    }

    Volume3D blurred = vol;
    for (int a = 0; a < 3; ++a)
        detail::convolve_axis(blurred, a, detail::gaussian_kernel(sigma_mm, vol.spacing[a], radius[a]));

    Volume3D out = blurred;
    const double s2 = sigma_mm * sigma_mm;
    for (int z = 0; z < vol.dims.nz; ++z)
        for (int y = 0; y < vol.dims.ny; ++y)
            for (int x = 0; x < vol.dims.nx; ++x) {
                double c = blurred.at(x, y, z);
                double lap = 0.0;
                auto term = [&](double lo, double hi, double h) {
                    lap += (lo - 2.0 * c + hi) / (h * h);
                };
                term(blurred.at(std::max(x - 1, 0), y, z),
                     blurred.at(std::min(x + 1, vol.dims.nx - 1), y, z), vol.spacing[0]);
                term(blurred.at(x, std::max(y - 1, 0), z),
                     blurred.at(x, std::min(y + 1, vol.dims.ny - 1), z), vol.spacing[1]);
                term(blurred.at(x, y, std::max(z - 1, 0)),
                     blurred.at(x, y, std::min(z + 1, vol.dims.nz - 1)), vol.spacing[2]);
                out.at(x, y, z) = s2 * lap;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Single-level separable orthonormal Haar decomposition, x then y then z.
// Odd dims are replicate-edge padded to even first; the pre-padding dims are
// recorded so reconstruction can crop. Label letter k is the filter applied
// along axis k (x,y,z); band index bit 2/1/0 = H along x/y/z.

struct WaveletBands {
    std::array<Volume3D, 8> bands;
    GridDims original_dims{};

    static constexpr std::array<const char*, 8> labels{"LLL", "LLH", "LHL", "LHH",
                                                       "HLL", "HLH", "HHL", "HHH"};
    const Volume3D& band(const std::string& label) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (label == labels[i]) return bands[i];
        throw std::runtime_error("unknown wavelet band label: " + label);
    }
};

inline Volume3D pad_to_even(const Volume3D& vol) {
    GridDims d = vol.dims;
    GridDims p{d.nx + (d.nx % 2), d.ny + (d.ny % 2), d.nz + (d.nz % 2)};
    if (p == d) return vol;
    Volume3D out;
    out.dims = p;
    out.spacing = vol.spacing;
    out.origin = vol.origin;
    out.data.resize(p.size());
    for (int z = 0; z < p.nz; ++z)
        for (int y = 0; y < p.ny; ++y)
            for (int x = 0; x < p.nx; ++x)
                out.at(x, y, z) =
                    vol.at(std::min(x, d.nx - 1), std::min(y, d.ny - 1), std::min(z, d.nz - 1));
    return out;
}

namespace detail {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Analysis along one axis: even-length input -> (low, high), each half length.
inline void haar_analyze_axis(const Volume3D& in, int axis, Volume3D& low, Volume3D& high) {
    GridDims d = in.dims;
    GridDims od = d;
    (axis == 0 ? od.nx : axis == 1 ? od.ny : od.nz) /= 2;
    for (Volume3D* v : {&low, &high}) {
        v->dims = od;
        v->spacing = in.spacing;
        v->origin = in.origin;
        v->spacing[axis] *= 2.0;
        v->data.assign(od.size(), 0.0);
    }
    const int half = axis == 0 ? od.nx : (axis == 1 ? od.ny : od.nz);
    auto in_idx = [&](int i, int a, int b) {
        if (axis == 0) return d.index(i, a, b);
        if (axis == 1) return d.index(a, i, b);
        return d.index(a, b, i);
    };
    auto out_idx = [&](int i, int a, int b) {
        if (axis == 0) return od.index(i, a, b);
        if (axis == 1) return od.index(a, i, b);
        return od.index(a, b, i);
    };
    const int na = axis == 0 ? d.ny : d.nx;
    const int nb = axis == 2 ? d.ny : d.nz;
    for (int b = 0; b < nb; ++b)
        for (int a = 0; a < na; ++a)
            for (int k = 0; k < half; ++k) {
                double e = in.data[in_idx(2 * k, a, b)];
                double o = in.data[in_idx(2 * k + 1, a, b)];
                low.data[out_idx(k, a, b)] = (e + o) * kInvSqrt2;
                high.data[out_idx(k, a, b)] = (e - o) * kInvSqrt2;
            }
}

// Synthesis along one axis: (low, high) -> double-length output.
inline Volume3D haar_synthesize_axis(const Volume3D& low, const Volume3D& high, int axis) {
    if (low.dims != high.dims)
        throw std::runtime_error("wavelet_reconstruct: mismatched band dims");
    GridDims od = low.dims;
    GridDims d = od;
    (axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz) *= 2;
    Volume3D out;
    out.dims = d;
    out.spacing = low.spacing;
    out.spacing[axis] *= 0.5;
    out.origin = low.origin;
    out.data.resize(d.size());
    const int half = axis == 0 ? od.nx : (axis == 1 ? od.ny : od.nz);
    auto in_idx = [&](int i, int a, int b) {
        if (axis == 0) return od.index(i, a, b);
        if (axis == 1) return od.index(a, i, b);
        return od.index(a, b, i);
    };
    auto out_idx = [&](int i, int a, int b) {
        if (axis == 0) return d.index(i, a, b);
        if (axis == 1) return d.index(a, i, b);
        return d.index(a, b, i);
    };
    const int na = axis == 0 ? od.ny : od.nx;
    const int nb = axis == 2 ? od.ny : od.nz;
    for (int b = 0; b < nb; ++b)
        for (int a = 0; a < na; ++a)
            for (int k = 0; k < half; ++k) {
                double l = low.data[in_idx(k, a, b)];
                double h = high.data[in_idx(k, a, b)];
                out.data[out_idx(2 * k, a, b)] = (l + h) * kInvSqrt2;
                out.data[out_idx(2 * k + 1, a, b)] = (l - h) * kInvSqrt2;
            }
    return out;
}

}  // namespace detail

inline WaveletBands wavelet_decompose(const Volume3D& vol) {
    vol.validate();
    WaveletBands wb;
    wb.original_dims = vol.dims;
    Volume3D padded = pad_to_even(vol);

    Volume3D lx, hx;
    detail::haar_analyze_axis(padded, 0, lx, hx);
    Volume3D ll, lh, hl, hh;
    detail::haar_analyze_axis(lx, 1, ll, lh);
    detail::haar_analyze_axis(hx, 1, hl, hh);
    detail::haar_analyze_axis(ll, 2, wb.bands[0], wb.bands[1]);  // LLL, LLH
    detail::haar_analyze_axis(lh, 2, wb.bands[2], wb.bands[3]);  // LHL, LHH
    detail::haar_analyze_axis(hl, 2, wb.bands[4], wb.bands[5]);  // HLL, HLH
    detail::haar_analyze_axis(hh, 2, wb.bands[6], wb.bands[7]);  // HHL, HHH
    return wb;
}

inline Volume3D wavelet_reconstruct(const WaveletBands& wb) {
    for (const auto& b : wb.bands)
        if (b.dims != wb.bands[0].dims)
            throw std::runtime_error("wavelet_reconstruct: mismatched band dims");
    Volume3D ll = detail::haar_synthesize_axis(wb.bands[0], wb.bands[1], 2);
    Volume3D lh = detail::haar_synthesize_axis(wb.bands[2], wb.bands[3], 2);
    Volume3D hl = detail::haar_synthesize_axis(wb.bands[4], wb.bands[5], 2);
    Volume3D hh = detail::haar_synthesize_axis(wb.bands[6], wb.bands[7], 2);
    Volume3D lx = detail::haar_synthesize_axis(ll, lh, 1);
    Volume3D hx = detail::haar_synthesize_axis(hl, hh, 1);
    Volume3D padded = detail::haar_synthesize_axis(lx, hx, 0);

    const GridDims od = wb.original_dims;
    if (od == padded.dims || od.size() == 0) return padded;
    Volume3D out;
    out.dims = od;
    out.spacing = padded.spacing;
    out.origin = padded.origin;
    out.data.resize(od.size());
    for (int z = 0; z < od.nz; ++z)
        for (int y = 0; y < od.ny; ++y)
            for (int x = 0; x < od.nx; ++x) out.at(x, y, z) = padded.at(x, y, z);
    return out;
}

}  // namespace radpipe
