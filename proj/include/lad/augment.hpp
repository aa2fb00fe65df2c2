#pragma once

#include <cmath>
#include <vector>

#include "lad/core/rng.hpp"
#include "lad/volume.hpp"

// Locality condition augmentation: label-preserving spatial transforms that
// expand the maskset into an abundant condition source. Everything resamples
// with nearest neighbor, so the label alphabet {0,1,2} survives exactly, and
// every output is a pure function of (inputs, params, seed).

namespace lad::augment {

struct AugmentParams {
    bool flip_h = true, flip_w = true, flip_d = false;  // anatomical D-flips disabled by default
    double rotate_deg = 15.0;
    double scale_lo = 0.9, scale_hi = 1.1;
    double translate_vox = 8.0;
    double elastic_amplitude = 4.0;  // peak displacement in voxels
    double elastic_sigma = 8.0;      // Gaussian smoothing width of the field
    std::uint64_t seed = 0;

    void validate() const {
        if (scale_lo > scale_hi || scale_lo <= 0.0) throw ConfigError("augment: bad scale range");
        if (rotate_deg < 0.0 || translate_vox < 0.0) throw ConfigError("augment: negative range");
        if (elastic_amplitude < 0.0 || elastic_sigma <= 0.0) throw ConfigError("augment: bad elastic params");
    }
};

enum class Axis { D = 0, H = 1, W = 2 };

inline LabelMask flip(const LabelMask& m, Axis axis) {
    LabelMask out(m.d(), m.h(), m.w());
    for (int z = 0; z < m.d(); ++z)
        for (int y = 0; y < m.h(); ++y)
            for (int x = 0; x < m.w(); ++x) {
                const int sz = axis == Axis::D ? m.d() - 1 - z : z;
                const int sy = axis == Axis::H ? m.h() - 1 - y : y;
                const int sx = axis == Axis::W ? m.w() - 1 - x : x;
                out.at(z, y, x) = m.at(sz, sy, sx);
            }
    return out;
}

// In-plane rotation/scale/translation, one transform shared by all slices,
// sampled deterministically from the seed. Out-of-bounds source -> label 0.
inline LabelMask random_affine(const LabelMask& m, const AugmentParams& params, std::uint64_t seed) {
    params.validate();
    Rng rng(substream_seed(seed, "affine"));
    const double theta = rng.uniform(-params.rotate_deg, params.rotate_deg) * M_PI / 180.0;
    const double scale = rng.uniform(params.scale_lo, params.scale_hi);
    const double ty = rng.uniform(-params.translate_vox, params.translate_vox);
    const double tx = rng.uniform(-params.translate_vox, params.translate_vox);

    // inverse map: rotate by -theta, scale by 1/scale about the slice center
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    const double cy = (m.h() - 1) * 0.5, cx = (m.w() - 1) * 0.5;
    LabelMask out(m.d(), m.h(), m.w());
    for (int y = 0; y < m.h(); ++y)
        for (int x = 0; x < m.w(); ++x) {
            const double dy = y - cy - ty, dx = x - cx - tx;
            const double sy = (cos_t * dy + sin_t * dx) / scale + cy;
            const double sx = (-sin_t * dy + cos_t * dx) / scale + cx;
            const int iy = static_cast<int>(std::lround(sy));
            const int ix = static_cast<int>(std::lround(sx));
            if (iy < 0 || iy >= m.h() || ix < 0 || ix >= m.w()) continue;
            for (int z = 0; z < m.d(); ++z) out.at(z, y, x) = m.at(z, iy, ix);
        }
    return out;
}

namespace detail {

// separable Gaussian blur of one (H,W) field, truncated at 3 sigma
inline void gaussian_blur_2d(std::vector<double>& field, int h, int w, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kernel[static_cast<size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= ksum;

    std::vector<double> tmp(field.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * field[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(yy) * w + x];
            }
            field[static_cast<size_t>(y) * w + x] = acc;
        }
}

}  // namespace detail

// Per-slice random displacement fields, Gaussian-smoothed and peak-normalized
// to the configured amplitude, applied by nearest-neighbor lookup.
inline LabelMask elastic_deform(const LabelMask& m, const AugmentParams& params, std::uint64_t seed) {
    params.validate();
    if (params.elastic_amplitude == 0.0) return m;
    Rng rng(substream_seed(seed, "elastic"));
    LabelMask out(m.d(), m.h(), m.w());
    const int h = m.h(), w = m.w();
    std::vector<double> fy(static_cast<size_t>(h) * w), fx(static_cast<size_t>(h) * w);
    for (int z = 0; z < m.d(); ++z) {
        for (auto& v : fy) v = rng.uniform(-1.0, 1.0);
        for (auto& v : fx) v = rng.uniform(-1.0, 1.0);
        detail::gaussian_blur_2d(fy, h, w, params.elastic_sigma);
        detail::gaussian_blur_2d(fx, h, w, params.elastic_sigma);
        double peak = 0.0;
        for (size_t i = 0; i < fy.size(); ++i) peak = std::max({peak, std::fabs(fy[i]), std::fabs(fx[i])});
        const double gain = peak > 0.0 ? params.elastic_amplitude / peak : 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t fi = static_cast<size_t>(y) * w + x;
                const int sy = static_cast<int>(std::lround(y + fy[fi] * gain));
                const int sx = static_cast<int>(std::lround(x + fx[fi] * gain));
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                out.at(z, y, x) = m.at(z, sy, sx);
            }
    }
    return out;
}

// Composition pipeline (flip? -> affine -> elastic) with per-output seeds
// derived from (params.seed, output index).
inline LabelMask augment_one(const LabelMask& src, const AugmentParams& params, std::uint64_t out_seed) {
    Rng rng(substream_seed(out_seed, "flips"));
    LabelMask m = src;
    if (params.flip_d && rng.bernoulli(0.5)) m = flip(m, Axis::D);
    if (params.flip_h && rng.bernoulli(0.5)) m = flip(m, Axis::H);
    if (params.flip_w && rng.bernoulli(0.5)) m = flip(m, Axis::W);
    m = random_affine(m, params, substream_seed(out_seed, "affine-draw"));
    m = elastic_deform(m, params, substream_seed(out_seed, "elastic-draw"));
    return m;
}

inline std::vector<LabelMask> augment_maskset(const std::vector<LabelMask>& masks, int n_out,
                                              const AugmentParams& params) {
    if (masks.empty()) throw ConfigError("augment_maskset: empty input maskset");
    if (n_out < 1) throw ConfigError("augment_maskset: n_out must be >= 1");
    params.validate();
    std::vector<LabelMask> out;
    out.reserve(static_cast<size_t>(n_out));
    for (int i = 0; i < n_out; ++i) {
        const std::uint64_t out_seed = substream_seed(params.seed, "augment", static_cast<std::uint64_t>(i));
        Rng pick(substream_seed(out_seed, "source"));
        const auto& src = masks[static_cast<size_t>(pick.uniform_int(static_cast<int>(masks.size())))];
        out.push_back(augment_one(src, params, out_seed));
    }
    return out;
}

}  // namespace lad::augment
