#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "lad/core/rng.hpp"
#include "lad/volume.hpp"

// Deterministic abdomen-like phantoms: a soft-tissue body with a bright
// spine, an organ built as a chained union of overlapping ellipsoids
// (label 1) and optional tumor blobs carved inside it (label 2). Intensities
// are Hounsfield-like so the CT window/normalize step is exercised for real.

namespace lad::phantom {

struct RawVolume {
    std::array<int, 3> shape{};
    std::array<double, 3> spacing{1, 1, 1};
    std::vector<float> hu;

    size_t index(int z, int y, int x) const {
        return (static_cast<size_t>(z) * shape[1] + y) * shape[2] + x;
    }
};

struct IntensityRange {
    double lo = 0, hi = 0;
    bool contains_range(double a, double b) const { return lo >= a && hi <= b; }
};

struct PhantomSpec {
    std::array<int, 3> shape{32, 64, 64};        // D,H,W
    std::array<double, 3> spacing{2.3, 1.6, 1.6};
    double raw_lo = -1000.0, raw_hi = 1000.0;    // emitted HU range (before noise clamp)

    int organ_blobs_min = 2, organ_blobs_max = 4;
    int tumor_blobs_min = 1, tumor_blobs_max = 2;
    double tumor_probability = 0.6;
    double tumor_radius_min = 1.5, tumor_radius_max = 2.5;

    IntensityRange air{-1000.0, -950.0};
    IntensityRange body{-80.0, 60.0};
    IntensityRange spine{500.0, 900.0};
    IntensityRange organ{140.0, 260.0};
    IntensityRange tumor{-80.0, -10.0};

    double noise_amplitude = 30.0;  // HU, smooth value-noise; white noise is 0.2x this

    void validate() const {
        for (int a = 0; a < 3; ++a)
            if (shape[a] < 8)
                throw ConfigError("phantom: shape axis " + std::to_string(a) + " = " + std::to_string(shape[a]) +
                                  " < 8");
        if (!(raw_lo < raw_hi)) throw ConfigError("phantom: raw_lo must be < raw_hi");
        for (const auto* r : {&air, &body, &spine, &organ, &tumor})
            if (!r->contains_range(raw_lo, raw_hi)) throw ConfigError("phantom: intensity range outside raw range");
        if (organ_blobs_min < 1 || organ_blobs_max < organ_blobs_min) throw ConfigError("phantom: bad organ blob counts");
        if (tumor_probability < 0.0 || tumor_probability > 1.0) throw ConfigError("phantom: tumor_probability outside [0,1]");
        if (noise_amplitude < 0.0) throw ConfigError("phantom: negative noise amplitude");
        // the smallest organ ellipsoid must fit: semi-axes scale with H/W (see kOrganSemi*)
        if (shape[1] < 24 || shape[2] < 24)
            throw ConfigError("phantom: H/W too small to contain the smallest organ (need >= 24)");
    }
};

namespace detail {

struct Ellipsoid {
    double cz, cy, cx;
    double rz, ry, rx;
    bool contains(double z, double y, double x) const {
        const double a = (z - cz) / rz, b = (y - cy) / ry, c = (x - cx) / rx;
        return a * a + b * b + c * c <= 1.0;
    }
};

// Trilinearly interpolated random lattice, lattice pitch 8 voxels.
struct ValueNoise {
    int nd, nh, nw;
    std::vector<float> lattice;
    static constexpr int kPitch = 8;

    ValueNoise(const std::array<int, 3>& shape, Rng& rng) {
        nd = shape[0] / kPitch + 2;
        nh = shape[1] / kPitch + 2;
        nw = shape[2] / kPitch + 2;
        lattice.resize(static_cast<size_t>(nd) * nh * nw);
        for (auto& v : lattice) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    float lat(int z, int y, int x) const {
        return lattice[(static_cast<size_t>(z) * nh + y) * nw + x];
    }
    float sample(int z, int y, int x) const {
        const double fz = static_cast<double>(z) / kPitch, fy = static_cast<double>(y) / kPitch,
                     fx = static_cast<double>(x) / kPitch;
        const int z0 = static_cast<int>(fz), y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        const double tz = fz - z0, ty = fy - y0, tx = fx - x0;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dz ? tz : 1 - tz) * (dy ? ty : 1 - ty) * (dx ? tx : 1 - tx);
                    acc += w * lat(z0 + dz, y0 + dy, x0 + dx);
                }
        return static_cast<float>(acc);
    }
};

}  // namespace detail

// Organ ellipsoid semi-axis fractions of (D,H,W); also used by the spec check.
inline constexpr double kOrganSemiZ[2] = {0.10, 0.16};
inline constexpr double kOrganSemiYX[2] = {0.06, 0.11};

inline std::pair<RawVolume, LabelMask> generate_phantom(std::uint64_t seed, const PhantomSpec& spec) {
    spec.validate();
    Rng rng(substream_seed(seed ^ 0x1adull, "phantom"));
    const int D = spec.shape[0], H = spec.shape[1], W = spec.shape[2];

    RawVolume raw;
    raw.shape = spec.shape;
    raw.spacing = spec.spacing;
    raw.hu.assign(static_cast<size_t>(D) * H * W, static_cast<float>(spec.air.lo));
    LabelMask mask(D, H, W);

    const detail::Ellipsoid bodyE{D * 0.5, H * 0.52, W * 0.50, D * 0.75, H * 0.42, W * 0.45};
    const double spine_cy = H * 0.80, spine_cx = W * 0.50, spine_r = std::max(2.0, W * 0.05);

    // organ: chain of overlapping ellipsoids; each next center lies inside the
    // previous one (at <= 0.6 of its semi-axes), which forces a connected union
    const int n_org = spec.organ_blobs_min + rng.uniform_int(spec.organ_blobs_max - spec.organ_blobs_min + 1);
    std::vector<detail::Ellipsoid> organ;
    for (int i = 0; i < n_org; ++i) {
        detail::Ellipsoid e{};
        e.rz = rng.uniform(kOrganSemiZ[0], kOrganSemiZ[1]) * D;
        e.ry = rng.uniform(kOrganSemiYX[0], kOrganSemiYX[1]) * H;
        e.rx = rng.uniform(kOrganSemiYX[0], kOrganSemiYX[1]) * W;
        if (i == 0) {
            e.cz = rng.uniform(0.35, 0.65) * D;
            e.cy = rng.uniform(0.35, 0.60) * H;
            e.cx = rng.uniform(0.30, 0.70) * W;
        } else {
            const auto& p = organ.back();
            e.cz = p.cz + rng.uniform(-0.6, 0.6) * p.rz;
            e.cy = p.cy + rng.uniform(-0.6, 0.6) * p.ry;
            e.cx = p.cx + rng.uniform(-0.6, 0.6) * p.rx;
        }
        // keep the blob inside the grid so crops never truncate the organ
        e.cz = std::clamp(e.cz, e.rz + 1.0, D - e.rz - 1.0);
        e.cy = std::clamp(e.cy, e.ry + 1.0, H - e.ry - 1.0);
        e.cx = std::clamp(e.cx, e.rx + 1.0, W - e.rx - 1.0);
        organ.push_back(e);
    }

    auto organ_contains = [&](double z, double y, double x) {
        for (const auto& e : organ)
            if (e.contains(z, y, x)) return true;
        return false;
    };

    for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (organ_contains(z, y, x)) mask.at(z, y, x) = 1;

    // tumors: carved from organ voxels whose (r+1)-ball lies fully inside the
    // organ, so every label-2 voxel stays within the dilation of label-1 support
    struct Tumor {
        double cz, cy, cx, r;
    };
    std::vector<Tumor> tumors;
    if (spec.tumor_probability > 0.0 && rng.bernoulli(spec.tumor_probability)) {
        const int n_tum = spec.tumor_blobs_min + rng.uniform_int(spec.tumor_blobs_max - spec.tumor_blobs_min + 1);
        for (int i = 0; i < n_tum; ++i) {
            for (int attempt = 0; attempt < 64; ++attempt) {
                const auto& e = organ[static_cast<size_t>(rng.uniform_int(static_cast<int>(organ.size())))];
                const double cz = e.cz + rng.uniform(-0.4, 0.4) * e.rz;
                const double cy = e.cy + rng.uniform(-0.4, 0.4) * e.ry;
                const double cx = e.cx + rng.uniform(-0.4, 0.4) * e.rx;
                const double r = rng.uniform(spec.tumor_radius_min, spec.tumor_radius_max);
                bool ok = true;
                const int rr = static_cast<int>(std::ceil(r + 1.0));
                for (int dz = -rr; dz <= rr && ok; ++dz)
                    for (int dy = -rr; dy <= rr && ok; ++dy)
                        for (int dx = -rr; dx <= rr && ok; ++dx) {
                            if (dz * dz + dy * dy + dx * dx > (r + 1.0) * (r + 1.0)) continue;
                            const int z = static_cast<int>(std::lround(cz)) + dz;
                            const int y = static_cast<int>(std::lround(cy)) + dy;
                            const int x = static_cast<int>(std::lround(cx)) + dx;
                            if (z < 0 || z >= D || y < 0 || y >= H || x < 0 || x >= W || mask.at(z, y, x) != 1)
                                ok = false;
                        }
                if (ok) {
                    tumors.push_back({cz, cy, cx, r});
                    break;
                }
            }
        }
        for (const auto& t : tumors) {
            const int rr = static_cast<int>(std::ceil(t.r));
            const int bz = static_cast<int>(std::lround(t.cz)), by = static_cast<int>(std::lround(t.cy)),
                      bx = static_cast<int>(std::lround(t.cx));
            for (int dz = -rr; dz <= rr; ++dz)
                for (int dy = -rr; dy <= rr; ++dy)
                    for (int dx = -rr; dx <= rr; ++dx)
                        if (dz * dz + dy * dy + dx * dx <= t.r * t.r) mask.at(bz + dz, by + dy, bx + dx) = 2;
        }
    }

    detail::ValueNoise smooth(spec.shape, rng);
    auto mid = [](const IntensityRange& r) { return 0.5 * (r.lo + r.hi); };
    auto half = [](const IntensityRange& r) { return 0.5 * (r.hi - r.lo); };

    for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const std::uint8_t l = mask.at(z, y, x);
                double base;
                double texture = smooth.sample(z, y, x);  // in [-1,1]
                if (l == 2) {
                    base = mid(spec.tumor) + texture * 0.6 * half(spec.tumor);
                } else if (l == 1) {
                    base = mid(spec.organ) + texture * 0.6 * half(spec.organ);
                } else {
                    const double dy2 = (y - spine_cy) * (y - spine_cy), dx2 = (x - spine_cx) * (x - spine_cx);
                    if (dy2 + dx2 <= spine_r * spine_r) {
                        base = mid(spec.spine) + texture * 0.6 * half(spec.spine);
                    } else if (bodyE.contains(z, y, x)) {
                        base = mid(spec.body) + texture * 0.6 * half(spec.body);
                    } else {
                        base = mid(spec.air) + texture * 0.6 * half(spec.air);
                    }
                }
                base += texture * spec.noise_amplitude * 0.8;
                base += rng.uniform(-1.0, 1.0) * spec.noise_amplitude * 0.2;
                raw.hu[raw.index(z, y, x)] =
                    static_cast<float>(std::clamp(base, spec.raw_lo, spec.raw_hi));
            }

    return {std::move(raw), std::move(mask)};
}

// CT window then affine map to [0,1]: lo -> 0, hi -> 1, clamp outside.
inline Volume truncate_normalize(const RawVolume& raw, double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("truncate_normalize: lo must be < hi");
    Volume out(raw.shape[0], raw.shape[1], raw.shape[2]);
    out.spacing = raw.spacing;
    const double scale = hi - lo;
    for (size_t i = 0; i < raw.hu.size(); ++i) {
        const double v = std::clamp(static_cast<double>(raw.hu[i]), lo, hi);
        out.data[i] = static_cast<float>((v - lo) / scale);
    }
    return out;
}

inline float truncate_normalize_voxel(double v, double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("truncate_normalize: lo must be < hi");
    return static_cast<float>((std::clamp(v, lo, hi) - lo) / (hi - lo));
}

// Trilinear resample of the volume, nearest-neighbor for the mask; output
// shape = round(in_shape * in_spacing / target). Identical spacing is a
// bit-exact pass-through.
inline std::pair<Volume, LabelMask> resample(const Volume& vol, const LabelMask& mask,
                                             const std::array<double, 3>& target_spacing) {
    if (vol.shape != mask.shape) throw ShapeError("resample: volume/mask shapes differ");
    for (int a = 0; a < 3; ++a)
        if (!(target_spacing[a] > 0.0)) throw ConfigError("resample: target spacing must be positive");

    if (target_spacing == vol.spacing) return {vol, mask};

    std::array<int, 3> out_shape{};
    for (int a = 0; a < 3; ++a) {
        out_shape[a] = static_cast<int>(std::lround(vol.shape[a] * vol.spacing[a] / target_spacing[a]));
        if (out_shape[a] < 1)
            throw ShapeError("resample: output axis " + std::to_string(a) + " would be < 1 voxel");
    }

    Volume ov(out_shape[0], out_shape[1], out_shape[2]);
    ov.spacing = target_spacing;
    ov.id = vol.id;
    LabelMask om(out_shape[0], out_shape[1], out_shape[2]);

    const int D = vol.shape[0], H = vol.shape[1], W = vol.shape[2];
    for (int z = 0; z < out_shape[0]; ++z) {
        const double fz = std::min(static_cast<double>(D - 1), z * target_spacing[0] / vol.spacing[0]);
        const int z0 = static_cast<int>(fz), z1 = std::min(z0 + 1, D - 1);
        const double tz = fz - z0;
        for (int y = 0; y < out_shape[1]; ++y) {
            const double fy = std::min(static_cast<double>(H - 1), y * target_spacing[1] / vol.spacing[1]);
            const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, H - 1);
            const double ty = fy - y0;
            for (int x = 0; x < out_shape[2]; ++x) {
                const double fx = std::min(static_cast<double>(W - 1), x * target_spacing[2] / vol.spacing[2]);
                const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, W - 1);
                const double tx = fx - x0;
                const double v =
                    (1 - tz) * ((1 - ty) * ((1 - tx) * vol.at(z0, y0, x0) + tx * vol.at(z0, y0, x1)) +
                                ty * ((1 - tx) * vol.at(z0, y1, x0) + tx * vol.at(z0, y1, x1))) +
                    tz * ((1 - ty) * ((1 - tx) * vol.at(z1, y0, x0) + tx * vol.at(z1, y0, x1)) +
                          ty * ((1 - tx) * vol.at(z1, y1, x0) + tx * vol.at(z1, y1, x1)));
                ov.at(z, y, x) = static_cast<float>(v);
                om.at(z, y, x) = mask.at(static_cast<int>(std::lround(fz)), static_cast<int>(std::lround(fy)),
                                         static_cast<int>(std::lround(fx)));
            }
        }
    }
    return {std::move(ov), std::move(om)};
}

struct CropPair {
    Volume volume;
    LabelMask mask;
    int z_start = 0;
    bool has_organ = false;  // any label-1 voxel in the window
};

// Depth-axis windows [k*stride, k*stride+window); a final window shifted back
// to end exactly at D guarantees the last slices are covered.
inline std::vector<int> window_starts(int depth, int window_depth, int stride) {
    if (window_depth > depth)
        throw ShapeError("sliding_window_crop: window depth " + std::to_string(window_depth) + " > volume depth " +
                         std::to_string(depth));
    if (window_depth < 1 || stride < 1) throw ConfigError("sliding_window_crop: window and stride must be >= 1");
    std::vector<int> starts;
    int covered_end = 0;
    for (int s = 0; s + window_depth <= depth; s += stride) {
        starts.push_back(s);
        covered_end = s + window_depth;
    }
    if (covered_end < depth) starts.push_back(depth - window_depth);
    return starts;
}

inline std::vector<CropPair> sliding_window_crop(const Volume& vol, const LabelMask& mask, int window_depth,
                                                 int stride) {
    if (vol.shape != mask.shape) throw ShapeError("sliding_window_crop: volume/mask shapes differ");
    std::vector<CropPair> out;
    for (int s : window_starts(vol.shape[0], window_depth, stride)) {
        CropPair cp;
        cp.z_start = s;
        cp.volume = Volume(window_depth, vol.shape[1], vol.shape[2]);
        cp.volume.spacing = vol.spacing;
        cp.volume.id = vol.id + "+z" + std::to_string(s);
        cp.mask = LabelMask(window_depth, vol.shape[1], vol.shape[2]);
        const size_t slice = static_cast<size_t>(vol.shape[1]) * vol.shape[2];
        std::copy_n(vol.data.begin() + static_cast<std::ptrdiff_t>(s * slice), window_depth * slice,
                    cp.volume.data.begin());
        std::copy_n(mask.data.begin() + static_cast<std::ptrdiff_t>(s * slice), window_depth * slice,
                    cp.mask.data.begin());
        cp.has_organ = cp.mask.count_label(1) > 0;
        out.push_back(std::move(cp));
    }
    return out;
}

}  // namespace lad::phantom
