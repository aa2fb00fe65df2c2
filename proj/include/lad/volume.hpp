#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lad/core/errors.hpp"
#include "lad/core/tensor.hpp"

namespace lad {

// Dense 3D scalar grid, values in [0,1]. Dimension order is (D,H,W) with the
// depth (Z) axis outermost, so raw files are written slice by slice.
struct Volume {
    std::array<int, 3> shape{};          // D,H,W
    std::array<double, 3> spacing{1, 1, 1};  // mm per voxel, same axis order
    std::string id;
    std::vector<float> data;

    Volume() = default;
    Volume(int d, int h, int w) : shape{d, h, w} { data.assign(static_cast<size_t>(d) * h * w, 0.0f); }

    int d() const { return shape[0]; }
    int h() const { return shape[1]; }
    int w() const { return shape[2]; }
    size_t numel() const { return data.size(); }
    size_t index(int z, int y, int x) const {
        return (static_cast<size_t>(z) * shape[1] + y) * shape[2] + x;
    }
    float& at(int z, int y, int x) { return data[index(z, y, x)]; }
    float at(int z, int y, int x) const { return data[index(z, y, x)]; }

    void validate() const {
        for (int i = 0; i < 3; ++i) {
            if (shape[i] < 1) throw ShapeError("Volume: axis " + std::to_string(i) + " < 1");
            if (!(spacing[i] > 0.0)) throw ConfigError("Volume: spacing must be positive");
        }
        if (data.size() != static_cast<size_t>(shape[0]) * shape[1] * shape[2])
            throw ShapeError("Volume: data size does not match shape");
        for (float v : data)
            if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("Volume: voxel outside [0,1]");
    }
};

// Paired label grid over {0,1,2}: background / organ / tumor.
struct LabelMask {
    std::array<int, 3> shape{};
    std::vector<std::uint8_t> data;

    LabelMask() = default;
    LabelMask(int d, int h, int w) : shape{d, h, w} { data.assign(static_cast<size_t>(d) * h * w, 0); }

    int d() const { return shape[0]; }
    int h() const { return shape[1]; }
    int w() const { return shape[2]; }
    size_t index(int z, int y, int x) const {
        return (static_cast<size_t>(z) * shape[1] + y) * shape[2] + x;
    }
    std::uint8_t& at(int z, int y, int x) { return data[index(z, y, x)]; }
    std::uint8_t at(int z, int y, int x) const { return data[index(z, y, x)]; }

    void validate() const {
        for (int i = 0; i < 3; ++i)
            if (shape[i] < 1) throw ShapeError("LabelMask: axis " + std::to_string(i) + " < 1");
        if (data.size() != static_cast<size_t>(shape[0]) * shape[1] * shape[2])
            throw ShapeError("LabelMask: data size does not match shape");
        for (auto v : data)
            if (v > 2) throw ConfigError("LabelMask: label " + std::to_string(int(v)) + " outside {0,1,2}");
    }

    size_t count_label(std::uint8_t l) const {
        size_t n = 0;
        for (auto v : data) n += (v == l);
        return n;
    }
};

// Half-open per-axis voxel bounds, axis order (D,H,W).
struct BBox {
    std::array<int, 3> lo{};
    std::array<int, 3> hi{};

    int extent(int axis) const { return hi[axis] - lo[axis]; }
    i64 volume() const { return static_cast<i64>(extent(0)) * extent(1) * extent(2); }
    bool contains(int z, int y, int x) const {
        return z >= lo[0] && z < hi[0] && y >= lo[1] && y < hi[1] && x >= lo[2] && x < hi[2];
    }
    void validate_within(const std::array<int, 3>& shape) const {
        for (int a = 0; a < 3; ++a) {
            if (lo[a] < 0 || hi[a] > shape[a] || lo[a] >= hi[a])
                throw ShapeError("BBox: axis " + std::to_string(a) + " bounds [" + std::to_string(lo[a]) + "," +
                                 std::to_string(hi[a]) + ") invalid for extent " + std::to_string(shape[a]));
        }
    }
};

// {1,D,H,W} tensor view of a volume, the input layout of the conv nets.
inline Tensor to_tensor(const Volume& v) {
    Tensor t({1, v.d(), v.h(), v.w()});
    std::copy(v.data.begin(), v.data.end(), t.v.begin());
    return t;
}

inline Volume from_tensor(const Tensor& t, const std::array<double, 3>& spacing, std::string id = {}) {
    if (t.rank() != 4 || t.dim(0) != 1) throw ShapeError("from_tensor: expected {1,D,H,W}, got " + t.shape_str());
    Volume v(t.dim(1), t.dim(2), t.dim(3));
    v.spacing = spacing;
    v.id = std::move(id);
    std::copy(t.v.begin(), t.v.end(), v.data.begin());
    return v;
}

// Labels scaled into the codec's trained input range: {0,1,2} -> {0,0.5,1}.
inline Tensor mask_to_tensor(const LabelMask& m) {
    Tensor t({1, m.d(), m.h(), m.w()});
    for (size_t i = 0; i < m.data.size(); ++i) t.v[i] = static_cast<float>(m.data[i]) * 0.5f;
    return t;
}

}  // namespace lad
