#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lad/core/errors.hpp"

namespace lad {

using i64 = std::int64_t;

// Dense row-major float tensor. Rank is dynamic; the networks use
// {C,D,H,W} for feature grids, {Co,Ci,k,k,k} for conv weights and {N} for
// vectors. Kept deliberately dumb: shape + flat storage.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
    }
    Tensor(std::vector<int> s, float fill) : Tensor(std::move(s)) {
        for (auto& x : v) x = fill;
    }

    static i64 numel_of(const std::vector<int>& s) {
        i64 n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
            n *= d;
        }
        return n;
    }

    i64 numel() const { return static_cast<i64>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    float* data() { return v.data(); }
    const float* data() const { return v.data(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(float x) {
        for (auto& e : v) e = x;
    }

    bool all_finite() const {
        for (float e : v)
            if (!std::isfinite(e)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace lad
