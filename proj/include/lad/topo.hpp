#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "lad/volume.hpp"

// Structure Extractor internals. Per mask slice and per label we binarize and
// compute (β0, β1) of the digital image under the standard dual pairing:
// foreground 8-connected, background 4-connected. β1 counts only enclosed
// holes; background regions touching the slice border are not loops.
// euler_characteristic builds the matching cubical complex (pixels as
// vertices, 4/8-adjacency edges, triangles and split squares as faces) by an
// independent route so β0 − β1 = χ is testable as an identity.

namespace lad::topo {

struct BinarySlice {
    int h = 0, w = 0;
    std::vector<char> fg;

    BinarySlice() = default;
    BinarySlice(int h_, int w_) : h(h_), w(w_), fg(static_cast<size_t>(h_) * w_, 0) {}
    char at(int y, int x) const { return fg[static_cast<size_t>(y) * w + x]; }
    char& at(int y, int x) { return fg[static_cast<size_t>(y) * w + x]; }
    bool in(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
};

// Union-find with path compression and union by rank.
struct UnionFind {
    std::vector<int> parent, rank_;

    explicit UnionFind(int n) : parent(static_cast<size_t>(n)), rank_(static_cast<size_t>(n), 0) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[static_cast<size_t>(a)] < rank_[static_cast<size_t>(b)]) std::swap(a, b);
        parent[static_cast<size_t>(b)] = a;
        if (rank_[static_cast<size_t>(a)] == rank_[static_cast<size_t>(b)]) ++rank_[static_cast<size_t>(a)];
        return true;
    }
};

// number of 8-connected foreground components
inline int count_components_fg8(const BinarySlice& s) {
    UnionFind uf(s.h * s.w);
    int count = 0;
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            if (!s.at(y, x)) continue;
            ++count;
            const int id = y * s.w + x;
            // raster scan: link to already-visited 8-neighbors (up-left, up, up-right, left)
            const int dy[4] = {-1, -1, -1, 0};
            const int dx[4] = {-1, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const int ny = y + dy[k], nx = x + dx[k];
                if (s.in(ny, nx) && s.at(ny, nx) && uf.unite(id, ny * s.w + nx)) --count;
            }
        }
    return count;
}

// number of 4-connected background components that do not touch the border
inline int count_enclosed_bg4(const BinarySlice& s) {
    UnionFind uf(s.h * s.w);
    int count = 0;
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            if (s.at(y, x)) continue;
            ++count;
            const int id = y * s.w + x;
            if (s.in(y - 1, x) && !s.at(y - 1, x) && uf.unite(id, (y - 1) * s.w + x)) --count;
            if (s.in(y, x - 1) && !s.at(y, x - 1) && uf.unite(id, y * s.w + x - 1)) --count;
        }
    // subtract components touching the border
    std::vector<char> border_root(static_cast<size_t>(s.h) * s.w, 0);
    int touching = 0;
    auto mark = [&](int y, int x) {
        if (s.at(y, x)) return;
        const int r = uf.find(y * s.w + x);
        if (!border_root[static_cast<size_t>(r)]) {
            border_root[static_cast<size_t>(r)] = 1;
            ++touching;
        }
    };
    for (int x = 0; x < s.w; ++x) {
        mark(0, x);
        mark(s.h - 1, x);
    }
    for (int y = 0; y < s.h; ++y) {
        mark(y, 0);
        mark(y, s.w - 1);
    }
    return count - touching;
}

inline std::pair<int, int> betti_2d(const BinarySlice& s) {
    return {count_components_fg8(s), count_enclosed_bg4(s)};
}

// χ = V − E + F of the 8-connectivity cubical complex, counted cell by cell:
//   V: foreground pixels
//   E: horizontal + vertical adjacent pairs, plus one diagonal per 2x2 block
//      (the present diagonal for a 2- or 3-pixel block, main diagonal only for
//      a full block)
//   F: one triangle per 3-pixel block, two per full block
// Computed without union-find so it is independent of betti_2d.
inline int euler_characteristic(const BinarySlice& s) {
    long v = 0, e = 0, f = 0;
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            if (!s.at(y, x)) continue;
            ++v;
            if (s.in(y, x + 1) && s.at(y, x + 1)) ++e;
            if (s.in(y + 1, x) && s.at(y + 1, x)) ++e;
        }
    for (int y = 0; y + 1 < s.h; ++y)
        for (int x = 0; x + 1 < s.w; ++x) {
            const int a = s.at(y, x) != 0;       // top-left
            const int b = s.at(y, x + 1) != 0;   // top-right
            const int c = s.at(y + 1, x) != 0;   // bottom-left
            const int d = s.at(y + 1, x + 1) != 0;  // bottom-right
            const int n = a + b + c + d;
            if (n == 4) {
                e += 1;  // main diagonal by convention
                f += 2;
            } else if (n == 3) {
                e += 1;  // the diagonal whose both endpoints are present
                f += 1;
            } else if (n == 2 && ((a && d) || (b && c))) {
                e += 1;  // lone diagonal pair
            }
        }
    return static_cast<int>(v - e + f);
}

// ------------------------------------------------------- structure vectors

// (β0,l=0, β1,l=0, β0,l=1, β1,l=1, β0,l=2, β1,l=2)
using SliceTopoVector = std::array<int, 6>;

inline BinarySlice binarize_slice(const LabelMask& mask, int z, std::uint8_t label) {
    BinarySlice s(mask.h(), mask.w());
    for (int y = 0; y < mask.h(); ++y)
        for (int x = 0; x < mask.w(); ++x) s.at(y, x) = mask.at(z, y, x) == label;
    return s;
}

// Betti pairs of the three per-label indicator images of one mask slice.
// `slice` is row-major (H,W) with values in {0,1,2}.
inline SliceTopoVector structure_vector_slice(const std::vector<std::uint8_t>& slice, int h, int w) {
    if (static_cast<size_t>(h) * w != slice.size()) throw ShapeError("structure_vector_slice: size mismatch");
    for (auto v : slice)
        if (v > 2) throw ConfigError("structure_vector_slice: label " + std::to_string(int(v)) + " outside {0,1,2}");
    SliceTopoVector out{};
    for (std::uint8_t l = 0; l <= 2; ++l) {
        BinarySlice s(h, w);
        for (size_t i = 0; i < slice.size(); ++i) s.fg[i] = slice[i] == l;
        auto [b0, b1] = betti_2d(s);
        out[static_cast<size_t>(2 * l)] = b0;
        out[static_cast<size_t>(2 * l + 1)] = b1;
    }
    return out;
}

inline SliceTopoVector structure_vector_slice(const LabelMask& mask, int z) {
    std::vector<std::uint8_t> slice(static_cast<size_t>(mask.h()) * mask.w());
    for (int y = 0; y < mask.h(); ++y)
        for (int x = 0; x < mask.w(); ++x) slice[static_cast<size_t>(y) * mask.w() + x] = mask.at(z, y, x);
    return structure_vector_slice(slice, mask.h(), mask.w());
}

// Concatenation over slices in increasing z; length 6*D.
inline std::vector<int> structure_vector_volume(const LabelMask& mask) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(6) * mask.d());
    for (int z = 0; z < mask.d(); ++z) {
        const auto sv = structure_vector_slice(mask, z);
        out.insert(out.end(), sv.begin(), sv.end());
    }
    return out;
}

}  // namespace lad::topo
