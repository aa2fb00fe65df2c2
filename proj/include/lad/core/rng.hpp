#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "lad/core/hash.hpp"

namespace lad {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace detail

// xoshiro256++ seeded via splitmix64. The full generator state is four words,
// so checkpoints can serialize it and resume runs bit-exactly. normal() draws
// two fresh uniforms per call (no cached spare) to keep the state the whole story.
struct Rng {
    std::array<std::uint64_t, 4> s{};

    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s) w = detail::splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = detail::rotl(s[3], 45);
        return result;
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal, Box-Muller; consumes exactly two uniforms per call
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }
    float normalf() { return static_cast<float>(normal()); }

    std::array<std::uint64_t, 4> state() const { return s; }
    void set_state(const std::array<std::uint64_t, 4>& st) { s = st; }
};

// Every stage derives its generator from the one root seed through a named
// substream, so stages are reproducible in isolation.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name) {
    std::uint64_t x = root ^ fnv1a64(name);
    return detail::splitmix64(x);
}

inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
    std::uint64_t x = substream_seed(root, name) ^ (0x9e3779b97f4a7c15ull * (index + 1));
    return detail::splitmix64(x);
}

inline Rng substream(std::uint64_t root, std::string_view name) { return Rng(substream_seed(root, name)); }
inline Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index) {
    return Rng(substream_seed(root, name, index));
}

}  // namespace lad
