#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace lad {

// FNV-1a, used for config hashes and named RNG substreams. Not cryptographic;
// collisions only matter for cache invalidation and are astronomically unlikely
// at the handful of configs involved.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(std::string_view(static_cast<const char*>(data), n), h);
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace lad
