#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace mia {

/// FNV-1a, used both for seed-stream derivation and output digests.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Independent, reproducible RNG stream for a named purpose.
/// Every random decision in the harness goes through one of these;
/// wall-clock seeding is never used.
inline std::mt19937_64 seeded_rng(std::uint64_t master, std::string_view purpose) {
    std::uint64_t h = fnv1a(purpose);
    h ^= master + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return std::mt19937_64(h);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) {
    std::uint64_t h = fnv1a(purpose);
    return h ^ (master + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
}

} // namespace mia
