#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace shipfreq {

/// splitmix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (const char ch : name) {
        h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
    }
    return h;
}

/// Seed for the named substream `name` at counter `key` under a master seed.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t key = 0) {
    return mix64(mix64(seed ^ hash_name(name)) + mix64(key));
}

/// Engine for one substream. All randomness in the project flows through
/// these so that results depend only on (seed, stream name, key).
inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name, std::uint64_t key = 0) {
    return std::mt19937_64(stream_seed(seed, name, key));
}

/// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

}  // namespace shipfreq
