#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace litho {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic, platform-independent seed derivation for named rng
/// streams and per-run seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    return splitmix64(splitmix64(seed) ^ salt);
}

/// Uniform double in [0,1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double unit_real(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * unit_real(rng);
}

/// One standard normal draw via Box-Muller (uncached).
inline double gaussian(std::mt19937_64& rng) {
    double u1 = unit_real(rng);
    while (u1 <= 0.0) u1 = unit_real(rng);
    const double u2 = unit_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace litho
