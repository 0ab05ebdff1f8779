#ifndef MFG_RNG_HPP
#define MFG_RNG_HPP

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, step, salt), so parallel simulations are reproducible
// bit-for-bit regardless of scheduling.

#include <cmath>
#include <cstdint>

namespace mfg::rng {

inline constexpr const char* kGeneratorId = "splitmix64-counter";

/// SplitMix64 avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Keyed counter hash; distinct (stream, step, salt) tuples give
/// statistically independent words.
inline std::uint64_t counter_word(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t step, std::uint64_t salt) {
    std::uint64_t z = mix64(seed ^ 0x6a09e667f3bcc909ull);
    z = mix64(z ^ mix64(stream ^ 0xbb67ae8584caa73bull));
    z = mix64(z ^ mix64(step ^ 0x3c6ef372fe94f82bull));
    z = mix64(z ^ mix64(salt ^ 0xa54ff53a5f1d36f1ull));
    return z;
}

/// Uniform draw in (0,1]; never returns 0 so it is safe inside log().
inline double uniform01(std::uint64_t seed, std::uint64_t stream,
                        std::uint64_t step, std::uint64_t salt = 0) {
    const std::uint64_t w = counter_word(seed, stream, step, salt);
    return (static_cast<double>(w >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal by Box-Muller from two counter words.
inline double normal(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t step, std::uint64_t salt = 0) {
    const double u1 = uniform01(seed, stream, step, 2 * salt);
    const double u2 = uniform01(seed, stream, step, 2 * salt + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Derive a child seed for an independent substream.
inline std::uint64_t fold(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag ^ 0x510e527fade682d1ull));
}

} // namespace mfg::rng

#endif
