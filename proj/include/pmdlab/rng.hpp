#pragma once

// Deterministic random streams. Every stream is a std::mt19937_64 seeded
// through std::seed_seq from (master seed, stream key, tag); both algorithms
// are fully specified by the C++ standard, so streams are portable and do not
// depend on thread scheduling.

#include <bit>
#include <cstdint>
#include <random>

namespace pmdlab {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Child seed of `seed` for sub-stream `key`.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  return splitmix64(seed ^ splitmix64(key));
}

inline std::uint64_t derive_seed(std::uint64_t seed, double key) {
  return derive_seed(seed, std::bit_cast<std::uint64_t>(key));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(tag), hi(tag)};
  return Rng(seq);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace pmdlab
