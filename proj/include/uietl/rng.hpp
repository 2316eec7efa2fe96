#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace uietl {

// SplitMix64 finalizer. All randomness in a run flows from one root seed;
// sub-seeds are derived as split_seed(root, stream) so that any stage can be
// replayed without consuming a shared generator.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t split_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  return mix64(mix64(root) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t split_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) noexcept {
  return split_seed(split_seed(root, a), b);
}

// Named streams used by the trainers and initializers.
enum class Stream : std::uint64_t {
  kInit = 1,
  kEpochOrder = 2,
  kAugment = 3,
  kPatch = 4,
  kNoise = 5,
  kExtractor = 6,
};

constexpr std::uint64_t split_seed(std::uint64_t root, Stream s) noexcept {
  return split_seed(root, static_cast<std::uint64_t>(s));
}

using Rng = std::mt19937_64;

// Uniform integer in [0, n) without relying on std::uniform_int_distribution,
// whose output differs across standard library implementations.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

// Uniform real in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Box-Muller; one draw per call keeps the stream position easy to reason about.
inline double normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace uietl
