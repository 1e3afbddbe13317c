#pragma once

#include <cstdint>
#include <random>

namespace samlab {

/// Purpose tags for independent random streams. Every consumer of randomness
/// derives its engine from (seed, tag, index), so enabling one consumer never
/// shifts the draws seen by another.
enum class Stream : std::uint64_t {
  batch = 1,
  diagnostics = 2,
  sharpness = 3,
  monte_carlo = 4,
  probe = 5,
  data = 6,
  init = 7,
};

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream tag,
                                    std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  return splitmix64(h ^ splitmix64(index));
}

inline Rng make_rng(std::uint64_t seed, Stream tag, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

}  // namespace samlab
