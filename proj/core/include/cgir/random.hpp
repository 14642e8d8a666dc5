#pragma once

#include <cstdint>
#include <random>

namespace cgir {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream tags so that the streams drawn from one user seed never coincide.
enum class Stream : std::uint64_t {
  kMask = 1,
  kInit = 2,
  kNoise = 3,
  kKMeans = 4,
  kGraph = 5,
  kAttributes = 6,
  kSampledBce = 7,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(mix_seed(seed, static_cast<std::uint64_t>(stream)));
}

}  // namespace cgir
