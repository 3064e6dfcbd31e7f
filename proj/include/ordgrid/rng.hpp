#pragma once

#include <cstdint>
#include <random>

namespace ordgrid {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream purposes, so that e.g. augmentation and dropout draws for the same
// (epoch, index) never share a stream.
enum class Stream : std::uint64_t {
  init = 1,
  augment = 2,
  dropout = 3,
  shuffle = 4,
  synth = 5,
  folds = 6,
  probe = 7,
};

/// Independent generator for a (seed, a, b) triple.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return Rng(mix64(mix64(mix64(seed) ^ a) ^ b));
}

inline Rng derive_stream(std::uint64_t seed, Stream purpose, std::uint64_t a, std::uint64_t b) {
  return derive_stream(mix64(seed ^ (static_cast<std::uint64_t>(purpose) << 56)), a, b);
}

}  // namespace ordgrid
