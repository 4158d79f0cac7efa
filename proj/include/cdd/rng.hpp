#pragma once

#include <cstdint>
#include <limits>

namespace cdd {

/// SplitMix64 output function.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based stream: the state is a pure function of (seed, stream, shot),
/// so shots can be evaluated in any order or on any thread with identical draws.
/// Satisfies UniformRandomBitGenerator.
class ShotRng {
 public:
  using result_type = std::uint64_t;

  ShotRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t shot)
      : state_(splitmix64_mix(splitmix64_mix(splitmix64_mix(seed) ^ (stream + kGolden)) ^
                              (shot + 2 * kGolden))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64_mix(state_ += kGolden); }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t state_;
};

}  // namespace cdd
