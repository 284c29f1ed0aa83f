#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include "cdqn/util.hpp"

namespace cdqn {

/// Deterministic random stream. Wraps mt19937_64 but draws uniforms with
/// explicit bit manipulation, so results do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  /// Independent substream: same (seed, stream) always yields the same Rng.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(splitmix64(seed) ^ splitmix64(stream_id * 0x9e3779b97f4a7c15ull + 1));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased via rejection.
  int uniform_int(int n) {
    const auto range = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / range * range;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return static_cast<int>(r % range);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace cdqn
