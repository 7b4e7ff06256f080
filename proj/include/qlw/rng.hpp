#pragma once

#include <cmath>
#include <cstdint>

namespace qlw {

// Counter-based splittable generator: a SplitMix64 walk keyed per (seed,
// stream). Stream k is statistically independent of stream j != k, so a
// shot-parallel sampler hands one stream to each shot and still replays
// bit-identical results from (seed, shot index) alone.
class SplitRng {
 public:
  explicit SplitRng(uint64_t seed, uint64_t stream = 0) noexcept
      : state_(mix(seed ^ mix(stream ^ kStreamSalt))) {}

  uint64_t next_u64() noexcept {
    state_ += kGamma;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  bool coin() noexcept { return (next_u64() >> 63) != 0; }

  // Uniform in [0, n); n must be nonzero.
  uint64_t uniform_int(uint64_t n) noexcept {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller (used for parameter init).
  double normal() noexcept {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr uint64_t kStreamSalt = 0x85EBCA6B97F4A7C1ULL;

  static uint64_t mix(uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  uint64_t state_;
};

}  // namespace qlw
