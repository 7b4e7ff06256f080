#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace qlw {

// Fixed-length bit vector packed LSB-first into 64-bit words.
struct BitVec {
  size_t n = 0;
  std::vector<uint64_t> w;

  BitVec() = default;
  explicit BitVec(size_t bits) : n(bits), w((bits + 63) / 64, 0) {}

  bool get(size_t i) const { return (w[i >> 6] >> (i & 63)) & 1; }

  void set(size_t i, bool v) {
    uint64_t m = uint64_t{1} << (i & 63);
    if (v)
      w[i >> 6] |= m;
    else
      w[i >> 6] &= ~m;
  }

  void flip(size_t i) { w[i >> 6] ^= uint64_t{1} << (i & 63); }

  void clear() { std::fill(w.begin(), w.end(), uint64_t{0}); }

  size_t popcount() const {
    size_t c = 0;
    for (uint64_t x : w) c += static_cast<size_t>(std::popcount(x));
    return c;
  }

  bool any() const {
    for (uint64_t x : w)
      if (x) return true;
    return false;
  }

  BitVec& operator^=(const BitVec& o) {
    for (size_t i = 0; i < w.size(); ++i) w[i] ^= o.w[i];
    return *this;
  }

  // Parity of the AND with another vector of the same length.
  bool parity_and(const BitVec& o) const {
    uint64_t acc = 0;
    for (size_t i = 0; i < w.size(); ++i) acc ^= w[i] & o.w[i];
    return std::popcount(acc) & 1;
  }

  bool operator==(const BitVec&) const = default;
};

}  // namespace qlw
