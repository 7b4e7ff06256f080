#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlw {

// Distinct failure modes shared by the binary formats.
struct FormatError : std::runtime_error {
  enum class Kind { BadMagic, BadVersion, Truncated };
  Kind kind;
  FormatError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct ByteWriter {
  std::vector<uint8_t> out;

  void u8(uint8_t v) { out.push_back(v); }
  void u16(uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u16(static_cast<uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
};

struct ByteReader {
  const std::vector<uint8_t>& in;
  size_t pos = 0;

  void need(size_t bytes, const char* what) {
    if (pos + bytes > in.size())
      throw FormatError(FormatError::Kind::Truncated,
                        std::string("truncated stream while reading ") + what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return in[pos++];
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint16_t>(in[pos] | (in[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) {
    uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(const char* what) {
    uint16_t len = u16(what);
    need(len, what);
    std::string s(in.begin() + pos, in.begin() + pos + len);
    pos += len;
    return s;
  }
};

}  // namespace qlw
