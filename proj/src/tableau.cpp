#include "qlw/tableau.hpp"

#include <bit>
#include <cassert>
#include <stdexcept>

namespace qlw {

PauliString PauliString::single(size_t n, size_t q, char p) {
  PauliString out(n);
  if (p == 'X' || p == 'Y') out.x.set(q, true);
  if (p == 'Z' || p == 'Y') out.z.set(q, true);
  return out;
}

std::string PauliString::str() const {
  std::string s = phase < 0 ? "-" : "+";
  for (size_t q = 0; q < num_qubits(); ++q) {
    bool xb = x.get(q), zb = z.get(q);
    s += xb ? (zb ? 'Y' : 'X') : (zb ? 'Z' : 'I');
  }
  return s;
}

Tableau::Tableau(size_t n) : n_(n), words_((n + 63) / 64) {
  if (n == 0) throw std::invalid_argument("tableau needs at least one qubit");
  xs_.assign((2 * n_ + 1) * words_, 0);
  zs_.assign((2 * n_ + 1) * words_, 0);
  sign_.assign(2 * n_ + 1, 0);
  for (size_t i = 0; i < n_; ++i) {
    xrow(i)[i >> 6] |= uint64_t{1} << (i & 63);           // destabilizer X_i
    zrow(n_ + i)[i >> 6] |= uint64_t{1} << (i & 63);      // stabilizer Z_i
  }
}

void Tableau::check_targets(size_t a, size_t b) const {
  if (a >= n_ || (b != kNoTarget && b >= n_))
    throw std::invalid_argument("gate target out of range");
  if (b != kNoTarget && a == b)
    throw std::invalid_argument("two-qubit gate targets must be distinct");
}

void Tableau::apply_h(size_t q) {
  check_targets(q, kNoTarget);
  const size_t word = q >> 6;
  const uint64_t mask = uint64_t{1} << (q & 63);
  for (size_t r = 0; r < 2 * n_; ++r) {
    uint64_t& xw = xrow(r)[word];
    uint64_t& zw = zrow(r)[word];
    sign_[r] ^= ((xw & zw & mask) != 0);
    uint64_t xb = xw & mask, zb = zw & mask;
    xw = (xw & ~mask) | zb;
    zw = (zw & ~mask) | xb;
  }
}

void Tableau::apply_s(size_t q) {
  check_targets(q, kNoTarget);
  const size_t word = q >> 6;
  const uint64_t mask = uint64_t{1} << (q & 63);
  for (size_t r = 0; r < 2 * n_; ++r) {
    uint64_t xw = xrow(r)[word];
    uint64_t& zw = zrow(r)[word];
    sign_[r] ^= ((xw & zw & mask) != 0);
    zw ^= xw & mask;
  }
}

void Tableau::apply_x(size_t q) {
  check_targets(q, kNoTarget);
  const size_t word = q >> 6;
  const uint64_t mask = uint64_t{1} << (q & 63);
  for (size_t r = 0; r < 2 * n_; ++r) sign_[r] ^= ((zrow(r)[word] & mask) != 0);
}

void Tableau::apply_z(size_t q) {
  check_targets(q, kNoTarget);
  const size_t word = q >> 6;
  const uint64_t mask = uint64_t{1} << (q & 63);
  for (size_t r = 0; r < 2 * n_; ++r) sign_[r] ^= ((xrow(r)[word] & mask) != 0);
}

void Tableau::apply_y(size_t q) {
  check_targets(q, kNoTarget);
  const size_t word = q >> 6;
  const uint64_t mask = uint64_t{1} << (q & 63);
  for (size_t r = 0; r < 2 * n_; ++r)
    sign_[r] ^= (((xrow(r)[word] ^ zrow(r)[word]) & mask) != 0);
}

void Tableau::apply_cx(size_t control, size_t target) {
  check_targets(control, target);
  const size_t cw = control >> 6, tw = target >> 6;
  const uint64_t cm = uint64_t{1} << (control & 63), tm = uint64_t{1} << (target & 63);
  for (size_t r = 0; r < 2 * n_; ++r) {
    uint64_t* xr = xrow(r);
    uint64_t* zr = zrow(r);
    bool xc = xr[cw] & cm, zc = zr[cw] & cm;
    bool xt = xr[tw] & tm, zt = zr[tw] & tm;
    sign_[r] ^= (xc && zt && (xt == zc));
    if (xc) xr[tw] ^= tm;
    if (zt) zr[cw] ^= cm;
  }
}

void Tableau::apply_gate(Gate g, size_t a, size_t b) {
  switch (g) {
    case Gate::H: apply_h(a); return;
    case Gate::S: apply_s(a); return;
    case Gate::X: apply_x(a); return;
    case Gate::Y: apply_y(a); return;
    case Gate::Z: apply_z(a); return;
    case Gate::CX: apply_cx(a, b); return;
  }
  throw std::invalid_argument("unknown gate");
}

// Row h := row i * row h with exact phase tracking. The per-qubit phase
// contribution g is +-1 or 0 depending on the Pauli pair; the total i
// exponent must come out 0 or 2 (the product of two commuting Hermitian
// Paulis is Hermitian).
void Tableau::rowsum(size_t h, size_t i) {
  const uint64_t* x1 = xrow(i);
  const uint64_t* z1 = zrow(i);
  uint64_t* x2 = xrow(h);
  uint64_t* z2 = zrow(h);
  long pos = 0, neg = 0;
  for (size_t w = 0; w < words_; ++w) {
    uint64_t a = x1[w], b = z1[w], c = x2[w], d = z2[w];
    uint64_t p = (a & b & d & ~c) | (a & ~b & c & d) | (~a & b & c & ~d);
    uint64_t m = (a & b & c & ~d) | (a & ~b & d & ~c) | (~a & b & c & d);
    pos += std::popcount(p);
    neg += std::popcount(m);
    x2[w] ^= a;
    z2[w] ^= b;
  }
  long total = 2 * (sign_[h] + sign_[i]) + pos - neg;
  total = ((total % 4) + 4) % 4;
  // Stabilizer and scratch targets multiply commuting rows, so the phase is
  // real; destabilizer targets may come out odd but their signs are never
  // read.
  assert(h < n_ || total % 2 == 0);
  sign_[h] = static_cast<uint8_t>((total >> 1) & 1);
}

bool Tableau::row_anticommutes(size_t r, const PauliString& p) const {
  const uint64_t* xr = xrow(r);
  const uint64_t* zr = zrow(r);
  uint64_t acc = 0;
  for (size_t w = 0; w < words_; ++w) acc ^= (xr[w] & p.z.w[w]) ^ (zr[w] & p.x.w[w]);
  return std::popcount(acc) & 1;
}

void Tableau::row_set_pauli(size_t r, const PauliString& p, bool extra_sign) {
  uint64_t* xr = xrow(r);
  uint64_t* zr = zrow(r);
  for (size_t w = 0; w < words_; ++w) {
    xr[w] = p.x.w[w];
    zr[w] = p.z.w[w];
  }
  sign_[r] = static_cast<uint8_t>(extra_sign ^ (p.phase < 0));
}

MeasureResult Tableau::measure_z(size_t q, SplitRng& rng) {
  check_targets(q, kNoTarget);
  const size_t word = q >> 6;
  const uint64_t mask = uint64_t{1} << (q & 63);

  size_t pivot = 2 * n_;
  for (size_t r = n_; r < 2 * n_; ++r) {
    if (xrow(r)[word] & mask) {
      pivot = r;
      break;
    }
  }

  if (pivot < 2 * n_) {
    // Z_q anticommutes with stabilizer `pivot`: random outcome.
    for (size_t r = 0; r < 2 * n_; ++r) {
      if (r != pivot && (xrow(r)[word] & mask)) rowsum(r, pivot);
    }
    // Old stabilizer becomes the new destabilizer; the measured operator
    // replaces it with a coin-flip sign.
    std::copy(xrow(pivot), xrow(pivot) + words_, xrow(pivot - n_));
    std::copy(zrow(pivot), zrow(pivot) + words_, zrow(pivot - n_));
    sign_[pivot - n_] = sign_[pivot];
    bool m = rng.coin();
    std::fill(xrow(pivot), xrow(pivot) + words_, 0);
    std::fill(zrow(pivot), zrow(pivot) + words_, 0);
    zrow(pivot)[word] |= mask;
    sign_[pivot] = m;
    return {m, false};
  }

  // Deterministic: accumulate the stabilizer product matching Z_q in the
  // scratch row.
  std::fill(xrow(2 * n_), xrow(2 * n_) + words_, 0);
  std::fill(zrow(2 * n_), zrow(2 * n_) + words_, 0);
  sign_[2 * n_] = 0;
  for (size_t i = 0; i < n_; ++i) {
    if (xrow(i)[word] & mask) rowsum(2 * n_, n_ + i);
  }
  return {static_cast<bool>(sign_[2 * n_]), true};
}

MeasureResult Tableau::measure_pauli(const PauliString& p, SplitRng& rng) {
  if (p.num_qubits() != n_)
    throw std::invalid_argument("pauli length does not match tableau");

  size_t pivot = 2 * n_;
  for (size_t r = n_; r < 2 * n_; ++r) {
    if (row_anticommutes(r, p)) {
      pivot = r;
      break;
    }
  }

  if (pivot < 2 * n_) {
    for (size_t r = 0; r < 2 * n_; ++r) {
      if (r != pivot && row_anticommutes(r, p)) rowsum(r, pivot);
    }
    std::copy(xrow(pivot), xrow(pivot) + words_, xrow(pivot - n_));
    std::copy(zrow(pivot), zrow(pivot) + words_, zrow(pivot - n_));
    sign_[pivot - n_] = sign_[pivot];
    bool m = rng.coin();
    row_set_pauli(pivot, p, m);
    return {m, false};
  }

  // Commuting with everything: p (up to sign) is a stabilizer product found
  // through the destabilizers that anticommute with it.
  std::fill(xrow(2 * n_), xrow(2 * n_) + words_, 0);
  std::fill(zrow(2 * n_), zrow(2 * n_) + words_, 0);
  sign_[2 * n_] = 0;
  for (size_t i = 0; i < n_; ++i) {
    if (row_anticommutes(i, p)) rowsum(2 * n_, n_ + i);
  }
#ifndef NDEBUG
  for (size_t w = 0; w < words_; ++w) {
    assert(xrow(2 * n_)[w] == p.x.w[w]);
    assert(zrow(2 * n_)[w] == p.z.w[w]);
  }
#endif
  bool m = static_cast<bool>(sign_[2 * n_]) ^ (p.phase < 0);
  return {m, true};
}

void Tableau::reset_z(size_t q, SplitRng& rng) {
  MeasureResult m = measure_z(q, rng);
  if (m.value) apply_x(q);
}

void Tableau::apply_pauli(const PauliString& p) {
  if (p.num_qubits() != n_)
    throw std::invalid_argument("pauli length does not match tableau");
  for (size_t r = 0; r < 2 * n_; ++r) {
    if (row_anticommutes(r, p)) sign_[r] ^= 1;
  }
}

void Tableau::depolarize1(size_t q, double p, SplitRng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("probability out of range");
  if (!rng.bernoulli(p)) return;
  switch (rng.uniform_int(3)) {
    case 0: apply_x(q); break;
    case 1: apply_y(q); break;
    default: apply_z(q); break;
  }
}

void Tableau::depolarize2(size_t q1, size_t q2, double p, SplitRng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("probability out of range");
  if (!rng.bernoulli(p)) return;
  uint64_t k = rng.uniform_int(15) + 1;  // (P1, P2) != (I, I)
  auto apply_code = [this](int code, size_t q) {
    if (code == 1) apply_x(q);
    if (code == 2) apply_y(q);
    if (code == 3) apply_z(q);
  };
  apply_code(static_cast<int>(k >> 2), q1);
  apply_code(static_cast<int>(k & 3), q2);
}

void Tableau::flip_x(size_t q, double p, SplitRng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("probability out of range");
  if (rng.bernoulli(p)) apply_x(q);
}

PauliString Tableau::stabilizer_row(size_t i) const {
  PauliString p(n_);
  for (size_t w = 0; w < words_; ++w) {
    p.x.w[w] = xrow(n_ + i)[w];
    p.z.w[w] = zrow(n_ + i)[w];
  }
  p.phase = sign_[n_ + i] ? -1 : +1;
  return p;
}

PauliString Tableau::destabilizer_row(size_t i) const {
  PauliString p(n_);
  for (size_t w = 0; w < words_; ++w) {
    p.x.w[w] = xrow(i)[w];
    p.z.w[w] = zrow(i)[w];
  }
  p.phase = sign_[i] ? -1 : +1;
  return p;
}

}  // namespace qlw
