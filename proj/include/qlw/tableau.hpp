#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qlw/bitvec.hpp"
#include "qlw/rng.hpp"

namespace qlw {

// Hermitian Pauli operator: phase * prod_j i^{x_j z_j} X^{x_j} Z^{z_j}
// (so x=z=1 on a qubit is literal Y). phase is +1 or -1.
struct PauliString {
  BitVec x, z;
  int phase = +1;

  explicit PauliString(size_t n) : x(n), z(n) {}
  PauliString() = default;

  size_t num_qubits() const { return x.n; }

  static PauliString single(size_t n, size_t q, char p);  // p in {X, Y, Z}
  bool commutes_with(const PauliString& o) const {
    return !(x.parity_and(o.z) ^ z.parity_and(o.x));
  }
  std::string str() const;
};

enum class Gate : uint8_t { H, S, CX, X, Y, Z };

struct MeasureResult {
  bool value = false;
  bool deterministic = false;
};

// Stabilizer tableau over n qubits in the standard destabilizer/stabilizer
// form: rows 0..n-1 are destabilizers, n..2n-1 stabilizers, plus one scratch
// row for deterministic measurements. Row i is sign_[i] applied to the
// Hermitian Pauli encoded by the (xs, zs) bit rows.
//
// Loss is deliberately NOT an operation here: the experiment layer models a
// lost qubit by skipping its gates, which makes the surviving, mutually
// anticommuting reduced stabilizers produce flicker with no special cases.
class Tableau {
 public:
  explicit Tableau(size_t n);

  size_t num_qubits() const { return n_; }

  void apply_h(size_t q);
  void apply_s(size_t q);
  void apply_x(size_t q);
  void apply_y(size_t q);
  void apply_z(size_t q);
  void apply_cx(size_t control, size_t target);
  void apply_gate(Gate g, size_t a, size_t b = kNoTarget);

  MeasureResult measure_z(size_t q, SplitRng& rng);
  MeasureResult measure_pauli(const PauliString& p, SplitRng& rng);
  void reset_z(size_t q, SplitRng& rng);

  // With probability p applies a uniformly random non-identity Pauli on the
  // target(s); flip_x applies X with probability p.
  void depolarize1(size_t q, double p, SplitRng& rng);
  void depolarize2(size_t q1, size_t q2, double p, SplitRng& rng);
  void flip_x(size_t q, double p, SplitRng& rng);

  void apply_pauli(const PauliString& p);  // deterministic Pauli application

  PauliString stabilizer_row(size_t i) const;    // i in [0, n)
  PauliString destabilizer_row(size_t i) const;  // i in [0, n)

  static constexpr size_t kNoTarget = static_cast<size_t>(-1);

 private:
  size_t n_, words_;
  std::vector<uint64_t> xs_, zs_;  // (2n+1) rows * words_ each
  std::vector<uint8_t> sign_;     // 2n+1 entries, 0 = +, 1 = -

  uint64_t* xrow(size_t r) { return xs_.data() + r * words_; }
  uint64_t* zrow(size_t r) { return zs_.data() + r * words_; }
  const uint64_t* xrow(size_t r) const { return xs_.data() + r * words_; }
  const uint64_t* zrow(size_t r) const { return zs_.data() + r * words_; }

  bool xbit(size_t r, size_t q) const { return (xrow(r)[q >> 6] >> (q & 63)) & 1; }
  bool zbit(size_t r, size_t q) const { return (zrow(r)[q >> 6] >> (q & 63)) & 1; }

  void rowsum(size_t h, size_t i);                  // row h := row i * row h
  void row_set_pauli(size_t r, const PauliString& p, bool extra_sign);
  bool row_anticommutes(size_t r, const PauliString& p) const;
  void check_targets(size_t a, size_t b) const;
};

}  // namespace qlw
