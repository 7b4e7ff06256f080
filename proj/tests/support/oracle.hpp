#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qlw/rng.hpp"

namespace qlw::test {

// Shared circuit representation for the tableau-vs-dense comparisons.
struct CircuitOp {
  enum class Kind { H, S, X, Y, Z, CX, MeasureZ, ResetZ, Depol1, Depol2, FlipX };
  Kind kind;
  int a = -1, b = -1;
  double p = 0.0;
};
using Circuit = std::vector<CircuitOp>;

// Dense state-vector simulator with sampled measurements; usable well beyond
// 6 qubits (the d=3 patch fits).
class DenseState {
 public:
  explicit DenseState(int n);

  void h(int q);
  void s(int q);
  void x(int q);
  void y(int q);
  void z(int q);
  void cx(int c, int t);
  bool measure_z(int q, SplitRng& rng);  // collapses
  void reset_z(int q, SplitRng& rng);
  void depolarize1(int q, double p, SplitRng& rng);
  void depolarize2(int q1, int q2, double p, SplitRng& rng);
  void flip_x(int q, double p, SplitRng& rng);

  double prob_one(int q) const;
  int num_qubits() const { return n_; }

 private:
  int n_;
  std::vector<std::complex<double>> amp_;
  void apply_1q(int q, const std::complex<double> m[2][2]);
};

// Exact outcome distribution of a circuit: density-matrix evolution with
// channels as exact mixtures, branching only at non-deterministic
// measurements. Limited to small qubit counts.
struct OracleResult {
  std::map<std::string, double> dist;  // outcome string -> probability
  // Probability that the next measured bit is 1, keyed by the outcome prefix
  // before that measurement (for determinism-flag checks).
  std::map<std::string, double> cond_p1;
};

OracleResult exact_distribution(const Circuit& circuit, int n);

// Runs the circuit on the stabilizer tableau; returns the measurement
// outcome string, and the determinism flags when flags != nullptr.
std::string run_circuit_tableau(const Circuit& circuit, int n, SplitRng& rng,
                                std::string* flags = nullptr);

// Random supported-op circuit on 2..max_qubits qubits with at most
// max_measurements measurement events. Reset-free circuits are needed for
// determinism-flag comparisons: resets and sampled Pauli channels hide coin
// flips that condition the pure-state simulator but not the density-matrix
// oracle, so flag checks use unitary+measure circuits only.
Circuit random_circuit(SplitRng& rng, int max_qubits, int max_measurements,
                       int* n_out, bool allow_reset = true,
                       bool allow_noise = true);

// Pearson chi-square p-value of observed counts against exact probabilities;
// bins with expected count below 5 are merged into a catch-all.
double chi_square_p_value(const std::map<std::string, double>& exact,
                          const std::map<std::string, uint64_t>& counts,
                          uint64_t n_shots);

// Upper regularized incomplete gamma Q(a, x).
double gammq(double a, double x);

}  // namespace qlw::test
