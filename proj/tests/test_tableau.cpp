#include "doctest.h"

#include <map>

#include "qlw/tableau.hpp"
#include "support/oracle.hpp"

using namespace qlw;
using namespace qlw::test;

TEST_CASE("fresh tableau measures all zeros deterministically") {
  SplitRng rng(1);
  Tableau t(3);
  for (size_t q = 0; q < 3; ++q) {
    MeasureResult m = t.measure_z(q, rng);
    CHECK(m.value == false);
    CHECK(m.deterministic);
  }
  CHECK_THROWS_AS(Tableau(0), std::invalid_argument);
}

TEST_CASE("stabilizer rows of a fresh two-qubit tableau are Z0, Z1") {
  Tableau t(2);
  PauliString s0 = t.stabilizer_row(0);
  PauliString s1 = t.stabilizer_row(1);
  CHECK(s0.str() == "+ZI");
  CHECK(s1.str() == "+IZ");
}

TEST_CASE("H then measure is a fair coin; repeat is deterministic") {
  int ones = 0;
  const int shots = 20000;
  for (int i = 0; i < shots; ++i) {
    SplitRng rng(42, i);
    Tableau t(1);
    t.apply_h(0);
    MeasureResult m1 = t.measure_z(0, rng);
    CHECK_FALSE(m1.deterministic);
    MeasureResult m2 = t.measure_z(0, rng);
    CHECK(m2.deterministic);
    CHECK(m2.value == m1.value);
    ones += m1.value;
  }
  double f = double(ones) / shots;
  CHECK(f > 0.48);
  CHECK(f < 0.52);
}

TEST_CASE("CX on |10> flips the target") {
  SplitRng rng(7);
  Tableau t(2);
  t.apply_x(0);
  t.apply_cx(0, 1);
  CHECK(t.measure_z(0, rng).value == true);
  CHECK(t.measure_z(1, rng).value == true);
  CHECK_THROWS_AS(t.apply_cx(0, 0), std::invalid_argument);
  CHECK_THROWS_AS(t.apply_cx(0, 5), std::invalid_argument);
}

TEST_CASE("measure_pauli basics") {
  SplitRng rng(3);
  Tableau bell(2);
  bell.apply_h(0);
  bell.apply_cx(0, 1);
  PauliString zz(2);
  zz.z.set(0, true);
  zz.z.set(1, true);
  MeasureResult m = bell.measure_pauli(zz, rng);
  CHECK(m.deterministic);
  CHECK(m.value == false);

  int ones = 0;
  const int shots = 20000;
  for (int i = 0; i < shots; ++i) {
    SplitRng r2(5, i);
    Tableau t(1);
    MeasureResult first = t.measure_pauli(PauliString::single(1, 0, 'X'), r2);
    ones += first.value;
    MeasureResult again = t.measure_pauli(PauliString::single(1, 0, 'X'), r2);
    CHECK(again.deterministic);
    CHECK(again.value == first.value);
  }
  double f = double(ones) / shots;
  CHECK(f > 0.48);
  CHECK(f < 0.52);
}

TEST_CASE("measuring a stabilizer row is deterministic with outcome 0") {
  SplitRng rng(11);
  Tableau t(4);
  t.apply_h(0);
  t.apply_cx(0, 1);
  t.apply_cx(1, 2);
  t.apply_s(2);
  t.apply_x(0);
  for (size_t i = 0; i < 4; ++i) {
    MeasureResult m = t.measure_pauli(t.stabilizer_row(i), rng);
    CHECK(m.deterministic);
    CHECK(m.value == false);
  }
}

// Overlapping checks X1X2X3X4 and Z1Z2Z5Z6 become X2X3X4 and Z2Z5Z6 after
// losing qubit 1, which anticommute; repeated alternating measurement must
// flicker with fair-coin statistics.
TEST_CASE("reduced anticommuting stabilizer pair flickers at 1/2") {
  PauliString xs(6), zs(6);
  for (int q : {1, 2, 3}) xs.x.set(q, true);   // X2X3X4 (0-based 1,2,3)
  for (int q : {1, 4, 5}) zs.z.set(q, true);   // Z2Z5Z6 (0-based 1,4,5)

  int flips = 0, trials = 4000;
  for (int i = 0; i < trials; ++i) {
    SplitRng rng(99, i);
    Tableau t(6);
    t.measure_pauli(xs, rng);
    bool z1 = t.measure_pauli(zs, rng).value;
    t.measure_pauli(xs, rng);
    MeasureResult z2 = t.measure_pauli(zs, rng);
    CHECK_FALSE(z2.deterministic);
    flips += (z1 != z2.value);
  }
  double f = double(flips) / trials;
  CHECK(f > 0.46);
  CHECK(f < 0.54);
}

TEST_CASE("reset disentangles: Bell partner becomes maximally mixed") {
  int ones = 0, shots = 20000;
  for (int i = 0; i < shots; ++i) {
    SplitRng rng(13, i);
    Tableau t(2);
    t.apply_h(0);
    t.apply_cx(0, 1);
    t.reset_z(0, rng);
    CHECK(t.measure_z(0, rng).value == false);
    // The partner's marginal is uniform over shots (the per-shot outcome is
    // already collapsed by the reset's internal measurement).
    ones += t.measure_z(1, rng).value;
  }
  double f = double(ones) / shots;
  CHECK(f > 0.48);
  CHECK(f < 0.52);
}

TEST_CASE("reset of a fresh qubit is a no-op on outcomes") {
  SplitRng rng(17);
  Tableau t(2);
  t.reset_z(1, rng);
  CHECK(t.measure_z(1, rng).value == false);
  CHECK(t.measure_z(0, rng).value == false);
}

TEST_CASE("pauli channels") {
  SplitRng rng(19);
  Tableau t(1);
  SUBCASE("p=0 is the identity") {
    for (int i = 0; i < 100; ++i) t.depolarize1(0, 0.0, rng);
    CHECK(t.measure_z(0, rng).value == false);
    CHECK(t.measure_z(0, rng).deterministic);
  }
  SUBCASE("p=1 depolarize1 flips |0> with probability 2/3") {
    int ones = 0, shots = 30000;
    for (int i = 0; i < shots; ++i) {
      SplitRng r2(23, i);
      Tableau t2(1);
      t2.depolarize1(0, 1.0, r2);
      ones += t2.measure_z(0, r2).value;
    }
    double f = double(ones) / shots;
    CHECK(f > 0.653);
    CHECK(f < 0.68);
  }
  SUBCASE("invalid probability is rejected") {
    CHECK_THROWS_AS(t.depolarize1(0, 1.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(t.flip_x(0, -0.1, rng), std::invalid_argument);
  }
}

TEST_CASE("depolarize2 draws all 15 non-identity paulis uniformly") {
  // Count via the syndrome pattern on two qubits prepared in |00>, measured
  // in bases that distinguish the 15 cases only statistically; instead just
  // count the channel's internal draws through outcome frequencies of X/Y
  // components per qubit.
  int flip1 = 0, flip2 = 0, shots = 30000;
  for (int i = 0; i < shots; ++i) {
    SplitRng rng(29, i);
    Tableau t(2);
    t.depolarize2(0, 1, 1.0, rng);
    flip1 += t.measure_z(0, rng).value;
    flip2 += t.measure_z(1, rng).value;
  }
  // Per qubit, 8 of 15 components contain X or Y on that slot.
  double f1 = double(flip1) / shots, f2 = double(flip2) / shots;
  CHECK(f1 > 0.51);
  CHECK(f1 < 0.555);
  CHECK(f2 > 0.51);
  CHECK(f2 < 0.555);
}

TEST_CASE("identical seeds produce identical shot streams") {
  for (int trial = 0; trial < 3; ++trial) {
    SplitRng ra(1234, 7), rb(1234, 7);
    Tableau ta(4), tb(4);
    std::string sa, sb;
    for (int i = 0; i < 50; ++i) {
      ta.apply_h(i % 4);
      tb.apply_h(i % 4);
      ta.depolarize1(i % 4, 0.3, ra);
      tb.depolarize1(i % 4, 0.3, rb);
      sa += ta.measure_z((i + 1) % 4, ra).value ? '1' : '0';
      sb += tb.measure_z((i + 1) % 4, rb).value ? '1' : '0';
    }
    CHECK(sa == sb);
  }
}

TEST_CASE("random circuits match the dense oracle distribution") {
  const int circuits = 25;
  const uint64_t shots = 20000;
  int failures = 0;
  for (int c = 0; c < circuits; ++c) {
    SplitRng gen(777, c);
    int n = 0;
    Circuit circuit = random_circuit(gen, 5, 5, &n);
    OracleResult oracle = exact_distribution(circuit, n);

    std::map<std::string, uint64_t> counts;
    for (uint64_t s = 0; s < shots; ++s) {
      SplitRng rng(1000 + c, s);
      counts[run_circuit_tableau(circuit, n, rng)]++;
    }
    double p = chi_square_p_value(oracle.dist, counts, shots);
    if (p <= 0.001) ++failures;
  }
  CHECK(failures <= 1);
}

TEST_CASE("determinism flags agree with the oracle branch probabilities") {
  for (int c = 0; c < 10; ++c) {
    SplitRng gen(555, c);
    int n = 0;
    Circuit circuit =
        random_circuit(gen, 5, 5, &n, /*allow_reset=*/false, /*allow_noise=*/false);
    OracleResult oracle = exact_distribution(circuit, n);
    for (int s = 0; s < 200; ++s) {
      SplitRng rng(81 + c, s);
      std::string flags;
      std::string bits = run_circuit_tableau(circuit, n, rng, &flags);
      std::string prefix;
      for (size_t i = 0; i < bits.size(); ++i) {
        auto it = oracle.cond_p1.find(prefix);
        REQUIRE(it != oracle.cond_p1.end());
        double p1 = it->second;
        bool oracle_deterministic = (p1 < 1e-9) || (p1 > 1.0 - 1e-9);
        CHECK(flags[i] == (oracle_deterministic ? 'D' : 'R'));
        prefix += bits[i];
      }
    }
  }
}
