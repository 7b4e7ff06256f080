#include "doctest.h"

#include <cmath>
#include <map>

#include "qlw/dataset_io.hpp"
#include "qlw/experiment.hpp"
#include "support/oracle.hpp"

using namespace qlw;

namespace {

// Diagonal neighbors of a bulk data qubit, keyed "NW"/"NE"/"SW"/"SE".
std::map<std::string, int> diagonal_ancillas(const CodeLayout& l, int q) {
  std::map<std::string, int> out;
  const NodeId& n = l.nodes[q];
  for (int ord : l.data_anc[q]) {
    const NodeId& a = l.nodes[l.anc_node(ord)];
    std::string name = std::string(a.y < n.y ? "N" : "S") + (a.x < n.x ? "W" : "E");
    out[name] = ord;
  }
  return out;
}

}  // namespace

TEST_CASE("zero noise gives all-zero detectors, labels and masks") {
  for (Basis basis : {Basis::Z, Basis::X}) {
    CodeLayout l = build_layout(3);
    SplitRng rng(1);
    ShotRecord rec = run_shot(l, NoiseParams{}, 5, basis, rng);
    CHECK_FALSE(rec.detectors.any());
    CHECK_FALSE(rec.logical_labels.any());
    CHECK_FALSE(rec.loss_mask_truth.any());
    CHECK_FALSE(rec.ancilla_loss_truth.any());
    CHECK_FALSE(rec.excluded_observables.any());
  }
}

TEST_CASE("an X between rounds clicks exactly the two adjacent Z detectors") {
  CodeLayout l = build_layout(5);
  const int T = 6;
  for (int q = 0; q < l.num_data; ++q) {
    if (!l.data_is_bulk(q)) continue;
    for (int r : {2, 4}) {
      Injection inj;
      inj.where = Injection::Where::BetweenRounds;
      inj.round = r + 1;  // applied after round r's measurements
      inj.node = q;
      inj.pauli1 = 1;  // X
      SplitRng rng(5, q);
      ShotRecord rec = run_shot_ex(l, NoiseParams{}, T, Basis::Z, rng, {inj});
      // Exactly the two adjacent Z-detectors click, in slice r+1 only.
      size_t clicks = rec.detectors.popcount();
      CHECK(clicks == 2);
      for (int ord : l.data_anc[q]) {
        if (l.anc_is_x(ord)) continue;
        CHECK(rec.detector(ord, r + 1));
      }
      // The persisting X flips exactly its row's readout parity.
      CHECK(rec.logical_labels.popcount() == 1);
      CHECK(rec.logical_labels.get(l.nodes[q].y / 2));
    }
  }
}

TEST_CASE("detector extraction matches a direct parity recomputation") {
  CodeLayout l = build_layout(3);
  const int T = 4;
  // Random outcome volumes; detectors recomputed independently here.
  for (int trial = 0; trial < 20; ++trial) {
    SplitRng rng(33, trial);
    BitVec outcomes(static_cast<size_t>(T) * l.num_anc);
    BitVec final_readout(l.num_data);
    for (size_t i = 0; i < outcomes.n; ++i) outcomes.set(i, rng.coin());
    for (size_t i = 0; i < final_readout.n; ++i) final_readout.set(i, rng.coin());
    for (Basis basis : {Basis::Z, Basis::X}) {
      BitVec det = compute_detectors(l, basis, T, outcomes, final_readout);
      for (int a = 0; a < l.num_anc; ++a) {
        bool on = l.is_on_basis(a, basis);
        CHECK(det.get(l.detector_index(a, 1)) ==
              (on ? outcomes.get(a) : false));
        for (int r = 2; r <= T; ++r) {
          bool expect = outcomes.get(static_cast<size_t>(r - 2) * l.num_anc + a) ^
                        outcomes.get(static_cast<size_t>(r - 1) * l.num_anc + a);
          CHECK(det.get(l.detector_index(a, r)) == expect);
        }
        bool parity = false;
        for (int q : l.anc_support[a]) parity ^= final_readout.get(q);
        bool expect_final =
            on ? (parity ^ outcomes.get(static_cast<size_t>(T - 1) * l.num_anc + a))
               : false;
        CHECK(det.get(l.detector_index(a, T + 1)) == expect_final);
      }
    }
  }
  BitVec bad(3);
  CHECK_THROWS_AS(
      compute_detectors(l, Basis::Z, T, bad, BitVec(static_cast<size_t>(l.num_data))),
      std::invalid_argument);
}

TEST_CASE("single ancilla outcome flip clicks exactly one slice pair") {
  CodeLayout l = build_layout(3);
  const int T = 6;
  BitVec outcomes(static_cast<size_t>(T) * l.num_anc);
  BitVec final_readout(l.num_data);
  int ord = 3;
  outcomes.set(static_cast<size_t>(3) * l.num_anc + ord, true);  // round 4 only
  Basis basis = l.anc_is_x(ord) ? Basis::X : Basis::Z;
  BitVec det = compute_detectors(l, basis, T, outcomes, final_readout);
  CHECK(det.get(l.detector_index(ord, 4)));
  CHECK(det.get(l.detector_index(ord, 5)));
  CHECK(det.popcount() == 2);
}

TEST_CASE("a persistent outcome change clicks exactly the transition slice") {
  CodeLayout l = build_layout(3);
  const int T = 6;
  BitVec outcomes(static_cast<size_t>(T) * l.num_anc);
  BitVec final_readout(l.num_data);
  int ord = 3;
  for (int r = 4; r <= T; ++r)
    outcomes.set(static_cast<size_t>(r - 1) * l.num_anc + ord, true);
  // Make the final readout consistent with outcome 1 by flipping one data
  // qubit in the ancilla's support.
  final_readout.set(l.anc_support[ord][0], true);
  Basis basis = l.anc_is_x(ord) ? Basis::X : Basis::Z;
  BitVec det = compute_detectors(l, basis, T, outcomes, final_readout);
  CHECK(det.get(l.detector_index(ord, 4)));
  // The flipped data qubit also shows up in its other adjacent same-type
  // stabilizers' final slices; the changed ancilla itself stays quiet there.
  CHECK_FALSE(det.get(l.detector_index(ord, T + 1)));
  for (int slice = 5; slice <= T; ++slice)
    CHECK_FALSE(det.get(l.detector_index(ord, slice)));
}

TEST_CASE("forced bulk loss flickers at one half with exact pair correlations") {
  CodeLayout l = build_layout(3);
  const int T = 8;
  const int q = 4;  // center, the only bulk qubit at d=3
  auto diag = diagonal_ancillas(l, q);
  REQUIRE(diag.size() == 4);

  const int shots = 6000;
  std::map<std::string, std::vector<int>> clicks;
  for (auto& [nm, ord] : diag) clicks[nm].assign(T + 2, 0);
  int ne_sw_equal = 0, nw_leads_se = 0, pair_slots = 0, offset_slots = 0;
  for (int s = 0; s < shots; ++s) {
    SplitRng rng(77, s);
    ShotRecord rec = run_shot_ex(l, NoiseParams{}, T, Basis::Z, rng, {}, {{q, 1}});
    for (auto& [nm, ord] : diag)
      for (int slice = 1; slice <= T + 1; ++slice)
        clicks[nm][slice] += rec.detector(ord, slice);
    for (int slice = 2; slice <= T; ++slice) {
      ne_sw_equal +=
          rec.detector(diag["NE"], slice) == rec.detector(diag["SW"], slice);
      ++pair_slots;
    }
    for (int slice = 2; slice + 1 <= T; ++slice) {
      nw_leads_se +=
          rec.detector(diag["NW"], slice) == rec.detector(diag["SE"], slice + 1);
      ++offset_slots;
    }
  }
  // Exact correlations under the chosen schedule: the NE/SW pair is
  // simultaneous, the NW/SE pair is offset by one round with NW leading.
  CHECK(ne_sw_equal == pair_slots);
  CHECK(nw_leads_se == offset_slots);
  // Each affected detector is a fair coin in the interior slices.
  for (auto& [nm, v] : clicks) {
    for (int slice = 3; slice <= T - 1; ++slice) {
      double f = double(v[slice]) / shots;
      CHECK(f > 0.47);
      CHECK(f < 0.53);
    }
  }
}

// Full-patch cross-check against a dense state-vector executor that
// independently implements the round structure and gate skipping.
TEST_CASE("patch flicker statistics match a dense state-vector run" *
          doctest::skip(false)) {
  CodeLayout l = build_layout(3);
  const int T = 3;
  const int q = 4;
  const int N = l.total_nodes();

  auto dense_shot = [&](SplitRng& rng) {
    test::DenseState st(N);
    BitVec outcomes(static_cast<size_t>(T) * l.num_anc);
    BitVec final_readout(l.num_data);
    for (int r = 1; r <= T; ++r) {
      // forced loss of q from round 1: all its gates skipped
      for (int a = 0; a < l.num_anc; ++a) st.reset_z(l.anc_node(a), rng);
      for (int a = 0; a < l.num_anc; ++a)
        if (l.anc_is_x(a)) st.h(l.anc_node(a));
      for (int layer = 0; layer < 4; ++layer) {
        for (auto [anc_node, data] : l.schedule[layer]) {
          if (data == q) continue;
          if (l.nodes[anc_node].kind == NodeKind::AncillaX)
            st.cx(anc_node, data);
          else
            st.cx(data, anc_node);
        }
      }
      for (int a = 0; a < l.num_anc; ++a)
        if (l.anc_is_x(a)) st.h(l.anc_node(a));
      for (int a = 0; a < l.num_anc; ++a)
        outcomes.set(static_cast<size_t>(r - 1) * l.num_anc + a,
                     st.measure_z(l.anc_node(a), rng));
    }
    for (int dq = 0; dq < l.num_data; ++dq)
      final_readout.set(dq, dq == q ? false : st.measure_z(dq, rng));
    return compute_detectors(l, Basis::Z, T, outcomes, final_readout);
  };

  auto diag = diagonal_ancillas(l, q);
  const int shots = 600;
  int dense_ne_sw_eq = 0, dense_nw_se_off = 0;
  std::map<std::string, int> dense_clicks;
  for (int s = 0; s < shots; ++s) {
    SplitRng rng(991, s);
    BitVec det = dense_shot(rng);
    auto d_at = [&](int ord, int slice) {
      return det.get(l.detector_index(ord, slice));
    };
    dense_ne_sw_eq += d_at(diag["NE"], 2) == d_at(diag["SW"], 2);
    dense_nw_se_off += d_at(diag["NW"], 2) == d_at(diag["SE"], 3);
    for (auto& [nm, ord] : diag) dense_clicks[nm] += d_at(ord, 2);
  }
  CHECK(dense_ne_sw_eq == shots);
  CHECK(dense_nw_se_off == shots);
  for (auto& [nm, c] : dense_clicks) {
    double f = double(c) / shots;
    CHECK(f > 0.42);
    CHECK(f < 0.58);
  }
}

TEST_CASE("ancilla loss perturbs only detector slices r and r+1") {
  CodeLayout l = build_layout(3);
  const int T = 8;
  for (int ord = 0; ord < l.num_anc; ++ord) {
    const int r = 4;
    SplitRng rng(21, ord);
    ShotRecord rec =
        run_shot_ex(l, NoiseParams{}, T, Basis::Z, rng, {}, {}, {{ord, r}});
    for (int a = 0; a < l.num_anc; ++a) {
      for (int slice = 1; slice <= T + 1; ++slice) {
        if (rec.detector(a, slice)) {
          CHECK(a == ord);
          CHECK((slice == r || slice == r + 1));
        }
      }
    }
    CHECK(rec.ancilla_loss_truth.popcount() == 1);
    CHECK_FALSE(rec.loss_mask_truth.any());
  }
}

TEST_CASE("data loss is persistent and excluded observables are exact") {
  CodeLayout l = build_layout(5);
  const int T = 10;
  NoiseParams noise;
  noise.p_loss = 0.02;
  for (int s = 0; s < 50; ++s) {
    SplitRng rng(13, s);
    ShotRecord rec = run_shot(l, noise, T, Basis::Z, rng);
    for (int q = 0; q < l.num_data; ++q) {
      bool seen = false;
      for (int r = 1; r <= T; ++r) {
        bool lost = rec.data_lost_at(q, r);
        CHECK((!seen || lost));  // monotone
        seen = seen || lost;
      }
    }
    for (int i = 0; i < l.d; ++i) {
      bool expect = false;
      for (int q : l.observables_z[i]) expect = expect || rec.data_lost_final(q);
      CHECK(rec.excluded_observables.get(i) == expect);
    }
  }
}

TEST_CASE("an injected logical X string flips every Z label") {
  CodeLayout l = build_layout(3);
  const int T = 4;
  // X on a full column of data qubits between rounds 2 and 3.
  std::vector<Injection> injections;
  for (int q : l.observables_x[1]) {
    Injection inj;
    inj.where = Injection::Where::BetweenRounds;
    inj.round = 3;
    inj.node = q;
    inj.pauli1 = 1;
    injections.push_back(inj);
  }
  SplitRng rng(3);
  ShotRecord rec = run_shot_ex(l, NoiseParams{}, T, Basis::Z, rng, injections);
  for (int i = 0; i < l.d; ++i) CHECK(rec.logical_labels.get(i));
  CHECK_FALSE(rec.detectors.any());  // a logical operator is undetectable
}

TEST_CASE("sample_dataset reproducibility and loss-rate statistics") {
  CodeLayout l = build_layout(5);
  NoiseParams noise;
  noise.p_loss = 0.005;
  Dataset a = sample_dataset(l, noise, 10, Basis::Z, 2000, 99);
  Dataset b = sample_dataset(l, noise, 10, Basis::Z, 2000, 99);
  CHECK(serialize(a) == serialize(b));

  int with_loss = 0;
  for (const ShotRecord& rec : a.shots) with_loss += rec.loss_mask_truth.any();
  double frac = double(with_loss) / a.shots.size();
  double expect = 1.0 - std::pow(1.0 - noise.p_loss, 25.0 * 10.0);
  double sigma = std::sqrt(expect * (1 - expect) / a.shots.size());
  CHECK(std::abs(frac - expect) < 3.5 * sigma);

  CHECK_THROWS_AS(sample_dataset(l, noise, 10, Basis::Z, 0, 1), std::invalid_argument);
}

TEST_CASE("detector click rates agree across disjoint seeds") {
  CodeLayout l = build_layout(3);
  NoiseParams noise;
  noise.p_pauli = noise.p_meas = 0.005;
  auto rate = [&](uint64_t seed) {
    Dataset ds = sample_dataset(l, noise, 5, Basis::Z, 3000, seed);
    uint64_t clicks = 0, slots = 0;
    for (const ShotRecord& rec : ds.shots) {
      clicks += rec.detectors.popcount();
      slots += rec.detectors.n;
    }
    return double(clicks) / double(slots);
  };
  double r1 = rate(1), r2 = rate(424242);
  double sigma = std::sqrt(r1 * (1 - r1) / (3000.0 * 48));
  CHECK(std::abs(r1 - r2) < 4 * sigma);
}

TEST_CASE("dataset serialization round-trips bit-exactly with distinct errors") {
  CodeLayout l = build_layout(3);
  NoiseParams noise;
  noise.p_pauli = noise.p_meas = noise.p_loss = 0.01;
  Dataset ds = sample_dataset(l, noise, 4, Basis::X, 100, 7);
  std::vector<uint8_t> bytes = serialize(ds);
  Dataset back = deserialize(bytes);
  CHECK(serialize(back) == bytes);
  CHECK(back.header.d == 3);
  CHECK(back.header.T == 4);
  CHECK(back.header.basis == Basis::X);
  CHECK(back.header.noise.p_pauli == noise.p_pauli);
  CHECK(back.header.seed == 7);
  CHECK(back.shots.size() == 100);
  for (size_t i = 0; i < back.shots.size(); ++i) {
    CHECK(back.shots[i].detectors == ds.shots[i].detectors);
    CHECK(back.shots[i].loss_mask_truth == ds.shots[i].loss_mask_truth);
  }

  std::vector<uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(deserialize(bad), doctest::Contains("bad magic"), FormatError);
  try {
    deserialize(bad);
  } catch (const FormatError& e) {
    CHECK(e.kind == FormatError::Kind::BadMagic);
  }

  std::vector<uint8_t> wrong_version = bytes;
  wrong_version[4] = 9;
  try {
    deserialize(wrong_version);
    CHECK(false);
  } catch (const FormatError& e) {
    CHECK(e.kind == FormatError::Kind::BadVersion);
  }

  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
  try {
    deserialize(truncated);
    CHECK(false);
  } catch (const FormatError& e) {
    CHECK(e.kind == FormatError::Kind::Truncated);
  }
}

TEST_CASE("fault site enumeration is stable and covers the noise model") {
  CodeLayout l = build_layout(3);
  NoiseParams noise;
  noise.p_pauli = 0.001;
  noise.p_meas = 0.002;
  auto sites = enumerate_fault_sites(l, noise, 2, Basis::Z);
  auto again = enumerate_fault_sites(l, noise, 2, Basis::Z);
  REQUIRE(sites.size() == again.size());
  for (size_t i = 0; i < sites.size(); ++i) {
    CHECK(sites[i].index == static_cast<int>(i));
    CHECK(sites[i].kind == again[i].kind);
    CHECK(sites[i].node1 == again[i].node1);
  }
  int n_meas = 0, n_final = 0, n_cx = 0;
  for (const FaultSite& s : sites) {
    if (s.kind == SiteKind::MeasFlip) ++n_meas;
    if (s.kind == SiteKind::FinalFlip) ++n_final;
    if (s.kind == SiteKind::Depol2) ++n_cx;
  }
  CHECK(n_meas == 2 * l.num_anc);
  CHECK(n_final == l.num_data);
  CHECK(n_cx == 2 * 24);
}
