#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlw/bitvec.hpp"
#include "qlw/lattice.hpp"
#include "qlw/rng.hpp"

namespace qlw {

struct NoiseParams {
  double p_pauli = 0.0;  // 1q and 2q depolarizing strength
  double p_meas = 0.0;   // readout flip probability
  double p_loss = 0.0;   // per-qubit per-round loss probability

  void validate() const;
};

// One memory-experiment shot. Bit volumes are indexed as:
//   ancilla_outcomes[(round-1)*num_anc + ord]      rounds 1..T
//   detectors[(slice-1)*num_anc + ord]             slices 1..T+1
//   loss_mask_truth[(round-1)*num_data + q]        persistent from loss round
//   ancilla_loss_truth[(round-1)*num_anc + ord]    transient per round
struct ShotRecord {
  Basis basis = Basis::Z;
  int d = 0;
  int T = 0;
  int num_data = 0;
  int num_anc = 0;
  BitVec ancilla_outcomes;
  BitVec detectors;
  BitVec final_readout;
  BitVec loss_mask_truth;
  BitVec ancilla_loss_truth;
  BitVec logical_labels;        // measured value XOR noiseless initial value
  BitVec excluded_observables;  // support touched a lost qubit

  bool outcome(int ord, int round) const {
    return ancilla_outcomes.get(static_cast<size_t>(round - 1) * num_anc + ord);
  }
  bool detector(int ord, int slice) const {
    return detectors.get(static_cast<size_t>(slice - 1) * num_anc + ord);
  }
  bool data_lost_at(int q, int round) const {
    return loss_mask_truth.get(static_cast<size_t>(round - 1) * num_data + q);
  }
  bool data_lost_final(int q) const { return T > 0 && data_lost_at(q, T); }
};

// Noise / fault sites in walk order. `index` is the position in the walk's
// consecutive numbering, shared between the sampler, the fault enumerator
// and injected-fault runs.
enum class SiteKind : uint8_t { Depol1, Depol2, Idle, MeasFlip, FinalFlip };

struct FaultSite {
  int index = 0;
  SiteKind kind = SiteKind::Depol1;
  int round = 0;   // 1..T; 0 for final-readout sites
  int layer = -1;  // CX layer for Depol2/Idle
  int node1 = -1;  // Depol2: ancilla node; MeasFlip: ancilla node
  int node2 = -1;  // Depol2: data node
  double prob = 0.0;
};

std::vector<FaultSite> enumerate_fault_sites(const CodeLayout& layout,
                                             const NoiseParams& noise, int T,
                                             Basis basis);

// Deterministic fault applied during an (otherwise typically noiseless) run.
// Pauli codes: 0 = I, 1 = X, 2 = Y, 3 = Z.
struct Injection {
  enum class Where : uint8_t { AtSite, BetweenRounds } where = Where::AtSite;
  int site_index = -1;     // AtSite
  int pauli1 = 0;          // AtSite: node1 component; BetweenRounds: on `node`
  int pauli2 = 0;          // AtSite: node2 component (Depol2 only)
  bool flip_outcome = false;  // AtSite on MeasFlip/FinalFlip sites
  int round = 0;           // BetweenRounds: applied at the start of this round
  int node = -1;           // BetweenRounds target
};

struct ForcedLoss {
  int node = -1;  // data node (run_shot_ex) or ancilla ordinal (forced_anc)
  int round = 1;
};

ShotRecord run_shot(const CodeLayout& layout, const NoiseParams& noise, int T,
                    Basis basis, SplitRng& rng);

ShotRecord run_shot_ex(const CodeLayout& layout, const NoiseParams& noise, int T,
                       Basis basis, SplitRng& rng,
                       const std::vector<Injection>& injections,
                       const std::vector<ForcedLoss>& forced_data_loss = {},
                       const std::vector<ForcedLoss>& forced_anc_loss = {});

// Detector extraction. Slice 1 compares round-1 outcomes against the
// deterministic initial stabilizer values (on-basis only; off-basis slice-1
// detectors are defined as 0). Slices 2..T are consecutive XORs. Slice T+1
// XORs round-T on-basis outcomes against stabilizer parities reconstructed
// from the final readout.
BitVec compute_detectors(const CodeLayout& layout, Basis basis, int T,
                         const BitVec& ancilla_outcomes,
                         const BitVec& final_readout);

struct DatasetHeader {
  uint16_t version = 1;
  uint16_t d = 0;
  uint16_t T = 0;
  Basis basis = Basis::Z;
  NoiseParams noise;
  uint64_t seed = 0;
  uint64_t shot_count = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<ShotRecord> shots;
};

// Shot i draws from SplitRng(seed, i), so datasets are reproducible and
// shots independent regardless of sampling order.
Dataset sample_dataset(const CodeLayout& layout, const NoiseParams& noise, int T,
                       Basis basis, uint64_t shots, uint64_t seed);

// Circuit walk: the single source of truth for gate and noise-site order.
// Per round: loss draws, ancilla reset (+depol1), X-ancilla H (+depol1),
// 4 CX layers (+depol2 per gate, idle depol1 per layer), X-ancilla H
// (+depol1), readout flip sites, ancilla Z-measurement. After round T: data
// basis change (X memory), readout flip sites, destructive measurement.
//
// Visitor concept:
//   void init();
//   void round_start(int round);
//   void reset_anc(int ordinal);
//   void h_gate(int node);
//   void cx(int anc_node, int data_node, int layer);
//   void noise_d1(int site, int node);
//   void noise_d2(int site, int anc_node, int data_node, int layer);
//   void noise_idle(int site, int node, int layer);
//   void meas_flip_site(int site, int ordinal, int round);
//   void measure_anc(int ordinal, int round);
//   void final_flip_site(int site, int data_node);
//   void final_measure(int data_node);
//   void done();
template <class V>
void walk_circuit(const CodeLayout& layout, int T, Basis basis, V&& v) {
  if (T < 1) throw std::invalid_argument("round count must be >= 1");
  int site = 0;
  v.init();
  for (int r = 1; r <= T; ++r) {
    v.round_start(r);
    for (int a = 0; a < layout.num_anc; ++a) {
      v.reset_anc(a);
      v.noise_d1(site++, layout.anc_node(a));
    }
    for (int a = 0; a < layout.num_anc; ++a) {
      if (!layout.anc_is_x(a)) continue;
      v.h_gate(layout.anc_node(a));
      v.noise_d1(site++, layout.anc_node(a));
    }
    for (int layer = 0; layer < 4; ++layer) {
      for (auto [anc_node, data_node] : layout.schedule[layer]) {
        v.cx(anc_node, data_node, layer);
        v.noise_d2(site++, anc_node, data_node, layer);
      }
      for (int node : layout.idle_nodes[layer]) v.noise_idle(site++, node, layer);
    }
    for (int a = 0; a < layout.num_anc; ++a) {
      if (!layout.anc_is_x(a)) continue;
      v.h_gate(layout.anc_node(a));
      v.noise_d1(site++, layout.anc_node(a));
    }
    for (int a = 0; a < layout.num_anc; ++a) {
      v.meas_flip_site(site++, a, r);
      v.measure_anc(a, r);
    }
  }
  if (basis == Basis::X) {
    for (int q = 0; q < layout.num_data; ++q) v.h_gate(q);
  }
  for (int q = 0; q < layout.num_data; ++q) {
    v.final_flip_site(site++, q);
    v.final_measure(q);
  }
  v.done();
}

}  // namespace qlw
