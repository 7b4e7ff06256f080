#pragma once

#include <string>
#include <vector>

#include "qlw/bitvec.hpp"
#include "qlw/experiment.hpp"
#include "qlw/lattice.hpp"

namespace qlw {

struct FaultComponent {
  SiteKind kind = SiteKind::Depol1;
  int round = 0;
  int layer = -1;
  int node1 = -1, node2 = -1;
  int pauli1 = 0, pauli2 = 0;  // 0=I 1=X 2=Y 3=Z; MeasFlip/FinalFlip use none
  int site_index = -1;         // walk-order site; resolved from the fields if -1
};

struct GraphEdge {
  int u = -1;           // detector index
  int v = -1;           // detector index, or -1 for the virtual boundary
  double prob = 0.0;    // merged fault probability
  double weight = 0.0;  // ln((1-p)/p)
  BitVec obs_flips;     // d bits, task-basis observables flipped
  std::vector<int> touched_data;  // data nodes in provenance, sorted unique
  // Data-qubit supports of provenance components whose Pauli acts on data
  // qubits only; the edge is "erased" when such a support lies inside the
  // lost set (the mechanism then occurs freely).
  std::vector<std::vector<int>> erase_supports;
  std::vector<FaultComponent> provenance;
};

// Weighted matching graph over detector indices plus a virtual boundary
// vertex. Built by enumerating every single-fault component of the noise
// model, propagating it through the circuit, and recording its detector
// signature and observable flips.
struct DetectorGraph {
  int d = 0;
  int T = 0;
  Basis basis = Basis::Z;
  int num_anc = 0;
  int num_detectors = 0;
  // Weight given to erased mechanisms, calibrated so delayed-erasure
  // decoding beats standard matching without the degenerate near-zero-path
  // routing that a tiny value causes. Clamped to never exceed the edge's
  // own weight.
  double erase_weight = 2.0;
  std::vector<GraphEdge> edges;
  std::vector<std::vector<int>> adj;  // vertex (incl. boundary slot) -> edge ids

  int boundary_vertex() const { return num_detectors; }
};

// Throws std::runtime_error if any single fault clicks more than two
// detectors of one type (that would indicate a schedule bug).
DetectorGraph build_detector_graph(const CodeLayout& layout, const NoiseParams& noise,
                                   int T, Basis basis);

// Every edge whose provenance involves a lost data qubit gets weight
// erase_weight; other weights are unchanged. loss_data_nodes are data node
// indices.
DetectorGraph erasure_reweight(const DetectorGraph& graph,
                               const std::vector<int>& loss_data_nodes);

// Weight vector for the reweighted graph without copying edge metadata
// (the per-shot fast path behind erasure_reweight).
std::vector<double> erased_weights(const DetectorGraph& graph,
                                   const std::vector<int>& loss_data_nodes);

// Derived matching problem over the clicked detectors: pairwise and
// to-boundary shortest-path costs, quantized to integers for the exact
// matcher. kNoPath marks unreachable pairs.
struct MatchingInstance {
  static constexpr long long kNoPath = -1;
  std::vector<int> clicks;
  std::vector<std::vector<long long>> pair_cost;  // clicks x clicks
  std::vector<long long> boundary_cost;           // per click
};

MatchingInstance build_matching_instance(const DetectorGraph& graph,
                                         const BitVec& detectors,
                                         const std::vector<double>* weight_override =
                                             nullptr);

// Exact minimum-weight perfect matching over the clicked detectors, with the
// boundary vertex duplicable. Returns the d predicted observable flips;
// matched_cost (when non-null) receives the total quantized path cost.
BitVec mwpm_decode(const DetectorGraph& graph, const BitVec& detectors,
                   const std::vector<double>* weight_override = nullptr,
                   long long* matched_cost = nullptr);

long long quantize_weight(double w);

// Detector signature and observable flips of one fault component, computed
// by Pauli-frame propagation (independent of the tableau machinery).
struct FaultEffect {
  std::vector<int> clicked;  // detector indices, sorted
  BitVec obs_flips;          // d bits
};
FaultEffect propagate_fault(const CodeLayout& layout, int T, Basis basis,
                            const FaultComponent& fault);

std::string dump_graph(const DetectorGraph& graph);

}  // namespace qlw
