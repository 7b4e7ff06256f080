#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace qlw {

enum class NodeKind : uint8_t { Data = 0, AncillaX = 1, AncillaZ = 2 };
enum class Basis : uint8_t { Z = 0, X = 1 };

const char* to_string(Basis b);
Basis basis_from_string(const std::string& s);

struct NodeId {
  int index;
  NodeKind kind;
  int x, y;  // data at odd-odd, ancillas at even-even positions
};

// Rotated surface code geometry of distance d, plus everything derived from
// it that the rest of the workbench needs: the Tanner graph, the 4-layer CX
// schedule, the d equivalent logical observables per basis, and the
// (ancilla, slice) -> detector index space.
//
// Conventions: x grows right, y grows down. Data qubits sit at (odd, odd),
// ancilla candidates at (even, even); an ancilla is X-type iff (x+y)/2 is
// odd. X-type boundary ancillas live on the top/bottom rows, Z-type on the
// left/right columns, which makes rows of Z operators and columns of X
// operators the logical observables.
//
// Schedule: X-ancillas touch their data neighbors in Z-order
// (NW, NE, SW, SE); Z-ancillas in N-order (NW, SW, NE, SE). X-ancillas are
// CX controls, Z-ancillas are CX targets.
struct CodeLayout {
  int d = 0;
  int num_data = 0;
  int num_anc = 0;
  std::vector<NodeId> nodes;  // data first (row-major), then ancillas in scan order
  std::vector<std::pair<int, int>> tanner_edges;  // (ancilla node, data node)
  std::array<std::vector<std::pair<int, int>>, 4> schedule;  // per layer
  std::vector<std::vector<int>> observables_z;  // d rows of data node indices
  std::vector<std::vector<int>> observables_x;  // d columns

  // Derived lookups.
  std::vector<std::vector<int>> anc_support;  // ancilla ordinal -> sorted data nodes
  std::vector<std::array<int, 4>> anc_slot;   // ancilla ordinal -> data node per layer, -1 if none
  std::vector<std::vector<int>> data_anc;     // data node -> adjacent ancilla ordinals
  std::array<std::vector<int>, 4> idle_nodes; // nodes with no scheduled CX in each layer

  int total_nodes() const { return num_data + num_anc; }
  int anc_ordinal(int node_index) const { return node_index - num_data; }
  int anc_node(int ordinal) const { return num_data + ordinal; }

  bool anc_is_x(int ordinal) const {
    return nodes[anc_node(ordinal)].kind == NodeKind::AncillaX;
  }
  // On-basis ancillas measure the stabilizers that are deterministic for the
  // given memory task (Z-ancillas for Z memory, X for X memory).
  bool is_on_basis(int ordinal, Basis b) const {
    return (b == Basis::Z) != anc_is_x(ordinal);
  }

  const std::vector<std::vector<int>>& observables(Basis b) const {
    return b == Basis::Z ? observables_z : observables_x;
  }

  // Detector index space: slices are 1-based, slice T+1 is the final-readout
  // comparison. Index = (slice-1)*num_anc + ordinal.
  int detector_index(int ordinal, int slice) const {
    return (slice - 1) * num_anc + ordinal;
  }
  int num_detectors(int rounds) const { return (rounds + 1) * num_anc; }

  // True for data qubits with all four ancilla neighbors present.
  bool data_is_bulk(int data_node) const {
    return data_anc[data_node].size() == 4;
  }
};

// Throws std::invalid_argument unless d is odd and >= 3.
CodeLayout build_layout(int d);

struct DistanceMatrix {
  int n = 0;
  int cap = 0;
  std::vector<int> dist;  // n*n hop counts, clipped at cap

  int operator()(int u, int v) const { return dist[static_cast<size_t>(u) * n + v]; }
  int max_value() const;
};

// Breadth-first hop counts on the Tanner graph, entries clipped at cap.
DistanceMatrix shortest_distances(const CodeLayout& layout, int cap);

// Structured-text export (nodes, edges, schedule, observables) for golden
// file tests.
std::string dump_layout(const CodeLayout& layout);

}  // namespace qlw
