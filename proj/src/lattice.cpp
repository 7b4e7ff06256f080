#include "qlw/lattice.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace qlw {

const char* to_string(Basis b) { return b == Basis::Z ? "Z" : "X"; }

Basis basis_from_string(const std::string& s) {
  if (s == "Z" || s == "z") return Basis::Z;
  if (s == "X" || s == "x") return Basis::X;
  throw std::invalid_argument("basis must be X or Z, got '" + s + "'");
}

namespace {

bool anc_kind_is_x(int x, int y) { return ((x + y) / 2) % 2 == 1; }

// Present ancilla positions: all interior candidates; on the top/bottom rows
// only X-type survive, on the left/right columns only Z-type; corners never.
bool anc_present(int x, int y, int d) {
  const int lim = 2 * d;
  bool x_edge = (x == 0 || x == lim);
  bool y_edge = (y == 0 || y == lim);
  if (x_edge && y_edge) return false;
  if (y_edge) return anc_kind_is_x(x, y);
  if (x_edge) return !anc_kind_is_x(x, y);
  return true;
}

// Per-ancilla slot order, indexed by schedule layer. Offsets are (dx, dy)
// with y growing down, so NW = (-1,-1).
constexpr std::array<std::pair<int, int>, 4> kXOrder = {
    {{-1, -1}, {+1, -1}, {-1, +1}, {+1, +1}}};  // NW, NE, SW, SE
constexpr std::array<std::pair<int, int>, 4> kZOrder = {
    {{-1, -1}, {-1, +1}, {+1, -1}, {+1, +1}}};  // NW, SW, NE, SE

}  // namespace

CodeLayout build_layout(int d) {
  if (d < 3 || d % 2 == 0) {
    throw std::invalid_argument("code distance must be an odd integer >= 3, got " +
                                std::to_string(d));
  }

  CodeLayout layout;
  layout.d = d;
  layout.num_data = d * d;

  // Data qubits row-major: index = row*d + col, at (2*col+1, 2*row+1).
  std::map<std::pair<int, int>, int> node_at;
  for (int row = 0; row < d; ++row) {
    for (int col = 0; col < d; ++col) {
      int idx = row * d + col;
      layout.nodes.push_back({idx, NodeKind::Data, 2 * col + 1, 2 * row + 1});
      node_at[{2 * col + 1, 2 * row + 1}] = idx;
    }
  }

  // Ancillas in scan order (y outer, x inner).
  for (int y = 0; y <= 2 * d; y += 2) {
    for (int x = 0; x <= 2 * d; x += 2) {
      if (!anc_present(x, y, d)) continue;
      int idx = static_cast<int>(layout.nodes.size());
      layout.nodes.push_back(
          {idx, anc_kind_is_x(x, y) ? NodeKind::AncillaX : NodeKind::AncillaZ, x, y});
      node_at[{x, y}] = idx;
    }
  }
  layout.num_anc = static_cast<int>(layout.nodes.size()) - layout.num_data;

  layout.anc_support.resize(layout.num_anc);
  layout.anc_slot.assign(layout.num_anc, {-1, -1, -1, -1});
  layout.data_anc.resize(layout.num_data);

  for (int ord = 0; ord < layout.num_anc; ++ord) {
    const NodeId& anc = layout.nodes[layout.anc_node(ord)];
    const auto& order = anc.kind == NodeKind::AncillaX ? kXOrder : kZOrder;
    for (int layer = 0; layer < 4; ++layer) {
      auto [dx, dy] = order[layer];
      auto it = node_at.find({anc.x + dx, anc.y + dy});
      if (it == node_at.end()) continue;
      int data = it->second;
      layout.anc_slot[ord][layer] = data;
      layout.anc_support[ord].push_back(data);
      layout.data_anc[data].push_back(ord);
      layout.tanner_edges.emplace_back(anc.index, data);
      layout.schedule[layer].emplace_back(anc.index, data);
    }
    std::sort(layout.anc_support[ord].begin(), layout.anc_support[ord].end());
  }

  for (int layer = 0; layer < 4; ++layer) {
    std::vector<char> busy(layout.total_nodes(), 0);
    for (auto [a, b] : layout.schedule[layer]) busy[a] = busy[b] = 1;
    for (int node = 0; node < layout.total_nodes(); ++node) {
      if (!busy[node]) layout.idle_nodes[layer].push_back(node);
    }
  }

  // Observables: row/column i is the set of data qubits with the i-th odd
  // coordinate.
  layout.observables_z.resize(d);
  layout.observables_x.resize(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      layout.observables_z[i].push_back(i * d + j);  // row i (fixed y)
      layout.observables_x[i].push_back(j * d + i);  // column i (fixed x)
    }
  }
  return layout;
}

DistanceMatrix shortest_distances(const CodeLayout& layout, int cap) {
  const int n = layout.total_nodes();
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : layout.tanner_edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  DistanceMatrix m;
  m.n = n;
  m.cap = cap;
  m.dist.assign(static_cast<size_t>(n) * n, cap);
  for (int src = 0; src < n; ++src) {
    std::vector<int> hops(n, -1);
    std::queue<int> q;
    hops[src] = 0;
    q.push(src);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u]) {
        if (hops[v] < 0) {
          hops[v] = hops[u] + 1;
          q.push(v);
        }
      }
    }
    for (int v = 0; v < n; ++v) {
      m.dist[static_cast<size_t>(src) * n + v] = std::min(hops[v], cap);
    }
  }
  return m;
}

int DistanceMatrix::max_value() const {
  int best = 0;
  for (int v : dist) best = std::max(best, v);
  return best;
}

std::string dump_layout(const CodeLayout& layout) {
  std::ostringstream out;
  out << "layout d=" << layout.d << " data=" << layout.num_data
      << " anc=" << layout.num_anc << "\n";
  for (const NodeId& node : layout.nodes) {
    const char* kind = node.kind == NodeKind::Data
                           ? "data"
                           : (node.kind == NodeKind::AncillaX ? "ancX" : "ancZ");
    out << "node " << node.index << " " << kind << " " << node.x << " " << node.y
        << "\n";
  }
  for (auto [a, b] : layout.tanner_edges) out << "edge " << a << " " << b << "\n";
  for (int layer = 0; layer < 4; ++layer) {
    out << "layer " << layer;
    for (auto [a, b] : layout.schedule[layer]) out << " " << a << ":" << b;
    out << "\n";
  }
  auto dump_obs = [&](const char* tag, const std::vector<std::vector<int>>& obs) {
    for (size_t i = 0; i < obs.size(); ++i) {
      out << tag << " " << i;
      for (int q : obs[i]) out << " " << q;
      out << "\n";
    }
  };
  dump_obs("obsZ", layout.observables_z);
  dump_obs("obsX", layout.observables_x);
  return out.str();
}

}  // namespace qlw
