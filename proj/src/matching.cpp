#include "qlw/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "qlw/blossom.hpp"

namespace qlw {

namespace {

// Pauli frame walked through the circuit: tracks the X and Z components of
// an injected fault and records which recorded bits it flips.
struct FrameVisitor {
  const CodeLayout& layout;
  int T;
  Basis basis;
  const FaultComponent& fault;

  std::vector<char> fx, fz;       // frame per node
  BitVec outcome_flips;           // T * num_anc
  BitVec final_flips;             // num_data
  int current_round = 0;

  FrameVisitor(const CodeLayout& l, int rounds, Basis b, const FaultComponent& f)
      : layout(l),
        T(rounds),
        basis(b),
        fault(f),
        fx(l.total_nodes(), 0),
        fz(l.total_nodes(), 0),
        outcome_flips(static_cast<size_t>(rounds) * l.num_anc),
        final_flips(l.num_data) {}

  void inject(int code, int node) {
    if (node < 0 || code == 0) return;
    if (code == 1 || code == 2) fx[node] ^= 1;
    if (code == 3 || code == 2) fz[node] ^= 1;
  }
  // The walk assigns consecutive site indices; the fault stores which index
  // it occupies.
  int fault_site_index = -1;

  void init() {}
  void round_start(int r) { current_round = r; }
  void reset_anc(int ord) {
    int node = layout.anc_node(ord);
    fx[node] = fz[node] = 0;
  }
  void h_gate(int node) { std::swap(fx[node], fz[node]); }
  void cx(int anc_node, int data_node, int /*layer*/) {
    int c = anc_node, t = data_node;
    if (layout.nodes[anc_node].kind != NodeKind::AncillaX) std::swap(c, t);
    fx[t] ^= fx[c];
    fz[c] ^= fz[t];
  }
  void noise_d1(int site, int node) {
    if (site == fault_site_index) inject(fault.pauli1, node);
  }
  void noise_d2(int site, int anc_node, int data_node, int /*layer*/) {
    if (site == fault_site_index) {
      inject(fault.pauli1, anc_node);
      inject(fault.pauli2, data_node);
    }
  }
  void noise_idle(int site, int node, int /*layer*/) {
    if (site == fault_site_index) inject(fault.pauli1, node);
  }
  void meas_flip_site(int site, int ord, int round) {
    if (site == fault_site_index && fault.kind == SiteKind::MeasFlip)
      outcome_flips.flip(static_cast<size_t>(round - 1) * layout.num_anc + ord);
  }
  void measure_anc(int ord, int round) {
    int node = layout.anc_node(ord);
    if (fx[node])
      outcome_flips.flip(static_cast<size_t>(round - 1) * layout.num_anc + ord);
  }
  void final_flip_site(int site, int q) {
    if (site == fault_site_index && fault.kind == SiteKind::FinalFlip)
      final_flips.flip(q);
  }
  void final_measure(int q) {
    if (fx[q]) final_flips.flip(q);
  }
  void done() {}
};

// Site index of a fault component within the walk numbering.
int locate_site(const CodeLayout& layout, const NoiseParams& noise, int T, Basis basis,
                const FaultComponent& fault) {
  // Fault sites are enumerated identically every time, so match on the
  // descriptor.
  std::vector<FaultSite> sites = enumerate_fault_sites(layout, noise, T, basis);
  for (const FaultSite& s : sites) {
    SiteKind k = s.kind;
    if (k != fault.kind) continue;
    if (s.round != fault.round || s.layer != fault.layer) continue;
    if (s.node1 != fault.node1 || s.node2 != fault.node2) continue;
    return s.index;
  }
  throw std::invalid_argument("fault component does not match any site");
}

}  // namespace

FaultEffect propagate_fault(const CodeLayout& layout, int T, Basis basis,
                            const FaultComponent& fault) {
  FrameVisitor v(layout, T, basis, fault);
  if (fault.site_index >= 0) {
    v.fault_site_index = fault.site_index;
  } else {
    NoiseParams unit;
    unit.p_pauli = 1.0;
    unit.p_meas = 1.0;
    v.fault_site_index = locate_site(layout, unit, T, basis, fault);
  }
  walk_circuit(layout, T, basis, v);

  FaultEffect eff;
  eff.obs_flips = BitVec(layout.d);

  // Detector flips are a linear function of outcome and readout flips.
  const int na = layout.num_anc;
  for (int a = 0; a < na; ++a) {
    bool on_basis = layout.is_on_basis(a, basis);
    auto flip_at = [&](int round) {
      return v.outcome_flips.get(static_cast<size_t>(round - 1) * na + a);
    };
    if (on_basis && flip_at(1)) eff.clicked.push_back(layout.detector_index(a, 1));
    for (int r = 2; r <= T; ++r) {
      if (flip_at(r - 1) ^ flip_at(r))
        eff.clicked.push_back(layout.detector_index(a, r));
    }
    if (on_basis) {
      bool parity = false;
      for (int q : layout.anc_support[a]) parity ^= v.final_flips.get(q);
      if (parity ^ flip_at(T)) eff.clicked.push_back(layout.detector_index(a, T + 1));
    }
  }
  std::sort(eff.clicked.begin(), eff.clicked.end());

  const auto& obs = layout.observables(basis);
  for (int i = 0; i < layout.d; ++i) {
    bool parity = false;
    for (int q : obs[i]) parity ^= v.final_flips.get(q);
    eff.obs_flips.set(i, parity);
  }
  return eff;
}

namespace {

struct EdgeKey {
  int u, v;  // u < v, or v == -1 for boundary
  bool operator<(const EdgeKey& o) const { return std::tie(u, v) < std::tie(o.u, o.v); }
};

void add_touched_data(std::vector<int>& touched, const CodeLayout& layout,
                      const FaultComponent& c) {
  auto add = [&](int node) {
    if (node >= 0 && node < layout.num_data) touched.push_back(node);
  };
  add(c.node1);
  add(c.node2);
}

// Data qubits the component's Pauli actually acts on; empty optional when it
// also acts on an ancilla (such mechanisms are never free under data loss).
std::optional<std::vector<int>> data_only_support(const CodeLayout& layout,
                                                  const FaultComponent& c) {
  std::vector<int> support;
  auto acts = [&](int pauli, int node) -> bool {
    if (pauli == 0) return true;
    if (node < 0 || node >= layout.num_data) return false;  // ancilla action
    support.push_back(node);
    return true;
  };
  switch (c.kind) {
    case SiteKind::Depol1:
    case SiteKind::Idle:
      if (!acts(c.pauli1, c.node1)) return std::nullopt;
      break;
    case SiteKind::Depol2:
      if (!acts(c.pauli1, c.node1)) return std::nullopt;
      if (!acts(c.pauli2, c.node2)) return std::nullopt;
      break;
    case SiteKind::MeasFlip:
      return std::nullopt;  // flips an ancilla readout
    case SiteKind::FinalFlip:
      support.push_back(c.node1);  // forced-0 readout of a lost qubit is free
      break;
  }
  if (support.empty()) return std::nullopt;
  std::sort(support.begin(), support.end());
  return support;
}

std::string describe_component(const FaultComponent& c) {
  static const char* kinds[] = {"depol1", "depol2", "idle", "meas_flip", "final_flip"};
  static const char pauli[] = {'I', 'X', 'Y', 'Z'};
  std::ostringstream s;
  s << kinds[static_cast<int>(c.kind)] << " r" << c.round;
  if (c.layer >= 0) s << " l" << c.layer;
  s << " n" << c.node1;
  if (c.node2 >= 0) s << "/" << c.node2;
  if (c.kind == SiteKind::Depol1 || c.kind == SiteKind::Depol2 || c.kind == SiteKind::Idle)
    s << " " << pauli[c.pauli1] << (c.node2 >= 0 ? std::string(1, pauli[c.pauli2]) : "");
  return s.str();
}

}  // namespace

DetectorGraph build_detector_graph(const CodeLayout& layout, const NoiseParams& noise,
                                   int T, Basis basis) {
  noise.validate();
  DetectorGraph graph;
  graph.d = layout.d;
  graph.T = T;
  graph.basis = basis;
  graph.num_anc = layout.num_anc;
  graph.num_detectors = layout.num_detectors(T);

  std::vector<FaultSite> sites = enumerate_fault_sites(layout, noise, T, basis);

  struct Accum {
    double prob = 0.0;
    BitVec obs_flips;
    std::vector<int> touched;
    std::vector<std::vector<int>> erase_supports;
    std::vector<FaultComponent> provenance;
    bool first = true;
  };
  std::map<EdgeKey, Accum> accum;

  auto detector_kind_is_x = [&](int det) {
    return layout.anc_is_x(det % layout.num_anc);
  };

  auto record_part = [&](const std::vector<int>& clicks, const BitVec& flips, double p,
                         const FaultComponent& comp) {
    if (clicks.empty() && !flips.any()) return;
    if (clicks.empty())
      throw std::runtime_error("fault flips an observable without any detector: " +
                               describe_component(comp));
    if (clicks.size() > 2)
      throw std::runtime_error("fault clicks " + std::to_string(clicks.size()) +
                               " same-type detectors (schedule bug): " +
                               describe_component(comp));
    EdgeKey key{clicks[0], clicks.size() == 2 ? clicks[1] : -1};
    if (key.v >= 0 && key.v < key.u) std::swap(key.u, key.v);
    Accum& acc = accum[key];
    if (acc.first) {
      acc.obs_flips = flips;
      acc.first = false;
    } else if (!(acc.obs_flips == flips)) {
      throw std::runtime_error("parallel faults disagree on observable flips: " +
                               describe_component(comp));
    }
    acc.prob = acc.prob * (1.0 - p) + p * (1.0 - acc.prob);
    add_touched_data(acc.touched, layout, comp);
    if (auto support = data_only_support(layout, comp)) {
      if (std::find(acc.erase_supports.begin(), acc.erase_supports.end(), *support) ==
          acc.erase_supports.end()) {
        acc.erase_supports.push_back(std::move(*support));
      }
    }
    acc.provenance.push_back(comp);
  };

  auto process_component = [&](const FaultComponent& comp, double p) {
    if (p <= 0.0) return;
    FaultEffect eff = propagate_fault(layout, T, basis, comp);
    std::vector<int> part_z, part_x;
    for (int det : eff.clicked) {
      (detector_kind_is_x(det) ? part_x : part_z).push_back(det);
    }
    // Observable flips ride on the on-basis detector part (off-basis faults
    // cannot flip task-basis observables).
    const std::vector<int>& on_part = basis == Basis::Z ? part_z : part_x;
    const std::vector<int>& off_part = basis == Basis::Z ? part_x : part_z;
    BitVec none(layout.d);
    if (eff.obs_flips.any() && on_part.empty())
      throw std::runtime_error("observable flip without on-basis detectors: " +
                               describe_component(comp));
    record_part(on_part, eff.obs_flips, p, comp);
    record_part(off_part, none, p, comp);
  };

  for (const FaultSite& site : sites) {
    if (site.prob <= 0.0) continue;
    FaultComponent comp;
    comp.kind = site.kind;
    comp.round = site.round;
    comp.layer = site.layer;
    comp.node1 = site.node1;
    comp.node2 = site.node2;
    comp.site_index = site.index;
    switch (site.kind) {
      case SiteKind::Depol1:
      case SiteKind::Idle:
        for (int p1 = 1; p1 <= 3; ++p1) {
          comp.pauli1 = p1;
          comp.pauli2 = 0;
          process_component(comp, site.prob / 3.0);
        }
        break;
      case SiteKind::Depol2:
        for (int k = 1; k < 16; ++k) {
          comp.pauli1 = k >> 2;
          comp.pauli2 = k & 3;
          process_component(comp, site.prob / 15.0);
        }
        break;
      case SiteKind::MeasFlip:
      case SiteKind::FinalFlip:
        comp.pauli1 = 0;
        comp.pauli2 = 0;
        process_component(comp, site.prob);
        break;
    }
  }

  graph.adj.assign(graph.num_detectors + 1, {});
  for (auto& [key, acc] : accum) {
    GraphEdge edge;
    edge.u = key.u;
    edge.v = key.v;
    edge.prob = acc.prob;
    edge.weight = std::log((1.0 - acc.prob) / acc.prob);
    edge.obs_flips = acc.obs_flips;
    std::sort(acc.touched.begin(), acc.touched.end());
    acc.touched.erase(std::unique(acc.touched.begin(), acc.touched.end()),
                      acc.touched.end());
    edge.touched_data = std::move(acc.touched);
    edge.erase_supports = std::move(acc.erase_supports);
    edge.provenance = std::move(acc.provenance);
    int id = static_cast<int>(graph.edges.size());
    graph.adj[edge.u].push_back(id);
    graph.adj[edge.v >= 0 ? edge.v : graph.boundary_vertex()].push_back(id);
    graph.edges.push_back(std::move(edge));
  }
  return graph;
}

std::vector<double> erased_weights(const DetectorGraph& graph,
                                   const std::vector<int>& loss_data_nodes) {
  std::vector<char> lost;
  for (int q : loss_data_nodes) {
    if (q < 0) throw std::invalid_argument("unknown data qubit id");
    if (q >= static_cast<int>(lost.size())) lost.resize(q + 1, 0);
    lost[q] = 1;
  }
  std::vector<double> w(graph.edges.size());
  auto is_lost = [&](int q) { return q < static_cast<int>(lost.size()) && lost[q]; };
  for (size_t i = 0; i < graph.edges.size(); ++i) {
    const GraphEdge& e = graph.edges[i];
    // Erased iff some single-fault mechanism of this edge acts entirely on
    // lost data qubits: that mechanism then happens freely.
    bool erased = false;
    for (const std::vector<int>& support : e.erase_supports) {
      bool all_lost = true;
      for (int q : support) all_lost = all_lost && is_lost(q);
      if (all_lost) {
        erased = true;
        break;
      }
    }
    w[i] = erased ? std::min(graph.erase_weight, e.weight) : e.weight;
  }
  return w;
}

DetectorGraph erasure_reweight(const DetectorGraph& graph,
                               const std::vector<int>& loss_data_nodes) {
  DetectorGraph out = graph;
  std::vector<double> w = erased_weights(graph, loss_data_nodes);
  for (size_t i = 0; i < out.edges.size(); ++i) out.edges[i].weight = w[i];
  return out;
}

namespace {

constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct DijkstraResult {
  std::vector<double> dist;
  std::vector<int> via_edge;  // edge id used to reach each vertex
};

DijkstraResult dijkstra(const DetectorGraph& graph, const std::vector<double>& weights,
                        int source) {
  const int nv = graph.num_detectors + 1;
  DijkstraResult res;
  res.dist.assign(nv, kUnreachable);
  res.via_edge.assign(nv, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  res.dist[source] = 0.0;
  heap.push({0.0, source});
  while (!heap.empty()) {
    auto [du, u] = heap.top();
    heap.pop();
    if (du > res.dist[u]) continue;
    for (int eid : graph.adj[u]) {
      const GraphEdge& e = graph.edges[eid];
      int a = e.u;
      int b = e.v >= 0 ? e.v : graph.boundary_vertex();
      int other = (a == u) ? b : a;
      double nd = du + weights[eid];
      if (nd < res.dist[other]) {
        res.dist[other] = nd;
        res.via_edge[other] = eid;
        heap.push({nd, other});
      }
    }
  }
  return res;
}

constexpr long long kQuantScale = 1LL << 32;

}  // namespace

long long quantize_weight(double w) {
  return static_cast<long long>(std::llround(w * static_cast<double>(kQuantScale)));
}

MatchingInstance build_matching_instance(const DetectorGraph& graph,
                                         const BitVec& detectors,
                                         const std::vector<double>* weight_override) {
  if (detectors.n != static_cast<size_t>(graph.num_detectors))
    throw std::invalid_argument("detector volume does not match graph");
  MatchingInstance inst;
  for (int i = 0; i < graph.num_detectors; ++i) {
    if (detectors.get(i)) inst.clicks.push_back(i);
  }
  std::vector<double> base_weights;
  const std::vector<double>* weights = weight_override;
  if (!weights) {
    base_weights.resize(graph.edges.size());
    for (size_t i = 0; i < graph.edges.size(); ++i)
      base_weights[i] = graph.edges[i].weight;
    weights = &base_weights;
  }
  const int c = static_cast<int>(inst.clicks.size());
  inst.pair_cost.assign(c, std::vector<long long>(c, MatchingInstance::kNoPath));
  inst.boundary_cost.assign(c, MatchingInstance::kNoPath);
  for (int i = 0; i < c; ++i) {
    DijkstraResult res = dijkstra(graph, *weights, inst.clicks[i]);
    for (int j = 0; j < c; ++j) {
      if (j != i && res.dist[inst.clicks[j]] < kUnreachable)
        inst.pair_cost[i][j] = quantize_weight(res.dist[inst.clicks[j]]);
    }
    if (res.dist[graph.boundary_vertex()] < kUnreachable)
      inst.boundary_cost[i] = quantize_weight(res.dist[graph.boundary_vertex()]);
  }
  return inst;
}

BitVec mwpm_decode(const DetectorGraph& graph, const BitVec& detectors,
                   const std::vector<double>* weight_override,
                   long long* matched_cost) {
  if (detectors.n != static_cast<size_t>(graph.num_detectors))
    throw std::invalid_argument("detector volume does not match graph");
  BitVec prediction(graph.d);
  if (matched_cost) *matched_cost = 0;

  std::vector<int> clicks;
  for (int i = 0; i < graph.num_detectors; ++i) {
    if (detectors.get(i)) clicks.push_back(i);
  }
  if (clicks.empty()) return prediction;

  std::vector<double> base_weights;
  const std::vector<double>* weights = weight_override;
  if (!weights) {
    base_weights.resize(graph.edges.size());
    for (size_t i = 0; i < graph.edges.size(); ++i)
      base_weights[i] = graph.edges[i].weight;
    weights = &base_weights;
  }

  const int c = static_cast<int>(clicks.size());
  std::vector<DijkstraResult> paths(c);
  for (int i = 0; i < c; ++i) paths[i] = dijkstra(graph, *weights, clicks[i]);

  // Matching instance: clicks are nodes 0..c-1, boundary copies c..2c-1.
  // Copy-copy pairs cost nothing, so odd leftovers always exit via the
  // boundary.
  long long max_dist = 0;
  auto pair_dist = [&](int i, int j) { return paths[i].dist[clicks[j]]; };
  for (int i = 0; i < c; ++i) {
    for (int j = i + 1; j < c; ++j) {
      if (pair_dist(i, j) < kUnreachable)
        max_dist = std::max(max_dist, quantize_weight(pair_dist(i, j)));
    }
    if (paths[i].dist[graph.boundary_vertex()] < kUnreachable)
      max_dist =
          std::max(max_dist, quantize_weight(paths[i].dist[graph.boundary_vertex()]));
  }
  const long long shift = max_dist + 1;
  // Cardinality must dominate weight so the maximum-weight matching is
  // perfect: every edge weight is in [1, shift], and a perfect matching has
  // c pairs.
  const long long big = shift * (c + 1);

  WeightedBlossom blossom(2 * c);
  for (int i = 0; i < c; ++i) {
    for (int j = i + 1; j < c; ++j) {
      double dij = pair_dist(i, j);
      if (dij < kUnreachable)
        blossom.set_weight(i, j, big - quantize_weight(dij));
    }
    double db = paths[i].dist[graph.boundary_vertex()];
    if (db < kUnreachable) blossom.set_weight(i, c + i, big - quantize_weight(db));
    for (int j = i + 1; j < c; ++j) blossom.set_weight(c + i, c + j, big);
  }
  auto [total, pairs] = blossom.solve();
  (void)total;
  if (pairs != c)
    throw std::runtime_error("matching infeasible: disconnected clicked detectors");

  auto xor_path = [&](int source_idx, int dest_vertex) {
    const DijkstraResult& res = paths[source_idx];
    int v = dest_vertex;
    while (v != clicks[source_idx]) {
      int eid = res.via_edge[v];
      const GraphEdge& e = graph.edges[eid];
      prediction ^= e.obs_flips;
      int a = e.u;
      int b = e.v >= 0 ? e.v : graph.boundary_vertex();
      v = (v == a) ? b : a;
    }
  };

  std::vector<char> done(c, 0);
  for (int i = 0; i < c; ++i) {
    if (done[i]) continue;
    int mate = blossom.mate(i);
    if (mate == c + i) {
      xor_path(i, graph.boundary_vertex());
      if (matched_cost)
        *matched_cost += quantize_weight(paths[i].dist[graph.boundary_vertex()]);
      done[i] = 1;
    } else if (mate >= 0 && mate < c) {
      xor_path(i, clicks[mate]);
      if (matched_cost) *matched_cost += quantize_weight(pair_dist(i, mate));
      done[i] = done[mate] = 1;
    }
  }
  return prediction;
}

std::string dump_graph(const DetectorGraph& graph) {
  std::ostringstream out;
  out << "graph d=" << graph.d << " T=" << graph.T << " basis=" << to_string(graph.basis)
      << " detectors=" << graph.num_detectors << " edges=" << graph.edges.size() << "\n";
  for (const GraphEdge& e : graph.edges) {
    out << "edge " << e.u << " " << (e.v >= 0 ? std::to_string(e.v) : "boundary")
        << " p=" << e.prob << " w=" << e.weight << " flips=";
    for (int i = 0; i < graph.d; ++i) out << (e.obs_flips.get(i) ? '1' : '0');
    out << " faults=" << e.provenance.size() << "\n";
  }
  return out.str();
}

}  // namespace qlw
