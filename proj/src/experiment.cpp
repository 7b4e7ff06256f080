#include "qlw/experiment.hpp"

#include <algorithm>

#include "qlw/tableau.hpp"

namespace qlw {

void NoiseParams::validate() const {
  auto check = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
  };
  check(p_pauli, "p_pauli");
  check(p_meas, "p_meas");
  check(p_loss, "p_loss");
}

namespace {

// Executes the walk on a tableau with sampled noise, loss bookkeeping and
// optional deterministic injections.
struct ShotExecutor {
  const CodeLayout& layout;
  const NoiseParams& noise;
  int T;
  Basis basis;
  SplitRng& rng;
  const std::vector<Injection>* injections;
  const std::vector<ForcedLoss>* forced_data;
  const std::vector<ForcedLoss>* forced_anc;

  Tableau tableau;
  std::vector<char> lost_data;
  std::vector<char> anc_lost;
  bool pending_flip = false;
  ShotRecord rec;

  ShotExecutor(const CodeLayout& l, const NoiseParams& np, int rounds, Basis b,
               SplitRng& r, const std::vector<Injection>* inj,
               const std::vector<ForcedLoss>* fd, const std::vector<ForcedLoss>* fa)
      : layout(l),
        noise(np),
        T(rounds),
        basis(b),
        rng(r),
        injections(inj),
        forced_data(fd),
        forced_anc(fa),
        tableau(static_cast<size_t>(l.total_nodes())),
        lost_data(l.num_data, 0),
        anc_lost(l.num_anc, 0) {
    rec.basis = b;
    rec.d = l.d;
    rec.T = rounds;
    rec.num_data = l.num_data;
    rec.num_anc = l.num_anc;
    rec.ancilla_outcomes = BitVec(static_cast<size_t>(rounds) * l.num_anc);
    rec.final_readout = BitVec(l.num_data);
    rec.loss_mask_truth = BitVec(static_cast<size_t>(rounds) * l.num_data);
    rec.ancilla_loss_truth = BitVec(static_cast<size_t>(rounds) * l.num_anc);
    rec.logical_labels = BitVec(l.d);
    rec.excluded_observables = BitVec(l.d);
  }

  bool node_lost(int node) const {
    return node < layout.num_data ? lost_data[node] != 0
                                  : anc_lost[layout.anc_ordinal(node)] != 0;
  }

  const Injection* injection_at(int site) const {
    if (!injections) return nullptr;
    for (const Injection& inj : *injections) {
      if (inj.where == Injection::Where::AtSite && inj.site_index == site)
        return &inj;
    }
    return nullptr;
  }

  void apply_pauli_code(int code, int node) {
    if (code == 1) tableau.apply_x(node);
    if (code == 2) tableau.apply_y(node);
    if (code == 3) tableau.apply_z(node);
  }

  void init() {
    if (basis == Basis::X) {
      for (int q = 0; q < layout.num_data; ++q) tableau.apply_h(q);
    }
  }

  void round_start(int r) {
    if (injections) {
      for (const Injection& inj : *injections) {
        if (inj.where == Injection::Where::BetweenRounds && inj.round == r &&
            !node_lost(inj.node)) {
          apply_pauli_code(inj.pauli1, inj.node);
        }
      }
    }
    if (forced_data) {
      for (const ForcedLoss& f : *forced_data) {
        if (f.round == r) lost_data[f.node] = 1;
      }
    }
    for (int q = 0; q < layout.num_data; ++q) {
      if (!lost_data[q] && rng.bernoulli(noise.p_loss)) lost_data[q] = 1;
      if (lost_data[q])
        rec.loss_mask_truth.set(static_cast<size_t>(r - 1) * layout.num_data + q, true);
    }
    for (int a = 0; a < layout.num_anc; ++a) {
      anc_lost[a] = rng.bernoulli(noise.p_loss) ? 1 : 0;
    }
    if (forced_anc) {
      for (const ForcedLoss& f : *forced_anc) {
        if (f.round == r) anc_lost[f.node] = 1;
      }
    }
    for (int a = 0; a < layout.num_anc; ++a) {
      if (anc_lost[a])
        rec.ancilla_loss_truth.set(static_cast<size_t>(r - 1) * layout.num_anc + a, true);
    }
  }

  void reset_anc(int ord) {
    if (anc_lost[ord]) return;
    tableau.reset_z(layout.anc_node(ord), rng);
  }

  void h_gate(int node) {
    if (node_lost(node)) return;
    tableau.apply_h(node);
  }

  void cx(int anc_node, int data_node, int /*layer*/) {
    bool a_lost = anc_lost[layout.anc_ordinal(anc_node)];
    bool d_lost = lost_data[data_node] != 0;
    if (a_lost || d_lost) {
      // Skipped gate: the surviving endpoint idles through this layer.
      if (!a_lost) tableau.depolarize1(anc_node, noise.p_pauli, rng);
      if (!d_lost) tableau.depolarize1(data_node, noise.p_pauli, rng);
      return;
    }
    if (layout.nodes[anc_node].kind == NodeKind::AncillaX)
      tableau.apply_cx(anc_node, data_node);
    else
      tableau.apply_cx(data_node, anc_node);
  }

  void noise_d1(int site, int node) {
    if (node_lost(node)) return;
    if (const Injection* inj = injection_at(site)) apply_pauli_code(inj->pauli1, node);
    tableau.depolarize1(node, noise.p_pauli, rng);
  }

  void noise_d2(int site, int anc_node, int data_node, int /*layer*/) {
    if (anc_lost[layout.anc_ordinal(anc_node)] || lost_data[data_node]) return;
    if (const Injection* inj = injection_at(site)) {
      apply_pauli_code(inj->pauli1, anc_node);
      apply_pauli_code(inj->pauli2, data_node);
    }
    tableau.depolarize2(anc_node, data_node, noise.p_pauli, rng);
  }

  void noise_idle(int site, int node, int /*layer*/) {
    if (node_lost(node)) return;
    if (const Injection* inj = injection_at(site)) apply_pauli_code(inj->pauli1, node);
    tableau.depolarize1(node, noise.p_pauli, rng);
  }

  void meas_flip_site(int site, int ord, int /*round*/) {
    pending_flip = false;
    if (anc_lost[ord]) return;
    if (const Injection* inj = injection_at(site)) pending_flip = inj->flip_outcome;
    pending_flip ^= rng.bernoulli(noise.p_meas);
  }

  void measure_anc(int ord, int round) {
    bool bit = false;
    if (!anc_lost[ord]) {
      bit = tableau.measure_z(layout.anc_node(ord), rng).value ^ pending_flip;
    }
    rec.ancilla_outcomes.set(static_cast<size_t>(round - 1) * layout.num_anc + ord, bit);
  }

  void final_flip_site(int site, int q) {
    pending_flip = false;
    if (lost_data[q]) return;
    if (const Injection* inj = injection_at(site)) pending_flip = inj->flip_outcome;
    pending_flip ^= rng.bernoulli(noise.p_meas);
  }

  void final_measure(int q) {
    bool bit = false;
    if (!lost_data[q]) {
      bit = tableau.measure_z(q, rng).value ^ pending_flip;
    }
    rec.final_readout.set(q, bit);
  }

  void done() {
    rec.detectors =
        compute_detectors(layout, basis, T, rec.ancilla_outcomes, rec.final_readout);
    const auto& obs = layout.observables(basis);
    for (int i = 0; i < layout.d; ++i) {
      bool parity = false;
      bool excluded = false;
      for (int q : obs[i]) {
        parity ^= rec.final_readout.get(q);
        excluded = excluded || lost_data[q];
      }
      // The noiseless initial value of every on-basis observable is 0, so the
      // label is the measured parity directly.
      rec.logical_labels.set(i, parity);
      rec.excluded_observables.set(i, excluded);
    }
  }
};

// Collects noise sites without touching a tableau.
struct SiteCollector {
  const CodeLayout& layout;
  const NoiseParams& noise;
  std::vector<FaultSite> sites;

  void init() {}
  void round_start(int) {}
  void reset_anc(int) {}
  void h_gate(int) {}
  void cx(int, int, int) {}
  void measure_anc(int, int) {}
  void final_measure(int) {}
  void done() {}

  int current_round = 0;

  void noise_d1(int site, int node) {
    sites.push_back({site, SiteKind::Depol1, current_round, -1, node, -1, noise.p_pauli});
  }
  void noise_d2(int site, int anc, int data, int layer) {
    sites.push_back({site, SiteKind::Depol2, current_round, layer, anc, data, noise.p_pauli});
  }
  void noise_idle(int site, int node, int layer) {
    sites.push_back({site, SiteKind::Idle, current_round, layer, node, -1, noise.p_pauli});
  }
  void meas_flip_site(int site, int ord, int round) {
    sites.push_back({site, SiteKind::MeasFlip, round, -1, layout.anc_node(ord), -1, noise.p_meas});
  }
  void final_flip_site(int site, int q) {
    sites.push_back({site, SiteKind::FinalFlip, 0, -1, q, -1, noise.p_meas});
  }
};

}  // namespace

ShotRecord run_shot_ex(const CodeLayout& layout, const NoiseParams& noise, int T,
                       Basis basis, SplitRng& rng,
                       const std::vector<Injection>& injections,
                       const std::vector<ForcedLoss>& forced_data_loss,
                       const std::vector<ForcedLoss>& forced_anc_loss) {
  noise.validate();
  ShotExecutor exec(layout, noise, T, basis, rng,
                    injections.empty() ? nullptr : &injections,
                    forced_data_loss.empty() ? nullptr : &forced_data_loss,
                    forced_anc_loss.empty() ? nullptr : &forced_anc_loss);
  walk_circuit(layout, T, basis, exec);
  return std::move(exec.rec);
}

ShotRecord run_shot(const CodeLayout& layout, const NoiseParams& noise, int T,
                    Basis basis, SplitRng& rng) {
  return run_shot_ex(layout, noise, T, basis, rng, {}, {}, {});
}

std::vector<FaultSite> enumerate_fault_sites(const CodeLayout& layout,
                                             const NoiseParams& noise, int T,
                                             Basis basis) {
  struct Collector : SiteCollector {
    void round_start(int r) { current_round = r; }
  };
  Collector c{{layout, noise, {}}};
  walk_circuit(layout, T, basis, c);
  return std::move(c.sites);
}

BitVec compute_detectors(const CodeLayout& layout, Basis basis, int T,
                         const BitVec& ancilla_outcomes,
                         const BitVec& final_readout) {
  const size_t na = static_cast<size_t>(layout.num_anc);
  if (ancilla_outcomes.n != static_cast<size_t>(T) * na)
    throw std::invalid_argument("ancilla outcome volume shape mismatch");
  if (final_readout.n != static_cast<size_t>(layout.num_data))
    throw std::invalid_argument("final readout shape mismatch");

  BitVec det(static_cast<size_t>(T + 1) * na);
  for (int a = 0; a < layout.num_anc; ++a) {
    bool on_basis = layout.is_on_basis(a, basis);
    if (on_basis) {
      // Initial stabilizer values are deterministically 0 in the task basis.
      det.set(static_cast<size_t>(a), ancilla_outcomes.get(static_cast<size_t>(a)));
    }
    for (int r = 2; r <= T; ++r) {
      bool prev = ancilla_outcomes.get(static_cast<size_t>(r - 2) * na + a);
      bool cur = ancilla_outcomes.get(static_cast<size_t>(r - 1) * na + a);
      det.set(static_cast<size_t>(r - 1) * na + a, prev ^ cur);
    }
    if (on_basis) {
      bool parity = false;
      for (int q : layout.anc_support[a]) parity ^= final_readout.get(q);
      bool last = ancilla_outcomes.get(static_cast<size_t>(T - 1) * na + a);
      det.set(static_cast<size_t>(T) * na + a, parity ^ last);
    }
  }
  return det;
}

Dataset sample_dataset(const CodeLayout& layout, const NoiseParams& noise, int T,
                       Basis basis, uint64_t shots, uint64_t seed) {
  if (shots < 1) throw std::invalid_argument("shot count must be >= 1");
  noise.validate();
  Dataset ds;
  ds.header.d = static_cast<uint16_t>(layout.d);
  ds.header.T = static_cast<uint16_t>(T);
  ds.header.basis = basis;
  ds.header.noise = noise;
  ds.header.seed = seed;
  ds.header.shot_count = shots;
  ds.shots.reserve(shots);
  for (uint64_t i = 0; i < shots; ++i) {
    SplitRng rng(seed, i);
    ds.shots.push_back(run_shot(layout, noise, T, basis, rng));
  }
  return ds;
}

}  // namespace qlw
