#include "qlw/stgnn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace qlw {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  if (hidden_dim < 1 || n_heads < 1 || hidden_dim % n_heads != 0)
    throw std::invalid_argument("hidden_dim must be a positive multiple of n_heads");
  if (kernel < 1 || kernel % 2 == 0)
    throw std::invalid_argument("temporal kernel width must be odd");
  if (blocks < 1) throw std::invalid_argument("need at least one block");
  if (distance_cap < 1) throw std::invalid_argument("distance_cap must be >= 1");
  if (lambda_logic < 0 || lambda_loss < 0 || (lambda_logic == 0 && lambda_loss == 0))
    throw std::invalid_argument("loss weights must be >= 0 and not both 0");
  if (dropout < 0 || dropout >= 1)
    throw std::invalid_argument("dropout must be in [0, 1)");
}

ParamTensor& ModelParams::find(const std::string& name) {
  for (ParamTensor& p : params)
    if (p.name == name) return p;
  throw std::invalid_argument("no parameter named " + name);
}

const ParamTensor& ModelParams::find(const std::string& name) const {
  for (const ParamTensor& p : params)
    if (p.name == name) return p;
  throw std::invalid_argument("no parameter named " + name);
}

int64_t ModelParams::total_parameters() const {
  int64_t n = 0;
  for (const ParamTensor& p : params) n += p.value.shape.numel();
  return n;
}

namespace {

std::atomic<uint64_t> g_forward_count{0};

void add_param(ModelParams& mp, const std::string& name, Shape shape, SplitRng& rng,
               double scale) {
  ParamTensor p;
  p.name = name;
  p.value = Tensor(shape, 0.0);
  if (scale > 0) {
    for (double& v : p.value.v) v = rng.normal() * scale;
  }
  p.adam_m = Tensor(shape, 0.0);
  p.adam_v = Tensor(shape, 0.0);
  mp.params.push_back(std::move(p));
}

void add_ones(ModelParams& mp, const std::string& name, Shape shape) {
  ParamTensor p;
  p.name = name;
  p.value = Tensor(shape, 1.0);
  p.adam_m = Tensor(shape, 0.0);
  p.adam_v = Tensor(shape, 0.0);
  mp.params.push_back(std::move(p));
}

double xavier(int fan_in, int fan_out) { return std::sqrt(2.0 / (fan_in + fan_out)); }

}  // namespace

ModelParams init_params(const ModelConfig& config, const CodeLayout& layout, int T,
                        const DistanceMatrix& dist) {
  config.validate();
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  ModelParams mp;
  mp.config = config;
  mp.d = layout.d;
  mp.T = T;
  mp.num_nodes = layout.total_nodes();
  mp.num_buckets = std::min(config.distance_cap, dist.max_value()) + 1;

  const int D = config.hidden_dim;
  SplitRng rng(config.init_seed, 0x5747u);

  const double emb = 0.02;
  add_param(mp, "embed.meas", Shape::of({2, D}), rng, emb);
  add_param(mp, "embed.det", Shape::of({2, D}), rng, emb);
  add_param(mp, "embed.node_type", Shape::of({2, D}), rng, emb);
  add_param(mp, "embed.anc_type", Shape::of({3, D}), rng, emb);
  add_param(mp, "embed.task", Shape::of({2, D}), rng, emb);
  add_param(mp, "embed.node_index", Shape::of({mp.num_nodes, D}), rng, emb);
  add_param(mp, "embed.proj_w", Shape::of({D, D}), rng, xavier(D, D));
  add_param(mp, "embed.proj_b", Shape::of({D}), rng, 0.0);

  for (int b = 0; b < config.blocks; ++b) {
    std::string pre = "blk" + std::to_string(b) + ".";
    add_ones(mp, pre + "gnn.ln_g", Shape::of({D}));
    add_param(mp, pre + "gnn.ln_b", Shape::of({D}), rng, 0.0);
    add_param(mp, pre + "gnn.w_msg", Shape::of({D, D}), rng, xavier(D, D));
    add_param(mp, pre + "gnn.w_self", Shape::of({D, D}), rng, xavier(D, D));
    add_param(mp, pre + "gnn.b1", Shape::of({D}), rng, 0.0);
    add_param(mp, pre + "gnn.w_out", Shape::of({D, D}), rng, xavier(D, D));
    add_param(mp, pre + "gnn.b2", Shape::of({D}), rng, 0.0);

    add_ones(mp, pre + "tmp.ln_g", Shape::of({D}));
    add_param(mp, pre + "tmp.ln_b", Shape::of({D}), rng, 0.0);
    add_param(mp, pre + "tmp.conv_w", Shape::of({config.kernel, D, D}), rng,
              xavier(config.kernel * D, D));
    add_param(mp, pre + "tmp.conv_b", Shape::of({D}), rng, 0.0);
    for (const char* nm : {"wq", "wk", "wv", "wo"})
      add_param(mp, pre + "tmp." + nm, Shape::of({D, D}), rng, xavier(D, D));
    for (const char* nm : {"bq", "bk", "bv", "bo"})
      add_param(mp, pre + "tmp." + nm, Shape::of({D}), rng, 0.0);
    add_param(mp, pre + "tmp.gate_wa", Shape::of({D, D}), rng, xavier(D, D));
    add_param(mp, pre + "tmp.gate_wb", Shape::of({D, D}), rng, xavier(D, D));
    add_param(mp, pre + "tmp.gate_b", Shape::of({D}), rng, 0.0);

    add_ones(mp, pre + "spa.ln_g", Shape::of({D}));
    add_param(mp, pre + "spa.ln_b", Shape::of({D}), rng, 0.0);
    for (const char* nm : {"wq", "wk", "wv", "wo"})
      add_param(mp, pre + "spa." + nm, Shape::of({D, D}), rng, xavier(D, D));
    for (const char* nm : {"bq", "bk", "bv", "bo"})
      add_param(mp, pre + "spa." + nm, Shape::of({D}), rng, 0.0);
    // Zero-init bias keeps early attention unbiased; gradients flow through
    // every reachable bucket.
    add_param(mp, pre + "spa.bias_table", Shape::of({config.n_heads, mp.num_buckets}),
              rng, 0.0);
  }

  add_param(mp, "head.logic.w1", Shape::of({D, D}), rng, xavier(D, D));
  add_param(mp, "head.logic.b1", Shape::of({D}), rng, 0.0);
  add_param(mp, "head.logic.w2", Shape::of({D, mp.d}), rng, xavier(D, mp.d));
  add_param(mp, "head.logic.b2", Shape::of({mp.d}), rng, 0.0);
  add_param(mp, "head.loss.w1", Shape::of({D, D}), rng, xavier(D, D));
  add_param(mp, "head.loss.b1", Shape::of({D}), rng, 0.0);
  add_param(mp, "head.loss.w2", Shape::of({D, 1}), rng, xavier(D, 1));
  add_param(mp, "head.loss.b2", Shape::of({1}), rng, 0.0);
  return mp;
}

namespace {

struct BuiltModel {
  Tape tape;
  std::vector<Var> pvars;
  std::vector<const std::string*> names;
  Var logical_logits;  // (B, d)
  Var loss_logits;     // (B, T, num_data)
  int B = 0, S = 0, N = 0, D = 0;

  Var p(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (*names[i] == name) return pvars[i];
    throw std::invalid_argument("no parameter var " + name);
  }
};

std::vector<int64_t> time_split_map(int B, int S, int N, int H, int dh) {
  const int D = H * dh;
  std::vector<int64_t> map(static_cast<size_t>(B) * S * N * D);
  int64_t i = 0;
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
          for (int j = 0; j < dh; ++j)
            map[i++] = ((static_cast<int64_t>(b) * S + s) * N + n) * D + h * dh + j;
  return map;
}

std::vector<int64_t> time_merge_map(int B, int S, int N, int H, int dh) {
  const int D = H * dh;
  std::vector<int64_t> map(static_cast<size_t>(B) * S * N * D);
  int64_t i = 0;
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      for (int n = 0; n < N; ++n)
        for (int dd = 0; dd < D; ++dd) {
          int h = dd / dh, j = dd % dh;
          int64_t g = (static_cast<int64_t>(b) * N + n) * H + h;
          map[i++] = (g * S + s) * dh + j;
        }
  return map;
}

std::vector<int64_t> space_split_map(int B, int S, int N, int H, int dh) {
  const int D = H * dh;
  std::vector<int64_t> map(static_cast<size_t>(B) * S * N * D);
  int64_t i = 0;
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      for (int h = 0; h < H; ++h)
        for (int n = 0; n < N; ++n)
          for (int j = 0; j < dh; ++j)
            map[i++] = ((static_cast<int64_t>(b) * S + s) * N + n) * D + h * dh + j;
  return map;
}

std::vector<int64_t> space_merge_map(int B, int S, int N, int H, int dh) {
  const int D = H * dh;
  std::vector<int64_t> map(static_cast<size_t>(B) * S * N * D);
  int64_t i = 0;
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      for (int n = 0; n < N; ++n)
        for (int dd = 0; dd < D; ++dd) {
          int h = dd / dh, j = dd % dh;
          int64_t g = (static_cast<int64_t>(b) * S + s) * H + h;
          map[i++] = (g * N + n) * dh + j;
        }
  return map;
}

void build_forward(BuiltModel& m, const ModelParams& mp, const CodeLayout& layout,
                   const DistanceMatrix& dist,
                   const std::vector<const ShotRecord*>& batch, SplitRng* dropout_rng) {
  g_forward_count.fetch_add(1, std::memory_order_relaxed);
  const ModelConfig& cfg = mp.config;
  const int B = static_cast<int>(batch.size());
  const int T = mp.T;
  const int S = T + 1;
  const int N = mp.num_nodes;
  const int D = cfg.hidden_dim;
  const int H = cfg.n_heads;
  const int dh = D / H;
  m.B = B;
  m.S = S;
  m.N = N;
  m.D = D;
  if (B < 1) throw std::invalid_argument("empty batch");

  Tape& t = m.tape;
  for (const ParamTensor& p : mp.params) {
    m.pvars.push_back(t.leaf(p.value));
    m.names.push_back(&p.name);
  }

  // Six input features per (slot, node): slot i holds detector slice i+1;
  // ancilla bit is the round i+1 outcome for i < T and the reconstructed
  // final-readout stabilizer parity at i = T. Data nodes carry 0 for the
  // measurement, detector and ancilla-type features.
  const int positions = B * S * N;
  std::vector<std::vector<int>> idx(6, std::vector<int>(positions, 0));
  for (int bi = 0; bi < B; ++bi) {
    const ShotRecord& rec = *batch[bi];
    if (rec.T != T || rec.num_data + rec.num_anc != N)
      throw std::invalid_argument("record shape does not match model geometry");
    for (int s = 0; s < S; ++s) {
      for (int n = 0; n < N; ++n) {
        int pos = (bi * S + s) * N + n;
        bool is_data = n < layout.num_data;
        int ord = n - layout.num_data;
        int meas = 0, det = 0;
        if (!is_data) {
          if (s < T) {
            meas = rec.outcome(ord, s + 1) ? 1 : 0;
          } else if (layout.is_on_basis(ord, rec.basis)) {
            bool parity = false;
            for (int q : layout.anc_support[ord]) parity ^= rec.final_readout.get(q);
            meas = parity ? 1 : 0;
          }
          det = rec.detector(ord, s + 1) ? 1 : 0;
        }
        idx[0][pos] = meas;
        idx[1][pos] = det;
        idx[2][pos] = is_data ? 0 : 1;
        idx[3][pos] = is_data ? 0 : (layout.anc_is_x(ord) ? 1 : 2);
        idx[4][pos] = rec.basis == Basis::Z ? 0 : 1;
        idx[5][pos] = n;
      }
    }
  }

  auto maybe_dropout = [&](Var v) {
    if (!dropout_rng || cfg.dropout <= 0.0) return v;
    std::vector<double> mask(t.val(v).size());
    const double keep = 1.0 - cfg.dropout;
    for (double& x : mask) x = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    return t.dropout_mask(v, std::move(mask));
  };

  Var x = t.embed_sum({m.p("embed.meas"), m.p("embed.det"), m.p("embed.node_type"),
                       m.p("embed.anc_type"), m.p("embed.task"), m.p("embed.node_index")},
                      idx, positions);
  x = t.reshape(x, Shape::of({B, S, N, D}));
  x = t.add_bias(t.matmul(x, m.p("embed.proj_w")), m.p("embed.proj_b"));

  // Node adjacency over Tanner edges (undirected).
  std::vector<std::vector<int>> nbrs(N);
  for (auto [a, b] : layout.tanner_edges) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }

  // Distance buckets for the spatial attention bias.
  std::vector<int> bucket(static_cast<size_t>(N) * N);
  for (int u = 0; u < N; ++u)
    for (int v = 0; v < N; ++v)
      bucket[static_cast<size_t>(u) * N + v] = std::min(dist(u, v), mp.num_buckets - 1);

  auto tsplit = time_split_map(B, S, N, H, dh);
  auto tmerge = time_merge_map(B, S, N, H, dh);
  auto ssplit = space_split_map(B, S, N, H, dh);
  auto smerge = space_merge_map(B, S, N, H, dh);
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int blk = 0; blk < cfg.blocks; ++blk) {
    const std::string pre = "blk" + std::to_string(blk) + ".";

    // Local GNN: message passing restricted to the Tanner graph.
    {
      Var xn = t.layer_norm(x, m.p(pre + "gnn.ln_g"), m.p(pre + "gnn.ln_b"));
      Var msg = t.neighbor_sum(t.matmul(xn, m.p(pre + "gnn.w_msg")), nbrs);
      Var prev = t.add_bias(t.add(t.matmul(xn, m.p(pre + "gnn.w_self")), msg),
                            m.p(pre + "gnn.b1"));
      Var u = t.add_bias(t.matmul(t.gelu(prev), m.p(pre + "gnn.w_out")),
                         m.p(pre + "gnn.b2"));
      x = t.add(x, maybe_dropout(u));
    }

    // Temporal mixing: convolution branch for short transients, unmasked
    // attention over rounds for long range, fused by a learned gate.
    {
      Var xn = t.layer_norm(x, m.p(pre + "tmp.ln_g"), m.p(pre + "tmp.ln_b"));
      Var conv = t.conv1d_time(xn, m.p(pre + "tmp.conv_w"), m.p(pre + "tmp.conv_b"));

      Var q = t.add_bias(t.matmul(xn, m.p(pre + "tmp.wq")), m.p(pre + "tmp.bq"));
      Var k = t.add_bias(t.matmul(xn, m.p(pre + "tmp.wk")), m.p(pre + "tmp.bk"));
      Var v = t.add_bias(t.matmul(xn, m.p(pre + "tmp.wv")), m.p(pre + "tmp.bv"));
      Shape heads_shape = Shape::of({B * N * H, S, dh});
      Var qs = t.permute(q, heads_shape, tsplit);
      Var ks = t.permute(k, heads_shape, tsplit);
      Var vs = t.permute(v, heads_shape, tsplit);
      Var logits = t.scale(t.bmm_nt(qs, ks), att_scale);
      Var attn = t.softmax_last(logits);
      Var ctx = t.permute(t.bmm_nn(attn, vs), Shape::of({B, S, N, D}), tmerge);
      Var att_out = t.add_bias(t.matmul(ctx, m.p(pre + "tmp.wo")), m.p(pre + "tmp.bo"));

      Var gate = t.sigmoid(
          t.add_bias(t.add(t.matmul(conv, m.p(pre + "tmp.gate_wa")),
                           t.matmul(att_out, m.p(pre + "tmp.gate_wb"))),
                     m.p(pre + "tmp.gate_b")));
      Var diff = t.add(conv, t.scale(att_out, -1.0));
      Var fused = t.add(att_out, t.mul(gate, diff));  // g*A + (1-g)*B
      x = t.add(x, maybe_dropout(fused));
    }

    // Global spatial attention with the shortest-graph-distance bias.
    {
      Var xn = t.layer_norm(x, m.p(pre + "spa.ln_g"), m.p(pre + "spa.ln_b"));
      Var q = t.add_bias(t.matmul(xn, m.p(pre + "spa.wq")), m.p(pre + "spa.bq"));
      Var k = t.add_bias(t.matmul(xn, m.p(pre + "spa.wk")), m.p(pre + "spa.bk"));
      Var v = t.add_bias(t.matmul(xn, m.p(pre + "spa.wv")), m.p(pre + "spa.bv"));
      Shape heads_shape = Shape::of({B * S * H, N, dh});
      Var qs = t.permute(q, heads_shape, ssplit);
      Var ks = t.permute(k, heads_shape, ssplit);
      Var vs = t.permute(v, heads_shape, ssplit);
      Var logits = t.scale(t.bmm_nt(qs, ks), att_scale);
      logits = t.add_dist_bias(logits, m.p(pre + "spa.bias_table"), bucket);
      Var attn = t.softmax_last(logits);
      Var ctx = t.permute(t.bmm_nn(attn, vs), Shape::of({B, S, N, D}), smerge);
      Var out = t.add_bias(t.matmul(ctx, m.p(pre + "spa.wo")), m.p(pre + "spa.bo"));
      x = t.add(x, maybe_dropout(out));
    }
  }

  // Logical head pools the final-slot node features into d logits, one per
  // equivalent observable of the task basis.
  {
    Var hl = t.slice_last_time(x);
    Var pooled = t.mean_nodes(hl);
    Var z = t.gelu(
        t.add_bias(t.matmul(pooled, m.p("head.logic.w1")), m.p("head.logic.b1")));
    m.logical_logits =
        t.add_bias(t.matmul(z, m.p("head.logic.w2")), m.p("head.logic.b2"));
  }

  // Loss head: one logit per data node per round 1..T.
  {
    Var hs = t.slice_sn(x, T, layout.num_data);
    Var z =
        t.gelu(t.add_bias(t.matmul(hs, m.p("head.loss.w1")), m.p("head.loss.b1")));
    Var ll = t.add_bias(t.matmul(z, m.p("head.loss.w2")), m.p("head.loss.b2"));
    m.loss_logits = t.reshape(ll, Shape::of({B, T, layout.num_data}));
  }
}

ForwardOutput extract_output(BuiltModel& m) {
  ForwardOutput out;
  out.logical_logits = m.tape.val(m.logical_logits);
  out.loss_logits = m.tape.val(m.loss_logits);
  return out;
}

}  // namespace

ForwardOutput forward(const ModelParams& params, const CodeLayout& layout,
                      const DistanceMatrix& dist,
                      const std::vector<const ShotRecord*>& batch) {
  BuiltModel m;
  build_forward(m, params, layout, dist, batch, nullptr);
  return extract_output(m);
}

ForwardOutput forward_one(const ModelParams& params, const CodeLayout& layout,
                          const DistanceMatrix& dist, const ShotRecord& record) {
  return forward(params, layout, dist, {&record});
}

uint64_t forward_pass_count() { return g_forward_count.load(std::memory_order_relaxed); }

LossBreakdown loss_and_gradients(const ModelParams& params, const CodeLayout& layout,
                                 const DistanceMatrix& dist,
                                 const std::vector<const ShotRecord*>& batch,
                                 double pos_weight, std::vector<nn::Tensor>* grads_out,
                                 ForwardOutput* forward_out, SplitRng* dropout_rng) {
  BuiltModel m;
  build_forward(m, params, layout, dist, batch, dropout_rng);
  Tape& t = m.tape;
  const int B = m.B;
  const int T = params.T;
  const int nd = layout.num_data;
  const int d = params.d;

  std::vector<double> logic_targets(static_cast<size_t>(B) * d, 0.0);
  std::vector<double> logic_mask(static_cast<size_t>(B) * d, 0.0);
  std::vector<double> mask_targets(static_cast<size_t>(B) * T * nd, 0.0);
  std::vector<double> mask_mask(static_cast<size_t>(B) * T * nd, 1.0);
  for (int bi = 0; bi < B; ++bi) {
    const ShotRecord& rec = *batch[bi];
    for (int i = 0; i < d; ++i) {
      logic_targets[static_cast<size_t>(bi) * d + i] =
          rec.logical_labels.get(i) ? 1.0 : 0.0;
      logic_mask[static_cast<size_t>(bi) * d + i] =
          rec.excluded_observables.get(i) ? 0.0 : 1.0;
    }
    for (int r = 1; r <= T; ++r) {
      for (int q = 0; q < nd; ++q) {
        mask_targets[(static_cast<size_t>(bi) * T + (r - 1)) * nd + q] =
            rec.data_lost_at(q, r) ? 1.0 : 0.0;
      }
    }
  }

  int64_t kept_logic = 0;
  Var l_logic = t.bce_with_logits(m.logical_logits, logic_targets, logic_mask, 1.0,
                                  &kept_logic);
  Var l_mask = t.bce_with_logits(m.loss_logits, mask_targets, mask_mask, pos_weight);
  Var total = t.add(t.scale(l_logic, params.config.lambda_logic),
                    t.scale(l_mask, params.config.lambda_loss));

  LossBreakdown breakdown;
  breakdown.logic = t.val(l_logic).v[0];
  breakdown.mask = t.val(l_mask).v[0];
  breakdown.total = t.val(total).v[0];
  breakdown.logic_skipped = (kept_logic == 0);
  if (!std::isfinite(breakdown.total)) {
    throw std::runtime_error("non-finite training loss (logic=" +
                             std::to_string(breakdown.logic) +
                             ", mask=" + std::to_string(breakdown.mask) + ")");
  }

  if (forward_out) *forward_out = extract_output(m);
  if (grads_out) {
    t.backward(total);
    grads_out->clear();
    grads_out->reserve(m.pvars.size());
    for (Var pv : m.pvars) grads_out->push_back(t.grad(pv));
  }
  return breakdown;
}

namespace {

double dataset_pos_weight(const Dataset& dataset) {
  uint64_t pos = 0, total = 0;
  for (const ShotRecord& rec : dataset.shots) {
    pos += rec.loss_mask_truth.popcount();
    total += rec.loss_mask_truth.n;
  }
  if (pos == 0 || pos == total) return 1.0;
  return static_cast<double>(total - pos) / static_cast<double>(pos);
}

}  // namespace

TrainResult train(ModelParams& params, const CodeLayout& layout,
                  const DistanceMatrix& dist, const Dataset& dataset,
                  const OptimizerConfig& opt, std::ostream* log) {
  if (dataset.shots.empty()) throw std::invalid_argument("dataset is empty");
  params.config.validate();
  TrainResult result;
  const double pw = params.config.pos_weight > 0 ? params.config.pos_weight
                                                 : dataset_pos_weight(dataset);
  result.pos_weight_used = pw;

  const int n_shots = static_cast<int>(dataset.shots.size());
  const int bs = std::max(1, std::min(opt.batch_size, n_shots));

  double initial_loss = -1.0;
  int bad_epochs = 0;

  for (int e = 0; e < opt.epochs; ++e) {
    const int abs_epoch = params.epochs_trained + 1;
    const double lr =
        opt.lr * std::pow(opt.lr_decay, static_cast<double>(abs_epoch - 1));
    SplitRng shuffle_rng(opt.shuffle_seed, static_cast<uint64_t>(abs_epoch));
    SplitRng drop_rng(opt.shuffle_seed ^ 0xD09E0ull, static_cast<uint64_t>(abs_epoch));
    std::vector<int> order(n_shots);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n_shots - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0, epoch_logic = 0.0, epoch_mask = 0.0;
    uint64_t acc_correct = 0, acc_total = 0;
    uint64_t tp = 0, fp = 0, fn = 0;

    for (int start = 0; start < n_shots; start += bs) {
      int end = std::min(start + bs, n_shots);
      std::vector<const ShotRecord*> batch;
      for (int i = start; i < end; ++i) batch.push_back(&dataset.shots[order[i]]);

      std::vector<nn::Tensor> grads;
      ForwardOutput fwd;
      LossBreakdown lb = loss_and_gradients(
          params, layout, dist, batch, pw, &grads, &fwd,
          params.config.dropout > 0 ? &drop_rng : nullptr);

      const int nb = end - start;
      epoch_loss += lb.total * nb;
      epoch_logic += lb.logic * nb;
      epoch_mask += lb.mask * nb;

      for (int bi = 0; bi < nb; ++bi) {
        const ShotRecord& rec = *batch[bi];
        for (int i = 0; i < params.d; ++i) {
          if (rec.excluded_observables.get(i)) continue;
          bool pred = fwd.logical_logits[static_cast<size_t>(bi) * params.d + i] > 0;
          ++acc_total;
          if (pred == rec.logical_labels.get(i)) ++acc_correct;
        }
        for (int q = 0; q < rec.num_data; ++q) {
          double logit =
              fwd.loss_logits[(static_cast<size_t>(bi) * params.T + (params.T - 1)) *
                                  rec.num_data +
                              q];
          bool pred = 1.0 / (1.0 + std::exp(-logit)) >= 0.5;
          bool truth = rec.data_lost_final(q);
          if (pred && truth) ++tp;
          if (pred && !truth) ++fp;
          if (!pred && truth) ++fn;
        }
      }

      // Adam step.
      params.adam_step += 1;
      const double b1c = 1.0 - std::pow(opt.beta1, static_cast<double>(params.adam_step));
      const double b2c = 1.0 - std::pow(opt.beta2, static_cast<double>(params.adam_step));
      for (size_t pi = 0; pi < params.params.size(); ++pi) {
        ParamTensor& p = params.params[pi];
        const nn::Tensor& g = grads[pi];
        for (size_t i = 0; i < p.value.size(); ++i) {
          double gv = g.v[i];
          p.adam_m.v[i] = opt.beta1 * p.adam_m.v[i] + (1.0 - opt.beta1) * gv;
          p.adam_v.v[i] = opt.beta2 * p.adam_v.v[i] + (1.0 - opt.beta2) * gv * gv;
          double mhat = p.adam_m.v[i] / b1c;
          double vhat = p.adam_v.v[i] / b2c;
          p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
      }
    }

    EpochStats stats;
    stats.epoch = abs_epoch;
    stats.loss = epoch_loss / n_shots;
    stats.logic_loss = epoch_logic / n_shots;
    stats.mask_loss = epoch_mask / n_shots;
    stats.logical_accuracy =
        acc_total ? static_cast<double>(acc_correct) / acc_total : 0.0;
    stats.precision = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 1.0;
    stats.recall = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 1.0;
    result.curve.push_back(stats);
    params.epochs_trained = abs_epoch;

    if (log) {
      (*log) << "epoch=" << stats.epoch << " loss=" << stats.loss
             << " logic_loss=" << stats.logic_loss << " mask_loss=" << stats.mask_loss
             << " logical_acc=" << stats.logical_accuracy
             << " loss_precision=" << stats.precision
             << " loss_recall=" << stats.recall << "\n";
      log->flush();
    }

    if (initial_loss < 0) initial_loss = stats.loss;
    if (stats.loss > 10.0 * initial_loss) {
      if (++bad_epochs >= 3)
        throw TrainingDiverged("training diverged: loss " + std::to_string(stats.loss) +
                               " above 10x initial " + std::to_string(initial_loss) +
                               " for 3 consecutive epochs");
    } else {
      bad_epochs = 0;
    }
  }
  return result;
}

LossPrediction predict_loss_mask(const ModelParams& params, const CodeLayout& layout,
                                 const DistanceMatrix& dist, const ShotRecord& record,
                                 double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("threshold must be in [0, 1]");
  ForwardOutput out = forward_one(params, layout, dist, record);
  LossPrediction pred;
  pred.num_data = layout.num_data;
  pred.T = params.T;
  pred.probs.assign(static_cast<size_t>(layout.num_data) * params.T, 0.0);
  pred.final_probs.assign(layout.num_data, 0.0);
  pred.mask = BitVec(static_cast<size_t>(layout.num_data) * params.T);
  for (int q = 0; q < layout.num_data; ++q) {
    for (int r = 1; r <= params.T; ++r) {
      double logit =
          out.loss_logits[(static_cast<size_t>(r - 1)) * layout.num_data + q];
      double p = 1.0 / (1.0 + std::exp(-logit));
      pred.probs[static_cast<size_t>(q) * params.T + (r - 1)] = p;
      if (p >= threshold) pred.mask.set(static_cast<size_t>(q) * params.T + (r - 1), true);
      if (r == params.T) pred.final_probs[q] = p;
    }
  }
  return pred;
}

namespace {
constexpr char kCkptMagic[4] = {'Q', 'L', 'W', 'M'};
}

std::vector<uint8_t> serialize_checkpoint(const ModelParams& params) {
  ByteWriter w;
  w.out.insert(w.out.end(), kCkptMagic, kCkptMagic + 4);
  w.u16(1);  // version
  const ModelConfig& c = params.config;
  w.u32(static_cast<uint32_t>(c.hidden_dim));
  w.u32(static_cast<uint32_t>(c.n_heads));
  w.u32(static_cast<uint32_t>(c.blocks));
  w.u32(static_cast<uint32_t>(c.kernel));
  w.u32(static_cast<uint32_t>(c.distance_cap));
  w.f64(c.lambda_logic);
  w.f64(c.lambda_loss);
  w.f64(c.dropout);
  w.f64(c.pos_weight);
  w.u64(c.init_seed);
  w.u32(static_cast<uint32_t>(params.d));
  w.u32(static_cast<uint32_t>(params.T));
  w.u32(static_cast<uint32_t>(params.num_nodes));
  w.u32(static_cast<uint32_t>(params.num_buckets));
  w.u64(static_cast<uint64_t>(params.adam_step));
  w.u32(static_cast<uint32_t>(params.epochs_trained));
  w.u32(static_cast<uint32_t>(params.params.size()));

  uint64_t offset = 0;
  for (const ParamTensor& p : params.params) {
    w.str(p.name);
    w.u8(static_cast<uint8_t>(p.value.shape.nd));
    for (int i = 0; i < p.value.shape.nd; ++i)
      w.u32(static_cast<uint32_t>(p.value.shape.d[i]));
    w.u64(offset);
    offset += static_cast<uint64_t>(p.value.shape.numel());
  }
  w.u64(offset);  // total doubles per array
  for (const ParamTensor& p : params.params)
    for (double v : p.value.v) w.f64(v);
  for (const ParamTensor& p : params.params)
    for (double v : p.adam_m.v) w.f64(v);
  for (const ParamTensor& p : params.params)
    for (double v : p.adam_v.v) w.f64(v);
  return w.out;
}

ModelParams deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
  ByteReader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, "bad magic, not a QLWM checkpoint");
  r.pos = 4;
  uint16_t version = r.u16("version");
  if (version != 1)
    throw FormatError(FormatError::Kind::BadVersion,
                      "unsupported checkpoint version " + std::to_string(version));
  ModelParams mp;
  ModelConfig& c = mp.config;
  c.hidden_dim = static_cast<int>(r.u32("hidden_dim"));
  c.n_heads = static_cast<int>(r.u32("n_heads"));
  c.blocks = static_cast<int>(r.u32("blocks"));
  c.kernel = static_cast<int>(r.u32("kernel"));
  c.distance_cap = static_cast<int>(r.u32("distance_cap"));
  c.lambda_logic = r.f64("lambda_logic");
  c.lambda_loss = r.f64("lambda_loss");
  c.dropout = r.f64("dropout");
  c.pos_weight = r.f64("pos_weight");
  c.init_seed = r.u64("init_seed");
  mp.d = static_cast<int>(r.u32("d"));
  mp.T = static_cast<int>(r.u32("T"));
  mp.num_nodes = static_cast<int>(r.u32("num_nodes"));
  mp.num_buckets = static_cast<int>(r.u32("num_buckets"));
  mp.adam_step = static_cast<int64_t>(r.u64("adam_step"));
  mp.epochs_trained = static_cast<int>(r.u32("epochs_trained"));
  uint32_t count = r.u32("param_count");

  std::vector<uint64_t> offsets;
  for (uint32_t i = 0; i < count; ++i) {
    ParamTensor p;
    p.name = r.str("param name");
    uint8_t nd = r.u8("param ndim");
    std::vector<int> dims;
    for (uint8_t j = 0; j < nd; ++j) dims.push_back(static_cast<int>(r.u32("dim")));
    Shape shape;
    shape.nd = nd;
    for (uint8_t j = 0; j < nd; ++j) shape.d[j] = dims[j];
    for (int j = nd; j < 4; ++j) shape.d[j] = 1;
    p.value = Tensor(shape, 0.0);
    p.adam_m = Tensor(shape, 0.0);
    p.adam_v = Tensor(shape, 0.0);
    offsets.push_back(r.u64("param offset"));
    mp.params.push_back(std::move(p));
  }
  uint64_t total = r.u64("total doubles");
  uint64_t expect = 0;
  for (const ParamTensor& p : mp.params)
    expect += static_cast<uint64_t>(p.value.shape.numel());
  if (total != expect)
    throw FormatError(FormatError::Kind::Truncated, "parameter manifest inconsistent");
  for (ParamTensor& p : mp.params)
    for (double& v : p.value.v) v = r.f64("param value");
  for (ParamTensor& p : mp.params)
    for (double& v : p.adam_m.v) v = r.f64("adam m");
  for (ParamTensor& p : mp.params)
    for (double& v : p.adam_v.v) v = r.f64("adam v");
  return mp;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::vector<uint8_t> bytes = serialize_checkpoint(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace qlw
