#include "doctest.h"

#include <cmath>

#include "qlw/dataset_io.hpp"
#include "qlw/stgnn.hpp"
#include "support/gradcheck.hpp"

using namespace qlw;

namespace {

struct Fixture {
  CodeLayout layout = build_layout(3);
  DistanceMatrix dist;
  ModelConfig config;
  int T = 3;

  Fixture() {
    config.hidden_dim = 8;
    config.n_heads = 2;
    config.blocks = 1;
    config.kernel = 3;
    config.distance_cap = 8;
    config.init_seed = 11;
    dist = shortest_distances(layout, config.distance_cap);
  }

  Dataset small_dataset(uint64_t shots, uint64_t seed, Basis basis = Basis::Z) {
    NoiseParams noise;
    noise.p_pauli = noise.p_meas = noise.p_loss = 0.02;
    return sample_dataset(layout, noise, T, basis, shots, seed);
  }
};

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  c.hidden_dim = 30;
  c.n_heads = 4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.kernel = 2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.lambda_logic = 0;
  c.lambda_loss = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("forward output shapes and determinism") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(4, 5);

  ForwardOutput out = forward_one(params, f.layout, f.dist, ds.shots[0]);
  CHECK(out.logical_logits.shape == nn::Shape::of({1, 3}));
  CHECK(out.loss_logits.shape == nn::Shape::of({1, f.T, 9}));
  for (double v : out.logical_logits.v) CHECK(std::isfinite(v));
  for (double v : out.loss_logits.v) CHECK(std::isfinite(v));

  ForwardOutput again = forward_one(params, f.layout, f.dist, ds.shots[0]);
  CHECK(out.logical_logits.v == again.logical_logits.v);  // bit-stable
  CHECK(out.loss_logits.v == again.loss_logits.v);
}

TEST_CASE("batch independence: a batch row equals the single-record pass") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(8, 6);
  std::vector<const ShotRecord*> batch;
  for (const ShotRecord& r : ds.shots) batch.push_back(&r);
  ForwardOutput full = forward(params, f.layout, f.dist, batch);
  for (int b = 0; b < 8; ++b) {
    ForwardOutput one = forward_one(params, f.layout, f.dist, ds.shots[b]);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(full.logical_logits[static_cast<size_t>(b) * 3 + i] -
                     one.logical_logits[i]) < 1e-6);
    }
    for (int j = 0; j < f.T * 9; ++j) {
      CHECK(std::abs(full.loss_logits[static_cast<size_t>(b) * f.T * 9 + j] -
                     one.loss_logits[j]) < 1e-6);
    }
  }
}

TEST_CASE("softmax rows sum to one") {
  nn::Tape tape;
  SplitRng rng(3);
  nn::Tensor logits(nn::Shape::of({4, 5, 6}));
  for (double& v : logits.v) v = rng.normal() * 3.0;
  nn::Var sm = tape.softmax_last(tape.leaf(logits));
  const nn::Tensor& out = tape.val(sm);
  for (int row = 0; row < 4 * 5; ++row) {
    double sum = 0;
    for (int j = 0; j < 6; ++j) sum += out[static_cast<size_t>(row) * 6 + j];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("embedding locality: one changed index moves exactly one row") {
  nn::Tape tape;
  SplitRng rng(9);
  nn::Tensor table(nn::Shape::of({2, 4}));
  for (double& v : table.v) v = rng.normal();
  nn::Var tv = tape.leaf(table);
  std::vector<std::vector<int>> idx_a = {{0, 0, 0, 0, 0}};
  std::vector<std::vector<int>> idx_b = {{0, 0, 1, 0, 0}};
  nn::Var a = tape.embed_sum({tv}, idx_a, 5);
  nn::Var b = tape.embed_sum({tv}, idx_b, 5);
  for (int p = 0; p < 5; ++p) {
    bool differs = false;
    for (int j = 0; j < 4; ++j) {
      if (tape.val(a)[static_cast<size_t>(p) * 4 + j] !=
          tape.val(b)[static_cast<size_t>(p) * 4 + j])
        differs = true;
    }
    CHECK(differs == (p == 2));
  }
}

TEST_CASE("zeroed gnn block is an exact identity") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  // Zero every non-embedding, non-head parameter: each residual block's
  // update vanishes, so the trunk passes the embedding through unchanged.
  for (ParamTensor& p : params.params) {
    if (p.name.find("blk") == 0 && p.name.find("ln_") == std::string::npos) {
      std::fill(p.value.v.begin(), p.value.v.end(), 0.0);
    }
  }
  Dataset ds = f.small_dataset(1, 10);
  ForwardOutput base = forward_one(params, f.layout, f.dist, ds.shots[0]);
  // Double every gnn weight: with a zeroed conv/attention stack the logits
  // stay put only if blocks were truly pass-through before; instead check
  // the block-zeroed model equals a blocks-free readout of the embedding by
  // perturbing a gnn message weight and confirming logits do not move when
  // w_out stays zero.
  ModelParams tweaked = params;
  for (ParamTensor& p : tweaked.params) {
    if (p.name == "blk0.gnn.w_msg" || p.name == "blk0.tmp.wv" ||
        p.name == "blk0.spa.wv") {
      for (double& v : p.value.v) v = 0.5;
    }
  }
  ForwardOutput same = forward_one(tweaked, f.layout, f.dist, ds.shots[0]);
  CHECK(base.logical_logits.v == same.logical_logits.v);
  CHECK(base.loss_logits.v == same.loss_logits.v);
}

TEST_CASE("gnn message passing is permutation equivariant") {
  // Random small graphs: relabeling nodes while permuting the adjacency (and
  // the per-node features) permutes the block output identically.
  SplitRng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_int(5));
    const int d = 6;
    std::vector<std::vector<int>> nbrs(n);
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (rng.bernoulli(0.4)) {
          nbrs[u].push_back(v);
          nbrs[v].push_back(u);
        }
      }
    }
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(static_cast<uint64_t>(i) + 1)]);

    nn::Tensor x(nn::Shape::of({1, 1, n, d}));
    for (double& v : x.v) v = rng.normal();
    nn::Tensor w(nn::Shape::of({d, d}));
    for (double& v : w.v) v = rng.normal() * 0.3;

    // Shared per-node computation: gelu(neighbor_sum(x @ w)).
    auto run = [&](const nn::Tensor& features, const std::vector<std::vector<int>>& adj) {
      nn::Tape tape;
      nn::Var out =
          tape.gelu(tape.neighbor_sum(tape.matmul(tape.leaf(features), tape.leaf(w)), adj));
      return tape.val(out);
    };
    nn::Tensor base = run(x, nbrs);

    nn::Tensor xp(nn::Shape::of({1, 1, n, d}));
    std::vector<std::vector<int>> nbrs_p(n);
    for (int u = 0; u < n; ++u) {
      for (int j = 0; j < d; ++j)
        xp.v[static_cast<size_t>(perm[u]) * d + j] = x.v[static_cast<size_t>(u) * d + j];
      for (int v : nbrs[u]) nbrs_p[perm[u]].push_back(perm[v]);
    }
    nn::Tensor permuted = run(xp, nbrs_p);
    for (int u = 0; u < n; ++u) {
      for (int j = 0; j < d; ++j) {
        CHECK(permuted.v[static_cast<size_t>(perm[u]) * d + j] ==
              doctest::Approx(base.v[static_cast<size_t>(u) * d + j]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("gnn output is sensitive to neighbor clicks") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(1, 11);
  ShotRecord rec = ds.shots[0];
  ForwardOutput a = forward_one(params, f.layout, f.dist, rec);
  rec.detectors.flip(static_cast<size_t>(1) * f.layout.num_anc + 2);
  ForwardOutput b = forward_one(params, f.layout, f.dist, rec);
  bool moved = false;
  for (size_t i = 0; i < a.loss_logits.v.size(); ++i)
    moved = moved || a.loss_logits.v[i] != b.loss_logits.v[i];
  CHECK(moved);
}

TEST_CASE("gate saturation silences the unused branch") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(2, 12);

  // Gate pinned at 1: attention value path is dead (its only consumer is
  // (1-g) * B, and g's input from B is severed by zeroing gate_wb).
  for (ParamTensor& p : params.params) {
    if (p.name == "blk0.tmp.gate_b")
      std::fill(p.value.v.begin(), p.value.v.end(), 40.0);
    if (p.name == "blk0.tmp.gate_wb")
      std::fill(p.value.v.begin(), p.value.v.end(), 0.0);
  }
  ForwardOutput base = forward_one(params, f.layout, f.dist, ds.shots[0]);
  ModelParams tweaked = params;
  for (ParamTensor& p : tweaked.params) {
    if (p.name == "blk0.tmp.wv")
      for (double& v : p.value.v) v += 0.7;
  }
  ForwardOutput same = forward_one(tweaked, f.layout, f.dist, ds.shots[0]);
  for (size_t i = 0; i < base.logical_logits.v.size(); ++i)
    CHECK(std::abs(base.logical_logits.v[i] - same.logical_logits.v[i]) < 1e-9);

  // Gate pinned at 0: the convolution kernel is dead the same way.
  for (ParamTensor& p : params.params) {
    if (p.name == "blk0.tmp.gate_b")
      std::fill(p.value.v.begin(), p.value.v.end(), -40.0);
    if (p.name == "blk0.tmp.gate_wa")
      std::fill(p.value.v.begin(), p.value.v.end(), 0.0);
  }
  ForwardOutput base2 = forward_one(params, f.layout, f.dist, ds.shots[0]);
  ModelParams tweaked2 = params;
  for (ParamTensor& p : tweaked2.params) {
    if (p.name == "blk0.tmp.conv_w")
      for (double& v : p.value.v) v += 0.7;
  }
  ForwardOutput same2 = forward_one(tweaked2, f.layout, f.dist, ds.shots[0]);
  for (size_t i = 0; i < base2.logical_logits.v.size(); ++i)
    CHECK(std::abs(base2.logical_logits.v[i] - same2.logical_logits.v[i]) < 1e-9);
}

TEST_CASE("round order matters to the temporal modules") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  NoiseParams noise;
  noise.p_pauli = noise.p_meas = 0.05;
  Dataset ds = sample_dataset(f.layout, noise, f.T, Basis::Z, 1, 13);
  ShotRecord rec = ds.shots[0];
  ShotRecord permuted = rec;
  // Swap detector slices 1 and 2 and the matching outcome rounds.
  for (int a = 0; a < f.layout.num_anc; ++a) {
    bool d1 = rec.detector(a, 1), d2 = rec.detector(a, 2);
    permuted.detectors.set(static_cast<size_t>(0) * f.layout.num_anc + a, d2);
    permuted.detectors.set(static_cast<size_t>(1) * f.layout.num_anc + a, d1);
    bool o1 = rec.outcome(a, 1), o2 = rec.outcome(a, 2);
    permuted.ancilla_outcomes.set(static_cast<size_t>(0) * f.layout.num_anc + a, o2);
    permuted.ancilla_outcomes.set(static_cast<size_t>(1) * f.layout.num_anc + a, o1);
  }
  ForwardOutput a = forward_one(params, f.layout, f.dist, rec);
  ForwardOutput b = forward_one(params, f.layout, f.dist, permuted);
  bool moved = false;
  for (size_t i = 0; i < a.loss_logits.v.size(); ++i)
    moved = moved || std::abs(a.loss_logits.v[i] - b.loss_logits.v[i]) > 1e-9;
  CHECK(moved);
}

TEST_CASE("analytic gradients match central finite differences") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds_z = f.small_dataset(2, 21, Basis::Z);
  Dataset ds_x = f.small_dataset(2, 22, Basis::X);
  std::vector<const ShotRecord*> batch = {&ds_z.shots[0], &ds_z.shots[1],
                                          &ds_x.shots[0], &ds_x.shots[1]};
  test::GradCheckResult r =
      test::gradient_check(params, f.layout, f.dist, batch, 3.0, 1e-4, 4, 99);
  for (auto& [name, rel] : r.worst_rel) {
    INFO(name, " rel=", rel);
    CHECK(rel < 1e-4);
  }
  // Mixed-basis full batch leaves no parameter without gradient.
  CHECK(r.dead.empty());
}

TEST_CASE("lambda_loss = 0 leaves loss-head-exclusive parameters gradient-free") {
  Fixture f;
  ModelConfig cfg = f.config;
  cfg.lambda_loss = 0.0;
  ModelParams params = init_params(cfg, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(3, 23);
  std::vector<const ShotRecord*> batch;
  for (const ShotRecord& r : ds.shots) batch.push_back(&r);
  std::vector<nn::Tensor> grads;
  LossBreakdown lb = loss_and_gradients(params, f.layout, f.dist, batch, 1.0, &grads);
  CHECK(lb.total == doctest::Approx(lb.logic * cfg.lambda_logic));
  for (size_t pi = 0; pi < params.params.size(); ++pi) {
    if (params.params[pi].name.find("head.loss.") == 0) {
      for (double g : grads[pi].v) CHECK(g == 0.0);
    }
  }
}

TEST_CASE("zero logits on balanced labels give ln 2 per bit") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  // Zero every parameter so both heads emit exactly zero logits.
  for (ParamTensor& p : params.params)
    std::fill(p.value.v.begin(), p.value.v.end(), 0.0);
  Dataset ds = f.small_dataset(4, 25);
  std::vector<const ShotRecord*> batch;
  for (const ShotRecord& r : ds.shots) batch.push_back(&r);
  LossBreakdown lb = loss_and_gradients(params, f.layout, f.dist, batch, 1.0, nullptr);
  CHECK(lb.logic == doctest::Approx(std::log(2.0)));
  CHECK(lb.mask == doctest::Approx(std::log(2.0)));
}

TEST_CASE("full-batch gradient descent is non-increasing at small steps") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(16, 31);
  std::vector<const ShotRecord*> batch;
  for (const ShotRecord& r : ds.shots) batch.push_back(&r);
  double prev = loss_and_gradients(params, f.layout, f.dist, batch, 2.0, nullptr).total;
  const double lr = 1e-3;
  for (int step = 0; step < 10; ++step) {
    std::vector<nn::Tensor> grads;
    loss_and_gradients(params, f.layout, f.dist, batch, 2.0, &grads);
    for (size_t pi = 0; pi < params.params.size(); ++pi) {
      for (size_t i = 0; i < grads[pi].size(); ++i)
        params.params[pi].value.v[i] -= lr * grads[pi].v[i];
    }
    double cur = loss_and_gradients(params, f.layout, f.dist, batch, 2.0, nullptr).total;
    CHECK(cur <= prev + 1e-9);
    prev = cur;
  }
}

TEST_CASE("training is reproducible and resume continues the epoch counter") {
  Fixture f;
  Dataset ds = f.small_dataset(12, 41);
  OptimizerConfig opt;
  opt.lr = 3e-3;
  opt.epochs = 3;
  opt.batch_size = 4;
  opt.shuffle_seed = 5;

  ModelParams a = init_params(f.config, f.layout, f.T, f.dist);
  ModelParams b = init_params(f.config, f.layout, f.T, f.dist);
  TrainResult ra = train(a, f.layout, f.dist, ds, opt);
  TrainResult rb = train(b, f.layout, f.dist, ds, opt);
  REQUIRE(ra.curve.size() == 3);
  for (size_t pi = 0; pi < a.params.size(); ++pi)
    CHECK(a.params[pi].value.v == b.params[pi].value.v);

  // Resuming from a checkpoint continues the epoch numbering and matches a
  // straight 6-epoch run.
  ModelParams c = init_params(f.config, f.layout, f.T, f.dist);
  OptimizerConfig opt6 = opt;
  opt6.epochs = 6;
  TrainResult rc = train(c, f.layout, f.dist, ds, opt6);

  std::vector<uint8_t> bytes = serialize_checkpoint(a);
  ModelParams resumed = deserialize_checkpoint(bytes);
  CHECK(resumed.epochs_trained == 3);
  TrainResult rd = train(resumed, f.layout, f.dist, ds, opt);
  CHECK(rd.curve.front().epoch == 4);
  CHECK(rd.curve.back().epoch == 6);
  for (size_t pi = 0; pi < c.params.size(); ++pi) {
    for (size_t i = 0; i < c.params[pi].value.size(); ++i) {
      CHECK(resumed.params[pi].value.v[i] ==
            doctest::Approx(c.params[pi].value.v[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("checkpoint round-trips bit-exactly with distinct errors") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  params.epochs_trained = 7;
  params.adam_step = 123;
  std::vector<uint8_t> bytes = serialize_checkpoint(params);
  ModelParams back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.epochs_trained == 7);
  CHECK(back.adam_step == 123);
  CHECK(back.config.hidden_dim == f.config.hidden_dim);
  CHECK(back.params.size() == params.params.size());

  std::vector<uint8_t> bad = bytes;
  bad[0] = 'Z';
  try {
    deserialize_checkpoint(bad);
    CHECK(false);
  } catch (const FormatError& e) {
    CHECK(e.kind == FormatError::Kind::BadMagic);
  }
  std::vector<uint8_t> wrong_version = bytes;
  wrong_version[4] = 3;
  try {
    deserialize_checkpoint(wrong_version);
    CHECK(false);
  } catch (const FormatError& e) {
    CHECK(e.kind == FormatError::Kind::BadVersion);
  }
  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() - 9);
  try {
    deserialize_checkpoint(truncated);
    CHECK(false);
  } catch (const FormatError& e) {
    CHECK(e.kind == FormatError::Kind::Truncated);
  }
}

TEST_CASE("predict_loss_mask thresholds behave at the extremes") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(1, 51);
  LossPrediction all = predict_loss_mask(params, f.layout, f.dist, ds.shots[0], 0.0);
  CHECK(all.mask.popcount() == all.mask.n);
  LossPrediction none = predict_loss_mask(params, f.layout, f.dist, ds.shots[0], 1.0);
  CHECK(none.mask.popcount() == 0);
  CHECK_THROWS_AS(predict_loss_mask(params, f.layout, f.dist, ds.shots[0], 1.5),
                  std::invalid_argument);
  CHECK(all.final_probs.size() == 9);
  for (double p : all.final_probs) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("forward pass counter increments once per batch call") {
  Fixture f;
  ModelParams params = init_params(f.config, f.layout, f.T, f.dist);
  Dataset ds = f.small_dataset(1, 61);
  uint64_t before = forward_pass_count();
  forward_one(params, f.layout, f.dist, ds.shots[0]);
  forward_one(params, f.layout, f.dist, ds.shots[0]);
  CHECK(forward_pass_count() == before + 2);
}
