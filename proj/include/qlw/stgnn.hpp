#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qlw/bytes.hpp"
#include "qlw/experiment.hpp"
#include "qlw/lattice.hpp"
#include "qlw/nn.hpp"

namespace qlw {

struct ModelConfig {
  int hidden_dim = 32;   // D
  int n_heads = 4;
  int blocks = 2;        // N_l interleaved blocks
  int kernel = 3;        // temporal convolution width, odd
  int distance_cap = 8;  // attention bias distance clip
  double lambda_logic = 1.0;
  double lambda_loss = 1.0;
  double dropout = 0.0;
  uint64_t init_seed = 1;
  double pos_weight = -1.0;  // <= 0: negatives/positives computed per dataset

  void validate() const;
};

struct ParamTensor {
  std::string name;
  nn::Tensor value;
  nn::Tensor adam_m, adam_v;
};

// Model parameters plus the geometry they were built for. The distance-bias
// table is sized to min(distance_cap, max Tanner distance) + 1 buckets so
// every bucket is reachable on the layout it was initialized with.
struct ModelParams {
  ModelConfig config;
  int d = 0;
  int T = 0;
  int num_nodes = 0;
  int num_buckets = 0;
  int64_t adam_step = 0;
  int epochs_trained = 0;
  std::vector<ParamTensor> params;

  ParamTensor& find(const std::string& name);
  const ParamTensor& find(const std::string& name) const;
  int64_t total_parameters() const;
};

ModelParams init_params(const ModelConfig& config, const CodeLayout& layout, int T,
                        const DistanceMatrix& dist);

struct ForwardOutput {
  nn::Tensor logical_logits;  // (B, d)
  nn::Tensor loss_logits;     // (B, T, num_data)
};

// Full-window inference: the whole (T+1)-slot volume in one pass, no
// recurrence, deterministic (dropout off).
ForwardOutput forward(const ModelParams& params, const CodeLayout& layout,
                      const DistanceMatrix& dist,
                      const std::vector<const ShotRecord*>& batch);
ForwardOutput forward_one(const ModelParams& params, const CodeLayout& layout,
                          const DistanceMatrix& dist, const ShotRecord& record);

// Number of forward passes issued since process start (used by the latency
// harness to assert one pass per window).
uint64_t forward_pass_count();

struct LossBreakdown {
  double total = 0.0;
  double logic = 0.0;
  double mask = 0.0;
  bool logic_skipped = false;  // every observable excluded in the batch
};

// Multi-task loss; if grads_out is non-null, accumulates exact reverse-mode
// gradients (one tensor per parameter, aligned with params.params).
LossBreakdown loss_and_gradients(const ModelParams& params, const CodeLayout& layout,
                                 const DistanceMatrix& dist,
                                 const std::vector<const ShotRecord*>& batch,
                                 double pos_weight,
                                 std::vector<nn::Tensor>* grads_out,
                                 ForwardOutput* forward_out = nullptr,
                                 SplitRng* dropout_rng = nullptr);

struct OptimizerConfig {
  double lr = 1e-3;
  double lr_decay = 1.0;  // multiplicative per epoch
  int epochs = 100;
  int batch_size = 32;
  uint64_t shuffle_seed = 7;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0, logic_loss = 0.0, mask_loss = 0.0;
  double logical_accuracy = 0.0;  // train, over kept observables
  double precision = 0.0, recall = 0.0;  // loss head at threshold 0.5, final round
};

struct TrainResult {
  std::vector<EpochStats> curve;
  double pos_weight_used = 1.0;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic given seeds; writes one structured log line per epoch to
// `log` when provided. Aborts with TrainingDiverged when the epoch loss
// exceeds 10x the initial loss for 3 consecutive epochs.
TrainResult train(ModelParams& params, const CodeLayout& layout,
                  const DistanceMatrix& dist, const Dataset& dataset,
                  const OptimizerConfig& opt, std::ostream* log = nullptr);

struct LossPrediction {
  std::vector<double> probs;        // (q, r) row-major, rounds 1..T
  std::vector<double> final_probs;  // per qubit at round T
  BitVec mask;                      // probs >= threshold
  int num_data = 0, T = 0;
};

LossPrediction predict_loss_mask(const ModelParams& params, const CodeLayout& layout,
                                 const DistanceMatrix& dist, const ShotRecord& record,
                                 double threshold);

// Checkpoint format "QLWM": config, geometry, epoch/step counters, then a
// manifest of (name, shape, offset) and the flat little-endian parameter and
// Adam-moment arrays.
std::vector<uint8_t> serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::vector<uint8_t>& bytes);
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace qlw
