#pragma once

#include <string>

#include "json.hpp"
#include "qlw/lattice.hpp"

namespace qlw::cli {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kUsageError = 2,
  kIoError = 3,
  kNumericalError = 4,
};

// Flat run configuration: a JSON config file provides defaults, command-line
// flags override individual keys. Keys are documented in the README.
struct RunConfig {
  int d = 3;
  int T = 5;
  std::string basis = "Z";
  double p_pauli = 0.0;
  double p_meas = 0.0;
  double p_loss = 0.0;
  uint64_t shots = 1000;
  uint64_t seed = 1;
  std::string decoder = "mwpm";  // mwpm | de-mwpm | flicker | stgnn
  double threshold = 0.5;
  std::string dataset;
  std::string checkpoint;
  std::string resume;
  std::string out;
  std::string log;

  // Model.
  int hidden_dim = 32;
  int n_heads = 4;
  int blocks = 2;
  int kernel = 3;
  int distance_cap = 8;
  double lambda_logic = 1.0;
  double lambda_loss = 1.0;
  double dropout = 0.0;
  double pos_weight = -1.0;
  uint64_t model_seed = 1;

  // Optimizer.
  double lr = 1e-3;
  double lr_decay = 1.0;
  int epochs = 60;
  int batch_size = 32;
  uint64_t train_seed = 7;

  // Bench.
  int repetitions = 3;
  int warmup = 5;
  int windows = 100;

  // Flicker.
  double background_rate = -1.0;  // <0: calibrate from a loss-free run
  uint64_t calibration_shots = 1500;

  void apply_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate_common() const;  // throws std::invalid_argument
};

int cmd_sample(const RunConfig& cfg);
int cmd_decode(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_bench(const RunConfig& cfg);

}  // namespace qlw::cli
