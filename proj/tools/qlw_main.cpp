#include <exception>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cli_commands.hpp"
#include "qlw/bytes.hpp"
#include "qlw/stgnn.hpp"

using qlw::cli::RunConfig;

namespace {

// Registers the flags shared by every subcommand. Flags override config-file
// values because CLI11 parses them after the config callback runs.
void add_common_options(CLI::App* app, RunConfig& cfg, std::string& config_path) {
  app->add_option("--config", config_path, "JSON config file with flat keys");
  app->add_option("--d", cfg.d, "code distance (odd, >= 3)");
  app->add_option("--T", cfg.T, "syndrome rounds");
  app->add_option("--basis", cfg.basis, "memory basis, X or Z");
  app->add_option_function<double>(
      "--p", [&cfg](double p) { cfg.p_pauli = cfg.p_meas = cfg.p_loss = p; },
      "set p_pauli = p_meas = p_loss");
  app->add_option("--p-pauli", cfg.p_pauli, "depolarizing strength");
  app->add_option("--p-meas", cfg.p_meas, "readout flip probability");
  app->add_option("--p-loss", cfg.p_loss, "per-qubit per-round loss probability");
  app->add_option("--seed", cfg.seed, "sampling seed");
  app->add_option("--out", cfg.out, "output path");
  app->add_option("--dataset", cfg.dataset, "dataset path");
  app->add_option("--checkpoint", cfg.checkpoint, "model checkpoint path");
  app->add_option("--threshold", cfg.threshold, "loss decision threshold");
}

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const CLI::ParseError&) {
    throw;  // handled by CLI11 in main
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qlw::cli::kUsageError;
  } catch (const qlw::TrainingDiverged& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return qlw::cli::kNumericalError;
  } catch (const qlw::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return qlw::cli::kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qlw::cli::kIoError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qubit-loss decoding workbench"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  CLI::App* sample = app.add_subcommand("sample", "generate a dataset");
  add_common_options(sample, cfg, config_path);
  sample->add_option("--shots", cfg.shots, "number of shots");

  CLI::App* decode = app.add_subcommand("decode", "run a decoder, write a report");
  add_common_options(decode, cfg, config_path);
  decode->add_option("--decoder", cfg.decoder, "mwpm | de-mwpm | flicker | stgnn");
  decode->add_option("--background-rate", cfg.background_rate,
                     "flicker background click rate (<0 = calibrate)");

  CLI::App* train = app.add_subcommand("train", "train the stgnn decoder");
  add_common_options(train, cfg, config_path);
  train->add_option("--resume", cfg.resume, "checkpoint to continue from");
  train->add_option("--epochs", cfg.epochs, "training epochs");
  train->add_option("--batch-size", cfg.batch_size, "minibatch size");
  train->add_option("--lr", cfg.lr, "learning rate");
  train->add_option("--lr-decay", cfg.lr_decay, "multiplicative lr decay per epoch");
  train->add_option("--train-seed", cfg.train_seed, "shuffle/dropout seed");
  train->add_option("--hidden-dim", cfg.hidden_dim, "hidden width D");
  train->add_option("--n-heads", cfg.n_heads, "attention heads");
  train->add_option("--blocks", cfg.blocks, "interleaved block count");
  train->add_option("--kernel", cfg.kernel, "temporal conv width (odd)");
  train->add_option("--lambda-logic", cfg.lambda_logic, "logical loss weight");
  train->add_option("--lambda-loss", cfg.lambda_loss, "loss-head loss weight");
  train->add_option("--dropout", cfg.dropout, "dropout rate");
  train->add_option("--pos-weight", cfg.pos_weight,
                    "positive class weight (<0 = negatives/positives)");
  train->add_option("--model-seed", cfg.model_seed, "parameter init seed");
  train->add_option("--log", cfg.log, "epoch log path");

  CLI::App* bench = app.add_subcommand("bench", "latency benchmark");
  add_common_options(bench, cfg, config_path);
  bench->add_option("--decoder", cfg.decoder, "stgnn | mwpm");
  bench->add_option("--repetitions", cfg.repetitions, "timed repetitions");
  bench->add_option("--warmup", cfg.warmup, "untimed warmup iterations");
  bench->add_option("--windows", cfg.windows, "windows per repetition");

  // Config file first, flags override: parse once to find --config, load it,
  // then parse again on top.
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : qlw::cli::kUsageError;
  }

  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) {
      std::cerr << "error: cannot open config " << config_path << "\n";
      return qlw::cli::kIoError;
    }
    nlohmann::json j;
    try {
      f >> j;
    } catch (const std::exception& e) {
      std::cerr << "error: bad config JSON: " << e.what() << "\n";
      return qlw::cli::kUsageError;
    }
    RunConfig from_file;
    try {
      from_file.apply_json(j);
    } catch (const std::exception& e) {
      std::cerr << "error: bad config value: " << e.what() << "\n";
      return qlw::cli::kUsageError;
    }
    cfg = from_file;
    try {
      app.clear();
      app.parse(argc, argv);  // flags override file values
    } catch (const CLI::ParseError& e) {
      int code = app.exit(e);
      return code == 0 ? 0 : qlw::cli::kUsageError;
    }
  }

  if (sample->parsed()) return run_guarded([&] { return qlw::cli::cmd_sample(cfg); });
  if (decode->parsed()) return run_guarded([&] { return qlw::cli::cmd_decode(cfg); });
  if (train->parsed()) return run_guarded([&] { return qlw::cli::cmd_train(cfg); });
  if (bench->parsed()) return run_guarded([&] { return qlw::cli::cmd_bench(cfg); });
  return qlw::cli::kUsageError;
}
