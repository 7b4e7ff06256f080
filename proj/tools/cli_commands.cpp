#include "cli_commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "qlw/dataset_io.hpp"
#include "qlw/flicker.hpp"
#include "qlw/matching.hpp"
#include "qlw/metrics.hpp"
#include "qlw/stgnn.hpp"

namespace qlw::cli {

using nlohmann::json;

void RunConfig::apply_json(const json& j) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
  };
  get("d", d);
  get("T", T);
  get("basis", basis);
  if (j.contains("p")) {
    double p = j.at("p").get<double>();
    p_pauli = p_meas = p_loss = p;
  }
  get("p_pauli", p_pauli);
  get("p_meas", p_meas);
  get("p_loss", p_loss);
  get("shots", shots);
  get("seed", seed);
  get("decoder", decoder);
  get("threshold", threshold);
  get("dataset", dataset);
  get("checkpoint", checkpoint);
  get("resume", resume);
  get("out", out);
  get("log", log);
  get("hidden_dim", hidden_dim);
  get("n_heads", n_heads);
  get("blocks", blocks);
  get("kernel", kernel);
  get("distance_cap", distance_cap);
  get("lambda_logic", lambda_logic);
  get("lambda_loss", lambda_loss);
  get("dropout", dropout);
  get("pos_weight", pos_weight);
  get("model_seed", model_seed);
  get("lr", lr);
  get("lr_decay", lr_decay);
  get("epochs", epochs);
  get("batch_size", batch_size);
  get("train_seed", train_seed);
  get("repetitions", repetitions);
  get("warmup", warmup);
  get("windows", windows);
  get("background_rate", background_rate);
  get("calibration_shots", calibration_shots);
}

json RunConfig::to_json() const {
  return json{{"d", d},
              {"T", T},
              {"basis", basis},
              {"p_pauli", p_pauli},
              {"p_meas", p_meas},
              {"p_loss", p_loss},
              {"shots", shots},
              {"seed", seed},
              {"decoder", decoder},
              {"threshold", threshold},
              {"dataset", dataset},
              {"checkpoint", checkpoint},
              {"resume", resume},
              {"out", out},
              {"log", log},
              {"hidden_dim", hidden_dim},
              {"n_heads", n_heads},
              {"blocks", blocks},
              {"kernel", kernel},
              {"distance_cap", distance_cap},
              {"lambda_logic", lambda_logic},
              {"lambda_loss", lambda_loss},
              {"dropout", dropout},
              {"pos_weight", pos_weight},
              {"model_seed", model_seed},
              {"lr", lr},
              {"lr_decay", lr_decay},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"train_seed", train_seed},
              {"repetitions", repetitions},
              {"warmup", warmup},
              {"windows", windows},
              {"background_rate", background_rate},
              {"calibration_shots", calibration_shots}};
}

void RunConfig::validate_common() const {
  if (d < 3 || d % 2 == 0)
    throw std::invalid_argument("d must be an odd integer >= 3");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  basis_from_string(basis);  // throws on anything but X/Z
  for (double p : {p_pauli, p_meas, p_loss}) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("probabilities must be in [0, 1]");
  }
  if (decoder != "mwpm" && decoder != "de-mwpm" && decoder != "flicker" &&
      decoder != "stgnn")
    throw std::invalid_argument("decoder must be mwpm, de-mwpm, flicker or stgnn");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("threshold must be in [0, 1]");
  if (decoder == "stgnn" && hidden_dim % std::max(1, n_heads) != 0)
    throw std::invalid_argument("hidden_dim must be a multiple of n_heads");
}

namespace {

std::string hash_string(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::vector<double> threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  return grid;
}

json loss_metrics_json(const std::vector<std::vector<double>>& probs,
                       const std::vector<ShotRecord>& records, double threshold) {
  LossMetrics m = loss_metrics(probs, records, threshold);
  json out{{"precision", m.precision}, {"recall", m.recall},    {"f1", m.f1},
           {"tp", m.tp},               {"fp", m.fp},            {"fn", m.fn},
           {"tn", m.tn},               {"threshold", threshold}};
  json curve = json::array();
  for (const ThresholdPoint& pt : threshold_sweep(probs, records, threshold_grid())) {
    curve.push_back({{"threshold", pt.threshold},
                     {"precision", pt.precision},
                     {"recall", pt.recall},
                     {"f1", pt.f1}});
  }
  out["threshold_curve"] = curve;

  std::vector<std::vector<bool>> verdicts;
  for (size_t s = 0; s < records.size(); ++s) {
    std::vector<bool> v(records[s].num_data);
    for (int q = 0; q < records[s].num_data; ++q) v[q] = probs[s][q] >= threshold;
    verdicts.push_back(std::move(v));
  }
  MissAnalysis ma = miss_analysis(verdicts, records);
  out["fn_by_loss_round"] = ma.fn_by_loss_round;
  out["events_by_loss_round"] = ma.events_by_loss_round;
  out["miss_rate_by_round"] = ma.miss_rate_by_round;
  return out;
}

json logical_json(const LogicalAccuracy& acc, int T) {
  return json{{"accuracy", acc.accuracy},
              {"correct", acc.correct},
              {"scored", acc.scored},
              {"per_observable", acc.per_observable},
              {"per_T", {{std::to_string(T), acc.accuracy}}}};
}

}  // namespace

int cmd_sample(const RunConfig& cfg) {
  cfg.validate_common();
  if (cfg.out.empty()) throw std::invalid_argument("sample needs --out");
  CodeLayout layout = build_layout(cfg.d);
  NoiseParams noise{cfg.p_pauli, cfg.p_meas, cfg.p_loss};
  Dataset ds = sample_dataset(layout, noise, cfg.T, basis_from_string(cfg.basis),
                              cfg.shots, cfg.seed);
  save_dataset(ds, cfg.out);
  std::cout << "wrote " << cfg.out << " shots=" << cfg.shots
            << " hash=" << hash_string(dataset_hash(ds)) << "\n";
  return kOk;
}

int cmd_decode(const RunConfig& cfg) {
  cfg.validate_common();
  if (cfg.dataset.empty()) throw std::invalid_argument("decode needs --dataset");
  if (cfg.out.empty()) throw std::invalid_argument("decode needs --out");
  Dataset ds = load_dataset(cfg.dataset);
  CodeLayout layout = build_layout(ds.header.d);
  const int T = ds.header.T;
  const Basis basis = ds.header.basis;

  json report;
  report["config"] = cfg.to_json();
  report["decoder"] = cfg.decoder;
  report["dataset_hash"] = hash_string(dataset_hash(ds));
  report["d"] = ds.header.d;
  report["T"] = T;
  report["basis"] = to_string(basis);
  report["shots"] = ds.shots.size();

  if (cfg.decoder == "mwpm" || cfg.decoder == "de-mwpm") {
    NoiseParams pauli_only{ds.header.noise.p_pauli, ds.header.noise.p_meas, 0.0};
    DetectorGraph graph = build_detector_graph(layout, pauli_only, T, basis);
    std::vector<BitVec> predictions;
    predictions.reserve(ds.shots.size());
    for (const ShotRecord& rec : ds.shots) {
      if (cfg.decoder == "de-mwpm") {
        // Privileged baseline: true loss locations at the final round.
        std::vector<int> lost;
        for (int q = 0; q < rec.num_data; ++q)
          if (rec.data_lost_final(q)) lost.push_back(q);
        std::vector<double> w = erased_weights(graph, lost);
        predictions.push_back(mwpm_decode(graph, rec.detectors, &w));
      } else {
        predictions.push_back(mwpm_decode(graph, rec.detectors));
      }
    }
    report["logical"] = logical_json(logical_accuracy(predictions, ds.shots), T);
  } else if (cfg.decoder == "flicker") {
    double bg = cfg.background_rate;
    if (bg <= 0.0) {
      bg = calibrate_background(layout, ds.header.noise, T, basis,
                                cfg.calibration_shots, ds.header.seed ^ 0xBEEFull);
    }
    report["background_rate"] = bg;
    double prior = 1.0 - std::pow(1.0 - ds.header.noise.p_loss, double(T));
    prior = std::min(0.99, std::max(1e-6, prior));
    report["loss_prior"] = prior;
    std::vector<std::vector<double>> probs;
    for (const ShotRecord& rec : ds.shots) {
      FlickerScore fs = flicker_scores(rec.detectors, layout, T, basis, bg);
      probs.push_back(flicker_probabilities(fs, prior));
    }
    // No logical prediction capability: the report carries loss metrics only.
    report["logical"] = nullptr;
    report["loss"] = loss_metrics_json(probs, ds.shots, cfg.threshold);
  } else {  // stgnn
    if (cfg.checkpoint.empty()) throw std::invalid_argument("stgnn needs --checkpoint");
    ModelParams params = load_checkpoint(cfg.checkpoint);
    if (params.d != ds.header.d || params.T != T)
      throw std::invalid_argument("checkpoint geometry does not match dataset");
    DistanceMatrix dist = shortest_distances(layout, params.config.distance_cap);
    std::vector<BitVec> predictions;
    std::vector<std::vector<double>> probs;
    for (const ShotRecord& rec : ds.shots) {
      ForwardOutput out = forward_one(params, layout, dist, rec);
      BitVec pred(params.d);
      for (int i = 0; i < params.d; ++i) pred.set(i, out.logical_logits[i] > 0.0);
      predictions.push_back(std::move(pred));
      std::vector<double> p(rec.num_data);
      for (int q = 0; q < rec.num_data; ++q) {
        double logit =
            out.loss_logits[(static_cast<size_t>(T - 1)) * rec.num_data + q];
        p[q] = 1.0 / (1.0 + std::exp(-logit));
      }
      probs.push_back(std::move(p));
    }
    report["logical"] = logical_json(logical_accuracy(predictions, ds.shots), T);
    report["loss"] = loss_metrics_json(probs, ds.shots, cfg.threshold);
  }

  write_json(report, cfg.out);
  std::cout << "wrote " << cfg.out << "\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg) {
  cfg.validate_common();
  if (cfg.dataset.empty()) throw std::invalid_argument("train needs --dataset");
  if (cfg.out.empty()) throw std::invalid_argument("train needs --out");
  Dataset ds = load_dataset(cfg.dataset);
  CodeLayout layout = build_layout(ds.header.d);

  ModelConfig mc;
  mc.hidden_dim = cfg.hidden_dim;
  mc.n_heads = cfg.n_heads;
  mc.blocks = cfg.blocks;
  mc.kernel = cfg.kernel;
  mc.distance_cap = cfg.distance_cap;
  mc.lambda_logic = cfg.lambda_logic;
  mc.lambda_loss = cfg.lambda_loss;
  mc.dropout = cfg.dropout;
  mc.pos_weight = cfg.pos_weight;
  mc.init_seed = cfg.model_seed;
  mc.validate();

  DistanceMatrix dist = shortest_distances(layout, mc.distance_cap);
  ModelParams params = cfg.resume.empty()
                           ? init_params(mc, layout, ds.header.T, dist)
                           : load_checkpoint(cfg.resume);

  OptimizerConfig opt;
  opt.lr = cfg.lr;
  opt.lr_decay = cfg.lr_decay;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.shuffle_seed = cfg.train_seed;

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!cfg.log.empty()) {
    log_file.open(cfg.log);
    if (!log_file) throw std::runtime_error("cannot open " + cfg.log + " for writing");
    log = &log_file;
  }
  TrainResult result = train(params, layout, dist, ds, opt, log);
  save_checkpoint(params, cfg.out);
  std::cout << "wrote " << cfg.out << " epochs=" << params.epochs_trained
            << " final_loss=" << result.curve.back().loss
            << " logical_acc=" << result.curve.back().logical_accuracy
            << " loss_recall=" << result.curve.back().recall << "\n";
  return kOk;
}

int cmd_bench(const RunConfig& cfg) {
  cfg.validate_common();
  if (cfg.dataset.empty()) throw std::invalid_argument("bench needs --dataset");
  if (cfg.out.empty()) throw std::invalid_argument("bench needs --out");
  Dataset ds = load_dataset(cfg.dataset);
  CodeLayout layout = build_layout(ds.header.d);
  const int T = ds.header.T;

  std::vector<ShotRecord> windows(
      ds.shots.begin(),
      ds.shots.begin() + std::min<size_t>(ds.shots.size(), cfg.windows));

  json report;
  report["config"] = cfg.to_json();
  report["decoder"] = cfg.decoder;
  report["dataset_hash"] = hash_string(dataset_hash(ds));
  report["repetitions"] = cfg.repetitions;
  report["warmup"] = cfg.warmup;

  LatencyStats stats;
  if (cfg.decoder == "stgnn") {
    if (cfg.checkpoint.empty()) throw std::invalid_argument("stgnn needs --checkpoint");
    ModelParams params = load_checkpoint(cfg.checkpoint);
    DistanceMatrix dist = shortest_distances(layout, params.config.distance_cap);
    uint64_t passes_before = forward_pass_count();
    uint64_t calls = 0;
    stats = latency_bench(
        [&](const ShotRecord& rec) {
          // One full-window parallel inference pass per window.
          forward_one(params, layout, dist, rec);
          ++calls;
        },
        windows, cfg.repetitions, cfg.warmup);
    uint64_t passes = forward_pass_count() - passes_before;
    stats.single_pass_per_window = (passes == calls);
    report["forward_passes"] = passes;
    report["decode_calls"] = calls;
  } else if (cfg.decoder == "mwpm") {
    NoiseParams pauli_only{ds.header.noise.p_pauli, ds.header.noise.p_meas, 0.0};
    DetectorGraph graph = build_detector_graph(layout, pauli_only, T,
                                               ds.header.basis);
    stats = latency_bench([&](const ShotRecord& rec) { mwpm_decode(graph, rec.detectors); },
                          windows, cfg.repetitions, cfg.warmup);
    stats.single_pass_per_window = true;
  } else {
    throw std::invalid_argument("bench supports stgnn and mwpm");
  }

  report["latency"] = {{"per_window_ms_median", stats.median_ms},
                       {"per_window_ms_iqr", stats.iqr_ms},
                       {"per_window_ms_p25", stats.p25_ms},
                       {"per_window_ms_p75", stats.p75_ms},
                       {"windows_measured", stats.windows_measured},
                       {"single_pass_per_window", stats.single_pass_per_window},
                       {"scale_note", "relative desk-scale timing only"}};
  write_json(report, cfg.out);
  std::cout << "wrote " << cfg.out << " median_ms=" << stats.median_ms << "\n";
  return kOk;
}

}  // namespace qlw::cli
