#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qlw/bitvec.hpp"
#include "qlw/experiment.hpp"

namespace qlw {

struct LogicalAccuracy {
  double accuracy = 0.0;        // mean over (shot, kept observable) pairs
  uint64_t correct = 0;
  uint64_t scored = 0;          // kept observable instances
  std::vector<double> per_observable;  // accuracy per observable index
};

// Observables with excluded_observables = 1 are dropped; shots with no kept
// observables contribute nothing.
LogicalAccuracy logical_accuracy(const std::vector<BitVec>& predictions,
                                 const std::vector<ShotRecord>& records);

struct LossMetrics {
  double precision = 1.0;  // defined 1 when no positive predictions
  double recall = 1.0;     // defined 1 when no positives exist
  double f1 = 0.0;
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Positive truth: qubit lost at any round <= T. Positive prediction:
// final-round probability >= threshold.
LossMetrics loss_metrics(const std::vector<std::vector<double>>& final_probs,
                         const std::vector<ShotRecord>& records, double threshold);

struct ThresholdPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

std::vector<ThresholdPoint> threshold_sweep(
    const std::vector<std::vector<double>>& final_probs,
    const std::vector<ShotRecord>& records, const std::vector<double>& grid);

struct MissAnalysis {
  std::vector<uint64_t> fn_by_loss_round;      // onset-round histogram of FNs
  std::vector<uint64_t> events_by_loss_round;  // all events per onset round
  std::vector<double> miss_rate_by_round;      // FN / events per onset round
};

// final_verdicts[shot][q]: the decoder's final lost/kept call per data qubit.
MissAnalysis miss_analysis(const std::vector<std::vector<bool>>& final_verdicts,
                           const std::vector<ShotRecord>& records);

struct LatencyStats {
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  double p25_ms = 0.0;
  double p75_ms = 0.0;
  uint64_t windows_measured = 0;
  uint64_t warmup = 0;
  bool single_pass_per_window = false;
};

// Wall-clock per decoded window; decode_window is called once per
// (repetition, window) after `warmup` untimed iterations.
LatencyStats latency_bench(const std::function<void(const ShotRecord&)>& decode_window,
                           const std::vector<ShotRecord>& windows, int repetitions,
                           int warmup);

}  // namespace qlw
