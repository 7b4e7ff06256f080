#include "qlw/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace qlw {

LogicalAccuracy logical_accuracy(const std::vector<BitVec>& predictions,
                                 const std::vector<ShotRecord>& records) {
  if (predictions.size() != records.size())
    throw std::invalid_argument("prediction count does not match record count");
  LogicalAccuracy out;
  std::vector<uint64_t> correct_per, scored_per;
  for (size_t s = 0; s < records.size(); ++s) {
    const ShotRecord& rec = records[s];
    const BitVec& pred = predictions[s];
    if (pred.n != static_cast<size_t>(rec.d))
      throw std::invalid_argument("prediction arity does not match d");
    if (correct_per.empty()) {
      correct_per.assign(rec.d, 0);
      scored_per.assign(rec.d, 0);
    }
    for (int i = 0; i < rec.d; ++i) {
      if (rec.excluded_observables.get(i)) continue;
      ++out.scored;
      ++scored_per[i];
      if (pred.get(i) == rec.logical_labels.get(i)) {
        ++out.correct;
        ++correct_per[i];
      }
    }
  }
  out.accuracy = out.scored ? static_cast<double>(out.correct) / out.scored : 0.0;
  for (size_t i = 0; i < scored_per.size(); ++i) {
    out.per_observable.push_back(
        scored_per[i] ? static_cast<double>(correct_per[i]) / scored_per[i] : 0.0);
  }
  return out;
}

LossMetrics loss_metrics(const std::vector<std::vector<double>>& final_probs,
                         const std::vector<ShotRecord>& records, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("threshold must be in [0, 1]");
  if (final_probs.size() != records.size())
    throw std::invalid_argument("probability count does not match record count");
  LossMetrics m;
  for (size_t s = 0; s < records.size(); ++s) {
    const ShotRecord& rec = records[s];
    const std::vector<double>& probs = final_probs[s];
    for (int q = 0; q < rec.num_data; ++q) {
      bool truth = rec.data_lost_final(q);
      bool pred = probs[q] >= threshold;
      if (truth && pred) ++m.tp;
      if (!truth && pred) ++m.fp;
      if (truth && !pred) ++m.fn;
      if (!truth && !pred) ++m.tn;
    }
  }
  m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / (m.tp + m.fp) : 1.0;
  m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / (m.tp + m.fn) : 1.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

std::vector<ThresholdPoint> threshold_sweep(
    const std::vector<std::vector<double>>& final_probs,
    const std::vector<ShotRecord>& records, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("threshold grid must not be empty");
  std::vector<ThresholdPoint> curve;
  curve.reserve(grid.size());
  for (double t : grid) {
    LossMetrics m = loss_metrics(final_probs, records, t);
    curve.push_back({t, m.precision, m.recall, m.f1});
  }
  return curve;
}

MissAnalysis miss_analysis(const std::vector<std::vector<bool>>& final_verdicts,
                           const std::vector<ShotRecord>& records) {
  if (final_verdicts.size() != records.size())
    throw std::invalid_argument("verdict count does not match record count");
  MissAnalysis out;
  if (records.empty()) return out;
  int T = records.front().T;
  out.fn_by_loss_round.assign(T + 1, 0);
  out.events_by_loss_round.assign(T + 1, 0);
  for (size_t s = 0; s < records.size(); ++s) {
    const ShotRecord& rec = records[s];
    for (int q = 0; q < rec.num_data; ++q) {
      if (!rec.data_lost_final(q)) continue;
      int onset = 1;
      while (onset <= T && !rec.data_lost_at(q, onset)) ++onset;
      ++out.events_by_loss_round[onset];
      if (!final_verdicts[s][q]) ++out.fn_by_loss_round[onset];
    }
  }
  out.miss_rate_by_round.assign(T + 1, 0.0);
  for (int r = 1; r <= T; ++r) {
    if (out.events_by_loss_round[r])
      out.miss_rate_by_round[r] = static_cast<double>(out.fn_by_loss_round[r]) /
                                  out.events_by_loss_round[r];
  }
  return out;
}

LatencyStats latency_bench(const std::function<void(const ShotRecord&)>& decode_window,
                           const std::vector<ShotRecord>& windows, int repetitions,
                           int warmup) {
  if (windows.empty()) throw std::invalid_argument("no windows to benchmark");
  if (repetitions < 1)
    throw std::invalid_argument("need at least one timed repetition");
  using clock = std::chrono::steady_clock;

  for (int i = 0; i < warmup; ++i) decode_window(windows[i % windows.size()]);

  std::vector<double> per_window_ms;
  per_window_ms.reserve(static_cast<size_t>(repetitions) * windows.size());
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const ShotRecord& w : windows) {
      auto t0 = clock::now();
      decode_window(w);
      auto t1 = clock::now();
      per_window_ms.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  std::sort(per_window_ms.begin(), per_window_ms.end());
  auto quantile = [&](double q) {
    double pos = q * (per_window_ms.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, per_window_ms.size() - 1);
    double frac = pos - lo;
    return per_window_ms[lo] * (1.0 - frac) + per_window_ms[hi] * frac;
  };
  LatencyStats stats;
  stats.median_ms = quantile(0.5);
  stats.p25_ms = quantile(0.25);
  stats.p75_ms = quantile(0.75);
  stats.iqr_ms = stats.p75_ms - stats.p25_ms;
  stats.windows_measured = per_window_ms.size();
  stats.warmup = static_cast<uint64_t>(warmup);
  return stats;
}

}  // namespace qlw
