#include "doctest.h"

#include <cmath>
#include <thread>

#include "qlw/metrics.hpp"

using namespace qlw;

namespace {

// Minimal synthetic records: d data qubits on one row each, no geometry.
ShotRecord make_record(int d, int T) {
  ShotRecord rec;
  rec.basis = Basis::Z;
  rec.d = d;
  rec.T = T;
  rec.num_data = d * d;
  rec.num_anc = d * d - 1;
  rec.logical_labels = BitVec(d);
  rec.excluded_observables = BitVec(d);
  rec.loss_mask_truth = BitVec(static_cast<size_t>(T) * d * d);
  return rec;
}

void set_lost(ShotRecord& rec, int q, int onset) {
  for (int r = onset; r <= rec.T; ++r)
    rec.loss_mask_truth.set(static_cast<size_t>(r - 1) * rec.num_data + q, true);
}

}  // namespace

TEST_CASE("logical accuracy with exclusions matches hand computation") {
  const int d = 3, T = 2;
  std::vector<ShotRecord> records;
  std::vector<BitVec> preds;

  ShotRecord r1 = make_record(d, T);  // all correct
  preds.push_back(BitVec(d));
  records.push_back(r1);

  ShotRecord r2 = make_record(d, T);  // observable 1 excluded, one wrong
  r2.excluded_observables.set(1, true);
  r2.logical_labels.set(0, true);
  BitVec p2(d);  // predicts all zero: observable 0 wrong, 2 right
  preds.push_back(p2);
  records.push_back(r2);

  LogicalAccuracy acc = logical_accuracy(preds, records);
  // Scored: 3 (shot 1) + 2 (shot 2) = 5; correct: 3 + 1 = 4.
  CHECK(acc.scored == 5);
  CHECK(acc.correct == 4);
  CHECK(acc.accuracy == doctest::Approx(0.8));

  SUBCASE("all predictions correct, no loss, gives 1.0") {
    std::vector<BitVec> perfect = {records[0].logical_labels,
                                   records[1].logical_labels};
    CHECK(logical_accuracy(perfect, records).accuracy ==
          doctest::Approx(5.0 / 5.0));
  }
  SUBCASE("arity mismatch throws") {
    std::vector<BitVec> bad = {BitVec(2), BitVec(2)};
    CHECK_THROWS_AS(logical_accuracy(bad, records), std::invalid_argument);
  }
}

TEST_CASE("fully excluded shots contribute nothing") {
  const int d = 3;
  ShotRecord rec = make_record(d, 2);
  for (int i = 0; i < d; ++i) rec.excluded_observables.set(i, true);
  LogicalAccuracy acc = logical_accuracy({BitVec(d)}, {rec});
  CHECK(acc.scored == 0);
}

TEST_CASE("random predictions on balanced labels sit near one half") {
  const int d = 5, shots = 4000;
  std::vector<ShotRecord> records;
  std::vector<BitVec> preds;
  SplitRng rng(1);
  for (int s = 0; s < shots; ++s) {
    ShotRecord rec = make_record(d, 1);
    BitVec p(d);
    for (int i = 0; i < d; ++i) {
      rec.logical_labels.set(i, rng.coin());
      p.set(i, rng.coin());
    }
    records.push_back(rec);
    preds.push_back(p);
  }
  double acc = logical_accuracy(preds, records).accuracy;
  double sigma = std::sqrt(0.25 / (shots * d));
  CHECK(std::abs(acc - 0.5) < 4 * sigma);
}

TEST_CASE("precision and recall on the {a,b} vs {a,c} example") {
  // Predicted lost {a, b}, truly lost {a, c}: TP=1, FP=1, FN=1.
  const int d = 3, T = 2;
  ShotRecord rec = make_record(d, T);
  set_lost(rec, 0, 1);  // a
  set_lost(rec, 2, 1);  // c
  std::vector<double> probs(rec.num_data, 0.0);
  probs[0] = 0.9;  // a
  probs[1] = 0.9;  // b
  LossMetrics m = loss_metrics({probs}, {rec}, 0.5);
  CHECK(m.precision == doctest::Approx(0.5));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f1 == doctest::Approx(0.5));
}

TEST_CASE("degenerate precision and recall definitions") {
  const int d = 3;
  ShotRecord clean = make_record(d, 2);
  std::vector<double> zeros(clean.num_data, 0.0);
  LossMetrics m = loss_metrics({zeros}, {clean}, 0.5);
  CHECK(m.precision == 1.0);  // no positive predictions
  CHECK(m.recall == 1.0);     // no positives exist
  CHECK_THROWS_AS(loss_metrics({zeros}, {clean}, 1.5), std::invalid_argument);
}

TEST_CASE("threshold sweep is monotone and satisfies the f1 identity") {
  const int d = 3, T = 3;
  std::vector<ShotRecord> records;
  std::vector<std::vector<double>> probs;
  SplitRng rng(7);
  for (int s = 0; s < 500; ++s) {
    ShotRecord rec = make_record(d, T);
    std::vector<double> p(rec.num_data);
    for (int q = 0; q < rec.num_data; ++q) {
      bool lost = rng.bernoulli(0.2);
      if (lost) set_lost(rec, q, 1 + static_cast<int>(rng.uniform_int(T)));
      p[q] = lost ? 0.3 + 0.7 * rng.uniform() : 0.6 * rng.uniform();
    }
    records.push_back(rec);
    probs.push_back(p);
  }
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  auto curve = threshold_sweep(probs, records, grid);
  REQUIRE(curve.size() == grid.size());
  for (size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].recall <= curve[i - 1].recall + 1e-12);
    CHECK(curve[i].precision >= curve[i - 1].precision - 1e-12);
  }
  for (const ThresholdPoint& pt : curve) {
    if (pt.precision + pt.recall > 0) {
      CHECK(pt.f1 == doctest::Approx(2 * pt.precision * pt.recall /
                                     (pt.precision + pt.recall)));
    }
  }
  CHECK_THROWS_AS(threshold_sweep(probs, records, {}), std::invalid_argument);
}

TEST_CASE("miss analysis categorizes false negatives by onset round") {
  const int d = 3, T = 4;
  std::vector<ShotRecord> records;
  std::vector<std::vector<bool>> verdicts;

  ShotRecord rec = make_record(d, T);
  set_lost(rec, 0, 1);  // onset 1, will be caught
  set_lost(rec, 4, 3);  // onset 3, missed
  set_lost(rec, 7, 4);  // onset 4, missed
  std::vector<bool> verdict(rec.num_data, false);
  verdict[0] = true;
  records.push_back(rec);
  verdicts.push_back(verdict);

  MissAnalysis ma = miss_analysis(verdicts, records);
  CHECK(ma.events_by_loss_round[1] == 1);
  CHECK(ma.events_by_loss_round[3] == 1);
  CHECK(ma.events_by_loss_round[4] == 1);
  CHECK(ma.fn_by_loss_round[1] == 0);
  CHECK(ma.fn_by_loss_round[3] == 1);
  CHECK(ma.fn_by_loss_round[4] == 1);
  CHECK(ma.miss_rate_by_round[1] == 0.0);
  CHECK(ma.miss_rate_by_round[3] == 1.0);

  SUBCASE("perfect detector has no false negatives") {
    std::vector<bool> all_caught(rec.num_data, true);
    MissAnalysis perfect = miss_analysis({all_caught}, {rec});
    for (uint64_t f : perfect.fn_by_loss_round) CHECK(f == 0);
  }
}

TEST_CASE("latency bench reports ordered quantiles and validates inputs") {
  ShotRecord rec = make_record(3, 2);
  std::vector<ShotRecord> windows(5, rec);
  int calls = 0;
  auto decoder = [&](const ShotRecord&) {
    ++calls;
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  };
  LatencyStats stats = latency_bench(decoder, windows, 3, 2);
  CHECK(stats.windows_measured == 15);
  CHECK(stats.warmup == 2);
  CHECK(calls == 17);
  CHECK(stats.median_ms > 0.0);
  CHECK(stats.p25_ms <= stats.median_ms);
  CHECK(stats.median_ms <= stats.p75_ms);
  CHECK_THROWS_AS(latency_bench(decoder, {}, 3, 0), std::invalid_argument);
  CHECK_THROWS_AS(latency_bench(decoder, windows, 0, 2), std::invalid_argument);
}
