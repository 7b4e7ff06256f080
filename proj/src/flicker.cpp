#include "qlw/flicker.hpp"

#include <cmath>
#include <stdexcept>

namespace qlw {

FlickerScore flicker_scores(const BitVec& detectors, const CodeLayout& layout, int T,
                            Basis basis, double background_rate) {
  if (!(background_rate > 0.0 && background_rate < 0.5))
    throw std::invalid_argument("background_rate must be in (0, 0.5)");
  if (detectors.n != static_cast<size_t>(layout.num_detectors(T)))
    throw std::invalid_argument("detector volume shape mismatch");

  const double log_click = std::log(0.5 / background_rate);
  const double log_quiet = std::log(0.5 / (1.0 - background_rate));

  FlickerScore fs;
  fs.num_data = layout.num_data;
  fs.T = T;
  fs.score.assign(static_cast<size_t>(layout.num_data) * T, 0.0);
  fs.per_qubit.assign(layout.num_data, 0.0);

  for (int q = 0; q < layout.num_data; ++q) {
    // Suffix sums over the qubit's adjacent detectors: score for onset r is
    // the evidence in slices >= r.
    std::vector<double> slice_term(T + 2, 0.0);  // index by slice 1..T+1
    for (int ord : layout.data_anc[q]) {
      bool on_basis = layout.is_on_basis(ord, basis);
      int first = on_basis ? 1 : 2;
      int last = on_basis ? T + 1 : T;
      for (int s = first; s <= last; ++s) {
        bool click = detectors.get(static_cast<size_t>(s - 1) * layout.num_anc + ord);
        slice_term[s] += click ? log_click : log_quiet;
      }
    }
    double suffix = 0.0;
    for (int r = T; r >= 1; --r) {
      suffix += slice_term[r];
      if (r == T) suffix += slice_term[T + 1];
      fs.score[static_cast<size_t>(q) * T + (r - 1)] = suffix;
    }
    double best = fs.score[static_cast<size_t>(q) * T];
    for (int r = 2; r <= T; ++r)
      best = std::max(best, fs.score[static_cast<size_t>(q) * T + (r - 1)]);
    fs.per_qubit[q] = best;
  }
  return fs;
}

BitVec classify(const FlickerScore& scores, double threshold) {
  BitVec mask(static_cast<size_t>(scores.num_data) * scores.T);
  for (int q = 0; q < scores.num_data; ++q) {
    for (int r = 1; r <= scores.T; ++r) {
      if (scores.at(q, r) >= threshold)
        mask.set(static_cast<size_t>(q) * scores.T + (r - 1), true);
    }
  }
  return mask;
}

double calibrate_background(const CodeLayout& layout, const NoiseParams& noise, int T,
                            Basis basis, uint64_t shots, uint64_t seed) {
  NoiseParams loss_free = noise;
  loss_free.p_loss = 0.0;
  uint64_t clicks = 0, slots = 0;
  for (uint64_t i = 0; i < shots; ++i) {
    SplitRng rng(seed, i);
    ShotRecord rec = run_shot(layout, loss_free, T, basis, rng);
    clicks += rec.detectors.popcount();
    slots += rec.detectors.n;
  }
  double rate = slots ? static_cast<double>(clicks) / static_cast<double>(slots) : 0.0;
  // Keep the likelihood ratio well defined even on an all-quiet calibration.
  return std::min(0.49, std::max(1e-4, rate));
}

std::vector<double> flicker_probabilities(const FlickerScore& scores, double prior) {
  if (!(prior > 0.0 && prior < 1.0))
    throw std::invalid_argument("prior must be in (0, 1)");
  const double prior_logit = std::log(prior / (1.0 - prior));
  std::vector<double> p(scores.num_data);
  for (int q = 0; q < scores.num_data; ++q) {
    p[q] = 1.0 / (1.0 + std::exp(-(scores.per_qubit[q] + prior_logit)));
  }
  return p;
}

}  // namespace qlw
