#pragma once

#include <vector>

#include "qlw/bitvec.hpp"
#include "qlw/experiment.hpp"
#include "qlw/lattice.hpp"

namespace qlw {

// Per-qubit log-likelihood-ratio of "lost since round r" against "never
// lost": loss turns every adjacent detector into a fair coin, while the
// background clicks at the calibrated Pauli rate.
struct FlickerScore {
  int num_data = 0;
  int T = 0;
  std::vector<double> score;      // (q, r), r = 1..T, row-major per qubit
  std::vector<double> per_qubit;  // max over candidate rounds

  double at(int q, int r) const { return score[static_cast<size_t>(q) * T + (r - 1)]; }
};

// background_rate must be in (0, 0.5). Slots that are structurally zero
// (off-basis slices 1 and T+1) carry no evidence and are skipped.
FlickerScore flicker_scores(const BitVec& detectors, const CodeLayout& layout, int T,
                            Basis basis, double background_rate);

// mask(q, r) = 1 iff score(q, r) >= threshold.
BitVec classify(const FlickerScore& scores, double threshold);

// Empirical mean detector click rate of a loss-free run at the given Pauli
// rates (used to calibrate background_rate).
double calibrate_background(const CodeLayout& layout, const NoiseParams& noise, int T,
                            Basis basis, uint64_t shots, uint64_t seed);

// Loss probability for the evaluation harness: the posterior
// logistic(max-LLR + log prior odds), with `prior` the per-qubit probability
// of being lost anywhere in the window (e.g. 1-(1-p_loss)^T).
std::vector<double> flicker_probabilities(const FlickerScore& scores,
                                          double prior = 0.5);

}  // namespace qlw
