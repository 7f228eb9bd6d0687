#pragma once

#include <vector>

#include "fedtrust/types.hpp"

namespace fedtrust {

// Per-client outcome of the trust pipeline for one round: the RL bin, the
// anomaly score, and the final normalized aggregation weight.
struct TrustAssignment {
  std::vector<int> actions;
  std::vector<float> bins;
  std::vector<float> anomalies;
  std::vector<double> weights;  // w_k >= 0, sum == 1 (uniform fallback)
  bool uniform_fallback = false;
};

// Multiplicative gate raw_k = b_k * (1 - 0.5 a_k), renormalized in 64-bit;
// all-zero raw weights fall back to uniform.
TrustAssignment combine_trust(const std::vector<float>& bins,
                              const std::vector<float>& anomalies);

struct DetectionCounts {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  double fpr = 0.0, fnr = 0.0;
  bool fpr_defined = true, fnr_defined = true;  // false when no negatives/positives
};

// Predicted-malicious := bin <= 0.2, scored against ground-truth tags
// (simulation only). Undefined rates are recorded as 0 with the flag unset.
DetectionCounts detection_counts(const std::vector<float>& bins,
                                 const std::vector<AttackKind>& tags);

// R = 1.0 dACC - 2.0 FPR - 3.0 FNR + 0.5 EFF, EFF = mean 2|b - 0.5|.
double compute_reward(double delta_acc, double fpr, double fnr,
                      const std::vector<float>& bins);

}  // namespace fedtrust
