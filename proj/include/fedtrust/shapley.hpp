#pragma once

#include <vector>

#include "fedtrust/data.hpp"
#include "fedtrust/fingerprint.hpp"
#include "fedtrust/model.hpp"

namespace fedtrust {

struct ShapleyEstimate {
  enum class Mode { MonteCarlo, Exact };
  Vecd phi;
  int samples_used = 0;
  Mode mode = Mode::MonteCarlo;
  double value_empty = 0.0;
  double value_full = 0.0;
};

// Coalition value: validation-loss improvement when the coalition's updates
// are applied to the base model at the cohort-normalized step (1/N) sum_S g.
// v(empty) = 0. The fixed denominator keeps the step bounded independent of
// coalition size, makes incremental aggregation a single scaled addition,
// and is the aggregation under which a zero update is a true dummy player.
double coalition_value(const ParameterSet& base,
                       const std::vector<const GradientUpdate*>& coalition,
                       const LabeledDataset& val, int cohort_size);

// Permutation-sampling estimate: M seeded permutations, one prefix walk
// each, prefix aggregates maintained incrementally so each step costs one
// scaled vector addition and one validation pass. Permutations are distributed across
// threads with per-permutation streams and reduced in index order, so
// parallel and serial runs match bitwise. threads <= 0 picks automatically.
ShapleyEstimate mc_shapley(const ParameterSet& base,
                           const std::vector<GradientUpdate>& updates,
                           const LabeledDataset& val, int samples,
                           RngStream stream, int threads = 0);

// Classical sum over all 2^N coalitions with factorial weights (N <= 12).
// Test oracle for the Monte-Carlo path; satisfies efficiency exactly.
ShapleyEstimate exact_shapley(const ParameterSet& base,
                              const std::vector<GradientUpdate>& updates,
                              const LabeledDataset& val);

// 200 permutations when an attack is suspected, 50 on clean-looking rounds.
int adaptive_samples(bool attack_suspected);

// Suspicion trigger: any f4 above 3x the round median, or any negative f2.
bool attack_suspected(const std::vector<FingerprintVector>& fps);

// Exponential smoothing of per-client contribution scores, f6(0) = 0.
struct SmoothedContribution {
  Vecd state;
  double beta = 0.3;

  explicit SmoothedContribution(int clients = 0, double beta_ = 0.3)
      : state(Vecd::Zero(clients)), beta(beta_) {}
};

Vecd smooth_f6(SmoothedContribution& s, const Vecd& phi);

}  // namespace fedtrust
