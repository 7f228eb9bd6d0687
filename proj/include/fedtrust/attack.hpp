#pragma once

#include <set>

#include "fedtrust/data.hpp"
#include "fedtrust/model.hpp"
#include "fedtrust/rng.hpp"

namespace fedtrust {

// Attack parameters; defaults follow the standard threat configuration
// (scaling 10x, partial 5x on a 50% mask, sign flip -1, noise sigma per
// dataset, label flip probability 0.5).
struct AttackSpec {
  AttackKind kind = AttackKind::None;
  float lambda = 10.f;
  float partial_lambda = 5.f;
  float mask_fraction = 0.5f;
  float sigma = 10.f;
  float flip_prob = 0.5f;
  uint64_t seed = 0;
};

struct AttackSchedule {
  std::set<int> malicious_ids;
  double fraction = 0.0;
  bool conformant = true;  // false when the 0.3 cap was overridden

  bool is_malicious(int client) const { return malicious_ids.count(client) > 0; }
};

// Gradient-space transforms (scaling, partial scaling, sign flip, additive
// noise). The partial mask and the noise are redrawn per (round, client) from
// the spec seed. Never mutates its input; tags the output with the kind.
GradientUpdate apply_gradient_attack(const AttackSpec& spec,
                                     const GradientUpdate& g);

// Training-time label corruption: each sample independently flips to a
// uniformly random different label with probability flip_prob.
LabeledDataset apply_label_flip(const LabeledDataset& ds, float flip_prob,
                                int classes, uint64_t seed);

// floor(fraction * clients) distinct ids chosen uniformly. Fractions above
// the 0.3 threat cap require the override and mark the run non-conformant.
AttackSchedule make_schedule(int clients, double fraction, uint64_t seed,
                             bool allow_overcap = false);

}  // namespace fedtrust
