#include "fedtrust/attack.hpp"

#include <algorithm>
#include <cmath>

namespace fedtrust {

GradientUpdate apply_gradient_attack(const AttackSpec& spec,
                                     const GradientUpdate& g) {
  GradientUpdate out = g;
  out.tag = spec.kind;
  RngStream stream = RngStream::from_seed(spec.seed)
                         .child("attack", (uint64_t)g.round,
                                (uint64_t)std::max(g.client_id, 0));
  switch (spec.kind) {
    case AttackKind::Scaling:
      out.delta = spec.lambda * g.delta;
      break;
    case AttackKind::PartialScaling: {
      int d = (int)g.delta.size();
      int m = (int)std::floor(double(spec.mask_fraction) * d);
      std::vector<int> mask = stream.sample_without_replacement(d, m);
      for (int i : mask) out.delta[i] *= spec.partial_lambda;
      break;
    }
    case AttackKind::SignFlip:
      out.delta = -g.delta;
      break;
    case AttackKind::AdditiveNoise:
      for (Eigen::Index i = 0; i < out.delta.size(); ++i)
        out.delta[i] += float(double(spec.sigma) * stream.normal());
      break;
    case AttackKind::None:
      break;
    case AttackKind::LabelFlip:
      throw UsageError("label_flip corrupts data, not gradients");
  }
  return out;
}

LabeledDataset apply_label_flip(const LabeledDataset& ds, float flip_prob,
                                int classes, uint64_t seed) {
  if (classes < 2) throw ConfigError("label flip needs >= 2 classes");
  LabeledDataset out = ds;
  RngStream stream = RngStream::from_seed(seed).child("label_flip");
  for (size_t i = 0; i < out.labels.size(); ++i) {
    if (stream.u01() >= double(flip_prob)) continue;
    int shift = 1 + stream.uniform_int(classes - 1);
    out.labels[i] = (out.labels[i] + shift) % classes;
  }
  return out;
}

AttackSchedule make_schedule(int clients, double fraction, uint64_t seed,
                             bool allow_overcap) {
  if (fraction < 0 || fraction > 1)
    throw ConfigError("malicious fraction must be in [0,1]");
  if (fraction > 0.3 && !allow_overcap)
    throw ThreatModelError(
        "malicious fraction above the 0.3 cap needs the override flag");
  AttackSchedule sched;
  sched.fraction = fraction;
  sched.conformant = fraction <= 0.3;
  int m = (int)std::floor(fraction * clients);
  RngStream stream = RngStream::from_seed(seed).child("schedule");
  for (int id : stream.sample_without_replacement(clients, m))
    sched.malicious_ids.insert(id);
  return sched;
}

}  // namespace fedtrust
