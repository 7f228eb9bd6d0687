#include "fedtrust/model.hpp"

namespace fedtrust {

const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::Scaling: return "scaling";
    case AttackKind::PartialScaling: return "partial_scaling";
    case AttackKind::SignFlip: return "sign_flip";
    case AttackKind::AdditiveNoise: return "additive_noise";
    case AttackKind::LabelFlip: return "label_flip";
  }
  return "none";
}

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "none") return AttackKind::None;
  if (name == "scaling") return AttackKind::Scaling;
  if (name == "partial_scaling") return AttackKind::PartialScaling;
  if (name == "sign_flip") return AttackKind::SignFlip;
  if (name == "additive_noise") return AttackKind::AdditiveNoise;
  if (name == "label_flip") return AttackKind::LabelFlip;
  throw ConfigError("unknown attack kind: " + name);
}

EvalMetrics evaluate(const ParameterSet& p, const Matf& x,
                     const std::vector<int>& y) {
  Matf logits;
  double loss = forward_eval(p, x, y, &logits);
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < (int)logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    if (best == y[i]) ++correct;
  }
  return {loss, double(correct) / double(logits.rows())};
}

LocalTrainResult local_train_prox(const ParameterSet& global,
                                  const ParameterSet& persisted,
                                  const Matf& x, const std::vector<int>& y,
                                  int epochs, float mu, const AdamConfig& adam,
                                  int batch_size, RngStream stream,
                                  int client_id, int round) {
  if (epochs < 1 || epochs > 64)
    throw ConfigError("local epochs must be in [1, 64]");
  if (mu < 0.f) throw ConfigError("proximal mu must be >= 0");
  if (x.rows() == 0) throw DataError("client dataset is empty");

  ParameterSet theta = global;
  // Restore this client's bn gamma/beta and running stats before training.
  for (const Slice& s : theta.layout.bn_local_slices())
    theta.values.segment(s.begin, s.size) =
        persisted.values.segment(s.begin, s.size);
  theta.bn_stats = persisted.bn_stats;

  Vecf anchor = theta.values;
  train_epochs<float>(theta, x, y, epochs, mu, &anchor, adam, batch_size,
                      stream);

  GradientUpdate update;
  update.delta = theta.values - global.values;
  theta.layout.zero_bn_local(update.delta);
  update.client_id = client_id;
  update.round = round;
  update.tag = AttackKind::None;
  return {std::move(theta), std::move(update)};
}

}  // namespace fedtrust
