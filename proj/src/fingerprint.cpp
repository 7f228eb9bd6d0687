#include "fedtrust/fingerprint.hpp"

#include <cmath>

namespace fedtrust {

double safe_cosine(const Vecf& a, const Vecf& b, bool* degenerate) {
  if (a.size() != b.size())
    throw ShapeError("cosine arguments must have equal dimension");
  double na = a.cast<double>().norm();
  double nb = b.cast<double>().norm();
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return a.cast<double>().dot(b.cast<double>()) / (na * nb);
}

double f2_reference_cosine(const Vecf& g, const ReferenceGradient& ref,
                           bool* degenerate) {
  return safe_cosine(g, ref.vector, degenerate);
}

double f3_peer_cosine(const Vecf& g, const std::vector<const Vecf*>& peers,
                      bool* degenerate) {
  if (peers.empty()) throw UsageError("peer cosine needs >= 1 peer");
  double sum = 0;
  for (const Vecf* p : peers) sum += safe_cosine(g, *p, degenerate);
  return sum / double(peers.size());
}

double f4_l2(const Vecf& g) { return g.cast<double>().norm(); }

double f5_sign_consistency(const Vecf& g, const ReferenceGradient& ref) {
  if (g.size() != ref.vector.size())
    throw ShapeError("sign consistency needs equal dimensions");
  long matches = 0, considered = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    float r = ref.vector[i];
    if (r == 0.f) continue;  // sign(0) is undefined; drop the coordinate
    ++considered;
    float x = g[i];
    if ((x > 0.f && r > 0.f) || (x < 0.f && r < 0.f)) ++matches;
  }
  if (considered == 0) return 0.5;  // all-zero reference: neutral
  return double(matches) / double(considered);
}

ReferenceGradient compute_reference(const ParameterSet& global,
                                    const LabeledDataset& server_val,
                                    const AdamConfig& adam, int batch_size,
                                    int round, RngStream stream) {
  if (server_val.size() == 0)
    throw DataError("reference needs a non-empty validation set");
  ParameterSet server = global;
  train_epochs<float>(server, server_val.features, server_val.labels, 1, 0.f,
                      nullptr, adam, batch_size, stream);
  ReferenceGradient ref;
  ref.vector = server.values - global.values;
  global.layout.zero_bn_local(ref.vector);
  ref.round = round;
  return ref;
}

}  // namespace fedtrust
