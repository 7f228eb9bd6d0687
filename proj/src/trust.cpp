#include "fedtrust/trust.hpp"

#include <cmath>

#include "fedtrust/attention.hpp"
#include "fedtrust/dqn.hpp"

namespace fedtrust {

// --- attention pieces that are not templated ---

namespace {

Eigen::RowVector4d slice_stats(const Vecf& g, int begin, int len) {
  double sum = 0, maxabs = 0, sq = 0;
  for (int i = 0; i < len; ++i) {
    double x = double(g[begin + i]);
    sum += x;
    sq += x * x;
    maxabs = std::max(maxabs, std::abs(x));
  }
  double mean = sum / len;
  double var = 0;
  for (int i = 0; i < len; ++i) {
    double dx = double(g[begin + i]) - mean;
    var += dx * dx;
  }
  var /= len;
  return {mean, std::sqrt(var), maxabs, std::sqrt(sq)};
}

}  // namespace

Matd chunk_stats(const Vecf& g, int chunks) {
  const int d = (int)g.size();
  if (d < chunks)
    throw ShapeError("gradient dimension is smaller than the chunk count");
  Matd stats(chunks, 4);
  const int base = d / chunks;
  const int rem = d % chunks;
  int pos = 0;
  for (int c = 0; c < chunks; ++c) {
    int len = base + (c < rem ? 1 : 0);
    stats.row(c) = slice_stats(g, pos, len);
    pos += len;
  }
  return stats;
}

Matd segment_stats(const Vecf& g, int begin, int len, int pieces) {
  int parts = std::min(pieces, len);
  Matd stats(parts, 4);
  const int base = len / parts;
  const int rem = len % parts;
  int pos = begin;
  for (int c = 0; c < parts; ++c) {
    int sub = base + (c < rem ? 1 : 0);
    stats.row(c) = slice_stats(g, pos, sub);
    pos += sub;
  }
  return stats;
}

double train_attention_step(AttentionParams& p,
                            const std::vector<const Vecf*>& grads,
                            const std::vector<Eigen::Matrix<double, 6, 1>>& feats,
                            const std::vector<int>& labels, double lr) {
  Vecf grad;
  float loss = attention_loss_grad(p, grads, feats, labels, &grad);
  p.params -= float(lr) * grad;
  return double(loss);
}

// --- DQN ---

DqnAgent::DqnAgent(const DqnConfig& cfg, RngStream init_stream) : cfg_(cfg) {
  if (cfg.state_dim < 1) throw ConfigError("dqn state_dim must be >= 1");
  std::vector<int> dims{cfg.state_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.actions);
  std::vector<Act> acts(dims.size() - 1, Act::Relu);
  acts.back() = Act::Identity;
  main_ = make_dense_net<float>(dims, acts, init_stream.child("q_main"));
  target_ = main_;
  opt_.lr = float(cfg.lr);
  opt_.init(main_.param_count());
  replay_.reserve(cfg.replay_capacity);
}

double DqnAgent::epsilon(int round) const {
  double frac = double(round) / double(cfg_.eps_decay_rounds);
  double eps = cfg_.eps_start - (cfg_.eps_start - cfg_.eps_end) * frac;
  return std::max(cfg_.eps_end, eps);
}

int DqnAgent::greedy_action(const Vecf& state) const {
  Matf q = dense_net_forward(main_, Matf(state.transpose()));
  int best = 0;
  for (int a = 1; a < cfg_.actions; ++a)
    if (q(0, a) > q(0, best)) best = a;
  return best;
}

std::vector<int> DqnAgent::select_actions(const std::vector<Vecf>& states,
                                          int round, RngStream stream) const {
  double eps = epsilon(round);
  std::vector<int> actions(states.size());
  for (size_t k = 0; k < states.size(); ++k) {
    if (stream.u01() < eps)
      actions[k] = stream.uniform_int(cfg_.actions);
    else
      actions[k] = greedy_action(states[k]);
  }
  return actions;
}

void DqnAgent::push(Transition t) {
  if ((int)replay_.size() < cfg_.replay_capacity) {
    replay_.push_back(std::move(t));
  } else {
    replay_[replay_next_] = std::move(t);
    replay_next_ = (replay_next_ + 1) % cfg_.replay_capacity;
  }
}

bool DqnAgent::scheduled_update(int round, RngStream stream) {
  bool fired = false;
  if (round > 0 && round % cfg_.update_interval == 0 &&
      (int)replay_.size() >= cfg_.batch_size) {
    train_step(stream);
    fired = true;
  }
  if (round > 0 && round % cfg_.target_interval == 0) sync_target();
  return fired;
}

double DqnAgent::train_step(RngStream stream) {
  if (replay_.empty()) throw UsageError("dqn train step needs replay data");
  const int bsz = std::min<int>(cfg_.batch_size, (int)replay_.size());
  std::vector<int> idx =
      stream.sample_without_replacement((int)replay_.size(), bsz);

  Matf s(bsz, cfg_.state_dim), s2(bsz, cfg_.state_dim);
  for (int i = 0; i < bsz; ++i) {
    s.row(i) = replay_[idx[i]].state.transpose();
    s2.row(i) = replay_[idx[i]].next_state.transpose();
  }
  Matf q2_main = dense_net_forward(main_, s2);
  Matf q2_target = dense_net_forward(target_, s2);

  DenseCacheT<float> cache;
  RngStream drop_stream = stream.child("dropout");
  DropoutSpec dropout{cfg_.dropout, &drop_stream};
  Matf q = dense_net_forward(main_, s, &cache, dropout);
  Matf dq = Matf::Zero(bsz, cfg_.actions);
  double loss = 0;
  for (int i = 0; i < bsz; ++i) {
    int a_star = 0;
    for (int a = 1; a < cfg_.actions; ++a)
      if (q2_main(i, a) > q2_main(i, a_star)) a_star = a;
    float y = replay_[idx[i]].reward +
              float(cfg_.discount) * q2_target(i, a_star);
    int a = replay_[idx[i]].action;
    float diff = q(i, a) - y;
    loss += double(diff) * double(diff);
    dq(i, a) = 2.f * diff / float(bsz);
  }
  loss /= bsz;
  Vecf grad = dense_net_backward(main_, cache, dq);
  opt_.update(main_.params, grad);
  return loss;
}

void DqnAgent::sync_target() { target_ = main_; }

// --- combiner, reward, detection ---

TrustAssignment combine_trust(const std::vector<float>& bins,
                              const std::vector<float>& anomalies) {
  if (bins.size() != anomalies.size() || bins.empty())
    throw UsageError("combine_trust needs matching non-empty inputs");
  TrustAssignment out;
  out.bins = bins;
  out.anomalies = anomalies;
  out.weights.resize(bins.size());
  double sum = 0;
  for (size_t k = 0; k < bins.size(); ++k) {
    double raw = double(bins[k]) * (1.0 - 0.5 * double(anomalies[k]));
    out.weights[k] = raw;
    sum += raw;
  }
  if (sum <= 0.0) {
    out.uniform_fallback = true;
    double u = 1.0 / double(bins.size());
    for (double& w : out.weights) w = u;
  } else {
    for (double& w : out.weights) w /= sum;
  }
  return out;
}

DetectionCounts detection_counts(const std::vector<float>& bins,
                                 const std::vector<AttackKind>& tags) {
  if (bins.size() != tags.size())
    throw UsageError("detection needs one tag per bin");
  DetectionCounts c;
  for (size_t k = 0; k < bins.size(); ++k) {
    bool predicted = bins[k] <= 0.2f;
    bool actual = tags[k] != AttackKind::None;
    if (predicted && actual) ++c.tp;
    else if (predicted && !actual) ++c.fp;
    else if (!predicted && actual) ++c.fn;
    else ++c.tn;
  }
  if (c.fp + c.tn > 0) c.fpr = double(c.fp) / double(c.fp + c.tn);
  else c.fpr_defined = false;
  if (c.fn + c.tp > 0) c.fnr = double(c.fn) / double(c.fn + c.tp);
  else c.fnr_defined = false;
  return c;
}

double compute_reward(double delta_acc, double fpr, double fnr,
                      const std::vector<float>& bins) {
  double eff = 0;
  for (float b : bins) eff += 2.0 * std::abs(double(b) - 0.5);
  if (!bins.empty()) eff /= double(bins.size());
  return 1.0 * delta_acc - 2.0 * fpr - 3.0 * fnr + 0.5 * eff;
}

}  // namespace fedtrust
