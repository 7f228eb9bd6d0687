#pragma once

#include <array>
#include <vector>

#include "fedtrust/nn.hpp"
#include "fedtrust/rng.hpp"
#include "fedtrust/types.hpp"

namespace fedtrust {

// Trust-weight bins addressed by the action index.
inline constexpr std::array<float, 6> kTrustBins{0.f, 0.2f, 0.4f,
                                                 0.6f, 0.8f, 1.f};

struct DqnConfig {
  int state_dim = 0;
  std::vector<int> hidden{64, 32};  // full-scale preset: {512, 256, 128}
  double dropout = 0.0;             // training-pass only; full preset 0.3
  int actions = 6;
  int replay_capacity = 1000;
  int batch_size = 64;
  double lr = 3e-4;
  double discount = 0.95;
  int update_interval = 10;   // rounds between minibatch steps
  int target_interval = 100;  // rounds between hard target copies
  double eps_start = 0.3;
  double eps_end = 0.05;
  int eps_decay_rounds = 100;
};

struct Transition {
  Vecf state;
  int action = 0;
  float reward = 0.f;
  Vecf next_state;
};

// Double-DQN over a shared per-client Q-network. One agent serves the whole
// round: each client's state gets an independent eps-greedy decision.
class DqnAgent {
 public:
  DqnAgent(const DqnConfig& cfg, RngStream init_stream);

  // Linear decay eps_start -> eps_end over eps_decay_rounds, then constant.
  double epsilon(int round) const;

  int greedy_action(const Vecf& state) const;
  std::vector<int> select_actions(const std::vector<Vecf>& states, int round,
                                  RngStream stream) const;

  void push(Transition t);  // FIFO eviction at capacity

  // Gated update: fires when round is a multiple of the update interval and
  // the replay holds at least one minibatch; hard-copies the target on
  // target-interval rounds. Returns whether a training step ran.
  bool scheduled_update(int round, RngStream stream);

  // One minibatch Adam step on the double-DQN target; returns the TD loss.
  double train_step(RngStream stream);

  void sync_target();

  int replay_size() const { return (int)replay_.size(); }
  const std::vector<Transition>& replay_entries() const { return replay_; }
  DenseNetT<float>& q_main() { return main_; }
  const DenseNetT<float>& q_main() const { return main_; }
  const DenseNetT<float>& q_target() const { return target_; }
  const DqnConfig& config() const { return cfg_; }

 private:
  DqnConfig cfg_;
  DenseNetT<float> main_, target_;
  AdamT<float> opt_;
  std::vector<Transition> replay_;
  int replay_next_ = 0;
};

}  // namespace fedtrust
