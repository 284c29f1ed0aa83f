#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cdqn/nn.hpp"
#include "cdqn/rng.hpp"
#include "cdqn/scenario.hpp"

namespace cdqn {

/// One replay record. State windows hold the agent's own encodings only;
/// the joint action index and the next feasibility mask refer to the shared
/// enumeration. ce_next_value carries the CE expected value observed at the
/// next state when the ce_value option is active (has_ce_next_value false
/// falls back to the target-network max).
struct Transition {
  std::vector<std::vector<double>> state_seq;
  int joint_action_idx = 0;
  double reward = 0;
  std::vector<std::vector<double>> next_state_seq;
  std::vector<std::uint8_t> next_feasible_mask;
  bool terminal = false;
  double ce_next_value = 0;
  bool has_ce_next_value = false;

  // Target-network value memo, keyed by the trainer's sync counter. The
  // target is frozen between syncs, so recomputing per minibatch is waste.
  mutable double next_value_cache = 0;
  mutable long next_value_version = -1;
};

/// FIFO ring buffer; overwrites the oldest entry when full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void push(Transition t);
  int size() const { return static_cast<int>(data_.size()); }
  int capacity() const { return capacity_; }

  /// The k-th oldest transition (0 = oldest surviving).
  const Transition& oldest(int k) const;

  /// n uniform draws without replacement; deterministic given the rng state.
  std::vector<const Transition*> sample_minibatch(int n, Rng& rng) const;

 private:
  int capacity_;
  std::vector<Transition> data_;
  int next_ = 0;  // write cursor once full
};

/// reward + gamma * next_value, or the reward alone on terminal transitions.
double td_target(double reward, double next_value, bool terminal, double gamma);

/// Max over feasible joint actions of the target network's Q at next_seq.
double next_state_value(Network& target_net, const std::vector<std::vector<double>>& next_seq,
                        const std::vector<std::uint8_t>& mask);

/// One DQN update: MSE between Q(state_seq)[action] and the TD target over
/// the batch, one accumulated backward pass, one Adam step. Returns the
/// pre-update loss. Pass a nonnegative target_version (bumped at every
/// target sync) to memoize next-state values between syncs.
double train_step(Network& net, Network& target_net, const std::vector<const Transition*>& batch,
                  double lr, double gamma, long target_version = -1);

/// Exploring pick with probability eps (uniform over feasible indices),
/// otherwise the feasible argmax with ties to the lowest index.
int epsilon_greedy(const std::vector<double>& q, const std::vector<std::uint8_t>& mask, double eps,
                   Rng& rng);

/// Linear schedule from epsilon_start to epsilon_end over
/// epsilon_decay_episodes, constant afterwards. Episodes are 1-based.
double epsilon_at(int episode, const Hyperparams& hp);

/// Plain Q-table over discretized states, implementing the one-agent update
///   Q(s,a) += alpha * (r + gamma * max_feasible Q(s',.) - Q(s,a)).
/// Unvisited entries read as zero.
class TabularQ {
 public:
  TabularQ(double alpha, double gamma) : alpha_(alpha), gamma_(gamma) {}

  double get(const std::string& state, int action) const;
  void update(const std::string& state, int action, double reward, const std::string& next_state,
              const std::vector<std::uint8_t>& feasible_next);
  /// Direct TD update against an externally supplied next-state value.
  void update_with_value(const std::string& state, int action, double reward, double next_value);
  double max_feasible(const std::string& state, const std::vector<std::uint8_t>& feasible) const;
  std::size_t size() const { return table_.size(); }

 private:
  double alpha_, gamma_;
  std::map<std::pair<std::string, int>, double> table_;
};

}  // namespace cdqn
