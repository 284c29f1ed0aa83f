#include "cdqn/rl.hpp"

#include <algorithm>
#include <cmath>

#include "cdqn/util.hpp"

namespace cdqn {

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ContractViolation("ReplayBuffer: capacity must be >= 1");
  data_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
  }
}

const Transition& ReplayBuffer::oldest(int k) const {
  if (k < 0 || k >= size()) throw ContractViolation("ReplayBuffer: index out of range");
  if (size() < capacity_) return data_[k];
  return data_[(next_ + k) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample_minibatch(int n, Rng& rng) const {
  if (n > size()) throw ContractViolation("ReplayBuffer: sample larger than buffer");
  std::vector<int> idx(size());
  for (int i = 0; i < size(); ++i) idx[i] = i;
  std::vector<const Transition*> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {  // partial Fisher-Yates
    const int j = k + rng.uniform_int(size() - k);
    std::swap(idx[k], idx[j]);
    out.push_back(&data_[idx[k]]);
  }
  return out;
}

double td_target(double reward, double next_value, bool terminal, double gamma) {
  return terminal ? reward : reward + gamma * next_value;
}

double next_state_value(Network& target_net, const std::vector<std::vector<double>>& next_seq,
                        const std::vector<std::uint8_t>& mask) {
  const std::vector<double> q = target_net.forward(next_seq);
  if (q.size() != mask.size()) throw ContractViolation("next_state_value: mask length mismatch");
  bool found = false;
  double best = 0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (!mask[j]) continue;
    if (!found || q[j] > best) {
      best = q[j];
      found = true;
    }
  }
  if (!found) throw ContractViolation("next_state_value: empty feasibility mask");
  return best;
}

double train_step(Network& net, Network& target_net, const std::vector<const Transition*>& batch,
                  double lr, double gamma, long target_version) {
  if (batch.empty()) throw ContractViolation("train_step: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  GradientSet grads(net.num_params(), 0.0);
  double loss = 0;
  for (const Transition* t : batch) {
    double next_v = 0;
    if (!t->terminal) {
      if (t->has_ce_next_value) {
        next_v = t->ce_next_value;
      } else if (target_version >= 0 && t->next_value_version == target_version) {
        next_v = t->next_value_cache;
      } else {
        next_v = next_state_value(target_net, t->next_state_seq, t->next_feasible_mask);
        t->next_value_cache = next_v;
        t->next_value_version = target_version;
      }
    }
    const double target = td_target(t->reward, next_v, t->terminal, gamma);

    const double pred = net.forward_action(t->state_seq, t->joint_action_idx);
    const double err = pred - target;
    loss += err * err * inv_n;
    net.backward_action_into(t->joint_action_idx, 2.0 * err * inv_n, grads);
  }
  net.adam_step(grads, lr);
  return loss;
}

int epsilon_greedy(const std::vector<double>& q, const std::vector<std::uint8_t>& mask, double eps,
                   Rng& rng) {
  if (q.size() != mask.size()) throw ContractViolation("epsilon_greedy: mask length mismatch");
  std::vector<int> feasible;
  feasible.reserve(q.size());
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) feasible.push_back(static_cast<int>(j));
  if (feasible.empty()) throw ContractViolation("epsilon_greedy: empty feasibility mask");

  if (rng.uniform() < eps) return feasible[rng.uniform_int(static_cast<int>(feasible.size()))];

  int best = feasible[0];
  for (int j : feasible)
    if (q[j] > q[best]) best = j;
  return best;
}

double epsilon_at(int episode, const Hyperparams& hp) {
  if (episode < 1) throw ContractViolation("epsilon_at: episodes are 1-based");
  const int span = std::max(1, hp.epsilon_decay_episodes - 1);
  const double progress = std::min(1.0, static_cast<double>(episode - 1) / span);
  return hp.epsilon_start + (hp.epsilon_end - hp.epsilon_start) * progress;
}

double TabularQ::get(const std::string& state, int action) const {
  auto it = table_.find({state, action});
  return it == table_.end() ? 0.0 : it->second;
}

double TabularQ::max_feasible(const std::string& state,
                              const std::vector<std::uint8_t>& feasible) const {
  bool found = false;
  double best = 0;
  for (std::size_t a = 0; a < feasible.size(); ++a) {
    if (!feasible[a]) continue;
    const double v = get(state, static_cast<int>(a));
    if (!found || v > best) {
      best = v;
      found = true;
    }
  }
  return found ? best : 0.0;
}

void TabularQ::update(const std::string& state, int action, double reward,
                      const std::string& next_state, const std::vector<std::uint8_t>& feasible_next) {
  update_with_value(state, action, reward, max_feasible(next_state, feasible_next));
}

void TabularQ::update_with_value(const std::string& state, int action, double reward,
                                 double next_value) {
  double& q = table_[{state, action}];
  q += alpha_ * (reward + gamma_ * next_value - q);
}

}  // namespace cdqn
