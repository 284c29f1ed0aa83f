#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "cdqn/rng.hpp"

namespace cdqn {

/// Location of one parameter tensor inside the flat parameter vector.
/// cols == 1 marks a bias vector.
struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
};

using GradientSet = std::vector<double>;  // same layout as Network parameters

/// Stacked-LSTM Q-network: num_layers LSTM layers of hidden_size units
/// followed by a dense head mapping the final hidden state to one value per
/// joint action. Parameters live in a single flat vector so the optimizer,
/// checkpointing and gradient checks can treat them uniformly.
///
/// Gate recurrences are the standard ones: sigmoid forget/input/output gates,
/// tanh candidate, c = f*c_prev + i*g, h = o*tanh(c). Recurrent state is
/// zeroed at the start of every forward pass.
class Network {
 public:
  /// output_scale is a fixed gain on the head's affine output (a
  /// reparameterized dense layer). Q-value levels span tens of dollars while
  /// Adam moves each parameter by at most ~lr per step and each head row is
  /// only sampled when its action lands in a minibatch; the gain makes those
  /// levels reachable within the training budget.
  Network(int input_size, int hidden_size, int num_layers, int output_size,
          double output_scale = 1.0);

  /// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero
  /// except the forget gate bias at 1.
  static Network initialized(int input_size, int hidden_size, int num_layers, int output_size,
                             Rng& rng, double output_scale = 1.0);

  /// Runs the sequence through the stack and returns the Q-vector. Caches
  /// activations for a following backward(). Throws on an empty sequence or
  /// a dimension mismatch.
  std::vector<double> forward(const std::vector<std::vector<double>>& seq);

  /// Exact gradients via backpropagation through time for the functional
  /// sum_j output_grad[j] * q[j] of the last forward() call.
  GradientSet backward(const std::vector<double>& output_grad);

  /// Q-value of a single action: same recurrence, but only one head row is
  /// evaluated. Caches activations like forward().
  double forward_action(const std::vector<std::vector<double>>& seq, int action);

  /// backward() for an output gradient that is zero except at `action`,
  /// accumulated into an existing gradient buffer (training hot path).
  void backward_action_into(int action, double dq, GradientSet& grads);

  /// In-place Adam update (beta1 0.9, beta2 0.999, eps 1e-8).
  void adam_step(const GradientSet& grads, double lr);

  /// Deep copy; the clone's parameters are frozen with respect to this net.
  Network clone() const { return *this; }

  int input_size() const { return input_size_; }
  int hidden_size() const { return hidden_size_; }
  int num_layers() const { return num_layers_; }
  int output_size() const { return output_size_; }
  double output_scale() const { return output_scale_; }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& mutable_params() { return params_; }
  const std::vector<TensorSpec>& layout() const { return layout_; }

  /// Versioned text checkpoint; values round-trip exactly.
  void save(std::ostream& os, const std::string& fingerprint) const;
  static Network load(std::istream& is, std::string* fingerprint_out);

 private:
  struct StepCache {
    std::vector<double> x;  // layer input at this time step
    std::vector<double> f, i, o, g, c, tanh_c, h;
  };

  // Parameter tensor indices within one layer block.
  std::size_t wx(int layer, int gate) const;
  std::size_t wh(int layer, int gate) const;
  std::size_t b(int layer, int gate) const;
  int layer_input(int layer) const { return layer == 0 ? input_size_ : hidden_size_; }

  const std::vector<double>& lstm_pass(const std::vector<std::vector<double>>& seq);
  void lstm_backward_into(std::vector<std::vector<double>>& dh_above, GradientSet& grads) const;

  int input_size_, hidden_size_, num_layers_, output_size_;
  double output_scale_ = 1.0;
  std::vector<TensorSpec> layout_;
  std::size_t head_w_ = 0, head_b_ = 0;  // offsets
  std::vector<double> params_;
  std::vector<double> adam_m_, adam_v_;
  long adam_t_ = 0;

  std::vector<std::vector<StepCache>> cache_;  // [time][layer]
  std::vector<double> pre4_;                   // fused gate pre-activations
  bool has_cache_ = false;
};

}  // namespace cdqn
