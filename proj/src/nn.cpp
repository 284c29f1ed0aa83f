#include "cdqn/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "cdqn/util.hpp"

namespace cdqn {
namespace {

constexpr int kGateF = 0, kGateI = 1, kGateO = 2, kGateG = 3;
constexpr const char* kGateNames[4] = {"f", "i", "o", "g"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += W x, W stored row-major (rows x cols).
void matvec_acc(const double* w, int rows, int cols, const double* x, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<std::size_t>(r) * cols;
    double s = 0;
    for (int c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] += s;
  }
}

// y += W^T d  (W rows x cols, d has rows entries, y has cols entries).
void matvec_t_acc(const double* w, int rows, int cols, const double* d, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<std::size_t>(r) * cols;
    const double dr = d[r];
    for (int c = 0; c < cols; ++c) y[c] += dr * wr[c];
  }
}

// G += d x^T (outer product accumulate).
void outer_acc(double* g, int rows, int cols, const double* d, const double* x) {
  for (int r = 0; r < rows; ++r) {
    double* gr = g + static_cast<std::size_t>(r) * cols;
    const double dr = d[r];
    for (int c = 0; c < cols; ++c) gr[c] += dr * x[c];
  }
}

}  // namespace

Network::Network(int input_size, int hidden_size, int num_layers, int output_size,
                 double output_scale)
    : input_size_(input_size),
      hidden_size_(hidden_size),
      num_layers_(num_layers),
      output_size_(output_size),
      output_scale_(output_scale) {
  if (input_size < 1 || hidden_size < 1 || num_layers < 1 || output_size < 1)
    throw std::invalid_argument("Network: all dimensions must be >= 1");
  if (!(output_scale > 0)) throw std::invalid_argument("Network: output_scale must be > 0");

  std::size_t offset = 0;
  auto add = [&](const std::string& name, int rows, int cols) {
    layout_.push_back({name, rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * cols;
  };
  for (int l = 0; l < num_layers_; ++l) {
    const std::string p = "lstm" + std::to_string(l) + ".";
    for (int g = 0; g < 4; ++g) add(p + "wx." + kGateNames[g], hidden_size_, layer_input(l));
    for (int g = 0; g < 4; ++g) add(p + "wh." + kGateNames[g], hidden_size_, hidden_size_);
    for (int g = 0; g < 4; ++g) add(p + "b." + kGateNames[g], hidden_size_, 1);
  }
  add("head.w", output_size_, hidden_size_);
  add("head.b", output_size_, 1);
  head_w_ = layout_[layout_.size() - 2].offset;
  head_b_ = layout_[layout_.size() - 1].offset;

  params_.assign(offset, 0.0);
  adam_m_.assign(offset, 0.0);
  adam_v_.assign(offset, 0.0);
}

std::size_t Network::wx(int layer, int gate) const { return layout_[layer * 12 + gate].offset; }
std::size_t Network::wh(int layer, int gate) const { return layout_[layer * 12 + 4 + gate].offset; }
std::size_t Network::b(int layer, int gate) const { return layout_[layer * 12 + 8 + gate].offset; }

Network Network::initialized(int input_size, int hidden_size, int num_layers, int output_size,
                             Rng& rng, double output_scale) {
  Network net(input_size, hidden_size, num_layers, output_size, output_scale);
  for (const auto& spec : net.layout_) {
    double* p = net.params_.data() + spec.offset;
    if (spec.cols == 1) continue;  // biases stay zero (forget-gate bias set below)
    double bound = 1.0 / std::sqrt(static_cast<double>(spec.cols));
    // The gain reparameterizes the head (effective weights = scale * stored);
    // the uniform init law applies to the effective layer, so initial outputs
    // match an ungained network.
    if (spec.name == "head.w") bound /= output_scale;
    for (std::size_t k = 0; k < spec.count(); ++k) p[k] = (2.0 * rng.uniform() - 1.0) * bound;
  }
  for (int l = 0; l < num_layers; ++l) {
    double* bf = net.params_.data() + net.b(l, kGateF);
    for (int k = 0; k < hidden_size; ++k) bf[k] = 1.0;
  }
  return net;
}

const std::vector<double>& Network::lstm_pass(const std::vector<std::vector<double>>& seq) {
  if (seq.empty()) throw std::invalid_argument("forward: empty input sequence");
  const int steps = static_cast<int>(seq.size());
  const int H = hidden_size_;

  // Reuse the cache storage across calls; the buffers keep their capacity.
  if (static_cast<int>(cache_.size()) != steps) cache_.resize(steps);
  for (auto& row : cache_)
    if (static_cast<int>(row.size()) != num_layers_) row.resize(num_layers_);
  const std::vector<double> zeros(H, 0.0);

  for (int t = 0; t < steps; ++t) {
    if (static_cast<int>(seq[t].size()) != input_size_)
      throw std::invalid_argument("forward: input vector has wrong dimension");
    for (int l = 0; l < num_layers_; ++l) {
      StepCache& sc = cache_[t][l];
      sc.x = (l == 0) ? seq[t] : cache_[t][l - 1].h;
      const double* h_prev = (t == 0) ? zeros.data() : cache_[t - 1][l].h.data();
      const double* c_prev = (t == 0) ? zeros.data() : cache_[t - 1][l].c.data();

      // The four gate tensors are laid out back to back, so the whole
      // pre-activation block computes as one fused (4H x in) operation.
      pre4_.assign(params_.begin() + b(l, kGateF), params_.begin() + b(l, kGateF) + 4 * H);
      matvec_acc(params_.data() + wx(l, kGateF), 4 * H, layer_input(l), sc.x.data(), pre4_.data());
      matvec_acc(params_.data() + wh(l, kGateF), 4 * H, H, h_prev, pre4_.data());

      sc.f.resize(H);
      sc.i.resize(H);
      sc.o.resize(H);
      sc.g.resize(H);
      sc.c.resize(H);
      sc.tanh_c.resize(H);
      sc.h.resize(H);
      for (int k = 0; k < H; ++k) {
        sc.f[k] = sigmoid(pre4_[k]);
        sc.i[k] = sigmoid(pre4_[H + k]);
        sc.o[k] = sigmoid(pre4_[2 * H + k]);
        sc.g[k] = std::tanh(pre4_[3 * H + k]);
        sc.c[k] = sc.f[k] * c_prev[k] + sc.i[k] * sc.g[k];
        sc.tanh_c[k] = std::tanh(sc.c[k]);
        sc.h[k] = sc.o[k] * sc.tanh_c[k];
      }
    }
  }
  has_cache_ = true;
  return cache_[steps - 1][num_layers_ - 1].h;
}

std::vector<double> Network::forward(const std::vector<std::vector<double>>& seq) {
  const std::vector<double>& h_final = lstm_pass(seq);
  std::vector<double> q(params_.begin() + head_b_, params_.begin() + head_b_ + output_size_);
  matvec_acc(params_.data() + head_w_, output_size_, hidden_size_, h_final.data(), q.data());
  if (output_scale_ != 1.0)
    for (double& v : q) v *= output_scale_;
  return q;
}

double Network::forward_action(const std::vector<std::vector<double>>& seq, int action) {
  if (action < 0 || action >= output_size_)
    throw std::invalid_argument("forward_action: action index out of range");
  const std::vector<double>& h_final = lstm_pass(seq);
  const double* row = params_.data() + head_w_ + static_cast<std::size_t>(action) * hidden_size_;
  double q = params_[head_b_ + action];
  for (int k = 0; k < hidden_size_; ++k) q += row[k] * h_final[k];
  return output_scale_ * q;
}

GradientSet Network::backward(const std::vector<double>& output_grad) {
  if (!has_cache_) throw std::logic_error("backward: no cached forward pass");
  if (static_cast<int>(output_grad.size()) != output_size_)
    throw std::invalid_argument("backward: output_grad has wrong dimension");

  const int steps = static_cast<int>(cache_.size());
  const int H = hidden_size_;
  GradientSet grads(params_.size(), 0.0);

  // Dense head (the fixed output gain scales every gradient path).
  const auto& h_final = cache_[steps - 1][num_layers_ - 1].h;
  std::vector<double> scaled_grad = output_grad;
  if (output_scale_ != 1.0)
    for (double& v : scaled_grad) v *= output_scale_;
  outer_acc(grads.data() + head_w_, output_size_, H, scaled_grad.data(), h_final.data());
  for (int j = 0; j < output_size_; ++j) grads[head_b_ + j] += scaled_grad[j];

  // dL/dh of the current layer at each time step, fed from the layer above.
  std::vector<std::vector<double>> dh_above(steps, std::vector<double>(H, 0.0));
  matvec_t_acc(params_.data() + head_w_, output_size_, H, scaled_grad.data(),
               dh_above[steps - 1].data());
  lstm_backward_into(dh_above, grads);
  return grads;
}

void Network::backward_action_into(int action, double dq, GradientSet& grads) {
  if (!has_cache_) throw std::logic_error("backward: no cached forward pass");
  if (action < 0 || action >= output_size_)
    throw std::invalid_argument("backward_action_into: action index out of range");
  if (grads.size() != params_.size())
    throw std::invalid_argument("backward_action_into: gradient size mismatch");

  const int steps = static_cast<int>(cache_.size());
  const int H = hidden_size_;
  const auto& h_final = cache_[steps - 1][num_layers_ - 1].h;
  const std::size_t row = head_w_ + static_cast<std::size_t>(action) * H;
  const double sdq = output_scale_ * dq;
  for (int k = 0; k < H; ++k) grads[row + k] += sdq * h_final[k];
  grads[head_b_ + action] += sdq;

  std::vector<std::vector<double>> dh_above(steps, std::vector<double>(H, 0.0));
  for (int k = 0; k < H; ++k) dh_above[steps - 1][k] = sdq * params_[row + k];
  lstm_backward_into(dh_above, grads);
}

void Network::lstm_backward_into(std::vector<std::vector<double>>& dh_above,
                                 GradientSet& grads) const {
  const int steps = static_cast<int>(cache_.size());
  const int H = hidden_size_;
  const std::vector<double> zeros(H, 0.0);

  for (int l = num_layers_ - 1; l >= 0; --l) {
    const int in = layer_input(l);
    std::vector<std::vector<double>> dx(steps, std::vector<double>(in, 0.0));
    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
    std::vector<double> dpre4(4 * H);

    for (int t = steps - 1; t >= 0; --t) {
      const StepCache& sc = cache_[t][l];
      const double* h_prev = (t == 0) ? zeros.data() : cache_[t - 1][l].h.data();
      const double* c_prev = (t == 0) ? zeros.data() : cache_[t - 1][l].c.data();

      for (int k = 0; k < H; ++k) {
        const double dh = dh_above[t][k] + dh_next[k];
        const double dck = dc_next[k] + dh * sc.o[k] * (1.0 - sc.tanh_c[k] * sc.tanh_c[k]);
        dpre4[k] = dck * c_prev[k] * sc.f[k] * (1.0 - sc.f[k]);
        dpre4[H + k] = dck * sc.g[k] * sc.i[k] * (1.0 - sc.i[k]);
        dpre4[2 * H + k] = dh * sc.tanh_c[k] * sc.o[k] * (1.0 - sc.o[k]);
        dpre4[3 * H + k] = dck * sc.i[k] * (1.0 - sc.g[k] * sc.g[k]);
        dc_next[k] = dck * sc.f[k];
      }

      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      outer_acc(grads.data() + wx(l, kGateF), 4 * H, in, dpre4.data(), sc.x.data());
      outer_acc(grads.data() + wh(l, kGateF), 4 * H, H, dpre4.data(), h_prev);
      for (int k = 0; k < 4 * H; ++k) grads[b(l, kGateF) + k] += dpre4[k];
      matvec_t_acc(params_.data() + wx(l, kGateF), 4 * H, in, dpre4.data(), dx[t].data());
      matvec_t_acc(params_.data() + wh(l, kGateF), 4 * H, H, dpre4.data(), dh_next.data());
    }
    if (l > 0) dh_above = std::move(dx);
  }
}

void Network::adam_step(const GradientSet& grads, double lr) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("adam_step: gradient size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw std::invalid_argument("adam_step: non-finite gradient");

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    adam_m_[k] = beta1 * adam_m_[k] + (1.0 - beta1) * grads[k];
    adam_v_[k] = beta2 * adam_v_[k] + (1.0 - beta2) * grads[k] * grads[k];
    const double mhat = adam_m_[k] / bc1;
    const double vhat = adam_v_[k] / bc2;
    params_[k] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void Network::save(std::ostream& os, const std::string& fingerprint) const {
  os << "cdqn-net v1\n";
  os << "fingerprint " << fingerprint << "\n";
  os << "dims " << input_size_ << " " << hidden_size_ << " " << num_layers_ << " " << output_size_
     << " " << format_double(output_scale_) << "\n";
  os << "tensors " << layout_.size() << "\n";
  for (const auto& spec : layout_) {
    os << spec.name << " " << spec.rows << " " << spec.cols << "\n";
    for (std::size_t k = 0; k < spec.count(); ++k)
      os << (k ? " " : "") << format_double(params_[spec.offset + k]);
    os << "\n";
  }
}

Network Network::load(std::istream& is, std::string* fingerprint_out) {
  std::string word;
  is >> word;
  std::string version;
  is >> version;
  if (!is || word != "cdqn-net" || version != "v1") throw IoError("checkpoint: bad header");
  is >> word;
  if (word != "fingerprint") throw IoError("checkpoint: missing fingerprint");
  std::string fp;
  is >> fp;
  if (fingerprint_out) *fingerprint_out = fp;
  is >> word;
  int in, hid, layers, out;
  double scale;
  if (word != "dims" || !(is >> in >> hid >> layers >> out >> scale))
    throw IoError("checkpoint: bad dims");
  Network net(in, hid, layers, out, scale);
  std::size_t n;
  is >> word >> n;
  if (word != "tensors" || n != net.layout_.size()) throw IoError("checkpoint: tensor count mismatch");
  for (const auto& spec : net.layout_) {
    std::string name;
    int rows, cols;
    if (!(is >> name >> rows >> cols) || name != spec.name || rows != spec.rows || cols != spec.cols)
      throw IoError("checkpoint: tensor shape mismatch at " + spec.name);
    for (std::size_t k = 0; k < spec.count(); ++k) {
      if (!(is >> net.params_[spec.offset + k])) throw IoError("checkpoint: truncated tensor " + spec.name);
    }
  }
  return net;
}

}  // namespace cdqn
