#include "optgym/nn.hpp"

#include <algorithm>
#include <cmath>

#include "optgym/error.hpp"
#include "optgym/kernels.hpp"

namespace optgym {

DenseNet DenseNet::make(const std::vector<size_t>& widths, std::mt19937_64& rng) {
  DenseNet net;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.activation = l + 2 < widths.size() ? Activation::kRelu : Activation::kNone;
    layer.weights.resize(layer.in * layer.out);
    layer.bias.assign(layer.out, 0.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in));
    for (double& w : layer.weights) {
      const double u = std::ldexp(static_cast<double>(rng() >> 11), -53);
      w = (2.0 * u - 1.0) * limit;
    }
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

DenseNet DenseNet::zeros_like() const {
  DenseNet z = *this;
  for (auto& layer : z.layers_) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return z;
}

Matrix DenseNet::forward(const Matrix& x, Tape* tape) const {
  if (x.cols != input_size()) {
    throw Error(ErrorCode::kLengthMismatch, "network input width " + std::to_string(x.cols) +
                                                " != " + std::to_string(input_size()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->outputs.clear();
  }
  Matrix cur = x;
  for (const DenseLayer& layer : layers_) {
    Matrix next(cur.rows, layer.out);
    kernels::linear_forward(cur.data, layer.weights, layer.bias, next.data, cur.rows, layer.in,
                            layer.out);
    if (layer.activation == Activation::kRelu) {
      for (double& v : next.data) v = v > 0.0 ? v : 0.0;
    }
    if (tape) {
      tape->inputs.push_back(std::move(cur));
      tape->outputs.push_back(next);
    }
    cur = std::move(next);
  }
  return cur;
}

Matrix DenseNet::backward(const Tape& tape, const Matrix& grad_out, DenseNet& grads) const {
  Matrix g = grad_out;
  for (size_t l = layers_.size(); l-- > 0;) {
    const DenseLayer& layer = layers_[l];
    const Matrix& in = tape.inputs[l];
    if (layer.activation == Activation::kRelu) {
      const Matrix& out = tape.outputs[l];
      for (size_t k = 0; k < g.data.size(); ++k) {
        if (out.data[k] <= 0.0) g.data[k] = 0.0;
      }
    }
    DenseLayer& gl = grads.layers_[l];
    kernels::linear_backward_params(g.data, in.data, gl.weights, gl.bias, in.rows, layer.in,
                                    layer.out);
    Matrix dx(in.rows, layer.in);
    kernels::linear_backward_input(g.data, layer.weights, dx.data, in.rows, layer.in, layer.out);
    g = std::move(dx);
  }
  return g;
}

size_t DenseNet::parameter_count() const {
  size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
  return n;
}

std::vector<std::span<double>> DenseNet::parameters() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_) {
    out.emplace_back(layer.weights);
    out.emplace_back(layer.bias);
  }
  return out;
}

std::vector<std::span<const double>> DenseNet::parameters() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers_) {
    out.emplace_back(layer.weights);
    out.emplace_back(layer.bias);
  }
  return out;
}

Optimizer::Optimizer(OptimizerKind kind, double lr, AdamConfig adam)
    : kind_(kind), lr_(lr), adam_(adam) {}

void Optimizer::step(const std::vector<std::span<double>>& params,
                     const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::kLengthMismatch, "parameter/gradient list mismatch");
  }
  if (kind_ == OptimizerKind::kSgd) {
    for (size_t p = 0; p < params.size(); ++p) {
      for (size_t i = 0; i < params[p].size(); ++i) params[p][i] -= lr_ * grads[p][i];
    }
    return;
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
  for (size_t p = 0; p < params.size(); ++p) {
    auto& m = m_[p];
    auto& v = v_[p];
    const auto g = grads[p];
    auto x = params[p];
    for (size_t i = 0; i < x.size(); ++i) {
      m[i] = adam_.beta1 * m[i] + (1.0 - adam_.beta1) * g[i];
      v[i] = adam_.beta2 * v[i] + (1.0 - adam_.beta2) * g[i] * g[i];
      x[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam_.epsilon);
    }
  }
}

}  // namespace optgym
