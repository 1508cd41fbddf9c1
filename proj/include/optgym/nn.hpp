#pragma once

// Minimal fully connected networks with manual backprop.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace optgym {

struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return data[r * cols + c]; }
  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }
};

enum class Activation { kRelu, kNone };

struct DenseLayer {
  size_t in = 0;
  size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out
  Activation activation = Activation::kNone;

  bool operator==(const DenseLayer&) const = default;
};

class DenseNet {
 public:
  // Saved per-layer inputs and outputs from a forward pass.
  struct Tape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
  };

  DenseNet() = default;

  // widths = {in, hidden..., out}; hidden layers use ReLU, the last layer is
  // linear. He-uniform weights, zero biases.
  static DenseNet make(const std::vector<size_t>& widths, std::mt19937_64& rng);

  // Same topology, all parameters zero (gradient accumulator).
  DenseNet zeros_like() const;

  Matrix forward(const Matrix& x, Tape* tape = nullptr) const;

  // Accumulates parameter gradients into `grads` and returns dL/dx.
  Matrix backward(const Tape& tape, const Matrix& grad_out, DenseNet& grads) const;

  size_t input_size() const { return layers_.empty() ? 0 : layers_.front().in; }
  size_t output_size() const { return layers_.empty() ? 0 : layers_.back().out; }
  size_t parameter_count() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Flat views over every weight and bias vector, in layer order.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  bool operator==(const DenseNet&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class OptimizerKind { kAdam, kSgd };

// Optimizer over a fixed list of parameter vectors.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, AdamConfig adam = {});

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads);

  OptimizerKind kind() const { return kind_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamConfig adam_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace optgym
