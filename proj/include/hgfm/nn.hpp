#pragma once

// Dense MLPs in float64 with a per-evaluation tape and the Adam optimizer.
// Batched evaluation uses column-major activations: features x batch.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hgfm::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParamTensor {
  Matrix values;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(Eigen::Index rows, Eigen::Index cols)
      : values(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
  void zero_grad() { grad.setZero(); }
};

/// SiLU after every layer except the last.
struct MlpSpec {
  std::vector<int> layer_dims;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }
  /// sum_i d_i * d_{i+1} + d_{i+1}
  std::size_t param_count() const;
  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double silu(double z) { return z * sigmoid(z); }
inline double silu_grad(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

class Mlp;

/// Intermediates of one batched forward pass; consumed by Mlp::backward.
struct MlpTape {
  const Mlp* owner = nullptr;
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  Matrix output;
  bool consumed = false;
};

class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters.
  explicit Mlp(MlpSpec spec);
  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(MlpSpec spec, std::uint64_t seed);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t param_count() const noexcept { return spec_.param_count(); }

  ParamTensor& weight(std::size_t layer) { return weights_.at(layer); }
  ParamTensor& bias(std::size_t layer) { return biases_.at(layer); }
  const ParamTensor& weight(std::size_t layer) const { return weights_.at(layer); }
  const ParamTensor& bias(std::size_t layer) const { return biases_.at(layer); }

  /// Weights then bias per layer, in layer order.
  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;

  MlpTape forward(const Matrix& input) const;
  Vector forward(std::span<const double> input) const;
  Matrix evaluate(const Matrix& input) const;

  /// Accumulates parameter gradients for the taped evaluation and returns the
  /// input cotangent. Throws if the tape was already consumed or belongs to
  /// another network.
  Matrix backward(MlpTape& tape, const Matrix& output_cotangent);

  void zero_grad();

 private:
  MlpSpec spec_;
  std::vector<ParamTensor> weights_;
  std::vector<ParamTensor> biases_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Bias-corrected update of every tensor from its grad, then zeroes grads.
  /// The same tensor list (same shapes, same order) must be passed each step.
  void step(std::span<ParamTensor* const> params);

  std::int64_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

/// Flattens values (or grads) of the tensors in order.
std::vector<double> flatten_values(std::span<const ParamTensor* const> params);
void unflatten_values(std::span<ParamTensor* const> params, std::span<const double> flat);

}  // namespace hgfm::nn
