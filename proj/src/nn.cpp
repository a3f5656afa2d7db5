#include "hgfm/nn.hpp"

#include "hgfm/error.hpp"

#include <cmath>
#include <random>

namespace hgfm::nn {

std::size_t MlpSpec::param_count() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    const auto in = static_cast<std::size_t>(layer_dims[i]);
    const auto out = static_cast<std::size_t>(layer_dims[i + 1]);
    total += in * out + out;
  }
  return total;
}

void MlpSpec::validate() const {
  require(layer_dims.size() >= 2, ErrorCode::invalid_argument, "mlp spec: need at least two layer dims");
  for (int d : layer_dims) require(d >= 1, ErrorCode::invalid_argument, "mlp spec: layer dims must be positive");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    weights_.emplace_back(spec_.layer_dims[l + 1], spec_.layer_dims[l]);
    biases_.emplace_back(spec_.layer_dims[l + 1], 1);
  }
}

Mlp Mlp::glorot(MlpSpec spec, std::uint64_t seed) {
  Mlp mlp(std::move(spec));
  std::mt19937_64 rng(seed);
  for (auto& w : mlp.weights_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.values.rows() + w.values.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index j = 0; j < w.values.cols(); ++j)
      for (Eigen::Index i = 0; i < w.values.rows(); ++i) w.values(i, j) = dist(rng);
  }
  return mlp;
}

std::vector<ParamTensor*> Mlp::params() {
  std::vector<ParamTensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const ParamTensor*> Mlp::params() const {
  std::vector<const ParamTensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

MlpTape Mlp::forward(const Matrix& input) const {
  require(input.rows() == spec_.input_dim(), ErrorCode::dimension_mismatch,
          "mlp forward: input has " + std::to_string(input.rows()) + " rows, expected " +
              std::to_string(spec_.input_dim()));
  MlpTape tape;
  tape.owner = this;
  Matrix act = input;
  const std::size_t layers = spec_.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = weights_[l].values * act;
    z.colwise() += biases_[l].values.col(0);
    tape.layer_inputs.push_back(std::move(act));
    if (l + 1 < layers) {
      act = z.unaryExpr([](double v) { return silu(v); });
      tape.pre_activations.push_back(std::move(z));
    } else {
      tape.output = std::move(z);
    }
  }
  return tape;
}

Matrix Mlp::evaluate(const Matrix& input) const { return forward(input).output; }

Vector Mlp::forward(std::span<const double> input) const {
  Matrix x(static_cast<Eigen::Index>(input.size()), 1);
  for (std::size_t i = 0; i < input.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = input[i];
  return evaluate(x).col(0);
}

Matrix Mlp::backward(MlpTape& tape, const Matrix& output_cotangent) {
  require(tape.owner == this, ErrorCode::invalid_argument, "mlp backward: tape belongs to a different network");
  require(!tape.consumed, ErrorCode::invalid_argument, "mlp backward: tape consumed twice");
  require(output_cotangent.rows() == tape.output.rows() && output_cotangent.cols() == tape.output.cols(),
          ErrorCode::dimension_mismatch, "mlp backward: cotangent shape mismatch");
  tape.consumed = true;
  Matrix delta = output_cotangent;
  for (std::size_t l = spec_.num_layers(); l-- > 0;) {
    weights_[l].grad.noalias() += delta * tape.layer_inputs[l].transpose();
    biases_[l].grad.col(0) += delta.rowwise().sum();
    Matrix upstream = weights_[l].values.transpose() * delta;
    if (l > 0) {
      const Matrix& z = tape.pre_activations[l - 1];
      delta = upstream.cwiseProduct(z.unaryExpr([](double v) { return silu_grad(v); }));
    } else {
      delta = std::move(upstream);
    }
  }
  return delta;
}

void Mlp::zero_grad() {
  for (auto& w : weights_) w.zero_grad();
  for (auto& b : biases_) b.zero_grad();
}

void Adam::step(std::span<ParamTensor* const> params) {
  if (first_.empty()) {
    for (const auto* p : params) {
      first_.push_back(Matrix::Zero(p->values.rows(), p->values.cols()));
      second_.push_back(Matrix::Zero(p->values.rows(), p->values.cols()));
    }
  }
  require(first_.size() == params.size(), ErrorCode::invalid_argument, "adam: parameter list changed between steps");
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = *params[i];
    require(p.values.rows() == first_[i].rows() && p.values.cols() == first_[i].cols(), ErrorCode::invalid_argument,
            "adam: parameter shape changed between steps");
    first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * p.grad;
    second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    const auto m_hat = first_[i].array() / c1;
    const auto v_hat = second_[i].array() / c2;
    p.values.array() -= config_.lr * m_hat / (v_hat.sqrt() + config_.eps);
    p.zero_grad();
  }
}

std::vector<double> flatten_values(std::span<const ParamTensor* const> params) {
  std::vector<double> out;
  for (const auto* p : params) out.insert(out.end(), p->values.data(), p->values.data() + p->values.size());
  return out;
}

void unflatten_values(std::span<ParamTensor* const> params, std::span<const double> flat) {
  std::size_t total = 0;
  for (const auto* p : params) total += p->size();
  require(total == flat.size(), ErrorCode::dimension_mismatch,
          "parameter payload has " + std::to_string(flat.size()) + " values, expected " + std::to_string(total));
  std::size_t pos = 0;
  for (auto* p : params) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + p->size()), p->values.data());
    pos += p->size();
  }
}

}  // namespace hgfm::nn
