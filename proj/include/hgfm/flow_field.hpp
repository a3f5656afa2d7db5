#pragma once

// Right-hand side of the gauge flow ODE
//
//   f(x, t) = v(x, t) - alpha(t) * P(x, t, A(x, t)[vhat(x, t)] . d(x, t))
//
// where the gauge action is sum_a c_a sum_m b_m(e_a, vhat, ..., vhat) with
// c_a = sum_mu A[mu][a] d[mu], and the projection acts on R^N through the
// matrix realization of so(N):
//
//   P = g0 * (mat(w0) x) + g1 * (mat(w1) x + w_c x)
//
// g0, g1 are the outputs of the proj0/proj1 networks. The direction d is the
// field network output unless the model has a direction network.

#include "hgfm/graded_algebra.hpp"
#include "hgfm/models.hpp"
#include "hgfm/nn.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace hgfm::flow {

using nn::Matrix;
using nn::Vector;

struct FlowState {
  std::vector<double> x;
  double t = 0.0;
};

/// N x dim(L) array, row-major (mu outer, algebra index inner).
struct GaugeCoefficients {
  int n = 0;
  std::size_t algebra_dim = 0;
  std::vector<double> values;

  GaugeCoefficients(int n_, std::size_t algebra_dim_, std::vector<double> values_);
  double at(int mu, std::size_t a) const { return values[static_cast<std::size_t>(mu) * algebra_dim + a]; }
};

std::vector<double> contract_direction(const GaugeCoefficients& coeffs, std::span<const double> direction);

/// Field slot j (j >= 1) of every bracket reads fields[min(j, size) - 1].
void gauge_action_into(const algebra::LInfinityAlgebra& alg, std::span<const double> contracted,
                       std::span<const std::span<const double>> fields, std::span<double> out);

/// Reverse of gauge_action_into: accumulates into d_contracted and d_fields.
void gauge_action_backward(const algebra::LInfinityAlgebra& alg, std::span<const double> contracted,
                           std::span<const std::span<const double>> fields, std::span<const double> d_out,
                           std::span<double> d_contracted, std::span<const std::span<double>> d_fields);

algebra::GradedVector gauge_action(const algebra::LInfinityAlgebra& alg, std::span<const double> contracted,
                                   const algebra::GradedVector& v_hat);

/// mat(w) x for w in so(N) coordinates.
void so_matvec(int n, std::span<const double> w, std::span<const double> x, std::span<double> out);

std::vector<double> project_to_tangent(const model::FlowModel& model, const FlowState& state,
                                       const algebra::GradedVector& w);

/// Batched evaluation record; x is N x B, t has length B.
struct FieldTape {
  Matrix x;
  Matrix z;       // (N+1) x B network input
  Matrix t_row;   // 1 x B alpha input
  Matrix field;   // N x B result

  // Gauge/HGFM intermediates, one column per sample.
  Matrix contracted;  // D x B
  Matrix vhat;        // D x B
  Matrix vhat_b;      // D x B (two-field mode)
  Matrix w;           // D x B
  Matrix projection;  // N x B
  Matrix alpha;       // 1 x B

  std::vector<std::pair<model::Role, nn::MlpTape>> tapes;
  bool consumed = false;

  const Matrix& output(model::Role role) const;
};

FieldTape field_forward(const model::FlowModel& model, const Matrix& x, const Vector& t);
/// Accumulates parameter gradients of <field_cotangent, field>.
void field_backward(model::FlowModel& model, FieldTape& tape, const Matrix& field_cotangent);

Matrix evaluate_field(const model::FlowModel& model, const Matrix& x, const Vector& t);

std::vector<double> hgfm_field(const model::FlowModel& model, const FlowState& state);
std::vector<double> baseline_field(const model::FlowModel& model, const FlowState& state);

}  // namespace hgfm::flow
