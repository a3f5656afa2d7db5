#include "hgfm/flow_field.hpp"

#include "hgfm/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hgfm::flow {

using model::FlowModel;
using model::Role;
using model::Variant;

GaugeCoefficients::GaugeCoefficients(int n_, std::size_t algebra_dim_, std::vector<double> values_)
    : n(n_), algebra_dim(algebra_dim_), values(std::move(values_)) {
  require(values.size() == static_cast<std::size_t>(n) * algebra_dim, ErrorCode::dimension_mismatch,
          "gauge coefficients: expected " + std::to_string(static_cast<std::size_t>(n) * algebra_dim) +
              " values, got " + std::to_string(values.size()));
}

std::vector<double> contract_direction(const GaugeCoefficients& coeffs, std::span<const double> direction) {
  require(direction.size() == static_cast<std::size_t>(coeffs.n), ErrorCode::dimension_mismatch,
          "contract direction: direction length does not match N");
  std::vector<double> out(coeffs.algebra_dim, 0.0);
  for (int mu = 0; mu < coeffs.n; ++mu) {
    const double dm = direction[static_cast<std::size_t>(mu)];
    for (std::size_t a = 0; a < coeffs.algebra_dim; ++a) out[a] += coeffs.at(mu, a) * dm;
  }
  return out;
}

namespace {

std::span<const double> field_for_slot(std::span<const std::span<const double>> fields, std::size_t slot) {
  return fields[std::min(slot, fields.size()) - 1];
}

std::size_t field_index_for_slot(std::size_t n_fields, std::size_t slot) { return std::min(slot, n_fields) - 1; }

}  // namespace

void gauge_action_into(const algebra::LInfinityAlgebra& alg, std::span<const double> contracted,
                       std::span<const std::span<const double>> fields, std::span<double> out) {
  const std::size_t dim = alg.space().total_dim();
  require(contracted.size() == dim && out.size() == dim, ErrorCode::dimension_mismatch,
          "gauge action: contracted/output length must equal the algebra dimension");
  require(!fields.empty(), ErrorCode::invalid_argument, "gauge action: need at least one graded field");
  for (const auto& f : fields)
    require(f.size() == dim, ErrorCode::dimension_mismatch, "gauge action: graded field dimension mismatch");

  for (const auto& table : alg.brackets()) {
    const auto m = static_cast<std::size_t>(table.arity());
    for (std::size_t t = 0; t < table.size(); ++t) {
      const auto in = table.term_inputs(t);
      double prod = table.term_coef(t) * contracted[in[0]];
      for (std::size_t j = 1; j < m && prod != 0.0; ++j) prod *= field_for_slot(fields, j)[in[j]];
      if (prod != 0.0) out[table.term_output(t)] += prod;
    }
  }
}

void gauge_action_backward(const algebra::LInfinityAlgebra& alg, std::span<const double> contracted,
                           std::span<const std::span<const double>> fields, std::span<const double> d_out,
                           std::span<double> d_contracted, std::span<const std::span<double>> d_fields) {
  require(d_fields.size() == fields.size(), ErrorCode::invalid_argument, "gauge action backward: field count");
  for (const auto& table : alg.brackets()) {
    const auto m = static_cast<std::size_t>(table.arity());
    for (std::size_t t = 0; t < table.size(); ++t) {
      const double g = d_out[table.term_output(t)] * table.term_coef(t);
      if (g == 0.0) continue;
      const auto in = table.term_inputs(t);
      double rest = 1.0;
      for (std::size_t j = 1; j < m; ++j) rest *= field_for_slot(fields, j)[in[j]];
      d_contracted[in[0]] += g * rest;
      for (std::size_t j = 1; j < m; ++j) {
        double others = contracted[in[0]];
        for (std::size_t l = 1; l < m; ++l)
          if (l != j) others *= field_for_slot(fields, l)[in[l]];
        d_fields[field_index_for_slot(fields.size(), j)][in[j]] += g * others;
      }
    }
  }
}

algebra::GradedVector gauge_action(const algebra::LInfinityAlgebra& alg, std::span<const double> contracted,
                                   const algebra::GradedVector& v_hat) {
  require(v_hat.space() == alg.space(), ErrorCode::dimension_mismatch, "gauge action: v_hat space mismatch");
  algebra::GradedVector out(alg.space());
  const std::span<const double> fields[] = {v_hat.coords()};
  gauge_action_into(alg, contracted, fields, out.coords());
  return out;
}

void so_matvec(int n, std::span<const double> w, std::span<const double> x, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t a = 0;
  for (int p = 0; p < n; ++p)
    for (int q = p + 1; q < n; ++q, ++a) {
      const auto up = static_cast<std::size_t>(p), uq = static_cast<std::size_t>(q);
      out[up] += w[a] * x[uq];
      out[uq] -= w[a] * x[up];
    }
}

namespace {

// d/dw of <q, mat(w) x>.
void so_matvec_grad_w(int n, std::span<const double> q, std::span<const double> x, std::span<double> dw) {
  std::size_t a = 0;
  for (int p = 0; p < n; ++p)
    for (int r = p + 1; r < n; ++r, ++a) {
      const auto up = static_cast<std::size_t>(p), ur = static_cast<std::size_t>(r);
      dw[a] += q[up] * x[ur] - q[ur] * x[up];
    }
}

std::span<const double> col(const Matrix& m, Eigen::Index j) {
  return {m.data() + j * m.rows(), static_cast<std::size_t>(m.rows())};
}

std::span<double> col(Matrix& m, Eigen::Index j) { return {m.data() + j * m.rows(), static_cast<std::size_t>(m.rows())}; }

struct Layout {
  std::size_t d = 0;
  bool has_l1 = false;
};

Layout layout_of(const FlowModel& model) {
  return {model::so_dim(model.n()), model.variant() == Variant::hgfm};
}

// Per-sample projection pieces: y0 = mat(w0) x, y1 = mat(w1) x + w_c x.
void projection_parts(int n, const Layout& lay, std::span<const double> w, std::span<const double> x,
                      std::span<double> y0, std::span<double> y1) {
  so_matvec(n, w.subspan(0, lay.d), x, y0);
  if (lay.has_l1) {
    so_matvec(n, w.subspan(lay.d, lay.d), x, y1);
    const double wc = w[2 * lay.d];
    for (std::size_t i = 0; i < x.size(); ++i) y1[i] += wc * x[i];
  }
}

Matrix stack_vhat(const FieldTape& tape, const Layout& lay, Role r0, Role r1) {
  const Matrix& g0 = tape.output(r0);
  if (!lay.has_l1) return g0;
  const Matrix& g1 = tape.output(r1);
  Matrix out(g0.rows() + g1.rows(), g0.cols());
  out.topRows(g0.rows()) = g0;
  out.bottomRows(g1.rows()) = g1;
  return out;
}

}  // namespace

const Matrix& FieldTape::output(Role role) const {
  for (const auto& [r, tape] : tapes)
    if (r == role) return tape.output;
  fail(ErrorCode::invalid_argument, "field tape: no output for '" + std::string(model::to_string(role)) + "'");
}

std::vector<double> project_to_tangent(const FlowModel& model, const FlowState& state,
                                       const algebra::GradedVector& w) {
  require(model.algebra() != nullptr, ErrorCode::invalid_argument, "projection needs a gauge or hgfm model");
  require(w.space() == model.algebra()->space(), ErrorCode::dimension_mismatch, "projection: w space mismatch");
  const int n = model.n();
  require(state.x.size() == static_cast<std::size_t>(n), ErrorCode::dimension_mismatch,
          "projection: state dimension mismatch");
  const Layout lay = layout_of(model);
  std::vector<double> z(state.x);
  z.push_back(state.t);
  const Vector g0 = model.net(Role::proj0).forward(z);
  std::vector<double> y0(static_cast<std::size_t>(n)), y1(static_cast<std::size_t>(n), 0.0);
  projection_parts(n, lay, w.coords(), state.x, y0, y1);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = g0(i) * y0[static_cast<std::size_t>(i)];
  if (lay.has_l1) {
    const Vector g1 = model.net(Role::proj1).forward(z);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] += g1(i) * y1[static_cast<std::size_t>(i)];
  }
  return out;
}

FieldTape field_forward(const FlowModel& model, const Matrix& x, const Vector& t) {
  const int n = model.n();
  require(x.rows() == n, ErrorCode::dimension_mismatch,
          "field: x has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(n));
  require(t.size() == x.cols(), ErrorCode::dimension_mismatch, "field: t length does not match batch size");
  const Eigen::Index batch = x.cols();

  FieldTape tape;
  tape.x = x;
  tape.z.resize(n + 1, batch);
  tape.z.topRows(n) = x;
  tape.z.row(n) = t.transpose();
  tape.t_row = t.transpose();
  for (const auto& nw : model.networks()) {
    const Matrix& input = nw.role == Role::alpha ? tape.t_row : tape.z;
    tape.tapes.emplace_back(nw.role, nw.mlp.forward(input));
  }

  const Matrix& v = tape.output(Role::field);
  if (model.variant() == Variant::plain) {
    tape.field = v;
    return tape;
  }

  const auto& alg = *model.algebra();
  const Layout lay = layout_of(model);
  const auto dim = static_cast<Eigen::Index>(alg.space().total_dim());
  const bool two_field = model.options().two_field;
  const Matrix& a_raw = tape.output(Role::gauge);
  const Matrix& dir = model.has(Role::direction) ? tape.output(Role::direction) : v;
  const Matrix& g0 = tape.output(Role::proj0);

  tape.alpha = tape.output(Role::alpha);
  tape.vhat = stack_vhat(tape, lay, Role::graded0, Role::graded1);
  if (two_field) tape.vhat_b = stack_vhat(tape, lay, Role::graded0_b, Role::graded1_b);
  tape.contracted = Matrix::Zero(dim, batch);
  tape.w = Matrix::Zero(dim, batch);
  tape.projection = Matrix::Zero(n, batch);

  std::vector<double> y0(static_cast<std::size_t>(n)), y1(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int mu = 0; mu < n; ++mu) {
      const double dm = dir(mu, b);
      for (Eigen::Index a = 0; a < dim; ++a) tape.contracted(a, b) += a_raw(mu * dim + a, b) * dm;
    }
    std::vector<std::span<const double>> fields{col(tape.vhat, b)};
    if (two_field) fields.push_back(col(tape.vhat_b, b));
    gauge_action_into(alg, col(tape.contracted, b), fields, col(tape.w, b));

    projection_parts(n, lay, col(tape.w, b), col(tape.x, b), y0, y1);
    for (int i = 0; i < n; ++i) {
      double p = g0(i, b) * y0[static_cast<std::size_t>(i)];
      if (lay.has_l1) p += tape.output(Role::proj1)(i, b) * y1[static_cast<std::size_t>(i)];
      tape.projection(i, b) = p;
    }
  }
  tape.field = v - (tape.projection.array().rowwise() * tape.alpha.row(0).array()).matrix();
  return tape;
}

void field_backward(FlowModel& model, FieldTape& tape, const Matrix& field_cotangent) {
  require(!tape.consumed, ErrorCode::invalid_argument, "field backward: tape consumed twice");
  require(field_cotangent.rows() == tape.field.rows() && field_cotangent.cols() == tape.field.cols(),
          ErrorCode::dimension_mismatch, "field backward: cotangent shape mismatch");
  tape.consumed = true;

  auto backprop = [&](Role role, const Matrix& cot) {
    for (auto& [r, t] : tape.tapes)
      if (r == role) {
        model.net(role).backward(t, cot);
        return;
      }
  };

  if (model.variant() == Variant::plain) {
    backprop(Role::field, field_cotangent);
    return;
  }

  const int n = model.n();
  const auto& alg = *model.algebra();
  const Layout lay = layout_of(model);
  const auto dim = static_cast<Eigen::Index>(alg.space().total_dim());
  const Eigen::Index batch = tape.x.cols();
  const bool two_field = model.options().two_field;
  const bool own_direction = model.has(Role::direction);

  const Matrix& v = tape.output(Role::field);
  const Matrix& a_raw = tape.output(Role::gauge);
  const Matrix& dir = own_direction ? tape.output(Role::direction) : v;
  const Matrix& g0 = tape.output(Role::proj0);

  Matrix d_v = field_cotangent;
  Matrix d_dir = Matrix::Zero(n, batch);
  Matrix d_alpha(1, batch);
  Matrix d_gauge = Matrix::Zero(a_raw.rows(), batch);
  Matrix d_g0 = Matrix::Zero(n, batch);
  Matrix d_g1 = lay.has_l1 ? Matrix::Zero(n, batch) : Matrix();
  Matrix d_vhat = Matrix::Zero(dim, batch);
  Matrix d_vhat_b = two_field ? Matrix::Zero(dim, batch) : Matrix();

  const auto un = static_cast<std::size_t>(n);
  std::vector<double> y0(un), y1(un, 0.0), d_p(un), q(un), d_w(static_cast<std::size_t>(dim)),
      d_c(static_cast<std::size_t>(dim));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double alpha = tape.alpha(0, b);
    d_alpha(0, b) = -field_cotangent.col(b).dot(tape.projection.col(b));
    for (std::size_t i = 0; i < un; ++i) d_p[i] = -alpha * field_cotangent(static_cast<Eigen::Index>(i), b);

    const auto xb = col(tape.x, b);
    const auto wb = col(tape.w, b);
    projection_parts(n, lay, wb, xb, y0, y1);
    std::fill(d_w.begin(), d_w.end(), 0.0);
    for (std::size_t i = 0; i < un; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      d_g0(ii, b) = d_p[i] * y0[i];
      q[i] = d_p[i] * g0(ii, b);
    }
    so_matvec_grad_w(n, q, xb, std::span<double>(d_w).subspan(0, lay.d));
    if (lay.has_l1) {
      const Matrix& g1 = tape.output(Role::proj1);
      double d_wc = 0.0;
      for (std::size_t i = 0; i < un; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        d_g1(ii, b) = d_p[i] * y1[i];
        q[i] = d_p[i] * g1(ii, b);
        d_wc += q[i] * xb[i];
      }
      so_matvec_grad_w(n, q, xb, std::span<double>(d_w).subspan(lay.d, lay.d));
      d_w[2 * lay.d] += d_wc;
    }

    std::fill(d_c.begin(), d_c.end(), 0.0);
    std::vector<std::span<const double>> fields{col(tape.vhat, b)};
    std::vector<std::span<double>> d_fields{col(d_vhat, b)};
    if (two_field) {
      fields.push_back(col(tape.vhat_b, b));
      d_fields.push_back(col(d_vhat_b, b));
    }
    gauge_action_backward(alg, col(tape.contracted, b), fields, d_w, d_c, d_fields);

    for (int mu = 0; mu < n; ++mu) {
      const double dm = dir(mu, b);
      double acc = 0.0;
      for (Eigen::Index a = 0; a < dim; ++a) {
        d_gauge(mu * dim + a, b) = d_c[static_cast<std::size_t>(a)] * dm;
        acc += d_c[static_cast<std::size_t>(a)] * a_raw(mu * dim + a, b);
      }
      d_dir(mu, b) = acc;
    }
  }

  if (own_direction) {
    backprop(Role::direction, d_dir);
  } else {
    d_v += d_dir;
  }
  backprop(Role::field, d_v);
  backprop(Role::alpha, d_alpha);
  backprop(Role::gauge, d_gauge);
  backprop(Role::proj0, d_g0);
  const auto d = static_cast<Eigen::Index>(lay.d);
  if (lay.has_l1) {
    backprop(Role::proj1, d_g1);
    backprop(Role::graded0, d_vhat.topRows(d));
    backprop(Role::graded1, d_vhat.bottomRows(d + 1));
    if (two_field) {
      backprop(Role::graded0_b, d_vhat_b.topRows(d));
      backprop(Role::graded1_b, d_vhat_b.bottomRows(d + 1));
    }
  } else {
    backprop(Role::graded0, d_vhat);
    if (two_field) backprop(Role::graded0_b, d_vhat_b);
  }
}

Matrix evaluate_field(const FlowModel& model, const Matrix& x, const Vector& t) {
  return field_forward(model, x, t).field;
}

namespace {

std::vector<double> single(const FlowModel& model, const FlowState& state) {
  require(state.x.size() == static_cast<std::size_t>(model.n()), ErrorCode::dimension_mismatch,
          "field: state dimension mismatch");
  Matrix x(model.n(), 1);
  for (int i = 0; i < model.n(); ++i) x(i, 0) = state.x[static_cast<std::size_t>(i)];
  Vector t(1);
  t(0) = state.t;
  const Matrix f = evaluate_field(model, x, t);
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    require(std::isfinite(f(i, 0)), ErrorCode::numeric, "field: non-finite value");
  return {f.data(), f.data() + f.size()};
}

}  // namespace

std::vector<double> hgfm_field(const FlowModel& model, const FlowState& state) {
  require(model.variant() == Variant::hgfm, ErrorCode::invalid_argument, "hgfm_field needs an hgfm model");
  return single(model, state);
}

std::vector<double> baseline_field(const FlowModel& model, const FlowState& state) {
  require(model.variant() != Variant::hgfm, ErrorCode::invalid_argument, "baseline_field needs a plain/gauge model");
  return single(model, state);
}

}  // namespace hgfm::flow
