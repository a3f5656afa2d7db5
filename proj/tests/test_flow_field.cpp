#include "hgfm/error.hpp"
#include "hgfm/flow_field.hpp"
#include "hgfm/son_algebra.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace hgfm;
using namespace hgfm::flow;
using model::Role;
using model::Variant;

namespace {

void set_constant_output(nn::Mlp& net, double value) {
  const auto last = net.spec().num_layers() - 1;
  net.weight(last).values.setZero();
  net.bias(last).values.setConstant(value);
}

void scale_output(nn::Mlp& net, double s) {
  const auto last = net.spec().num_layers() - 1;
  net.weight(last).values *= s;
  net.bias(last).values *= s;
}

Eigen::VectorXd column(const nn::Matrix& m) { return m.col(0); }

// Dense oracle of the full field for a single state, written against
// explicit antisymmetric matrices rather than bracket tables.
Eigen::VectorXd oracle_field(const model::FlowModel& m, const Eigen::VectorXd& x, double t) {
  const int n = m.n();
  const son::SoNBasis basis(n);
  const auto d = static_cast<Eigen::Index>(basis.dim());
  Eigen::VectorXd z(n + 1);
  z << x, t;
  auto out = [&](Role r) -> Eigen::VectorXd { return m.net(r).evaluate(z); };
  const Eigen::VectorXd v = out(Role::field);
  if (m.variant() == Variant::plain) return v;
  const Eigen::VectorXd dir = m.has(Role::direction) ? out(Role::direction) : v;
  const Eigen::VectorXd a = out(Role::gauge);
  const Eigen::Index dim = a.size() / n;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  for (int mu = 0; mu < n; ++mu) c += a.segment(mu * dim, dim) * dir(mu);
  auto mat = [&](const Eigen::VectorXd& coords) {
    return basis.to_matrix(std::span<const double>(coords.data(), static_cast<std::size_t>(coords.size())));
  };
  const Eigen::MatrixXd c0 = mat(c.head(d));
  const Eigen::MatrixXd v0 = mat(out(Role::graded0));
  Eigen::MatrixXd w0, w1 = Eigen::MatrixXd::Zero(n, n);
  double wc = 0.0;
  if (m.variant() == Variant::gauge) {
    w0 = c0 * v0 - v0 * c0;
  } else {
    const Eigen::VectorXd g1v = out(Role::graded1);
    const Eigen::MatrixXd c1 = mat(c.segment(d, d));
    const Eigen::MatrixXd v1 = mat(g1v.head(d));
    w0 = c1 + (c0 * v0 - v0 * c0);
    w1 = (c0 * v1 - v1 * c0) + (c1 * v0 - v0 * c1);
    if (m.options().two_field) {
      const Eigen::MatrixXd vb = mat(out(Role::graded0_b));
      wc = (n - 2) * (c0 * (v0 * vb - vb * v0)).trace();
    }
  }
  Eigen::VectorXd p = out(Role::proj0).cwiseProduct(w0 * x);
  if (m.variant() == Variant::hgfm) p += out(Role::proj1).cwiseProduct(w1 * x + wc * x);
  const double alpha = m.net(Role::alpha).evaluate(Eigen::MatrixXd::Constant(1, 1, t))(0, 0);
  return v - alpha * p;
}

Eigen::VectorXd eval_one(const model::FlowModel& m, const Eigen::VectorXd& x, double t) {
  nn::Matrix xm = x;
  return column(evaluate_field(m, xm, nn::Vector::Constant(1, t)));
}

}  // namespace

TEST_SUITE("flow_field") {
  TEST_CASE("contract_direction") {
    GaugeCoefficients zero(3, 7, std::vector<double>(21, 1.0));
    for (double v : contract_direction(zero, std::vector<double>{0, 0, 0})) CHECK(v == 0.0);
    std::vector<double> one_hot(21, 0.0);
    one_hot[0 * 7 + 4] = 1.0;
    const auto c = contract_direction(GaugeCoefficients(3, 7, one_hot), std::vector<double>{1, 0, 0});
    for (std::size_t a = 0; a < 7; ++a) CHECK(c[a] == (a == 4 ? 1.0 : 0.0));

    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::vector<double> vals(4 * 13);
    for (auto& v : vals) v = nd(rng);
    const std::vector<double> dv{0.3, -1.2, 0.5, 2.0};
    const auto got = contract_direction(GaugeCoefficients(4, 13, vals), dv);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(vals.data(), 4, 13);
    const Eigen::VectorXd expect = A.transpose() * Eigen::Map<const Eigen::VectorXd>(dv.data(), 4);
    for (std::size_t a = 0; a < 13; ++a) CHECK(got[a] == doctest::Approx(expect(static_cast<Eigen::Index>(a))).epsilon(1e-14));
    CHECK_THROWS_AS(GaugeCoefficients(3, 7, std::vector<double>(20)), Error);
    CHECK_THROWS_AS(contract_direction(GaugeCoefficients(4, 13, vals), std::vector<double>{1.0}), Error);
  }

  TEST_CASE("gauge_action examples") {
    const auto alg = son::build_two_term(3);
    const auto& s = alg.space();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    std::vector<double> vh(7);
    for (auto& v : vh) v = nd(rng);
    const algebra::GradedVector v_hat(s, vh);
    CHECK(gauge_action(alg, std::vector<double>(7, 0.0), v_hat).is_zero());

    std::vector<double> c(7, 0.0);
    c[s.flat_index(1, 2)] = 1.0;
    const auto r = gauge_action(alg, c, algebra::GradedVector(s));
    CHECK((r - algebra::GradedVector::basis(s, 0, 2)).max_abs() == 0.0);
    CHECK_THROWS_AS(gauge_action(alg, std::vector<double>(6, 0.0), v_hat), Error);
  }

  TEST_CASE("single-field b3 contribution vanishes identically at N = 3") {
    const auto full = son::build_two_term(3);
    std::vector<algebra::BracketTable> low;
    for (const auto& t : full.brackets())
      if (t.arity() < 3) low.push_back(t);
    const algebra::LInfinityAlgebra truncated("no-b3", full.space(), low);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    const auto central = son::TwoTermSpec(3).central_index();
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> c(7), vh(7);
      for (auto& v : c) v = nd(rng);
      for (auto& v : vh) v = 10.0 * nd(rng);
      const algebra::GradedVector v_hat(full.space(), vh);
      const auto with = gauge_action(full, c, v_hat);
      // The cancelling b3 terms are summed in different orders; only roundoff remains.
      const double tol = 1e-12 * algebra::GradedVector(full.space(), c).max_abs() * v_hat.max_abs() * v_hat.max_abs();
      CHECK((with - gauge_action(truncated, c, v_hat)).max_abs() <= tol);
      CHECK(std::abs(with.coords()[central]) <= tol);
    }
    // With two independent graded fields the ternary term is live.
    std::vector<double> c(7), va(7), vb(7), out(7, 0.0);
    for (auto& v : c) v = nd(rng);
    for (auto& v : va) v = nd(rng);
    for (auto& v : vb) v = nd(rng);
    const std::span<const double> fields[] = {va, vb};
    gauge_action_into(full, c, fields, out);
    CHECK(std::abs(out[central]) > 1e-6);
  }

  TEST_CASE("so_matvec and projection examples") {
    const son::SoNBasis b(4);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    std::vector<double> w(6), x(4), out(4);
    for (auto& v : w) v = nd(rng);
    for (auto& v : x) v = nd(rng);
    so_matvec(4, w, x, out);
    const Eigen::VectorXd expect = b.to_matrix(w) * Eigen::Map<const Eigen::VectorXd>(x.data(), 4);
    for (int i = 0; i < 4; ++i) CHECK(out[static_cast<std::size_t>(i)] == doctest::Approx(expect(i)).epsilon(1e-14));

    auto m = model::build_hgfm(3, 5);
    set_constant_output(m.net(Role::proj0), 1.0);
    set_constant_output(m.net(Role::proj1), 1.0);
    const auto& s = m.algebra()->space();
    const FlowState st{{1.0, 0.0, 0.0}, 0.5};
    for (double v : project_to_tangent(m, st, algebra::GradedVector(s))) CHECK(v == 0.0);

    // Rotation generator of the (x1, x2)-plane: lex index 0 = E_(0,1).
    const auto rot = project_to_tangent(m, st, algebra::GradedVector::basis(s, 0, 0));
    CHECK(rot[0] == 0.0);
    CHECK(rot[1] == -1.0);
    CHECK(rot[2] == 0.0);

    const double scale = 2.5;
    auto wc = algebra::GradedVector::basis(s, 1, 3);
    wc *= scale;
    const FlowState st2{{0.3, -0.7, 1.1}, 0.2};
    const auto p = project_to_tangent(m, st2, wc);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(scale * st2.x[i]).epsilon(1e-15));
  }

  TEST_CASE("field matches the dense oracle for every variant and option") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    struct Case {
      Variant v;
      int n;
      model::ModelOptions o;
    };
    model::ModelOptions two;
    two.two_field = true;
    model::ModelOptions dirnet;
    dirnet.direction_net = true;
    const Case cases[] = {{Variant::plain, 3, {}}, {Variant::gauge, 3, {}}, {Variant::hgfm, 3, {}},
                          {Variant::gauge, 5, {}}, {Variant::hgfm, 4, {}},  {Variant::hgfm, 3, two},
                          {Variant::hgfm, 4, dirnet}};
    for (const auto& c : cases) {
      CAPTURE(model::to_string(c.v));
      CAPTURE(c.n);
      const auto m = model::build_model(c.v, c.n, 11, c.o);
      for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd x(c.n);
        for (int i = 0; i < c.n; ++i) x(i) = 3.0 * nd(rng);
        const double t = std::uniform_real_distribution<double>(0, 1)(rng);
        const Eigen::VectorXd expect = oracle_field(m, x, t);
        const Eigen::VectorXd got = eval_one(m, x, t);
        CHECK((got - expect).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, expect.cwiseAbs().maxCoeff()));
      }
    }
  }

  TEST_CASE("alpha or gauge output zero reduces the field to v") {
    for (auto v : {Variant::gauge, Variant::hgfm}) {
      for (Role r : {Role::alpha, Role::gauge}) {
        auto m = model::build_model(v, 3, 2);
        set_constant_output(m.net(r), 0.0);
        const FlowState st{{1.0, -2.0, 0.5}, 0.3};
        nn::Matrix z(4, 1);
        z << 1.0, -2.0, 0.5, 0.3;
        const Eigen::VectorXd vt = m.net(Role::field).evaluate(z);
        const auto f = v == Variant::hgfm ? hgfm_field(m, st) : baseline_field(m, st);
        for (int i = 0; i < 3; ++i) CHECK(f[static_cast<std::size_t>(i)] == vt(i));
      }
    }
  }

  TEST_CASE("plain model with zero parameters gives a zero field") {
    auto m = model::build_baseline(Variant::plain, 3, 1);
    for (auto* p : m.params()) p->values.setZero();
    for (double v : baseline_field(m, FlowState{{4.0, 5.0, 6.0}, 0.9})) CHECK(v == 0.0);
  }

  TEST_CASE("field is linear in the gauge output and affine in v-hat without b3") {
    const nn::Matrix x = nn::Matrix::Random(4, 6);
    const nn::Vector t = (nn::Vector::Random(6).array() + 1.0) / 2.0;
    // Scaling the last layer scales the network output.
    auto at = [&](std::vector<Role> roles, double s) {
      auto m = model::build_hgfm(4, 3);
      for (Role r : roles) scale_output(m.net(r), s);
      return evaluate_field(m, x, t);
    };
    for (const std::vector<Role>& roles : {std::vector<Role>{Role::gauge}, std::vector<Role>{Role::graded0, Role::graded1}}) {
      const nn::Matrix f0 = at(roles, 0.0), f1 = at(roles, 1.0), f2 = at(roles, 2.0);
      const double scale = std::max(1.0, f2.cwiseAbs().maxCoeff());
      CHECK((f2 - 2.0 * f1 + f0).cwiseAbs().maxCoeff() <= 1e-11 * scale);
    }
  }

  TEST_CASE("single-field gauge action never touches the central coordinate") {
    const auto m = model::build_hgfm(3, 4);
    const nn::Matrix x = 5.0 * nn::Matrix::Random(3, 20);
    const nn::Vector t = (nn::Vector::Random(20).array() + 1.0) / 2.0;
    const auto tape = field_forward(m, x, t);
    // Zero up to the summation roundoff of the cancelling b3 terms.
    CHECK(tape.w.row(son::TwoTermSpec(3).central_index()).cwiseAbs().maxCoeff() <= 1e-12 * tape.w.cwiseAbs().maxCoeff());
  }

  TEST_CASE("batch evaluation matches per-state evaluation") {
    const auto m = model::build_hgfm(3, 9);
    const nn::Matrix x = 2.0 * nn::Matrix::Random(3, 8);
    const nn::Vector t = (nn::Vector::Random(8).array() + 1.0) / 2.0;
    const nn::Matrix f = evaluate_field(m, x, t);
    for (Eigen::Index b = 0; b < 8; ++b) {
      const auto single = hgfm_field(m, FlowState{{x(0, b), x(1, b), x(2, b)}, t(b)});
      for (int i = 0; i < 3; ++i) CHECK(single[static_cast<std::size_t>(i)] == doctest::Approx(f(i, b)).epsilon(1e-14));
    }
  }

  TEST_CASE("argument validation") {
    const auto h = model::build_hgfm(3, 1);
    const auto g = model::build_baseline(Variant::gauge, 3, 1);
    CHECK_THROWS_AS(baseline_field(h, FlowState{{0, 0, 0}, 0}), Error);
    CHECK_THROWS_AS(hgfm_field(g, FlowState{{0, 0, 0}, 0}), Error);
    CHECK_THROWS_AS(hgfm_field(h, FlowState{{0, 0}, 0}), Error);
    CHECK_THROWS_AS(evaluate_field(h, nn::Matrix::Zero(2, 3), nn::Vector::Zero(3)), Error);
    const double inf = std::numeric_limits<double>::infinity();
    try {
      hgfm_field(h, FlowState{{inf, 0, 0}, 0.5});
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::numeric);
    }
  }
}
