#include "hgfm/error.hpp"
#include "hgfm/graded_algebra.hpp"
#include "hgfm/son_algebra.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

using namespace hgfm;
using namespace hgfm::algebra;

namespace {

constexpr double kTight = 1e-12;

// Sign of reordering by adjacent swaps; `bubble` selects the decomposition.
int koszul_by_swaps(std::vector<std::size_t> perm, std::vector<int> degrees, bool bubble) {
  // Work on the target order: position i must end up holding original index perm[i].
  std::vector<std::size_t> where(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) where[perm[i]] = i;
  std::vector<std::size_t> seq(perm.size());
  std::iota(seq.begin(), seq.end(), 0);
  int sign = 1;
  auto swap_at = [&](std::size_t i) {
    const int dx = degrees[seq[i]], dy = degrees[seq[i + 1]];
    sign *= -(((dx * dy) & 1) ? -1 : 1);
    std::swap(seq[i], seq[i + 1]);
  };
  if (bubble) {
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        if (where[seq[i]] > where[seq[i + 1]]) swap_at(i), changed = true;
    }
  } else {
    for (std::size_t i = 1; i < seq.size(); ++i)
      for (std::size_t j = i; j > 0 && where[seq[j - 1]] > where[seq[j]]; --j) swap_at(j - 1);
  }
  REQUIRE(seq == perm);
  return sign;
}

GradedSpace so3_space() { return GradedSpace({{0, 3}, {1, 4}}); }

GradedVector random_vector(const GradedSpace& s, int degree, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> c(s.dim(degree));
  for (auto& v : c) v = u(rng);
  return GradedVector::homogeneous(s, degree, c);
}

}  // namespace

TEST_SUITE("graded_algebra") {
  TEST_CASE("graded space layout") {
    GradedSpace s({{1, 4}, {0, 3}});
    CHECK(s.total_dim() == 7);
    CHECK(s.offset(0) == 0);
    CHECK(s.offset(1) == 3);
    CHECK(s.degree_of(2) == 0);
    CHECK(s.degree_of(3) == 1);
    CHECK(s.flat_index(1, 3) == 6);
    CHECK(s.dim(5) == 0);
    CHECK_THROWS_AS(GradedSpace({{0, 1}, {0, 2}}), Error);
  }

  TEST_CASE("graded vector arithmetic and homogeneity") {
    const auto s = so3_space();
    auto a = GradedVector::basis(s, 0, 1);
    auto b = GradedVector::basis(s, 1, 3);
    CHECK(a.is_homogeneous());
    CHECK(a.degree() == 0);
    CHECK(b.degree() == 1);
    const auto mixed = a + b;
    CHECK_FALSE(mixed.is_homogeneous());
    CHECK_FALSE(mixed.degree().has_value());
    GradedVector zero(s);
    CHECK(zero.is_zero());
    CHECK(zero.is_homogeneous());
    CHECK_FALSE(zero.degree().has_value());
    CHECK((2.0 * a).component(0)[1] == 2.0);
    GradedVector other(GradedSpace({{0, 2}}));
    CHECK_THROWS_AS(a += other, Error);
  }

  TEST_CASE("koszul sign examples") {
    const std::vector<std::size_t> id{0, 1, 2};
    CHECK(koszul_sign(id, std::vector<int>{0, 1, 1}) == 1);
    const std::vector<std::size_t> swap{1, 0};
    CHECK(koszul_sign(swap, std::vector<int>{0, 0}) == -1);
    CHECK(koszul_sign(swap, std::vector<int>{1, 1}) == 1);
    CHECK(koszul_sign(swap, std::vector<int>{0, 1}) == -1);
  }

  TEST_CASE("koszul sign rejects malformed permutations") {
    CHECK_THROWS_AS(koszul_sign(std::vector<std::size_t>{0, 0}, std::vector<int>{0, 0}), Error);
    CHECK_THROWS_AS(koszul_sign(std::vector<std::size_t>{0, 2}, std::vector<int>{0, 0}), Error);
    CHECK_THROWS_AS(koszul_sign(std::vector<std::size_t>{0, 1}, std::vector<int>{0}), Error);
  }

  TEST_CASE("koszul sign matches two adjacent-swap decompositions") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t k = 1 + rng() % 6;
      std::vector<std::size_t> perm(k);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<int> deg(k);
      for (auto& d : deg) d = static_cast<int>(rng() % 3);
      const int expected = koszul_by_swaps(perm, deg, true);
      CHECK(koszul_by_swaps(perm, deg, false) == expected);
      CHECK(koszul_sign(perm, deg) == expected);
    }
  }

  TEST_CASE("koszul sign is a homomorphism") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t k = 1 + rng() % 6;
      std::vector<std::size_t> tau(k), sigma(k), rho(k);
      std::iota(tau.begin(), tau.end(), 0);
      std::iota(sigma.begin(), sigma.end(), 0);
      std::shuffle(tau.begin(), tau.end(), rng);
      std::shuffle(sigma.begin(), sigma.end(), rng);
      std::vector<int> deg(k), deg_tau(k);
      for (auto& d : deg) d = static_cast<int>(rng() % 2);
      for (std::size_t i = 0; i < k; ++i) {
        deg_tau[i] = deg[tau[i]];
        rho[i] = tau[sigma[i]];
      }
      CHECK(koszul_sign(rho, deg) == koszul_sign(tau, deg) * koszul_sign(sigma, deg_tau));
    }
  }

  TEST_CASE("braid swap") {
    const auto s = so3_space();
    const auto v0 = GradedVector::basis(s, 0, 0);
    const auto v1 = GradedVector::basis(s, 1, 0);
    const auto w1 = GradedVector::basis(s, 1, 2);
    CHECK(braid_swap(v0, v1).sign == 1);
    CHECK(braid_swap(v1, w1).sign == -1);
    CHECK(braid_swap(v0, v0).sign == 1);
    const auto r = braid_swap(v0, w1);
    CHECK(r.first.coords()[s.flat_index(1, 2)] == 1.0);
    CHECK(r.second.coords()[s.flat_index(0, 0)] == 1.0);
    CHECK_THROWS_AS(braid_swap(v0 + v1, w1), Error);
  }

  TEST_CASE("bracket table enforces the output degree law") {
    const auto s = so3_space();
    BracketTable b2(s, 2);
    const std::size_t in00[] = {0, 1};
    CHECK_NOTHROW(b2.add(in00, 2, 1.0));
    CHECK_THROWS_AS(b2.add(in00, s.flat_index(1, 0), 1.0), Error);
    BracketTable b1(s, 1);
    const std::size_t in1[] = {s.flat_index(1, 0)};
    CHECK_NOTHROW(b1.add(in1, 0, 1.0));
    const std::size_t in0[] = {0};
    CHECK_THROWS_AS(b1.add(in0, 0, 1.0), Error);
    const std::size_t bad[] = {0, 99};
    CHECK_THROWS_AS(b2.add(bad, 2, 1.0), Error);
    b2.add(in00, 2, 0.5);
    CHECK(b2.get(in00, 2) == doctest::Approx(1.5));
    b2.set(in00, 2, 0.0);
    CHECK(b2.get(in00, 2) == 0.0);
  }

  TEST_CASE("eval_bracket: zero argument, errors and multilinearity") {
    const auto alg = son::build_two_term(4);
    const auto& s = alg.space();
    std::mt19937_64 rng(3);
    const auto x = random_vector(s, 0, rng);
    const GradedVector zero(s);
    CHECK(eval_bracket(alg, 2, std::vector<GradedVector>{x, zero}).is_zero());
    CHECK_THROWS_AS(eval_bracket(alg, 3, std::vector<GradedVector>{x, x, x}), Error);
    CHECK_THROWS_AS(eval_bracket(alg, 2, std::vector<GradedVector>{x}), Error);
    const GradedVector foreign(GradedSpace({{0, 6}}));
    CHECK_THROWS_AS(eval_bracket(alg, 2, std::vector<GradedVector>{x, foreign}), Error);

    for (int trial = 0; trial < 50; ++trial) {
      const int slot = static_cast<int>(rng() % 2);
      const auto a = random_vector(s, static_cast<int>(rng() % 2), rng);
      const auto y = random_vector(s, static_cast<int>(rng() % 2), rng);
      const auto z = random_vector(s, static_cast<int>(rng() % 2), rng);
      const double alpha = 0.7, beta = -1.3;
      auto args = [&](const GradedVector& v) {
        return slot == 0 ? std::vector<GradedVector>{v, a} : std::vector<GradedVector>{a, v};
      };
      const auto lhs = eval_bracket(alg, 2, args(alpha * y + beta * z));
      const auto rhs = alpha * eval_bracket(alg, 2, args(y)) + beta * eval_bracket(alg, 2, args(z));
      CHECK((lhs - rhs).max_abs() <= kTight);
    }
  }

  TEST_CASE("output of homogeneous inputs has degree sum + m - 2") {
    const auto alg = son::build_two_term(3);
    const auto& s = alg.space();
    std::mt19937_64 rng(4);
    for (int m = 1; m <= 3; ++m) {
      for (int trial = 0; trial < 40; ++trial) {
        std::vector<GradedVector> args;
        int sum = 0;
        for (int j = 0; j < m; ++j) {
          const int d = static_cast<int>(rng() % 2);
          sum += d;
          args.push_back(random_vector(s, d, rng));
        }
        const auto out = eval_bracket(alg, m, args);
        CHECK(out.is_homogeneous());
        if (!out.is_zero()) CHECK(*out.degree() == sum + m - 2);
      }
    }
  }

  TEST_CASE("so(3): [L1, L2] = L3 under the conventional identification") {
    // (L_i)_{jk} = -eps_{ijk}: L1 = -E_(1,2), L2 = E_(0,2), L3 = -E_(0,1).
    const auto alg = son::build_lie_algebra(3);
    const auto& s = alg.space();
    const son::SoNBasis basis(3);
    auto l = [&](int i) {
      GradedVector v(s);
      if (i == 1) v.coords()[basis.index(1, 2)] = -1.0;
      if (i == 2) v.coords()[basis.index(0, 2)] = 1.0;
      if (i == 3) v.coords()[basis.index(0, 1)] = -1.0;
      return v;
    };
    CHECK((eval_bracket(alg, 2, std::vector<GradedVector>{l(1), l(2)}) - l(3)).max_abs() <= kTight);
    CHECK((eval_bracket(alg, 2, std::vector<GradedVector>{l(2), l(3)}) - l(1)).max_abs() <= kTight);
    CHECK((eval_bracket(alg, 2, std::vector<GradedVector>{l(3), l(1)}) - l(2)).max_abs() <= kTight);
    std::mt19937_64 rng(5);
    const auto x = random_vector(s, 0, rng);
    CHECK(eval_bracket(alg, 2, std::vector<GradedVector>{x, x}).max_abs() <= kTight);
  }

  TEST_CASE("check_skew on so(N) and on a corrupted table") {
    CHECK(check_skew(son::build_lie_algebra(4), 2, 100, kTight, 1).passed);
    CHECK(check_skew(son::build_two_term(3), 1, 10, kTight, 1).passed);

    const GradedSpace s({{0, 3}});
    BracketTable b2(s, 2);
    const std::size_t ab[] = {0, 1}, ba[] = {1, 0};
    b2.add(ab, 2, 1.0);
    b2.add(ba, 2, 1.0);
    const LInfinityAlgebra bad("corrupt", s, {b2});
    const auto r = check_skew(bad, 2, 100, kTight, 1);
    CHECK_FALSE(r.passed);
    CHECK(r.max_residual > 0.01);
  }

  TEST_CASE("check_jacobi: k = 1 is exact and classical Jacobi holds for N > 3") {
    const auto a4 = son::build_two_term(4);
    const auto r1 = check_jacobi(a4, 1, 50, 0.0, 2);
    CHECK(r1.max_residual == 0.0);
    const auto& s = a4.space();
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<GradedVector> args{random_vector(s, 0, rng), random_vector(s, 0, rng), random_vector(s, 0, rng)};
      CHECK(jacobi_sum(a4, args).max_abs() <= 1e-10);
    }
  }

  TEST_CASE("check_jacobi detects a corrupted structure constant") {
    const auto good = son::build_two_term(4);
    std::vector<BracketTable> tables = good.brackets();
    for (auto& t : tables) {
      if (t.arity() != 2) continue;
      const auto in = t.term_inputs(0);
      const std::vector<std::size_t> inputs(in.begin(), in.end());
      t.set(inputs, t.term_output(0), 2.0 * t.term_coef(0));
    }
    const LInfinityAlgebra bad("corrupt", good.space(), tables);
    CHECK_FALSE(check_jacobi(bad, 3, 200, 1e-10, 3).passed);
  }

  TEST_CASE("N = 3, k = 3: the residual on (x, y, h) is the central term K(h, [x, y])") {
    // Documented defect: the ternary bracket only sees degree-0 arguments,
    // while b2(b2(x, y), h) and friends leave a central contribution.
    const auto alg = son::build_two_term(3);
    const auto& s = alg.space();
    const son::SoNBasis basis(3);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const auto x = random_vector(s, 0, rng), y = random_vector(s, 0, rng);
      auto h = random_vector(s, 1, rng);
      h.coords()[son::TwoTermSpec(3).central_index()] = 0.0;
      const auto xy = eval_bracket(alg, 2, std::vector<GradedVector>{x, y});
      const auto hs = h.component(1).subspan(0, 3);
      const double k = son::killing_form(basis, hs, xy.component(0));
      const auto r = jacobi_sum(alg, std::vector<GradedVector>{x, y, h});
      CHECK(r.max_abs() == doctest::Approx(std::abs(k)).epsilon(1e-12));
      CHECK(std::abs(r.coords()[son::TwoTermSpec(3).central_index()]) == doctest::Approx(std::abs(k)).epsilon(1e-12));
    }
  }

  TEST_CASE("algebra JSON round trip and golden file") {
    const auto alg = son::build_two_term(3);
    const auto text = algebra_to_json(alg);
    const auto back = algebra_from_json(text);
    CHECK(algebra_to_json(back) == text);
    CHECK(back.space() == alg.space());

    std::ifstream in(std::string(HGFM_TEST_DATA_DIR) + "/golden/so3_two_term.json");
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto golden = algebra_from_json(ss.str());
    CHECK(algebra_to_json(golden) == text);

    CHECK_THROWS_AS(algebra_from_json("{}"), Error);
    CHECK_THROWS_AS(algebra_from_json("not json"), Error);
  }
}
