#include "hgfm/son_algebra.hpp"

#include "hgfm/error.hpp"

#include <array>
#include <map>
#include <string>

namespace hgfm::son {

using algebra::BracketTable;
using algebra::GradedSpace;
using algebra::LInfinityAlgebra;

SoNBasis::SoNBasis(int n) : n_(n) {
  require(n >= 2, ErrorCode::invalid_argument, "so(N): N must be >= 2");
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs_.emplace_back(i, j);
}

std::size_t SoNBasis::index(int i, int j) const {
  require(i >= 0 && i < j && j < n_, ErrorCode::invalid_argument, "so(N): slot must satisfy 0 <= i < j < N");
  // Pairs with first index < i contribute (n-1) + (n-2) + ... terms.
  const auto row_start = static_cast<std::size_t>(i) * static_cast<std::size_t>(2 * n_ - i - 1) / 2;
  return row_start + static_cast<std::size_t>(j - i - 1);
}

Eigen::MatrixXd SoNBasis::matrix(std::size_t a) const {
  const auto [i, j] = slot(a);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
  m(i, j) = 1.0;
  m(j, i) = -1.0;
  return m;
}

Eigen::MatrixXd SoNBasis::to_matrix(std::span<const double> coords) const {
  require(coords.size() == dim(), ErrorCode::dimension_mismatch, "so(N): coordinate length mismatch");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
  for (std::size_t a = 0; a < pairs_.size(); ++a) {
    const auto [i, j] = pairs_[a];
    m(i, j) += coords[a];
    m(j, i) -= coords[a];
  }
  return m;
}

std::vector<double> SoNBasis::from_matrix(const Eigen::MatrixXd& m) const {
  require(m.rows() == n_ && m.cols() == n_, ErrorCode::dimension_mismatch, "so(N): matrix size mismatch");
  std::vector<double> out(dim());
  for (std::size_t a = 0; a < pairs_.size(); ++a) out[a] = m(pairs_[a].first, pairs_[a].second);
  return out;
}

namespace {

// E_a as its two nonzero entries; products of basis matrices stay tiny, so the
// commutator is formed entry-wise instead of with dense N x N products.
struct Entry {
  int row, col;
  double value;
};

std::array<Entry, 2> entries(const SoNBasis& basis, std::size_t a) {
  const auto [i, j] = basis.slot(a);
  return {Entry{i, j, 1.0}, Entry{j, i, -1.0}};
}

std::map<std::pair<int, int>, double> commutator(const SoNBasis& basis, std::size_t a, std::size_t b) {
  std::map<std::pair<int, int>, double> out;
  const auto ea = entries(basis, a);
  const auto eb = entries(basis, b);
  for (const auto& x : ea)
    for (const auto& y : eb) {
      if (x.col == y.row) out[{x.row, y.col}] += x.value * y.value;
      if (y.col == x.row) out[{y.row, x.col}] -= y.value * x.value;
    }
  return out;
}

}  // namespace

std::vector<StructureConstant> lie_bracket_constants(const SoNBasis& basis) {
  std::vector<StructureConstant> out;
  for (std::size_t a = 0; a < basis.dim(); ++a) {
    for (std::size_t b = 0; b < basis.dim(); ++b) {
      for (const auto& [slot, value] : commutator(basis, a, b)) {
        // Re-expand in the basis from the upper triangle.
        if (slot.first < slot.second && value != 0.0)
          out.push_back({a, b, basis.index(slot.first, slot.second), value});
      }
    }
  }
  return out;
}

double killing_form(const SoNBasis& basis, std::span<const double> x, std::span<const double> y) {
  require(x.size() == basis.dim() && y.size() == basis.dim(), ErrorCode::dimension_mismatch,
          "killing form: coordinate length mismatch");
  const Eigen::MatrixXd mx = basis.to_matrix(x);
  const Eigen::MatrixXd my = basis.to_matrix(y);
  // tr(XY) without forming the product.
  const double trace = (mx.array() * my.transpose().array()).sum();
  return static_cast<double>(basis.n() - 2) * trace;
}

TwoTermSpec::TwoTermSpec(int n_) : n(n_) {
  require(n_ >= 3, ErrorCode::invalid_argument, "two-term algebra: N must be >= 3");
  dim0 = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_ - 1) / 2;
  dim1 = dim0 + 1;
}

GradedSpace TwoTermSpec::space() const { return GradedSpace({{0, dim0}, {1, dim1}}); }

LInfinityAlgebra build_two_term(int n) {
  const TwoTermSpec spec(n);
  const SoNBasis basis(n);
  const GradedSpace space = spec.space();
  const std::size_t off1 = space.offset(1);
  const std::size_t d = spec.dim0;

  BracketTable b1(space, 1);
  for (std::size_t a = 0; a < d; ++a) {
    const std::array<std::size_t, 1> in{off1 + a};
    b1.add(in, a, 1.0);
  }

  BracketTable b2(space, 2);
  const std::array<int, 2> deg01{0, 1};
  const std::array<std::size_t, 2> swap{1, 0};
  const double sign10 = static_cast<double>(algebra::koszul_sign(swap, deg01));
  for (const auto& f : lie_bracket_constants(basis)) {
    const std::array<std::size_t, 2> in00{f.a, f.b};
    b2.add(in00, f.c, f.value);
    const std::array<std::size_t, 2> in01{f.a, off1 + f.b};
    b2.add(in01, off1 + f.c, f.value);
    const std::array<std::size_t, 2> in10{off1 + f.b, f.a};
    b2.add(in10, off1 + f.c, sign10 * f.value);
  }

  std::vector<BracketTable> tables;
  tables.push_back(std::move(b1));
  tables.push_back(std::move(b2));

  if (n == 3) {
    BracketTable b3(space, 3);
    std::vector<std::vector<double>> lie(d * d, std::vector<double>(d, 0.0));
    for (const auto& f : lie_bracket_constants(basis)) lie[f.a * d + f.b][f.c] += f.value;
    for (std::size_t a = 0; a < d; ++a) {
      std::vector<double> ea(d, 0.0);
      ea[a] = 1.0;
      for (std::size_t b = 0; b < d; ++b)
        for (std::size_t c = 0; c < d; ++c) {
          const double k = killing_form(basis, ea, lie[b * d + c]);
          const std::array<std::size_t, 3> in{a, b, c};
          b3.add(in, spec.central_index(), k);
        }
    }
    tables.push_back(std::move(b3));
  }

  return LInfinityAlgebra("so(" + std::to_string(n) + ") two-term L-infinity", space, std::move(tables));
}

LInfinityAlgebra build_lie_algebra(int n) {
  const SoNBasis basis(n);
  const GradedSpace space({{0, basis.dim()}});
  BracketTable b2(space, 2);
  for (const auto& f : lie_bracket_constants(basis)) {
    const std::array<std::size_t, 2> in{f.a, f.b};
    b2.add(in, f.c, f.value);
  }
  std::vector<BracketTable> tables;
  tables.push_back(std::move(b2));
  return LInfinityAlgebra("so(" + std::to_string(n) + ") Lie algebra", space, std::move(tables));
}

}  // namespace hgfm::son
