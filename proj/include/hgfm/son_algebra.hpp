#pragma once

// so(N) and the 2-term L-infinity algebra L0 (+) L1 built on it.
//
// Basis of so(N): E_a for pairs (i, j), i < j, in lexicographic order, with
// +1 at (i, j) and -1 at (j, i). L0 = so(N); L1 = so(N) (+) R c with the central
// coordinate c stored last in degree 1.

#include "hgfm/graded_algebra.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace hgfm::son {

class SoNBasis {
 public:
  explicit SoNBasis(int n);

  int n() const noexcept { return n_; }
  std::size_t dim() const noexcept { return pairs_.size(); }
  std::pair<int, int> slot(std::size_t a) const { return pairs_.at(a); }
  std::size_t index(int i, int j) const;

  Eigen::MatrixXd matrix(std::size_t a) const;
  Eigen::MatrixXd to_matrix(std::span<const double> coords) const;
  /// Reads the strict upper triangle; assumes `m` is antisymmetric.
  std::vector<double> from_matrix(const Eigen::MatrixXd& m) const;

 private:
  int n_;
  std::vector<std::pair<int, int>> pairs_;
};

struct StructureConstant {
  std::size_t a, b, c;
  double value;
};

/// Nonzero f_ab^c with [E_a, E_b] = sum_c f_ab^c E_c.
std::vector<StructureConstant> lie_bracket_constants(const SoNBasis& basis);

/// K(X, Y) = (N - 2) tr(XY).
double killing_form(const SoNBasis& basis, std::span<const double> x, std::span<const double> y);

struct TwoTermSpec {
  int n = 0;
  std::size_t dim0 = 0;
  std::size_t dim1 = 0;

  explicit TwoTermSpec(int n);
  /// Flat index of the central coordinate c.
  std::size_t central_index() const noexcept { return dim0 + dim1 - 1; }
  algebra::GradedSpace space() const;
};

/// b1: so-block of L1 -> L0 identity; b2: Lie bracket and adjoint action
/// (central line is a trivial representation, L1 x L1 -> 0); b3 (N = 3 only):
/// K(x, [y, z]) c on L0^3.
algebra::LInfinityAlgebra build_two_term(int n);

/// so(N) as an algebra concentrated in degree 0 with b2 = Lie bracket.
algebra::LInfinityAlgebra build_lie_algebra(int n);

}  // namespace hgfm::son
