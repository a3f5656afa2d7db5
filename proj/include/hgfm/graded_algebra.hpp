#pragma once

// Graded vector spaces, Koszul signs and multi-bracket tables.
//
// Coordinates of a graded vector are stored flat, ordered by degree; every
// degree owns a contiguous block. Brackets are sparse structure-constant
// tables over flat basis indices: a term (i_1..i_m) -> (out, coef) means
// b_m(e_{i_1},...,e_{i_m}) has coefficient `coef` on e_out.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hgfm::algebra {

class GradedSpace {
 public:
  struct Block {
    int degree = 0;
    std::size_t dim = 0;
    std::size_t offset = 0;
    bool operator==(const Block&) const = default;
  };

  GradedSpace() = default;
  /// (degree, dim) pairs; degrees must be distinct. Blocks are sorted by degree.
  explicit GradedSpace(std::vector<std::pair<int, std::size_t>> dims);

  std::size_t total_dim() const noexcept { return total_; }
  /// Zero for degrees not present.
  std::size_t dim(int degree) const noexcept;
  std::size_t offset(int degree) const;
  bool has_degree(int degree) const noexcept;
  int degree_of(std::size_t flat_index) const;
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::size_t flat_index(int degree, std::size_t index) const;

  bool operator==(const GradedSpace&) const = default;

 private:
  std::vector<Block> blocks_;
  std::size_t total_ = 0;
};

class GradedVector {
 public:
  GradedVector() = default;
  explicit GradedVector(GradedSpace space);
  GradedVector(GradedSpace space, std::vector<double> coords);

  static GradedVector basis(const GradedSpace& space, int degree, std::size_t index);
  /// Vector concentrated in `degree` with the given coordinates.
  static GradedVector homogeneous(const GradedSpace& space, int degree, std::span<const double> coords);

  const GradedSpace& space() const noexcept { return space_; }
  std::span<const double> coords() const noexcept { return coords_; }
  std::span<double> coords() noexcept { return coords_; }
  std::span<const double> component(int degree) const;
  std::span<double> component(int degree);

  bool is_zero() const noexcept;
  /// The zero vector counts as homogeneous (with no degree).
  bool is_homogeneous() const noexcept;
  /// Degree of a nonzero homogeneous vector; nullopt for zero or mixed vectors.
  std::optional<int> degree() const noexcept;
  double max_abs() const noexcept;

  GradedVector& operator+=(const GradedVector& other);
  GradedVector& operator-=(const GradedVector& other);
  GradedVector& operator*=(double s) noexcept;
  friend GradedVector operator+(GradedVector a, const GradedVector& b) { return a += b; }
  friend GradedVector operator-(GradedVector a, const GradedVector& b) { return a -= b; }
  friend GradedVector operator*(double s, GradedVector a) { return a *= s; }

 private:
  GradedSpace space_;
  std::vector<double> coords_;
};

class BracketTable {
 public:
  BracketTable(GradedSpace space, int arity);

  int arity() const noexcept { return arity_; }
  const GradedSpace& space() const noexcept { return space_; }
  std::size_t size() const noexcept { return coefs_.size(); }

  /// Adds `coef` to the entry (duplicates are merged by normalize()); enforces the output-degree law
  /// |out| = sum |in| + arity - 2.
  void add(std::span<const std::size_t> inputs, std::size_t output, double coef);
  /// Overwrites an entry (zero removes it).
  void set(std::span<const std::size_t> inputs, std::size_t output, double coef);
  double get(std::span<const std::size_t> inputs, std::size_t output) const;

  std::span<const std::uint32_t> term_inputs(std::size_t term) const noexcept {
    return {inputs_.data() + term * static_cast<std::size_t>(arity_), static_cast<std::size_t>(arity_)};
  }
  std::size_t term_output(std::size_t term) const noexcept { return outputs_[term]; }
  double term_coef(std::size_t term) const noexcept { return coefs_[term]; }

  /// Sorts terms canonically, merges duplicates and drops zeros.
  void normalize();

  /// Accumulates b(args...) into `out`; args[j] is a flat coordinate view of slot j.
  void apply(std::span<const std::span<const double>> args, std::span<double> out) const;

 private:
  void check_indices(std::span<const std::size_t> inputs, std::size_t output) const;
  std::optional<std::size_t> find(std::span<const std::size_t> inputs, std::size_t output) const;

  GradedSpace space_;
  int arity_;
  std::vector<std::uint32_t> inputs_;
  std::vector<std::uint32_t> outputs_;
  std::vector<double> coefs_;
};

class LInfinityAlgebra {
 public:
  LInfinityAlgebra(std::string label, GradedSpace space, std::vector<BracketTable> brackets);

  const std::string& label() const noexcept { return label_; }
  const GradedSpace& space() const noexcept { return space_; }
  /// Highest arity with a table, 0 when there are no brackets.
  int max_arity() const noexcept;
  /// nullptr when the bracket of this arity vanishes identically.
  const BracketTable* bracket(int arity) const noexcept;
  const std::vector<BracketTable>& brackets() const noexcept { return brackets_; }

 private:
  std::string label_;
  GradedSpace space_;
  std::vector<BracketTable> brackets_;
};

/// Xi(sigma) for the graded skew-symmetric convention, where the reordered
/// sequence is (l_{p[0]}, ..., l_{p[k-1]}) and degrees[i] = |l_i|. Every adjacent
/// transposition of x, y contributes -(-1)^{|x||y|}.
int koszul_sign(std::span<const std::size_t> permutation, std::span<const int> degrees);

struct BraidResult {
  GradedVector first;
  GradedVector second;
  int sign = 1;
};

/// v (x) w -> sign * w (x) v with sign = (-1)^{|v||w|}.
BraidResult braid_swap(const GradedVector& v, const GradedVector& w);

GradedVector eval_bracket(const LInfinityAlgebra& alg, int arity, std::span<const GradedVector> args);

struct CheckReport {
  double max_residual = 0.0;
  bool passed = true;
  int trials = 0;
  /// Degrees of the tuple that produced `max_residual`.
  std::vector<int> worst_degrees;
};

CheckReport check_skew(const LInfinityAlgebra& alg, int arity, int trials, double tol, std::uint64_t seed = 0);

/// Evaluates the k-th higher Jacobi sum
///   sum_{m+n=k+1} sum_{unshuffles} Xi(sigma) (-1)^{m(n-1)} b_n(b_m(l_S), l_rest)
/// on random homogeneous k-tuples.
CheckReport check_jacobi(const LInfinityAlgebra& alg, int k, int trials, double tol, std::uint64_t seed = 0);

/// The Jacobi sum for one explicit tuple (exposed for diagnostics and tests).
GradedVector jacobi_sum(const LInfinityAlgebra& alg, std::span<const GradedVector> args);

std::string algebra_to_json(const LInfinityAlgebra& alg);
LInfinityAlgebra algebra_from_json(std::string_view text);

}  // namespace hgfm::algebra
