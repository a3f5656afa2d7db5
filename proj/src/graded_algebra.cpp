#include "hgfm/graded_algebra.hpp"

#include "hgfm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace hgfm::algebra {

// ---------------------------------------------------------------------------
// GradedSpace

GradedSpace::GradedSpace(std::vector<std::pair<int, std::size_t>> dims) {
  std::sort(dims.begin(), dims.end());
  for (std::size_t i = 1; i < dims.size(); ++i) {
    require(dims[i].first != dims[i - 1].first, ErrorCode::invalid_argument,
            "graded space: duplicate degree " + std::to_string(dims[i].first));
  }
  for (const auto& [deg, dim] : dims) {
    blocks_.push_back({deg, dim, total_});
    total_ += dim;
  }
}

std::size_t GradedSpace::dim(int degree) const noexcept {
  for (const auto& b : blocks_)
    if (b.degree == degree) return b.dim;
  return 0;
}

bool GradedSpace::has_degree(int degree) const noexcept {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const Block& b) { return b.degree == degree; });
}

std::size_t GradedSpace::offset(int degree) const {
  for (const auto& b : blocks_)
    if (b.degree == degree) return b.offset;
  fail(ErrorCode::invalid_argument, "graded space: no degree " + std::to_string(degree));
}

int GradedSpace::degree_of(std::size_t flat_index) const {
  for (const auto& b : blocks_)
    if (flat_index >= b.offset && flat_index < b.offset + b.dim) return b.degree;
  fail(ErrorCode::invalid_argument, "graded space: flat index " + std::to_string(flat_index) + " out of range");
}

std::size_t GradedSpace::flat_index(int degree, std::size_t index) const {
  require(index < dim(degree), ErrorCode::invalid_argument,
          "graded space: basis index " + std::to_string(index) + " out of range for degree " + std::to_string(degree));
  return offset(degree) + index;
}

// ---------------------------------------------------------------------------
// GradedVector

GradedVector::GradedVector(GradedSpace space) : space_(std::move(space)), coords_(space_.total_dim(), 0.0) {}

GradedVector::GradedVector(GradedSpace space, std::vector<double> coords)
    : space_(std::move(space)), coords_(std::move(coords)) {
  require(coords_.size() == space_.total_dim(), ErrorCode::dimension_mismatch,
          "graded vector: " + std::to_string(coords_.size()) + " coordinates for a space of dimension " +
              std::to_string(space_.total_dim()));
}

GradedVector GradedVector::basis(const GradedSpace& space, int degree, std::size_t index) {
  GradedVector v(space);
  v.coords_[space.flat_index(degree, index)] = 1.0;
  return v;
}

GradedVector GradedVector::homogeneous(const GradedSpace& space, int degree, std::span<const double> coords) {
  require(coords.size() == space.dim(degree), ErrorCode::dimension_mismatch,
          "graded vector: component length does not match degree " + std::to_string(degree));
  GradedVector v(space);
  std::copy(coords.begin(), coords.end(), v.coords_.begin() + static_cast<std::ptrdiff_t>(space.offset(degree)));
  return v;
}

std::span<const double> GradedVector::component(int degree) const {
  return std::span<const double>(coords_).subspan(space_.offset(degree), space_.dim(degree));
}

std::span<double> GradedVector::component(int degree) {
  return std::span<double>(coords_).subspan(space_.offset(degree), space_.dim(degree));
}

bool GradedVector::is_zero() const noexcept {
  return std::all_of(coords_.begin(), coords_.end(), [](double c) { return c == 0.0; });
}

std::optional<int> GradedVector::degree() const noexcept {
  std::optional<int> found;
  for (const auto& b : space_.blocks()) {
    const auto first = coords_.begin() + static_cast<std::ptrdiff_t>(b.offset);
    if (std::any_of(first, first + static_cast<std::ptrdiff_t>(b.dim), [](double c) { return c != 0.0; })) {
      if (found) return std::nullopt;
      found = b.degree;
    }
  }
  return found;
}

bool GradedVector::is_homogeneous() const noexcept { return is_zero() || degree().has_value(); }

double GradedVector::max_abs() const noexcept {
  double m = 0.0;
  for (double c : coords_) m = std::max(m, std::abs(c));
  return m;
}

GradedVector& GradedVector::operator+=(const GradedVector& other) {
  require(space_ == other.space_, ErrorCode::dimension_mismatch, "graded vector: adding vectors of different spaces");
  for (std::size_t i = 0; i < coords_.size(); ++i) coords_[i] += other.coords_[i];
  return *this;
}

GradedVector& GradedVector::operator-=(const GradedVector& other) {
  require(space_ == other.space_, ErrorCode::dimension_mismatch,
          "graded vector: subtracting vectors of different spaces");
  for (std::size_t i = 0; i < coords_.size(); ++i) coords_[i] -= other.coords_[i];
  return *this;
}

GradedVector& GradedVector::operator*=(double s) noexcept {
  for (double& c : coords_) c *= s;
  return *this;
}

// ---------------------------------------------------------------------------
// BracketTable

BracketTable::BracketTable(GradedSpace space, int arity) : space_(std::move(space)), arity_(arity) {
  require(arity >= 1, ErrorCode::invalid_argument, "bracket table: arity must be >= 1");
}

void BracketTable::check_indices(std::span<const std::size_t> inputs, std::size_t output) const {
  require(inputs.size() == static_cast<std::size_t>(arity_), ErrorCode::invalid_argument,
          "bracket table: expected " + std::to_string(arity_) + " inputs");
  int in_degree = 0;
  for (std::size_t i : inputs) in_degree += space_.degree_of(i);
  const int out_degree = space_.degree_of(output);
  require(out_degree == in_degree + arity_ - 2, ErrorCode::invalid_argument,
          "bracket table: output degree " + std::to_string(out_degree) + " violates degree law (expected " +
              std::to_string(in_degree + arity_ - 2) + ")");
}

void BracketTable::add(std::span<const std::size_t> inputs, std::size_t output, double coef) {
  check_indices(inputs, output);
  if (coef == 0.0) return;
  for (std::size_t i : inputs) inputs_.push_back(static_cast<std::uint32_t>(i));
  outputs_.push_back(static_cast<std::uint32_t>(output));
  coefs_.push_back(coef);
}

void BracketTable::set(std::span<const std::size_t> inputs, std::size_t output, double coef) {
  check_indices(inputs, output);
  while (auto t = find(inputs, output)) {
    coefs_.erase(coefs_.begin() + static_cast<std::ptrdiff_t>(*t));
    outputs_.erase(outputs_.begin() + static_cast<std::ptrdiff_t>(*t));
    const auto first = inputs_.begin() + static_cast<std::ptrdiff_t>(*t * static_cast<std::size_t>(arity_));
    inputs_.erase(first, first + arity_);
  }
  add(inputs, output, coef);
}

double BracketTable::get(std::span<const std::size_t> inputs, std::size_t output) const {
  double sum = 0.0;
  for (std::size_t t = 0; t < coefs_.size(); ++t) {
    auto in = term_inputs(t);
    if (outputs_[t] == output && std::equal(in.begin(), in.end(), inputs.begin(), inputs.end())) sum += coefs_[t];
  }
  return sum;
}

std::optional<std::size_t> BracketTable::find(std::span<const std::size_t> inputs, std::size_t output) const {
  for (std::size_t t = 0; t < coefs_.size(); ++t) {
    if (outputs_[t] != output) continue;
    auto in = term_inputs(t);
    if (std::equal(in.begin(), in.end(), inputs.begin(), inputs.end())) return t;
  }
  return std::nullopt;
}

void BracketTable::normalize() {
  std::vector<std::size_t> order(coefs_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ia = term_inputs(a), ib = term_inputs(b);
    if (!std::equal(ia.begin(), ia.end(), ib.begin()))
      return std::lexicographical_compare(ia.begin(), ia.end(), ib.begin(), ib.end());
    return outputs_[a] < outputs_[b];
  });
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> outputs;
  std::vector<double> coefs;
  auto same = [&](std::size_t a, std::size_t b) {
    auto ia = term_inputs(a), ib = term_inputs(b);
    return outputs_[a] == outputs_[b] && std::equal(ia.begin(), ia.end(), ib.begin());
  };
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double coef = 0.0;
    for (; j < order.size() && same(order[i], order[j]); ++j) coef += coefs_[order[j]];
    if (coef != 0.0) {
      auto in = term_inputs(order[i]);
      inputs.insert(inputs.end(), in.begin(), in.end());
      outputs.push_back(outputs_[order[i]]);
      coefs.push_back(coef);
    }
    i = j;
  }
  inputs_ = std::move(inputs);
  outputs_ = std::move(outputs);
  coefs_ = std::move(coefs);
}

void BracketTable::apply(std::span<const std::span<const double>> args, std::span<double> out) const {
  const auto m = static_cast<std::size_t>(arity_);
  for (std::size_t t = 0; t < coefs_.size(); ++t) {
    const std::uint32_t* in = inputs_.data() + t * m;
    double prod = coefs_[t];
    for (std::size_t j = 0; j < m && prod != 0.0; ++j) prod *= args[j][in[j]];
    if (prod != 0.0) out[outputs_[t]] += prod;
  }
}

// ---------------------------------------------------------------------------
// LInfinityAlgebra

LInfinityAlgebra::LInfinityAlgebra(std::string label, GradedSpace space, std::vector<BracketTable> brackets)
    : label_(std::move(label)), space_(std::move(space)), brackets_(std::move(brackets)) {
  std::sort(brackets_.begin(), brackets_.end(),
            [](const BracketTable& a, const BracketTable& b) { return a.arity() < b.arity(); });
  for (std::size_t i = 0; i < brackets_.size(); ++i) {
    require(brackets_[i].space() == space_, ErrorCode::invalid_argument,
            "algebra: bracket table built over a different graded space");
    require(i == 0 || brackets_[i].arity() != brackets_[i - 1].arity(), ErrorCode::invalid_argument,
            "algebra: duplicate bracket arity " + std::to_string(brackets_[i].arity()));
    brackets_[i].normalize();
  }
}

int LInfinityAlgebra::max_arity() const noexcept { return brackets_.empty() ? 0 : brackets_.back().arity(); }

const BracketTable* LInfinityAlgebra::bracket(int arity) const noexcept {
  for (const auto& b : brackets_)
    if (b.arity() == arity) return &b;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Signs

namespace {

void validate_permutation(std::span<const std::size_t> perm, std::size_t k) {
  require(perm.size() == k, ErrorCode::invalid_argument, "koszul sign: permutation and degree lengths differ");
  std::vector<bool> seen(k, false);
  for (std::size_t p : perm) {
    require(p < k && !seen[p], ErrorCode::invalid_argument, "koszul sign: permutation is not a bijection");
    seen[p] = true;
  }
}

}  // namespace

int koszul_sign(std::span<const std::size_t> permutation, std::span<const int> degrees) {
  validate_permutation(permutation, degrees.size());
  // Each inverted pair is swapped exactly once by any adjacent-transposition
  // decomposition, so the sign is a product over inversions.
  int sign = 1;
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    for (std::size_t j = i + 1; j < permutation.size(); ++j) {
      if (permutation[i] > permutation[j]) {
        const int both_odd = (degrees[permutation[i]] * degrees[permutation[j]]) & 1;
        sign *= both_odd ? 1 : -1;
      }
    }
  }
  return sign;
}

BraidResult braid_swap(const GradedVector& v, const GradedVector& w) {
  require(v.is_homogeneous() && w.is_homogeneous(), ErrorCode::invalid_argument,
          "braid swap: inputs must be homogeneous");
  const int dv = v.degree().value_or(0);
  const int dw = w.degree().value_or(0);
  return {w, v, ((dv * dw) & 1) ? -1 : 1};
}

// ---------------------------------------------------------------------------
// Evaluation

GradedVector eval_bracket(const LInfinityAlgebra& alg, int arity, std::span<const GradedVector> args) {
  require(arity >= 1, ErrorCode::invalid_argument, "eval bracket: arity must be >= 1");
  require(arity <= alg.max_arity(), ErrorCode::invalid_argument,
          "eval bracket: arity " + std::to_string(arity) + " exceeds the highest bracket " +
              std::to_string(alg.max_arity()));
  require(args.size() == static_cast<std::size_t>(arity), ErrorCode::invalid_argument,
          "eval bracket: expected " + std::to_string(arity) + " arguments, got " + std::to_string(args.size()));
  for (const auto& a : args) {
    require(a.space() == alg.space(), ErrorCode::dimension_mismatch, "eval bracket: argument space mismatch");
  }
  GradedVector out(alg.space());
  const BracketTable* table = alg.bracket(arity);
  if (table == nullptr) return out;
  std::vector<std::span<const double>> views;
  views.reserve(args.size());
  for (const auto& a : args) views.push_back(a.coords());
  table->apply(views, out.coords());
  return out;
}

namespace {

std::vector<int> random_degrees(const GradedSpace& space, std::size_t k, std::mt19937_64& rng) {
  std::vector<int> usable;
  for (const auto& b : space.blocks())
    if (b.dim > 0) usable.push_back(b.degree);
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
  std::vector<int> out(k);
  for (auto& d : out) d = usable[pick(rng)];
  return out;
}

GradedVector random_homogeneous(const GradedSpace& space, int degree, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::vector<double> c(space.dim(degree));
  for (double& x : c) x = coord(rng);
  return GradedVector::homogeneous(space, degree, c);
}

}  // namespace

CheckReport check_skew(const LInfinityAlgebra& alg, int arity, int trials, double tol, std::uint64_t seed) {
  require(trials >= 1, ErrorCode::invalid_argument, "check skew: trials must be >= 1");
  require(arity >= 1, ErrorCode::invalid_argument, "check skew: arity must be >= 1");
  CheckReport report;
  report.trials = trials;
  // A vanishing bracket is trivially skew-symmetric.
  if (alg.bracket(arity) == nullptr) return report;
  std::mt19937_64 rng(seed);
  const auto k = static_cast<std::size_t>(arity);
  for (int trial = 0; trial < trials; ++trial) {
    const auto degrees = random_degrees(alg.space(), k, rng);
    std::vector<GradedVector> args;
    for (int d : degrees) args.push_back(random_homogeneous(alg.space(), d, rng));
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<GradedVector> permuted;
    for (std::size_t p : perm) permuted.push_back(args[p]);
    GradedVector diff = eval_bracket(alg, arity, args);
    diff -= static_cast<double>(koszul_sign(perm, degrees)) * eval_bracket(alg, arity, permuted);
    const double r = diff.max_abs();
    if (r > report.max_residual || report.worst_degrees.empty()) {
      report.max_residual = std::max(report.max_residual, r);
      report.worst_degrees = degrees;
    }
  }
  report.passed = report.max_residual <= tol;
  return report;
}

GradedVector jacobi_sum(const LInfinityAlgebra& alg, std::span<const GradedVector> args) {
  const std::size_t k = args.size();
  require(k >= 1, ErrorCode::invalid_argument, "jacobi: k must be >= 1");
  std::vector<int> degrees;
  for (const auto& a : args) {
    require(a.is_homogeneous(), ErrorCode::invalid_argument, "jacobi: arguments must be homogeneous");
    degrees.push_back(a.degree().value_or(0));
  }
  GradedVector total(alg.space());
  for (std::size_t m = 1; m <= k; ++m) {
    const std::size_t n = k + 1 - m;
    if (alg.bracket(static_cast<int>(m)) == nullptr || alg.bracket(static_cast<int>(n)) == nullptr) continue;
    const int prefactor = ((m * (n - 1)) & 1) ? -1 : 1;
    // Unshuffles: choose the first m positions as an increasing subset.
    std::vector<bool> chosen(k, false);
    std::fill(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(m), true);
    do {
      std::vector<std::size_t> perm;
      for (std::size_t i = 0; i < k; ++i)
        if (chosen[i]) perm.push_back(i);
      for (std::size_t i = 0; i < k; ++i)
        if (!chosen[i]) perm.push_back(i);

      std::vector<GradedVector> inner_args;
      for (std::size_t i = 0; i < m; ++i) inner_args.push_back(args[perm[i]]);
      std::vector<GradedVector> outer_args{eval_bracket(alg, static_cast<int>(m), inner_args)};
      for (std::size_t i = m; i < k; ++i) outer_args.push_back(args[perm[i]]);

      const double sign = static_cast<double>(koszul_sign(perm, degrees) * prefactor);
      total += sign * eval_bracket(alg, static_cast<int>(n), outer_args);
    } while (std::prev_permutation(chosen.begin(), chosen.end()));
  }
  return total;
}

CheckReport check_jacobi(const LInfinityAlgebra& alg, int k, int trials, double tol, std::uint64_t seed) {
  require(k >= 1, ErrorCode::invalid_argument, "check jacobi: k must be >= 1");
  require(trials >= 1, ErrorCode::invalid_argument, "check jacobi: trials must be >= 1");
  CheckReport report;
  report.trials = trials;
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const auto degrees = random_degrees(alg.space(), static_cast<std::size_t>(k), rng);
    std::vector<GradedVector> args;
    for (int d : degrees) args.push_back(random_homogeneous(alg.space(), d, rng));
    const double r = jacobi_sum(alg, args).max_abs();
    if (r > report.max_residual || report.worst_degrees.empty()) {
      report.max_residual = std::max(report.max_residual, r);
      report.worst_degrees = degrees;
    }
  }
  report.passed = report.max_residual <= tol;
  return report;
}

// ---------------------------------------------------------------------------
// JSON

namespace {
constexpr const char* kAlgebraFormat = "hgfm.linf-algebra";
constexpr int kAlgebraVersion = 1;
}  // namespace

std::string algebra_to_json(const LInfinityAlgebra& alg) {
  using nlohmann::json;
  const auto& space = alg.space();
  auto local = [&](std::size_t flat) {
    const int d = space.degree_of(flat);
    return json::array({d, flat - space.offset(d)});
  };
  json doc;
  doc["format"] = kAlgebraFormat;
  doc["version"] = kAlgebraVersion;
  doc["label"] = alg.label();
  doc["dims"] = json::array();
  for (const auto& b : space.blocks()) doc["dims"].push_back({{"degree", b.degree}, {"dim", b.dim}});
  doc["brackets"] = json::array();
  for (const auto& table : alg.brackets()) {
    json entries = json::array();
    for (std::size_t t = 0; t < table.size(); ++t) {
      json in = json::array();
      for (auto i : table.term_inputs(t)) in.push_back(local(i));
      entries.push_back({{"in", in}, {"out", local(table.term_output(t))}, {"coef", table.term_coef(t)}});
    }
    doc["brackets"].push_back({{"arity", table.arity()}, {"entries", entries}});
  }
  return doc.dump(1);
}

LInfinityAlgebra algebra_from_json(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::format, std::string("algebra json: ") + e.what());
  }
  try {
    require(doc.at("format").get<std::string>() == kAlgebraFormat, ErrorCode::format, "algebra json: wrong format tag");
    require(doc.at("version").get<int>() == kAlgebraVersion, ErrorCode::format, "algebra json: unsupported version");
    std::vector<std::pair<int, std::size_t>> dims;
    for (const auto& d : doc.at("dims")) dims.emplace_back(d.at("degree").get<int>(), d.at("dim").get<std::size_t>());
    GradedSpace space(dims);
    std::vector<BracketTable> tables;
    for (const auto& b : doc.at("brackets")) {
      BracketTable table(space, b.at("arity").get<int>());
      for (const auto& e : b.at("entries")) {
        std::vector<std::size_t> in;
        for (const auto& slot : e.at("in")) in.push_back(space.flat_index(slot.at(0).get<int>(), slot.at(1).get<std::size_t>()));
        const auto& out = e.at("out");
        table.add(in, space.flat_index(out.at(0).get<int>(), out.at(1).get<std::size_t>()), e.at("coef").get<double>());
      }
      tables.push_back(std::move(table));
    }
    return LInfinityAlgebra(doc.at("label").get<std::string>(), std::move(space), std::move(tables));
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("algebra json: ") + e.what());
  }
}

}  // namespace hgfm::algebra
