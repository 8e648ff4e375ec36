#ifndef INDEXLAB_RESOLVENT_CALCULUS_HPP
#define INDEXLAB_RESOLVENT_CALCULUS_HPP

// Multi-index calculus for derivatives of resolvent powers of
// Delta + alpha(z) + lambda with alpha(z) = z T1 + z^2 T0, and the
// diagnostics built on it.

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "block_tridiagonal.hpp"
#include "coverage.hpp"
#include "model.hpp"
#include "operator.hpp"
#include "quadrature.hpp"

namespace indexlab {

/// K = (k_1, ..., k_j) with every k_i >= 1; j = 0 is the empty index.
class MultiIndex {
public:
  MultiIndex() = default;
  MultiIndex(std::initializer_list<int> entries) : MultiIndex(std::vector<int>(entries)) {}
  explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {
    for (int k : entries_)
      if (k < 1) throw ParameterError("multi-index entries must be >= 1");
  }

  const std::vector<int>& entries() const noexcept { return entries_; }
  std::size_t length() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  int degree() const noexcept {
    int d = 0;
    for (int k : entries_) d += k;
    return d;
  }
  int operator[](std::size_t i) const { return entries_[i]; }

  auto operator<=>(const MultiIndex&) const = default;

  std::string to_string() const {
    std::string out = "(";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(entries_[i]);
    }
    return out + ")";
  }

private:
  std::vector<int> entries_;
};

/// Integer combination of multi-indices; zero coefficients are never stored.
class IndexCombination {
public:
  using Terms = std::map<MultiIndex, std::int64_t>;

  IndexCombination() = default;
  static IndexCombination basis(MultiIndex k, std::int64_t coefficient = 1) {
    IndexCombination c;
    c.add(std::move(k), coefficient);
    return c;
  }

  void add(const MultiIndex& k, std::int64_t coefficient) {
    if (coefficient == 0) return;
    auto [it, inserted] = terms_.try_emplace(k, coefficient);
    if (!inserted) {
      it->second += coefficient;
      if (it->second == 0) terms_.erase(it);
    }
  }

  const Terms& terms() const noexcept { return terms_; }
  std::size_t size() const noexcept { return terms_.size(); }
  bool is_zero() const noexcept { return terms_.empty(); }

  std::int64_t coefficient(const MultiIndex& k) const {
    auto it = terms_.find(k);
    return it == terms_.end() ? 0 : it->second;
  }

  /// Sum of |coefficients|.
  std::int64_t mass() const {
    std::int64_t m = 0;
    for (const auto& [k, c] : terms_) m += c < 0 ? -c : c;
    return m;
  }

  IndexCombination operator+(const IndexCombination& o) const {
    IndexCombination out = *this;
    for (const auto& [k, c] : o.terms_) out.add(k, c);
    return out;
  }

  bool operator==(const IndexCombination&) const = default;

  std::string to_string() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (const auto& [k, c] : terms_) {
      if (!out.empty()) out += " + ";
      if (c != 1) out += std::to_string(c) + "*";
      out += "d" + k.to_string();
    }
    return out;
  }

private:
  Terms terms_;
};

/// s: inserts a 1 at each of the j+1 slots.
inline IndexCombination apply_s(const IndexCombination& theta) {
  coverage::touch(coverage::Op::apply_s);
  IndexCombination out;
  for (const auto& [k, c] : theta.terms()) {
    const auto& e = k.entries();
    for (std::size_t slot = 0; slot <= e.size(); ++slot) {
      std::vector<int> next;
      next.reserve(e.size() + 1);
      next.insert(next.end(), e.begin(), e.begin() + static_cast<std::ptrdiff_t>(slot));
      next.push_back(1);
      next.insert(next.end(), e.begin() + static_cast<std::ptrdiff_t>(slot), e.end());
      out.add(MultiIndex(std::move(next)), c);
    }
  }
  return out;
}

/// e: increments each entry in turn; e(empty) = 0.
inline IndexCombination apply_e(const IndexCombination& theta) {
  coverage::touch(coverage::Op::apply_e);
  IndexCombination out;
  for (const auto& [k, c] : theta.terms()) {
    for (std::size_t i = 0; i < k.length(); ++i) {
      std::vector<int> next = k.entries();
      ++next[i];
      out.add(MultiIndex(std::move(next)), c);
    }
  }
  return out;
}

inline constexpr int default_derivative_cap = 12;

/// (s + e)^l applied to the empty index.
inline IndexCombination derivative_combination(int l, int cap = default_derivative_cap) {
  coverage::touch(coverage::Op::derivative_combination);
  if (l < 0) throw ParameterError("derivative_combination: l must be nonnegative");
  if (l > cap)
    throw ResourceError("derivative_combination: level " + std::to_string(l) + " exceeds cap " +
                        std::to_string(cap));
  IndexCombination theta = IndexCombination::basis(MultiIndex{});
  for (int i = 0; i < l; ++i) theta = apply_s(theta) + apply_e(theta);
  return theta;
}

/// Number of compositions of `total` into `parts` positive parts.
inline std::uint64_t composition_count(int total, int parts) {
  if (parts <= 0) return total == 0 ? 1 : 0;
  if (total < parts) return 0;
  // C(total - 1, parts - 1)
  std::uint64_t c = 1;
  const int n = total - 1;
  const int k = std::min(parts - 1, n - (parts - 1));
  for (int i = 1; i <= k; ++i) c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return c;
}

/// Streams the compositions of `total` into `parts` positive parts in
/// lexicographic order; returns how many were visited.
template <typename F>
std::uint64_t for_each_composition(int total, int parts, F&& visit) {
  if (parts <= 0 || total < parts) return 0;
  std::vector<int> m(static_cast<std::size_t>(parts), 1);
  m.back() = total - parts + 1;
  std::uint64_t count = 0;
  while (true) {
    visit(static_cast<const std::vector<int>&>(m));
    ++count;
    // rightmost slot j whose suffix can give up one unit
    int suffix = m.back();
    int j = parts - 2;
    while (j >= 0 && suffix <= parts - 1 - j) {
      suffix += m[static_cast<std::size_t>(j)];
      --j;
    }
    if (j < 0) return count;
    ++m[static_cast<std::size_t>(j)];
    for (int q = j + 1; q < parts - 1; ++q) m[static_cast<std::size_t>(q)] = 1;
    m.back() = suffix - 1 - (parts - 2 - j);
  }
}

namespace detail {

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

// (-1)^j * sum over compositions M of m+1+j into j+1 parts of
//   P^{m_1} y_1 P^{m_2} ... y_j P^{m_{j+1}},  powers[k] = P^k.
inline Matrix bracket_sum(const std::vector<Matrix>& powers, const std::vector<const Matrix*>& ys,
                          int m, std::uint64_t* visited = nullptr) {
  const int j = static_cast<int>(ys.size());
  const Index n = powers[1].rows();
  Matrix acc = Matrix::Zero(n, n);
  const std::uint64_t count =
      for_each_composition(m + 1 + j, j + 1, [&](const std::vector<int>& parts) {
        Matrix term = powers[static_cast<std::size_t>(parts[0])];
        for (int i = 0; i < j; ++i)
          term = (term * *ys[static_cast<std::size_t>(i)]) *
                 powers[static_cast<std::size_t>(parts[static_cast<std::size_t>(i + 1)])];
        acc += term;
      });
  if (visited) *visited = count;
  if (j % 2 == 1) acc = -acc;
  return acc;
}

inline std::vector<Matrix> power_table(const Matrix& p, int top) {
  std::vector<Matrix> powers(static_cast<std::size_t>(top + 1));
  powers[0] = Matrix::Identity(p.rows(), p.cols());
  for (int k = 1; k <= top; ++k) powers[static_cast<std::size_t>(k)] = powers[static_cast<std::size_t>(k - 1)] * p;
  return powers;
}

inline std::vector<Complex> circle_points(double radius, int count) {
  std::vector<Complex> z(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k)
    z[static_cast<std::size_t>(k)] = std::polar(radius, 2.0 * std::numbers::pi * k / count);
  return z;
}

} // namespace detail

/// z -> Delta + alpha(z) + lambda with alpha(z) = z T1 + z^2 T0. Construction
/// checks ||alpha(z) (Delta + lambda)^{-1}|| < 1 on 64 points of |z| = 2.
class QuadraticFamily {
public:
  QuadraticFamily(HermitianOperator laplacian, Matrix t1, Matrix t0, double lambda)
      : laplacian_(std::move(laplacian)), t1_(std::move(t1)), t0_(std::move(t0)), lambda_(lambda) {
    const Index n = laplacian_.dim();
    if (t1_.rows() != n || t1_.cols() != n || t0_.rows() != n || t0_.cols() != n)
      throw DimensionError("quadratic family: coefficient dimension mismatch");
    if (!(lambda_ > 0.0)) throw ParameterError("quadratic family: lambda must be positive");
    require_psd(laplacian_, "quadratic family");
    const double ratio = guard_ratio();
    if (!(ratio < 1.0)) {
      std::ostringstream msg;
      msg << "quadratic family: sup ||alpha(z)(Delta+lambda)^-1|| on |z|=2 is " << ratio
          << " >= 1 at lambda=" << lambda_;
      throw GuardError(msg.str());
    }
  }

  const HermitianOperator& laplacian() const noexcept { return laplacian_; }
  const Matrix& t1() const noexcept { return t1_; }
  const Matrix& t0() const noexcept { return t0_; }
  double lambda() const noexcept { return lambda_; }
  Index dim() const noexcept { return laplacian_.dim(); }

  QuadraticFamily with_lambda(double lambda) const { return {laplacian_, t1_, t0_, lambda}; }

  Matrix alpha(Complex z) const { return z * t1_ + (z * z) * t0_; }

  /// k-th z-derivative of alpha; zero for k >= 3.
  Matrix alpha_derivative(int k, Complex z) const {
    switch (k) {
      case 0: return alpha(z);
      case 1: return t1_ + (2.0 * z) * t0_;
      case 2: return 2.0 * t0_;
      default: return Matrix::Zero(dim(), dim());
    }
  }

  /// (Delta + alpha(z) + lambda)^{-1}.
  Matrix resolvent(Complex z) const {
    const Index n = dim();
    Matrix shifted = laplacian_.matrix() + alpha(z) + lambda_ * Matrix::Identity(n, n);
    Eigen::PartialPivLU<Matrix> lu(shifted);
    Matrix inv = lu.inverse();
    // rcond is blind to a tiny 1x1 pivot, so also compare against the size of the summands
    const double scale = laplacian_.matrix().cwiseAbs().rowwise().sum().maxCoeff() + std::abs(lambda_) +
                         alpha(z).cwiseAbs().rowwise().sum().maxCoeff();
    const double growth = inv.cwiseAbs().rowwise().sum().maxCoeff() * scale;
    if (!(lu.rcond() > 1e-14) || !(growth < 1e14)) {
      std::ostringstream msg;
      msg << "resolvent is numerically singular at z=" << z << " (rcond " << lu.rcond() << ")";
      throw GuardError(msg.str());
    }
    return inv;
  }

  double guard_ratio() const {
    const Index n = dim();
    const Matrix base =
        (laplacian_.matrix() + lambda_ * Matrix::Identity(n, n)).partialPivLu().inverse();
    double worst = 0.0;
    for (Complex z : detail::circle_points(2.0, 64)) worst = std::max(worst, operator_norm(alpha(z) * base));
    return worst;
  }

  /// sup over 64 points of |z| = 2 of ||alpha(z) (Delta + 1)^{-1/2}||.
  double relative_bound() const {
    const Matrix root = fractional_resolvent_power(laplacian_, 1.0, 0.5).matrix();
    double worst = 0.0;
    for (Complex z : detail::circle_points(2.0, 64)) worst = std::max(worst, operator_norm(alpha(z) * root));
    return worst;
  }

private:
  HermitianOperator laplacian_;
  Matrix t1_;
  Matrix t0_;
  double lambda_;
};

/// <R^{m+1}; delta_K>(z). Entries >= 3 give the zero matrix.
inline Matrix bracket_eval(const QuadraticFamily& fam, int m, const MultiIndex& k, Complex z,
                           std::uint64_t* compositions = nullptr) {
  coverage::touch(coverage::Op::bracket_eval);
  if (m < 0) throw ParameterError("bracket_eval: m must be nonnegative");
  if (compositions) *compositions = 0;
  for (int entry : k.entries())
    if (entry >= 3) return Matrix::Zero(fam.dim(), fam.dim());
  const auto powers = detail::power_table(fam.resolvent(z), m + 1);
  std::vector<Matrix> derivs;
  derivs.reserve(k.length());
  for (int entry : k.entries()) derivs.push_back(fam.alpha_derivative(entry, z));
  std::vector<const Matrix*> ys;
  for (const auto& d : derivs) ys.push_back(&d);
  return detail::bracket_sum(powers, ys, m, compositions);
}

/// d^l/dz^l R^{m+1} = <R^{m+1}; (s+e)^l(empty)>.
inline Matrix resolvent_derivative(const QuadraticFamily& fam, int m, int l, Complex z,
                                   int cap = default_derivative_cap) {
  coverage::touch(coverage::Op::resolvent_derivative);
  const auto theta = derivative_combination(l, cap);
  Matrix acc = Matrix::Zero(fam.dim(), fam.dim());
  for (const auto& [k, c] : theta.terms()) {
    bool vanishes = false;
    for (int entry : k.entries()) vanishes = vanishes || entry >= 3;
    if (vanishes) continue;
    acc += static_cast<double>(c) * bracket_eval(fam, m, k, z);
  }
  return acc;
}

/// Dense family Delta_hat + z h(D2 A + A D2) + z^2 h^2 A^2 together with F.
struct ModelFamily {
  QuadraticFamily family;
  Matrix f;
};

inline ModelFamily model_quadratic_family(const ModelSpec& spec, const LineDiscretization& disc,
                                          double lambda, Index dense_cap = 3000) {
  detail::check_tensor_cap(disc.n, spec.inner_dim, dense_cap);
  const auto inner = build_inner_pair(spec);
  const Matrix& d2 = inner.d2.matrix();
  const Matrix& a = inner.a.matrix();
  const RealVector h = profile_on_grid(spec, disc);
  const Matrix t1 = KronDiagonal{h, detail::anticommutator(d2, a)}.to_dense();
  const Matrix t0 = KronDiagonal{h.cwiseProduct(h), detail::hermitize(a * a)}.to_dense();
  HermitianOperator lap(dense_tensor_laplacian(spec, disc, dense_cap));
  return {QuadraticFamily(std::move(lap), t1, t0, lambda), assemble_F(spec, disc).to_dense()};
}

struct PowerSeriesReport {
  std::vector<double> errors;  // trace-norm error of the partial sum through order L
  double lambda = 0.0;
  double required_lambda = 0.0;
};

/// Partial sums of F (Delta + alpha(1) + lambda)^{-m-1} expanded in z around 0.
inline PowerSeriesReport power_series_check(const QuadraticFamily& fam, const Matrix& f, int m,
                                            int terms) {
  coverage::touch(coverage::Op::power_series_check);
  if (m < 0) throw ParameterError("power_series_check: m must be nonnegative");
  if (terms < 0) throw ParameterError("power_series_check: terms must be nonnegative");
  if (f.cols() != fam.dim()) throw DimensionError("power_series_check: F dimension mismatch");
  const double bound = fam.relative_bound();
  const double required = bound * bound;
  if (!(fam.lambda() > required)) {
    std::ostringstream msg;
    msg << "power_series_check: lambda=" << fam.lambda() << " violates the guard; need lambda > "
        << required;
    throw ParameterError(msg.str());
  }
  const auto target_powers = detail::power_table(fam.resolvent(1.0), m + 1);
  const Matrix target = f * target_powers.back();
  PowerSeriesReport report;
  report.lambda = fam.lambda();
  report.required_lambda = required;
  Matrix partial = Matrix::Zero(f.rows(), fam.dim());
  double factorial = 1.0;
  for (int l = 0; l <= terms; ++l) {
    if (l > 0) factorial *= l;
    partial += (1.0 / factorial) * (f * resolvent_derivative(fam, m, l, 0.0, std::max(terms, default_derivative_cap)));
    report.errors.push_back(trace_norm(target - partial));
  }
  return report;
}

/// lambda_0 for the isolation diagnostics: (sup ||alpha(z)(Delta_hat+1)^{-1/2}|| + 1)^2,
/// with the sup bounded by the inner-space norms
///   sup over |z| = 2 and c in the range of h (and c = 1) of
///   ||(z c (D2 A + A D2) + z^2 c^2 A^2)(1 + D2^2)^{-1/2}||.
inline double isolation_lambda0(const ModelSpec& spec) {
  const auto inner = build_inner_pair(spec);
  const Matrix b1 = detail::anticommutator(inner.d2.matrix(), inner.a.matrix());
  const Matrix a2 = detail::hermitize(inner.a.matrix() * inner.a.matrix());
  const Matrix root = fractional_resolvent_power(inner.d2.squared(), 1.0, 0.5).matrix();
  const double lo = std::min(spec.profile.h_minus(), spec.profile.h_plus());
  const double hi = std::max(spec.profile.h_minus(), spec.profile.h_plus());
  std::vector<double> cs{1.0};
  for (int i = 0; i <= 32; ++i) cs.push_back(lo + (hi - lo) * i / 32.0);
  double worst = 0.0;
  for (Complex z : detail::circle_points(2.0, 64))
    for (double c : cs)
      worst = std::max(worst, operator_norm(((z * c) * b1 + (z * z * c * c) * a2) * root));
  return std::max(1.0, (worst + 1.0) * (worst + 1.0));
}

namespace detail {

// Linear combination of words in (Delta_hat + lambda0)^{-1}, (Delta_hat + 1)
// and block-diagonal multipliers, applied matrix-free on the tensor grid.
class WordSum {
public:
  enum class Kind { resolvent, weight, multiply };
  struct Factor {
    Kind kind;
    std::size_t multiplier = 0;
  };
  struct Word {
    double coefficient;
    std::vector<Factor> factors;  // product order, leftmost first
  };

  WordSum(BlockTridiagonal laplacian, double lambda0)
      : laplacian_(std::move(laplacian)), solver_(laplacian_, lambda0) {}

  std::size_t add_multiplier(KronDiagonal k) {
    multipliers_.push_back(std::move(k));
    return multipliers_.size() - 1;
  }
  void add_word(Word w) { words_.push_back(std::move(w)); }

  Index rows() const { return laplacian_.block_dim(); }
  Index cols() const { return laplacian_.blocks(); }

  Matrix apply(const Matrix& x) const { return evaluate(x, false); }
  Matrix apply_adjoint(const Matrix& x) const { return evaluate(x, true); }

private:
  Matrix apply_factor(const Factor& f, const Matrix& x) const {
    switch (f.kind) {
      case Kind::resolvent: return solver_.solve(x);
      case Kind::weight: return laplacian_.apply(x) + x;
      case Kind::multiply: return multipliers_[f.multiplier].apply(x);
    }
    return x;
  }

  // every factor is hermitian, so the adjoint of a word is the reversed word
  Matrix evaluate(const Matrix& x, bool adjoint) const {
    Matrix acc = Matrix::Zero(x.rows(), x.cols());
    for (const auto& w : words_) {
      Matrix v = x;
      if (adjoint)
        for (const auto& f : w.factors) v = apply_factor(f, v);
      else
        for (auto it = w.factors.rbegin(); it != w.factors.rend(); ++it) v = apply_factor(*it, v);
      acc += w.coefficient * v;
    }
    return acc;
  }

  BlockTridiagonal laplacian_;
  LineSolver solver_;
  std::vector<KronDiagonal> multipliers_;
  std::vector<Word> words_;
};

// Largest singular value of G by Lanczos on G^*G with full reorthogonalization.
template <typename Apply, typename ApplyAdjoint>
double lanczos_norm(const Apply& g, const ApplyAdjoint& g_adj, Index rows, Index cols, int steps,
                    std::uint64_t seed = 7) {
  const Index n = rows * cols;
  steps = static_cast<int>(std::min<Index>(steps, n));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix q(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) q(i, j) = Complex(normal(rng), normal(rng));
  q /= q.norm();
  std::vector<Matrix> basis;
  std::vector<double> alphas, betas;
  double previous = -1.0;
  for (int k = 0; k < steps; ++k) {
    basis.push_back(q);
    Matrix w = g_adj(g(q));
    const double a = std::real(q.conjugate().cwiseProduct(w).sum());
    alphas.push_back(a);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) w -= b.conjugate().cwiseProduct(w).sum() * b;
    const Index dim = static_cast<Index>(alphas.size());
    RealVector diag = Eigen::Map<RealVector>(alphas.data(), dim);
    RealVector sub = dim > 1 ? RealVector(Eigen::Map<RealVector>(betas.data(), dim - 1)) : RealVector(0);
    Eigen::SelfAdjointEigenSolver<RealMatrix> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    const double top = std::max(0.0, tri.eigenvalues()(dim - 1));
    const double beta = w.norm();
    if (beta <= 1e-14 * std::max(top, 1e-300) || k + 1 == steps ||
        (previous >= 0.0 && std::abs(top - previous) <= 1e-13 * top)) {
      return std::sqrt(top);
    }
    previous = top;
    betas.push_back(beta);
    q = w / beta;
  }
  return 0.0;
}

} // namespace detail

struct IsolationOptions {
  int lanczos_steps = 80;
  Index tensor_cap = default_tensor_cap;
};

/// ||(Delta_hat+1)^{m+1} (d^l R^{m+1}(eps)|_0 - h_eps^l d^l S^{m+1}|_0)|| at
/// the truncated level, evaluated matrix-free.
inline double adiabatic_isolation_gap(const ModelSpec& spec, const LineDiscretization& disc, int m,
                                      int l, double epsilon, const IsolationOptions& opt = {}) {
  coverage::touch(coverage::Op::adiabatic_isolation_gap);
  if (m < 0 || l < 0) throw ParameterError("adiabatic_isolation_gap: m and l must be nonnegative");
  const ModelSpec scaled = spec.with_epsilon(epsilon);
  disc.validate(scaled.effective_profile());
  const double lambda0 = isolation_lambda0(scaled);
  const auto inner = build_inner_pair(scaled);
  const Matrix b1 = detail::anticommutator(inner.d2.matrix(), inner.a.matrix());
  const Matrix a2 = detail::hermitize(inner.a.matrix() * inner.a.matrix());
  const RealVector h = profile_on_grid(scaled, disc);
  const RealVector ones = RealVector::Ones(h.size());
  const Index d = scaled.inner_dim;

  detail::WordSum g(tensor_laplacian(scaled, disc, opt.tensor_cap), lambda0);
  using Kind = detail::WordSum::Kind;
  const std::size_t alpha1 = g.add_multiplier({h, b1});
  const std::size_t alpha2 = g.add_multiplier({RealVector(2.0 * h.cwiseProduct(h)), a2});
  const std::size_t beta1 = g.add_multiplier({ones, b1});
  const std::size_t beta2 = g.add_multiplier({RealVector(2.0 * ones), a2});
  const std::size_t hl = g.add_multiplier({RealVector(h.array().pow(static_cast<double>(l))),
                                           Matrix::Identity(d, d)});

  const auto theta = derivative_combination(l);
  for (const auto& [k, c] : theta.terms()) {
    bool vanishes = false;
    for (int entry : k.entries()) vanishes = vanishes || entry >= 3;
    if (vanishes) continue;
    const int j = static_cast<int>(k.length());
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    for_each_composition(m + 1 + j, j + 1, [&](const std::vector<int>& parts) {
      for (int side = 0; side < 2; ++side) {
        std::vector<detail::WordSum::Factor> f;
        for (int w = 0; w < m + 1; ++w) f.push_back({Kind::weight});
        if (side == 1 && l > 0) f.push_back({Kind::multiply, hl});
        for (int i = 0; i <= j; ++i) {
          for (int r = 0; r < parts[static_cast<std::size_t>(i)]; ++r) f.push_back({Kind::resolvent});
          if (i < j) {
            const int entry = k[static_cast<std::size_t>(i)];
            const std::size_t mult =
                side == 0 ? (entry == 1 ? alpha1 : alpha2) : (entry == 1 ? beta1 : beta2);
            f.push_back({Kind::multiply, mult});
          }
        }
        const double coefficient = static_cast<double>(c) * sign * (side == 0 ? 1.0 : -1.0);
        g.add_word({coefficient, std::move(f)});
      }
    });
  }
  return detail::lanczos_norm([&](const Matrix& x) { return g.apply(x); },
                              [&](const Matrix& x) { return g.apply_adjoint(x); }, g.rows(),
                              g.cols(), opt.lanczos_steps);
}

/// Relative gap between the two sides of
///   <R;d_K>(0) - h^{|K|} <S;d_K>(0)
///     = sum_p <a_{k_1},...,a_{k_{p-1}}, [Delta_hat, h^{k_p+...+k_j}], b_{k_p},...,b_{k_j}>
/// on the dense truncation, measured against the size of the two terms on
/// the left.
inline double commutator_correction_check(const ModelSpec& spec, const LineDiscretization& disc,
                                          int m, const MultiIndex& k, double epsilon,
                                          Index dense_cap = 3000) {
  coverage::touch(coverage::Op::commutator_correction_check);
  if (m < 0) throw ParameterError("commutator_correction_check: m must be nonnegative");
  const ModelSpec scaled = spec.with_epsilon(epsilon);
  disc.validate(scaled.effective_profile());
  detail::check_tensor_cap(disc.n, scaled.inner_dim, dense_cap);
  const double lambda0 = isolation_lambda0(scaled);
  const auto inner = build_inner_pair(scaled);
  const Matrix b1 = detail::anticommutator(inner.d2.matrix(), inner.a.matrix());
  const Matrix a2 = detail::hermitize(inner.a.matrix() * inner.a.matrix());
  const RealVector h = profile_on_grid(scaled, disc);
  const RealVector ones = RealVector::Ones(h.size());
  const Index d = scaled.inner_dim;
  const Matrix lap = dense_tensor_laplacian(scaled, disc, dense_cap);
  const Index n = lap.rows();
  const Matrix resolvent = detail::hermitian_part(
      (lap + lambda0 * Matrix::Identity(n, n)).partialPivLu().inverse());
  const auto powers = detail::power_table(resolvent, m + 1);

  auto line_power = [&](int p) {
    return KronDiagonal{RealVector(h.array().pow(static_cast<double>(p))), Matrix::Identity(d, d)}
        .to_dense();
  };
  auto alpha_der = [&](int entry) -> Matrix {
    if (entry == 1) return KronDiagonal{h, b1}.to_dense();
    if (entry == 2) return KronDiagonal{RealVector(2.0 * h.cwiseProduct(h)), a2}.to_dense();
    return Matrix::Zero(n, n);
  };
  auto beta_der = [&](int entry) -> Matrix {
    if (entry == 1) return KronDiagonal{ones, b1}.to_dense();
    if (entry == 2) return KronDiagonal{RealVector(2.0 * ones), a2}.to_dense();
    return Matrix::Zero(n, n);
  };

  const std::size_t j = k.length();
  std::vector<Matrix> alphas, betas;
  for (int entry : k.entries()) {
    alphas.push_back(alpha_der(entry));
    betas.push_back(beta_der(entry));
  }
  auto pointers = [](const std::vector<Matrix>& v) {
    std::vector<const Matrix*> out;
    for (const auto& x : v) out.push_back(&x);
    return out;
  };
  const Matrix r_term = detail::bracket_sum(powers, pointers(alphas), m);
  const Matrix s_term = line_power(k.degree()) * detail::bracket_sum(powers, pointers(betas), m);
  const Matrix lhs = r_term - s_term;

  Matrix rhs = Matrix::Zero(n, n);
  for (std::size_t p = 0; p < j; ++p) {
    int tail = 0;
    for (std::size_t q = p; q < j; ++q) tail += k[q];
    const Matrix hp = line_power(tail);
    const Matrix commutator = lap * hp - hp * lap;
    std::vector<const Matrix*> ys;
    for (std::size_t q = 0; q < p; ++q) ys.push_back(&alphas[q]);
    ys.push_back(&commutator);
    for (std::size_t q = p; q < j; ++q) ys.push_back(&betas[q]);
    rhs += detail::bracket_sum(powers, ys, m);
  }
  const double scale = r_term.norm() + s_term.norm();
  if (scale == 0.0) return (lhs - rhs).norm();
  return (lhs - rhs).norm() / scale;
}

struct LaplaceOptions {
  std::size_t coarse_nodes = 96;
  std::size_t fine_nodes = 128;
  double rel_tol = 1e-10;
};

/// (lambda + H)^{-m-1} = (1/m!) int_0^inf s^m e^{-s(lambda+H)} ds by generalized
/// Gauss-Laguerre quadrature after s = u / c, c = lambda + min spec(H).
inline HermitianOperator laplace_resolvent_power(const HermitianOperator& h, double lambda, int m,
                                                 const LaplaceOptions& opt = {}) {
  coverage::touch(coverage::Op::laplace_resolvent_power);
  if (!(lambda > 0.0)) throw ParameterError("laplace_resolvent_power: lambda must be positive");
  if (m < 0) throw ParameterError("laplace_resolvent_power: m must be nonnegative");
  require_psd(h, "laplace_resolvent_power");
  const auto& dec = h.decomposition();
  const double c = lambda + std::max(0.0, dec.eigenvalues.size() ? dec.eigenvalues(0) : 0.0);
  const double prefactor = std::exp(-std::lgamma(m + 1.0) - (m + 1.0) * std::log(c));
  auto evaluate = [&](std::size_t nodes) {
    const auto rule = quad::gauss_laguerre(nodes, static_cast<double>(m));
    RealVector values(dec.eigenvalues.size());
    for (Index i = 0; i < values.size(); ++i) {
      const double excess = (lambda + std::max(0.0, dec.eigenvalues(i))) / c - 1.0;
      double acc = 0.0;
      for (std::size_t q = 0; q < nodes; ++q) acc += rule.weights[q] * std::exp(-rule.nodes[q] * excess);
      values(i) = prefactor * acc;
    }
    return values;
  };
  const RealVector coarse = evaluate(opt.coarse_nodes);
  const RealVector fine = evaluate(opt.fine_nodes);
  const double gap = (fine - coarse).norm();
  if (gap > opt.rel_tol * fine.norm()) {
    std::ostringstream msg;
    msg << "laplace_resolvent_power: Gauss-Laguerre did not converge (node-doubling gap " << gap
        << ")";
    throw AccuracyError(msg.str());
  }
  const Matrix& u = dec.eigenvectors;
  return HermitianOperator(Matrix(u * fine.cast<Complex>().asDiagonal() * u.adjoint()));
}

struct ResolventBoundReport {
  double p = 0.0;
  std::vector<double> lambdas;          // values that met the guard
  std::vector<double> rejected;         // values that did not
  std::array<std::vector<double>, 3> norms;
  std::array<double, 3> slopes{};
  std::array<bool, 3> identically_zero{};
  bool pass = false;
};

/// Fits the lambda-exponent of
///   max_z ||(Delta+1)^p delta^k((Delta + alpha(z) + lambda)^{-1})||,  k = 0, 1, 2
/// and passes when every slope is <= -1 + p + 0.1 (or the norms vanish).
inline ResolventBoundReport resolvent_bound_check(const QuadraticFamily& fam, double p,
                                                  const std::vector<double>& lambdas,
                                                  std::vector<Complex> z_samples = {},
                                                  double margin = 0.05) {
  coverage::touch(coverage::Op::resolvent_bound_check);
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("resolvent_bound_check: p must lie in [0,1]");
  if (z_samples.empty()) {
    z_samples = detail::circle_points(1.5, 7);
    z_samples.push_back(0.0);
  }
  ResolventBoundReport report;
  report.p = p;
  const double bound = fam.relative_bound();
  const HermitianOperator& lap = fam.laplacian();
  const Matrix weight = matrix_function(lap, [p](double x) { return std::pow(1.0 + std::max(x, 0.0), p); }).matrix();
  for (double lambda : lambdas) {
    if (!(std::sqrt(lambda) >= bound + margin)) {
      report.rejected.push_back(lambda);
      continue;
    }
    const QuadraticFamily at = fam.with_lambda(lambda);
    std::array<double, 3> worst{};
    for (Complex z : z_samples) {
      const Matrix r = at.resolvent(z);
      for (int k = 0; k < 3; ++k)
        worst[static_cast<std::size_t>(k)] =
            std::max(worst[static_cast<std::size_t>(k)], operator_norm(weight * iterated_commutator(lap, r, k)));
    }
    report.lambdas.push_back(lambda);
    for (int k = 0; k < 3; ++k) report.norms[static_cast<std::size_t>(k)].push_back(worst[static_cast<std::size_t>(k)]);
  }
  report.pass = report.lambdas.size() >= 2;
  const double reference = report.norms[0].empty() ? 0.0 : *std::max_element(report.norms[0].begin(), report.norms[0].end());
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& v = report.norms[k];
    const double top = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    report.identically_zero[k] = !v.empty() && top <= 1e-12 * std::max(reference, 1e-300);
    if (report.identically_zero[k] || report.lambdas.size() < 2) {
      report.slopes[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const Index count = static_cast<Index>(v.size());
    RealMatrix design(count, 2);
    RealVector rhs(count);
    for (Index i = 0; i < count; ++i) {
      design(i, 0) = 1.0;
      design(i, 1) = std::log(report.lambdas[static_cast<std::size_t>(i)]);
      rhs(i) = std::log(v[static_cast<std::size_t>(i)]);
    }
    const RealVector coef = design.colPivHouseholderQr().solve(rhs);
    report.slopes[k] = coef(1);
    if (!(coef(1) <= -1.0 + p + 0.1)) report.pass = false;
  }
  return report;
}

} // namespace indexlab

#endif // INDEXLAB_RESOLVENT_CALCULUS_HPP
