#ifndef INDEXLAB_MODEL_HPP
#define INDEXLAB_MODEL_HPP

// Model ingredients: inner operators D2 and A, line discretization, and the
// Schroedinger pair H_minus = D_- D_+, H_plus = D_+ D_- assembled term by term
// (never as products of a truncated D_+).

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "block_tridiagonal.hpp"
#include "coverage.hpp"
#include "operator.hpp"
#include "profile.hpp"

namespace indexlab {

namespace gen {

/// c * identity.
struct Scalar { double value = 0.0; };
/// diag(-k_max, ..., k_max).
struct DiagonalLinear { int k_max = 1; };
/// diag(1/2, 3/2, 5/2, ...).
struct Harmonic {};
struct Explicit { Matrix matrix; };
/// scale * (G + G^*) / (2 sqrt(d)) for a seeded complex Gaussian G.
struct RandomHermitian { std::uint64_t seed = 0; double scale = 1.0; };
/// Hermitian band matrix: `diagonal` on the diagonal, `value` on the first
/// `bandwidth` off-diagonals.
struct Banded { int bandwidth = 1; double value = 1.0; double diagonal = 0.0; };
/// u D2 u^* - D2 for a seeded Haar-like unitary u (A only).
struct ConjugationDifference { std::uint64_t seed = 0; };

} // namespace gen

using InnerGenerator = std::variant<gen::Scalar, gen::DiagonalLinear, gen::Harmonic, gen::Explicit,
                                    gen::RandomHermitian, gen::Banded, gen::ConjugationDifference>;

inline std::string generator_name(const InnerGenerator& g) {
  struct V {
    std::string operator()(const gen::Scalar&) const { return "scalar"; }
    std::string operator()(const gen::DiagonalLinear&) const { return "diagonal-linear"; }
    std::string operator()(const gen::Harmonic&) const { return "harmonic"; }
    std::string operator()(const gen::Explicit&) const { return "explicit"; }
    std::string operator()(const gen::RandomHermitian&) const { return "random-hermitian"; }
    std::string operator()(const gen::Banded&) const { return "banded"; }
    std::string operator()(const gen::ConjugationDifference&) const { return "conjugation-difference"; }
  };
  return std::visit(V{}, g);
}

/// Declarative description of one experiment model.
struct ModelSpec {
  Index inner_dim = 1;
  InnerGenerator d2 = gen::Scalar{0.0};
  InnerGenerator a = gen::Scalar{1.0};
  Profile profile = Profile::tanh_clamped(-1.0, 1.0);
  double epsilon = 1.0;

  /// The profile actually used: profile rescaled by epsilon.
  Profile effective_profile() const { return profile.rescaled(epsilon); }

  ModelSpec with_epsilon(double eps) const {
    ModelSpec out = *this;
    out.epsilon = eps;
    return out;
  }
};

namespace presets {

/// D2 = 0, A = 1, h from 0 to 1.
inline ModelSpec scalar_half_kink(double cutoff = 8.0) {
  return {1, gen::Scalar{0.0}, gen::Scalar{1.0}, Profile::tanh_clamped(0.0, 1.0, cutoff), 1.0};
}
/// D2 = 0, A = 1, h from -1 to 1.
inline ModelSpec scalar_full_kink(double cutoff = 8.0) {
  return {1, gen::Scalar{0.0}, gen::Scalar{1.0}, Profile::tanh_clamped(-1.0, 1.0, cutoff), 1.0};
}
/// D2 = 0, A = 1, h a flat smooth step from -1/2 to 1.
inline ModelSpec scalar_smoothed_step(double cutoff = 8.0) {
  return {1, gen::Scalar{0.0}, gen::Scalar{1.0}, Profile::smoothed_step(-0.5, 1.0, cutoff), 1.0};
}

} // namespace presets

struct LineDiscretization {
  double T = 40.0;             // half-length of [-T, T]
  Index n = 4096;              // interior grid points
  double safety_factor = 4.0;  // required T / (K / eps)

  double spacing() const { return 2.0 * T / static_cast<double>(n + 1); }

  RealVector grid() const {
    RealVector g(n);
    const double h = spacing();
    for (Index k = 0; k < n; ++k) g(k) = -T + h * static_cast<double>(k + 1);
    return g;
  }

  /// Same T, spacing halved.
  LineDiscretization refined() const { return {T, 2 * n + 1, safety_factor}; }

  /// Throws unless n >= 16, T > 0 and T exceeds safety_factor * cutoff.
  void validate(const Profile& effective, Index min_points = 16) const {
    if (!(T > 0.0)) throw ParameterError("line discretization: T must be positive");
    if (n < min_points)
      throw ParameterError("line discretization: need at least " + std::to_string(min_points) +
                           " grid points, got " + std::to_string(n));
    if (effective.kind() != ProfileKind::constant && !(T > safety_factor * effective.cutoff())) {
      std::ostringstream msg;
      msg << "line discretization: T=" << T << " does not exceed " << safety_factor
          << " x profile cutoff " << effective.cutoff();
      throw ParameterError(msg.str());
    }
  }
};

struct InnerPair {
  HermitianOperator d2;
  HermitianOperator a;
};

namespace detail {

inline Matrix gaussian_matrix(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = Complex(re, im);
    }
  return g;
}

inline Matrix seeded_unitary(Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix g = gaussian_matrix(d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < d; ++i) {
    const Complex diag = r(i, i);
    const double mag = std::abs(diag);
    if (mag > 0.0) q.col(i) *= diag / mag;
  }
  return q;
}

inline Matrix generate(const InnerGenerator& g, Index d, const Matrix* d2, const char* role) {
  struct V {
    Index d;
    const Matrix* d2;
    const char* role;
    Matrix operator()(const gen::Scalar& s) const {
      return Matrix(s.value * Matrix::Identity(d, d));
    }
    Matrix operator()(const gen::DiagonalLinear& s) const {
      if (s.k_max < 0) throw ConfigError(std::string(role) + ": diagonal-linear k_max must be >= 0");
      if (2 * s.k_max + 1 != d)
        throw ConfigError(std::string(role) + ": diagonal-linear k_max=" + std::to_string(s.k_max) +
                          " needs inner_dim " + std::to_string(2 * s.k_max + 1) + ", got " +
                          std::to_string(d));
      Matrix m = Matrix::Zero(d, d);
      for (Index i = 0; i < d; ++i) m(i, i) = static_cast<double>(i - s.k_max);
      return m;
    }
    Matrix operator()(const gen::Harmonic&) const {
      Matrix m = Matrix::Zero(d, d);
      for (Index i = 0; i < d; ++i) m(i, i) = static_cast<double>(i) + 0.5;
      return m;
    }
    Matrix operator()(const gen::Explicit& e) const {
      if (e.matrix.rows() != d || e.matrix.cols() != d)
        throw ConfigError(std::string(role) + ": explicit matrix is " +
                          std::to_string(e.matrix.rows()) + "x" + std::to_string(e.matrix.cols()) +
                          ", expected inner_dim " + std::to_string(d));
      return e.matrix;
    }
    Matrix operator()(const gen::RandomHermitian& r) const {
      std::mt19937_64 rng(r.seed);
      const Matrix g = gaussian_matrix(d, rng);
      return Matrix(r.scale * (g + g.adjoint()) / (2.0 * std::sqrt(static_cast<double>(d))));
    }
    Matrix operator()(const gen::Banded& b) const {
      if (b.bandwidth < 0) throw ConfigError(std::string(role) + ": banded bandwidth must be >= 0");
      Matrix m = Matrix::Zero(d, d);
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) {
          const Index off = std::abs(i - j);
          if (off == 0) m(i, j) = b.diagonal;
          else if (off <= b.bandwidth) m(i, j) = b.value;
        }
      return m;
    }
    Matrix operator()(const gen::ConjugationDifference& c) const {
      if (d2 == nullptr)
        throw ConfigError(std::string(role) + ": conjugation-difference is only valid for A");
      const Matrix u = seeded_unitary(d, c.seed);
      return Matrix(u * (*d2) * u.adjoint() - *d2);
    }
  };
  return std::visit(V{d, d2, role}, g);
}

} // namespace detail

/// D2 and A as hermitian operators of dimension inner_dim.
inline InnerPair build_inner_pair(const ModelSpec& spec) {
  coverage::touch(coverage::Op::build_inner_pair);
  if (spec.inner_dim <= 0) throw ConfigError("inner_dim must be positive");
  if (std::holds_alternative<gen::ConjugationDifference>(spec.d2))
    throw ConfigError("d2: conjugation-difference is only valid for A");
  HermitianOperator d2(detail::generate(spec.d2, spec.inner_dim, nullptr, "d2"));
  HermitianOperator a(detail::generate(spec.a, spec.inner_dim, &d2.matrix(), "a"));
  return {std::move(d2), std::move(a)};
}

struct LineOperators {
  BlockTridiagonal laplacian;   // -d^2/dt^2, Dirichlet, scaled 1/spacing^2
  RealMatrix derivative;        // centered d/dt, scaled 1/(2 spacing); antisymmetric
  RealVector grid;
  double spacing;
};

/// Second-difference Laplacian and centered first difference on the n
/// interior points of [-T, T] with Dirichlet ends.
inline LineOperators build_line_operators(const LineDiscretization& disc) {
  coverage::touch(coverage::Op::build_line_operators);
  if (disc.n < 3) throw ParameterError("build_line_operators: need at least 3 grid points");
  if (!(disc.T > 0.0)) throw ParameterError("build_line_operators: T must be positive");
  const double h = disc.spacing();
  const Index n = disc.n;
  std::vector<Matrix> diag(static_cast<std::size_t>(n), Matrix::Constant(1, 1, 2.0 / (h * h)));
  RealMatrix deriv = RealMatrix::Zero(n, n);
  for (Index k = 0; k + 1 < n; ++k) {
    deriv(k, k + 1) = 1.0 / (2.0 * h);
    deriv(k + 1, k) = -1.0 / (2.0 * h);
  }
  return {BlockTridiagonal(std::move(diag), -1.0 / (h * h)), std::move(deriv), disc.grid(), h};
}

namespace detail {

inline Matrix hermitize(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

/// D2 A + A D2, re-hermitized.
inline Matrix anticommutator(const Matrix& d2, const Matrix& a) {
  return hermitize(d2 * a + a * d2);
}

/// Guard on tensor dimension.
inline void check_tensor_cap(Index n, Index d, Index cap) {
  if (n * d > cap)
    throw ResourceError("tensor dimension " + std::to_string(n * d) + " exceeds cap " +
                        std::to_string(cap));
}

} // namespace detail

inline constexpr Index default_tensor_cap = 1 << 22;

struct SchroedingerPair {
  BlockTridiagonal minus;  // D_- D_+ = Laplacian + T1 + h^2 A^2 - h' A
  BlockTridiagonal plus;   // D_+ D_- = Laplacian + T1 + h^2 A^2 + h' A
};

/// Assembles H_minus and H_plus blockwise:
///   Delta1 (x) I + I (x) D2^2 + h (D2 A + A D2) + h^2 A^2 -/+ h' A.
inline SchroedingerPair assemble_schroedinger_pair(const ModelSpec& spec,
                                                   const LineDiscretization& disc,
                                                   Index tensor_cap = default_tensor_cap) {
  coverage::touch(coverage::Op::assemble_schroedinger_pair);
  detail::check_tensor_cap(disc.n, spec.inner_dim, tensor_cap);
  const auto inner = build_inner_pair(spec);
  const auto line = build_line_operators(disc);
  const Profile h = spec.effective_profile();
  const Matrix& d2 = inner.d2.matrix();
  const Matrix& a = inner.a.matrix();
  const Index d = spec.inner_dim;
  const Matrix delta2 = detail::hermitize(d2 * d2);
  const Matrix anti = detail::anticommutator(d2, a);
  const Matrix a2 = detail::hermitize(a * a);
  const double diag_scale = 2.0 / (line.spacing * line.spacing);

  std::vector<Matrix> minus, plus;
  minus.reserve(static_cast<std::size_t>(disc.n));
  plus.reserve(static_cast<std::size_t>(disc.n));
  for (Index t = 0; t < disc.n; ++t) {
    const double ht = h.value(line.grid(t));
    const double dht = h.derivative(line.grid(t));
    Matrix common = diag_scale * Matrix::Identity(d, d) + delta2 + ht * anti + (ht * ht) * a2;
    Matrix slope = dht * a;
    minus.push_back(common - slope);
    plus.push_back(common + slope);
  }
  return {BlockTridiagonal(std::move(minus), line.laplacian.coupling()),
          BlockTridiagonal(std::move(plus), line.laplacian.coupling())};
}

/// F = diag(2 h'(t_k)) (x) A.
inline KronDiagonal assemble_F(const ModelSpec& spec, const LineDiscretization& disc) {
  coverage::touch(coverage::Op::assemble_F);
  const auto inner = build_inner_pair(spec);
  const Profile h = spec.effective_profile();
  const RealVector grid = disc.grid();
  RealVector w(grid.size());
  for (Index k = 0; k < grid.size(); ++k) w(k) = 2.0 * h.derivative(grid(k));
  return {std::move(w), inner.a.matrix()};
}

enum class Side { plus, minus };

/// D2 + r * h_sign * A on the inner space.
inline HermitianOperator inner_path_operator(const ModelSpec& spec, double r, Side sign) {
  coverage::touch(coverage::Op::inner_path_operator);
  const auto inner = build_inner_pair(spec);
  const double end = sign == Side::plus ? spec.profile.h_plus() : spec.profile.h_minus();
  return HermitianOperator(Matrix(inner.d2.matrix() + (r * end) * inner.a.matrix()));
}

/// diag(f(t_k)) (x) I on the grid.
inline KronDiagonal line_multiplier(const RealVector& values, Index inner_dim) {
  return {values, Matrix::Identity(inner_dim, inner_dim)};
}

/// Delta1 (x) I + I (x) D2^2 on the tensor grid.
inline BlockTridiagonal tensor_laplacian(const ModelSpec& spec, const LineDiscretization& disc,
                                         Index tensor_cap = default_tensor_cap) {
  detail::check_tensor_cap(disc.n, spec.inner_dim, tensor_cap);
  const auto inner = build_inner_pair(spec);
  const auto line = build_line_operators(disc);
  const Index d = spec.inner_dim;
  const Matrix block = (2.0 / (line.spacing * line.spacing)) * Matrix::Identity(d, d) +
                       detail::hermitize(inner.d2.matrix() * inner.d2.matrix());
  return {std::vector<Matrix>(static_cast<std::size_t>(disc.n), block), line.laplacian.coupling()};
}

inline Matrix dense_tensor_laplacian(const ModelSpec& spec, const LineDiscretization& disc,
                                     Index dense_cap = 6000) {
  detail::check_tensor_cap(disc.n, spec.inner_dim, dense_cap);
  return tensor_laplacian(spec, disc).to_dense();
}

/// h_eps sampled on the grid.
inline RealVector profile_on_grid(const ModelSpec& spec, const LineDiscretization& disc) {
  const Profile h = spec.effective_profile();
  RealVector g = disc.grid();
  for (Index k = 0; k < g.size(); ++k) g(k) = h.value(g(k));
  return g;
}

/// Trace norm of F (Delta + 1)^{-m-1}, dense; used to watch the uniform bound
/// as eps decreases.
inline double weighted_F_trace_norm(const ModelSpec& spec, const LineDiscretization& disc, int m,
                                    Index dense_cap = 3000) {
  const HermitianOperator lap(dense_tensor_laplacian(spec, disc, dense_cap));
  const auto resolvent = fractional_resolvent_power(lap, 1.0, static_cast<double>(m + 1));
  const Matrix f = assemble_F(spec, disc).to_dense();
  return trace_norm(f * resolvent.matrix());
}

/// q -> ||(1 + D2^2)^{-r/2} A (1 + D2^2)^{-s/2}||_q for each q; the finite
/// analog of the relative summability condition on A. Interpretation across
/// truncation sizes is left to the caller.
inline std::vector<double> summability_profile(const ModelSpec& spec, double r, double s,
                                               const std::vector<double>& q_values) {
  const auto inner = build_inner_pair(spec);
  const HermitianOperator delta2 = inner.d2.squared();
  const Matrix left = fractional_resolvent_power(delta2, 1.0, r / 2.0).matrix();
  const Matrix right = fractional_resolvent_power(delta2, 1.0, s / 2.0).matrix();
  const Matrix weighted = left * inner.a.matrix() * right;
  std::vector<double> out;
  out.reserve(q_values.size());
  for (double q : q_values) out.push_back(schatten_norm(weighted, q));
  return out;
}

} // namespace indexlab

#endif // INDEXLAB_MODEL_HPP
