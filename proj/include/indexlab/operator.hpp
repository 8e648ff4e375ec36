#ifndef INDEXLAB_OPERATOR_HPP
#define INDEXLAB_OPERATOR_HPP

// Dense hermitian operators and the spectral toolbox built on them: matrix
// functions, fractional resolvent powers, Schatten norms, Kronecker products,
// partial traces and iterated commutators.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "coverage.hpp"
#include "error.hpp"
#include "quadrature.hpp"

namespace indexlab {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

struct SpectralDecomposition {
  RealVector eigenvalues;  // ascending
  Matrix eigenvectors;     // columns, unitary
};

/// Dense hermitian matrix. Inputs are symmetrized on construction: relative
/// asymmetry up to 1e-12 is corrected silently, up to 1e-8 with a warning,
/// and anything larger is rejected. The spectral decomposition is computed
/// at most once and shared between copies.
class HermitianOperator {
public:
  static constexpr double silent_asymmetry = 1e-12;
  static constexpr double max_asymmetry = 1e-8;

  HermitianOperator() : HermitianOperator(Matrix(0, 0)) {}

  explicit HermitianOperator(Matrix entries) : cache_(std::make_shared<Cache>()) {
    if (entries.rows() != entries.cols())
      throw DimensionError("hermitian operator must be square, got " +
                           std::to_string(entries.rows()) + "x" + std::to_string(entries.cols()));
    const double scale = entries.norm();
    const double skew = (entries - entries.adjoint()).norm();
    asymmetry_ = scale > 0.0 ? skew / scale : 0.0;
    if (asymmetry_ > max_asymmetry) {
      std::ostringstream msg;
      msg << "matrix is not hermitian (relative asymmetry " << asymmetry_ << ")";
      throw ParameterError(msg.str());
    }
    if (asymmetry_ > silent_asymmetry) {
      std::ostringstream msg;
      msg << "symmetrizing matrix with relative asymmetry " << asymmetry_;
      warn(msg.str());
    }
    entries_ = 0.5 * (entries + entries.adjoint());
  }

  explicit HermitianOperator(const RealMatrix& entries)
      : HermitianOperator(Matrix(entries.cast<Complex>())) {}

  static HermitianOperator identity(Index n) { return HermitianOperator(Matrix(Matrix::Identity(n, n))); }
  static HermitianOperator zero(Index n) { return HermitianOperator(Matrix(Matrix::Zero(n, n))); }
  static HermitianOperator diagonal(const RealVector& d) {
    return HermitianOperator(Matrix(d.cast<Complex>().asDiagonal()));
  }
  static HermitianOperator scalar(double v) { return diagonal(RealVector::Constant(1, v)); }

  Index dim() const noexcept { return entries_.rows(); }
  const Matrix& matrix() const noexcept { return entries_; }
  /// Relative Frobenius asymmetry of the matrix passed to the constructor.
  double input_asymmetry() const noexcept { return asymmetry_; }

  bool has_decomposition() const {
    std::lock_guard lock(cache_->mutex);
    return cache_->value.has_value();
  }

  const SpectralDecomposition& decomposition() const {
    std::call_once(cache_->once, [this] {
      auto d = compute_decomposition();
      std::lock_guard lock(cache_->mutex);
      cache_->value = std::move(d);
    });
    return *cache_->value;
  }

  const RealVector& eigenvalues() const { return decomposition().eigenvalues; }

  HermitianOperator operator+(const HermitianOperator& o) const { return HermitianOperator(Matrix(entries_ + o.entries_)); }
  HermitianOperator operator-(const HermitianOperator& o) const { return HermitianOperator(Matrix(entries_ - o.entries_)); }
  HermitianOperator operator*(double s) const { return HermitianOperator(Matrix(entries_ * s)); }
  HermitianOperator shifted(double s) const {
    return HermitianOperator(Matrix(entries_ + s * Matrix::Identity(dim(), dim())));
  }
  /// H^2, formed as H * H and re-hermitized.
  HermitianOperator squared() const { return HermitianOperator(Matrix(entries_ * entries_)); }

private:
  struct Cache {
    std::once_flag once;
    std::mutex mutex;
    std::optional<SpectralDecomposition> value;
  };

  SpectralDecomposition compute_decomposition() const {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(entries_);
    if (solver.info() != Eigen::Success) {
      const double norm = entries_.norm();
      const double diag_min = entries_.diagonal().cwiseAbs().minCoeff();
      throw EigensolverError(static_cast<std::size_t>(dim()),
                             diag_min > 0 ? norm / diag_min : INFINITY);
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
  }

  Matrix entries_;
  double asymmetry_ = 0.0;
  std::shared_ptr<Cache> cache_;
};

inline const SpectralDecomposition& spectral_decompose(const HermitianOperator& h) {
  coverage::touch(coverage::Op::spectral_decompose);
  return h.decomposition();
}

/// U diag(f(lambda_i)) U^*.
template <typename F>
HermitianOperator matrix_function(const HermitianOperator& h, F&& f) {
  coverage::touch(coverage::Op::matrix_function);
  const auto& dec = h.decomposition();
  RealVector values(dec.eigenvalues.size());
  for (Index i = 0; i < values.size(); ++i) {
    const double v = f(dec.eigenvalues(i));
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "matrix function undefined at eigenvalue " << dec.eigenvalues(i);
      throw DomainError(msg.str());
    }
    values(i) = v;
  }
  const Matrix& u = dec.eigenvectors;
  return HermitianOperator(Matrix(u * values.cast<Complex>().asDiagonal() * u.adjoint()));
}

inline double min_eigenvalue(const HermitianOperator& h) {
  return h.dim() == 0 ? 0.0 : h.eigenvalues()(0);
}

/// Throws unless h is positive semidefinite up to rounding.
inline void require_psd(const HermitianOperator& h, const char* who) {
  if (h.dim() == 0) return;
  const auto& ev = h.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev(0) < -1e-10 * scale) {
    std::ostringstream msg;
    msg << who << ": operator is not positive semidefinite (min eigenvalue " << ev(0) << ")";
    throw ParameterError(msg.str());
  }
}

enum class PowerMethod { spectral, contour_quadrature };

namespace detail {

inline Matrix integer_resolvent_power(const Matrix& h, double lambda, int k) {
  const Index n = h.rows();
  Matrix shifted = h + lambda * Matrix::Identity(n, n);
  Matrix inv = shifted.partialPivLu().inverse();
  Matrix out = Matrix::Identity(n, n);
  for (int i = 0; i < k; ++i) out = out * inv;
  return out;
}

// (lambda + H)^{-q}, 0 < q < 1, from
//   sin(q pi)/pi * int_0^inf mu^{-q} (lambda + H + mu)^{-1} dmu
// with mu = lambda e^u and a 200-point double-exponential rule in u.
inline Matrix fractional_by_quadrature(const Matrix& h, double lambda, double q) {
  const Index n = h.rows();
  const auto rule = quad::sinh_rule(200, std::min(q, 1.0 - q));
  Matrix acc = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double u = rule.nodes[k];
    const double mu = lambda * std::exp(u);
    if (!std::isfinite(mu)) continue;
    const double weight = rule.weights[k] * std::exp((1.0 - q) * u);
    if (weight == 0.0) continue;
    Matrix shifted = h + (lambda + mu) * Matrix::Identity(n, n);
    acc += weight * shifted.partialPivLu().inverse();
  }
  return (std::sin(q * std::numbers::pi) / std::numbers::pi * std::pow(lambda, 1.0 - q)) * acc;
}

} // namespace detail

/// (lambda + H)^{-s} for positive semidefinite H. The spectral method is the
/// default; the contour-quadrature method integrates resolvents over the
/// spectral parameter and serves as an independent cross-check.
inline HermitianOperator fractional_resolvent_power(const HermitianOperator& h, double lambda,
                                                    double s,
                                                    PowerMethod method = PowerMethod::spectral) {
  coverage::touch(coverage::Op::fractional_resolvent_power);
  if (!(lambda > 0.0)) throw ParameterError("fractional_resolvent_power: lambda must be positive");
  if (!(s > 0.0)) throw ParameterError("fractional_resolvent_power: exponent must be positive");
  require_psd(h, "fractional_resolvent_power");
  if (method == PowerMethod::spectral)
    return matrix_function(h, [lambda, s](double x) { return std::pow(lambda + x, -s); });

  const double whole = std::floor(s);
  const double frac = s - whole;
  Matrix out = detail::integer_resolvent_power(h.matrix(), lambda, static_cast<int>(whole));
  if (frac > 1e-14) out = out * detail::fractional_by_quadrature(h.matrix(), lambda, frac);
  return HermitianOperator(out);
}

inline RealVector singular_values(const Matrix& t) {
  if (t.size() == 0) return RealVector(0);
  Eigen::BDCSVD<Matrix> svd(t);
  return svd.singularValues();
}

/// (sum_i sigma_i^q)^{1/q}; q = 1 is the trace norm.
inline double schatten_norm(const Matrix& t, double q) {
  coverage::touch(coverage::Op::schatten_norm);
  if (!(q >= 1.0)) throw ParameterError("schatten_norm: q must be >= 1");
  const RealVector sv = singular_values(t);
  if (sv.size() == 0) return 0.0;
  const double top = sv.maxCoeff();
  if (top == 0.0) return 0.0;
  double acc = 0.0;
  for (Index i = 0; i < sv.size(); ++i) acc += std::pow(sv(i) / top, q);
  return top * std::pow(acc, 1.0 / q);
}

inline double trace_norm(const Matrix& t) { return schatten_norm(t, 1.0); }

inline double operator_norm(const Matrix& t) {
  const RealVector sv = singular_values(t);
  return sv.size() == 0 ? 0.0 : sv.maxCoeff();
}

/// Dimensions of a two-factor tensor product. Basis ordering is fixed
/// globally: index = t * dim2 + i (line factor outer).
struct KroneckerShape {
  Index dim1 = 1;
  Index dim2 = 1;
  Index total() const noexcept { return dim1 * dim2; }
};

/// T (x) S in the line-outer ordering.
inline Matrix kron(const Matrix& t, const Matrix& s) {
  Matrix out(t.rows() * s.rows(), t.cols() * s.cols());
  for (Index a = 0; a < t.rows(); ++a)
    for (Index b = 0; b < t.cols(); ++b)
      out.block(a * s.rows(), b * s.cols(), s.rows(), s.cols()) = t(a, b) * s;
  return out;
}

/// (Tr (x) 1)(R)[i, j] = sum_t R[t*dim2 + i, t*dim2 + j].
inline Matrix partial_trace_first(const Matrix& r, const KroneckerShape& shape) {
  coverage::touch(coverage::Op::partial_trace_first);
  if (shape.dim1 <= 0 || shape.dim2 <= 0)
    throw DimensionError("partial_trace_first: shape dimensions must be positive");
  if (r.rows() != shape.total() || r.cols() != shape.total())
    throw DimensionError("partial_trace_first: matrix is " + std::to_string(r.rows()) + "x" +
                         std::to_string(r.cols()) + " but shape needs " +
                         std::to_string(shape.total()));
  Matrix out = Matrix::Zero(shape.dim2, shape.dim2);
  for (Index t = 0; t < shape.dim1; ++t)
    out += r.block(t * shape.dim2, t * shape.dim2, shape.dim2, shape.dim2);
  return out;
}

/// Square root of a positive semidefinite operator; tiny negative eigenvalues
/// from rounding are clamped to zero.
inline HermitianOperator psd_sqrt(const HermitianOperator& h) {
  require_psd(h, "psd_sqrt");
  return matrix_function(h, [](double x) { return std::sqrt(std::max(x, 0.0)); });
}

/// delta^k(T) with delta(T) = [H^{1/2}, T].
inline Matrix iterated_commutator(const HermitianOperator& h, const Matrix& t, int k) {
  coverage::touch(coverage::Op::iterated_commutator);
  if (k < 0) throw ParameterError("iterated_commutator: k must be nonnegative");
  if (t.rows() != h.dim() || t.cols() != h.dim())
    throw DimensionError("iterated_commutator: operand dimension mismatch");
  if (k == 0) return t;
  const Matrix root = psd_sqrt(h).matrix();
  Matrix out = t;
  for (int i = 0; i < k; ++i) out = root * out - out * root;
  return out;
}

/// sigma^k(T) with sigma(T) = (L + 1) T (L + 1)^{-1}.
inline Matrix sigma_conjugate(const HermitianOperator& laplacian, const Matrix& t, int k) {
  coverage::touch(coverage::Op::sigma_conjugate);
  if (k < 0) throw ParameterError("sigma_conjugate: k must be nonnegative");
  if (t.rows() != laplacian.dim() || t.cols() != laplacian.dim())
    throw DimensionError("sigma_conjugate: operand dimension mismatch");
  const Index n = laplacian.dim();
  const Matrix shifted = laplacian.matrix() + Matrix::Identity(n, n);
  const Matrix inverse = shifted.partialPivLu().inverse();
  Matrix out = t;
  for (int i = 0; i < k; ++i) out = shifted * out * inverse;
  return out;
}

/// Tr(X Y) without forming the product.
inline Complex trace_of_product(const Matrix& x, const Matrix& y) {
  return x.cwiseProduct(y.transpose()).sum();
}

} // namespace indexlab

#endif // INDEXLAB_OPERATOR_HPP
