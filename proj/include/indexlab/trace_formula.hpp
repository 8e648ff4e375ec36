#ifndef INDEXLAB_TRACE_FORMULA_HPP
#define INDEXLAB_TRACE_FORMULA_HPP

// Both sides of the trace formula, the constant C_{m+1/2}, the Witten
// extrapolation, spectral flow, and the inner-space identities.
//
// The left side only touches the line grid and the right side only touches
// the inner space; they share no numerics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "block_tridiagonal.hpp"
#include "coverage.hpp"
#include "model.hpp"
#include "operator.hpp"
#include "quadrature.hpp"

namespace indexlab {

struct TraceReport {
  double value = 0.0;
  int m = 1;
  double lambda = 1.0;
  std::optional<LineDiscretization> disc;
  double error_estimate = 0.0;
  double wall_time_s = 0.0;
};

namespace detail {

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Compensated (Neumaier) summation.
class NeumaierSum {
public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline void check_m_lambda(int m, double lambda, const char* who) {
  if (m < 1) throw ParameterError(std::string(who) + ": m must be >= 1");
  if (!(lambda > 0.0)) throw ParameterError(std::string(who) + ": lambda must be positive");
}

/// lambda^m sum_i ((lambda + mu_minus_i)^{-m} - (lambda + mu_plus_i)^{-m}) with
/// both spectra sorted ascending and differenced pairwise.
inline double resolvent_trace_difference(const RealVector& minus, const RealVector& plus,
                                         double lambda, int m) {
  if (minus.size() != plus.size()) throw DimensionError("spectra of different sizes");
  if (minus.size() > 0 && !(lambda + std::min(minus(0), plus(0)) > 0.0))
    throw DomainError("resolvent trace: lambda + spectrum is not positive");
  NeumaierSum acc;
  for (Index i = 0; i < minus.size(); ++i) {
    const double a = std::pow(lambda / (lambda + minus(i)), m);
    const double b = std::pow(lambda / (lambda + plus(i)), m);
    acc.add(a - b);
  }
  return acc.value();
}

struct PairSpectra {
  RealVector minus;
  RealVector plus;
};

inline PairSpectra pair_spectra(const ModelSpec& spec, const LineDiscretization& disc,
                                Index dense_cap, Index tensor_cap) {
  const auto pair = assemble_schroedinger_pair(spec, disc, tensor_cap);
  return {pair.minus.eigenvalues(dense_cap), pair.plus.eigenvalues(dense_cap)};
}

} // namespace detail

struct LhsOptions {
  bool refine = true;               // error estimate from n -> 2n+1
  Index dense_cap = 6000;           // inner_dim > 1 uses dense eigensolves
  Index tensor_cap = default_tensor_cap;
};

/// Homological index lambda^m (Tr(lambda+H_-)^{-m} - Tr(lambda+H_+)^{-m}) for
/// every lambda in `lambdas`, sharing the two eigensolves.
inline std::vector<TraceReport> homological_index_lhs_sweep(const ModelSpec& spec, int m,
                                                            const std::vector<double>& lambdas,
                                                            const LineDiscretization& disc,
                                                            const LhsOptions& opt = {}) {
  coverage::touch(coverage::Op::homological_index_lhs);
  for (double lambda : lambdas) detail::check_m_lambda(m, lambda, "homological_index_lhs");
  disc.validate(spec.effective_profile());
  detail::Stopwatch clock;
  const auto coarse = detail::pair_spectra(spec, disc, opt.dense_cap, opt.tensor_cap);
  std::optional<detail::PairSpectra> fine;
  if (opt.refine) fine = detail::pair_spectra(spec, disc.refined(), opt.dense_cap, opt.tensor_cap);
  const double elapsed = clock.seconds() / static_cast<double>(std::max<std::size_t>(lambdas.size(), 1));
  std::vector<TraceReport> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) {
    TraceReport r;
    r.m = m;
    r.lambda = lambda;
    r.disc = disc;
    r.value = detail::resolvent_trace_difference(coarse.minus, coarse.plus, lambda, m);
    if (fine)
      r.error_estimate =
          std::abs(r.value - detail::resolvent_trace_difference(fine->minus, fine->plus, lambda, m));
    r.wall_time_s = elapsed;
    out.push_back(r);
  }
  return out;
}

inline TraceReport homological_index_lhs(const ModelSpec& spec, int m, double lambda,
                                         const LineDiscretization& disc,
                                         const LhsOptions& opt = {}) {
  return homological_index_lhs_sweep(spec, m, {lambda}, disc, opt).front();
}

enum class ConstantMethod { gamma, quadrature };

/// C_{m+1/2} = Gamma(m+1/2) / (sqrt(pi) Gamma(m)) = (m/pi) int (1+eta^2)^{-m-1} deta.
inline double c_constant(int m, ConstantMethod method = ConstantMethod::gamma) {
  coverage::touch(coverage::Op::c_constant);
  if (m < 1) throw ParameterError("c_constant: m must be >= 1");
  if (method == ConstantMethod::gamma)
    return std::exp(std::lgamma(m + 0.5) - std::lgamma(static_cast<double>(m))) /
           std::sqrt(std::numbers::pi);
  quad::AdaptiveOptions opt;
  opt.abs_tol = 1e-15;
  const auto r = quad::integrate_real_line<double>(
      [m](double eta) { return std::pow(1.0 + eta * eta, -(m + 1)); }, opt);
  return m / std::numbers::pi * r.value;
}

struct RhsOptions {
  quad::AdaptiveOptions quadrature{};
};

/// lambda^m C_{m+1/2} int_0^1 Tr(A_+ (lambda + (D2 + r A_+)^2)^{-m-1/2}
///                                - A_- (lambda + (D2 + r A_-)^2)^{-m-1/2}) dr
/// with A_pm = h_pm A, evaluated on the inner space alone.
inline TraceReport rhs_integral(const ModelSpec& spec, int m, double lambda,
                                const RhsOptions& opt = {}) {
  coverage::touch(coverage::Op::rhs_integral);
  detail::check_m_lambda(m, lambda, "rhs_integral");
  detail::Stopwatch clock;
  const auto inner = build_inner_pair(spec);
  const Matrix& a = inner.a.matrix();
  const double h_plus = spec.profile.h_plus();
  const double h_minus = spec.profile.h_minus();
  const double s = m + 0.5;
  auto side = [&](double r, Side sign, double h) {
    if (h == 0.0) return 0.0;
    const HermitianOperator x = inner_path_operator(spec, r, sign);
    const Matrix p = fractional_resolvent_power(x.squared(), lambda, s).matrix();
    return h * std::real(trace_of_product(a, p));
  };
  auto integrand = [&](double r) { return side(r, Side::plus, h_plus) - side(r, Side::minus, h_minus); };
  const auto q = quad::adaptive_gauss_legendre<double>(integrand, 0.0, 1.0, opt.quadrature);
  const double prefactor = std::pow(lambda, m) * c_constant(m);
  TraceReport r;
  r.m = m;
  r.lambda = lambda;
  r.value = prefactor * q.value;
  r.error_estimate = prefactor * q.error_estimate;
  r.wall_time_s = clock.seconds();
  return r;
}

enum class WittenSide { lhs, rhs };

struct WittenEstimate {
  std::vector<double> lambdas;
  std::vector<double> values;
  double limit = 0.0;
  double fit_residual = 0.0;
};

/// Evaluates one side on a descending lambda grid and extrapolates lambda -> 0
/// by a least-squares fit in 1, sqrt(lambda), lambda.
inline WittenEstimate witten_index_estimate(const ModelSpec& spec, int m,
                                            const std::vector<double>& lambda_grid,
                                            WittenSide side,
                                            const LineDiscretization& disc = {},
                                            const LhsOptions& lhs_opt = {false},
                                            const RhsOptions& rhs_opt = {}) {
  coverage::touch(coverage::Op::witten_index_estimate);
  if (lambda_grid.size() < 3)
    throw ParameterError("witten_index_estimate: need at least 3 lambda values");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] > 0.0)) throw ParameterError("witten_index_estimate: lambda must be positive");
    if (i > 0 && !(lambda_grid[i] < lambda_grid[i - 1]))
      throw ParameterError("witten_index_estimate: lambda grid must be strictly descending");
  }
  WittenEstimate est;
  est.lambdas = lambda_grid;
  if (side == WittenSide::lhs) {
    for (const auto& r : homological_index_lhs_sweep(spec, m, lambda_grid, disc, lhs_opt))
      est.values.push_back(r.value);
  } else {
    for (double lambda : lambda_grid) est.values.push_back(rhs_integral(spec, m, lambda, rhs_opt).value);
  }
  const Index count = static_cast<Index>(lambda_grid.size());
  RealMatrix design(count, 3);
  RealVector rhs(count);
  for (Index i = 0; i < count; ++i) {
    const double lambda = lambda_grid[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0;
    design(i, 1) = std::sqrt(lambda);
    design(i, 2) = lambda;
    rhs(i) = est.values[static_cast<std::size_t>(i)];
  }
  Eigen::ColPivHouseholderQR<RealMatrix> qr(design);
  if (qr.rank() < 3) throw AccuracyError("witten_index_estimate: fit design is rank deficient");
  const RealVector coef = qr.solve(rhs);
  if (!coef.allFinite()) throw AccuracyError("witten_index_estimate: fit produced non-finite values");
  est.limit = coef(0);
  est.fit_residual = (design * coef - rhs).norm();
  return est;
}

struct SpectralFlowOptions {
  int steps = 64;
  double endpoint_margin = 1e-8;
  double width = 1e-10;
  int max_depth = 60;
};

struct Crossing {
  double lower;   // parameter bracket containing the crossing
  double upper;
  int net;        // negative eigenvalues lost across the bracket
};

struct SpectralFlow {
  int net = 0;
  std::vector<Crossing> crossings;
};

using OperatorPath = std::function<HermitianOperator(double)>;

namespace detail {

inline int negative_count(const HermitianOperator& h) {
  const auto& ev = h.eigenvalues();
  int c = 0;
  for (Index i = 0; i < ev.size(); ++i) c += ev(i) < 0.0 ? 1 : 0;
  return c;
}

inline void check_endpoint(const HermitianOperator& h, double margin, double r) {
  const auto& ev = h.eigenvalues();
  for (Index i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i)) <= margin) {
      std::ostringstream msg;
      msg << "spectral flow: eigenvalue " << ev(i) << " within " << margin << " of zero at r=" << r;
      throw DegenerateEndpointError(msg.str());
    }
}

inline void localize(const OperatorPath& path, double a, double b, int na, int nb, int depth,
                     const SpectralFlowOptions& opt, std::vector<Crossing>& out) {
  if (na == nb) return;
  if (b - a <= opt.width) {
    out.push_back({a, b, na - nb});
    return;
  }
  if (depth >= opt.max_depth) {
    std::ostringstream msg;
    msg << "spectral flow: crossing in [" << a << ", " << b << "] unresolved after " << depth
        << " bisections";
    throw AccuracyError(msg.str());
  }
  const double mid = 0.5 * (a + b);
  const int nm = negative_count(path(mid));
  localize(path, a, mid, na, nm, depth + 1, opt, out);
  localize(path, mid, b, nm, nb, depth + 1, opt, out);
}

} // namespace detail

/// Net number of eigenvalues crossing zero from below along r in [0, 1],
/// with each crossing bracketed to width opt.width.
inline SpectralFlow spectral_flow(const OperatorPath& path, const SpectralFlowOptions& opt = {}) {
  coverage::touch(coverage::Op::spectral_flow_crossings);
  if (opt.steps < 1) throw ParameterError("spectral flow: steps must be positive");
  const HermitianOperator start = path(0.0);
  const HermitianOperator end = path(1.0);
  detail::check_endpoint(start, opt.endpoint_margin, 0.0);
  detail::check_endpoint(end, opt.endpoint_margin, 1.0);
  SpectralFlow out;
  int previous = detail::negative_count(start);
  for (int k = 1; k <= opt.steps; ++k) {
    const double a = static_cast<double>(k - 1) / opt.steps;
    const double b = static_cast<double>(k) / opt.steps;
    const int current = k == opt.steps ? detail::negative_count(end) : detail::negative_count(path(b));
    detail::localize(path, a, b, previous, current, 0, opt, out.crossings);
    previous = current;
  }
  for (const auto& c : out.crossings) out.net += c.net;
  return out;
}

inline int spectral_flow_crossings(const OperatorPath& path, int steps = 64) {
  SpectralFlowOptions opt;
  opt.steps = steps;
  return spectral_flow(path, opt).net;
}

namespace detail {

inline double xi_constant(int m) {
  // int (1 + eta^2)^{-m-1} deta
  return std::sqrt(std::numbers::pi) * std::exp(std::lgamma(m + 0.5) - std::lgamma(m + 1.0));
}

inline quad::AdaptiveOptions xi_quadrature() {
  quad::AdaptiveOptions opt;
  opt.abs_tol = 1e-15;
  opt.rel_tol = 1e-13;
  return opt;
}

} // namespace detail

/// Relative Frobenius gap between the xi-quadrature of
/// int (lambda + X^2 + xi^2)^{-m-1} dxi and its closed form.
inline double check_xi_integral_identity(const HermitianOperator& x, double lambda, int m) {
  coverage::touch(coverage::Op::check_xi_integral_identity);
  detail::check_m_lambda(m, lambda, "check_xi_integral_identity");
  const Index n = x.dim();
  const Matrix base = detail::hermitize(x.matrix() * x.matrix()) + lambda * Matrix::Identity(n, n);
  auto integrand = [&](double xi) -> Matrix {
    const Matrix inv = (base + (xi * xi) * Matrix::Identity(n, n)).partialPivLu().inverse();
    Matrix p = inv;
    for (int k = 0; k < m; ++k) p = p * inv;
    return p;
  };
  const Matrix left = quad::integrate_real_line<Matrix>(integrand, detail::xi_quadrature()).value;
  const Matrix right =
      detail::xi_constant(m) * fractional_resolvent_power(x.squared(), lambda, m + 0.5).matrix();
  const double scale = right.norm();
  return scale == 0.0 ? left.norm() : (left - right).norm() / scale;
}

struct FlowTraceOptions {
  Index min_points = 1024;
  Index tensor_cap = default_tensor_cap;
};

struct FlowTraceSides {
  Matrix lhs;
  Matrix rhs;
  double residual = 0.0;
};

/// Both sides of
///   (Tr (x) 1)(F h^l (Delta_hat + beta(r) + lambda)^{-m-1})
///     = (h_+^{l+1} - h_-^{l+1}) / (pi (l+1)) A int (lambda + (D2 + r A)^2 + xi^2)^{-m-1} dxi
/// with the residual measured in relative trace norm.
inline FlowTraceSides flow_trace_sides(const ModelSpec& spec, const LineDiscretization& disc, int m,
                                       double lambda, int l, double r,
                                       const FlowTraceOptions& opt = {}) {
  coverage::touch(coverage::Op::check_flow_trace_identity);
  detail::check_m_lambda(m, lambda, "check_flow_trace_identity");
  if (l < 0) throw ParameterError("check_flow_trace_identity: l must be nonnegative");
  disc.validate(spec.effective_profile(), opt.min_points);
  const auto inner = build_inner_pair(spec);
  const Matrix& a = inner.a.matrix();
  const Index d = spec.inner_dim;

  // left side: diagonal blocks of the resolvent power at the support of F
  const Matrix beta = r * detail::anticommutator(inner.d2.matrix(), a) + (r * r) * detail::hermitize(a * a);
  const BlockTridiagonal op =
      tensor_laplacian(spec, disc, opt.tensor_cap).plus({RealVector::Ones(disc.n), beta});
  const LineSolver solver(op, lambda);
  const KronDiagonal f = assemble_F(spec, disc);
  const RealVector h = profile_on_grid(spec, disc);
  Matrix lhs = Matrix::Zero(d, d);
  for (Index t = 0; t < disc.n; ++t) {
    const double w = f.weights(t) * std::pow(h(t), l);
    if (w == 0.0) continue;
    Matrix diag_block(d, d);
    for (Index i = 0; i < d; ++i) {
      Matrix e = Matrix::Zero(d, disc.n);
      e(i, t) = 1.0;
      for (int k = 0; k <= m; ++k) e = solver.solve(e);
      diag_block.col(i) = e.col(t);
    }
    lhs += w * (a * diag_block);
  }

  // right side: inner eigendecomposition and scalar xi-quadrature
  const HermitianOperator y(Matrix(inner.d2.matrix() + r * a));
  const auto& dec = y.decomposition();
  RealVector xi_values(d);
  for (Index i = 0; i < d; ++i) {
    const double base = lambda + dec.eigenvalues(i) * dec.eigenvalues(i);
    xi_values(i) = quad::integrate_real_line<double>(
                       [base, m](double xi) { return std::pow(base + xi * xi, -(m + 1)); },
                       detail::xi_quadrature())
                       .value;
  }
  const double hp = spec.profile.h_plus();
  const double hm = spec.profile.h_minus();
  const double coefficient =
      (std::pow(hp, l + 1) - std::pow(hm, l + 1)) / (std::numbers::pi * (l + 1));
  const Matrix rhs = coefficient * a *
                     (dec.eigenvectors * xi_values.cast<Complex>().asDiagonal() * dec.eigenvectors.adjoint());

  FlowTraceSides out{lhs, rhs, 0.0};
  const double scale = trace_norm(rhs);
  out.residual = scale == 0.0 ? trace_norm(lhs) : trace_norm(lhs - rhs) / scale;
  return out;
}

inline double check_flow_trace_identity(const ModelSpec& spec, const LineDiscretization& disc,
                                        int m, double lambda, int l, double r,
                                        const FlowTraceOptions& opt = {}) {
  return flow_trace_sides(spec, disc, m, lambda, l, r, opt).residual;
}

struct EpsilonInvarianceReport {
  std::vector<double> epsilons;
  std::vector<double> values;
  double spread = 0.0;  // (max - min) / max |value|
};

/// Homological index at each eps on one fixed discretization.
inline EpsilonInvarianceReport epsilon_invariance_report(const ModelSpec& spec, int m,
                                                         double lambda,
                                                         const std::vector<double>& epsilons,
                                                         const LineDiscretization& disc,
                                                         const LhsOptions& opt = {false}) {
  coverage::touch(coverage::Op::epsilon_invariance_report);
  if (epsilons.empty()) throw ParameterError("epsilon_invariance_report: empty epsilon list");
  const double smallest = *std::min_element(epsilons.begin(), epsilons.end());
  disc.validate(spec.with_epsilon(smallest).effective_profile());
  EpsilonInvarianceReport rep;
  rep.epsilons = epsilons;
  for (double eps : epsilons)
    rep.values.push_back(homological_index_lhs(spec.with_epsilon(eps), m, lambda, disc, opt).value);
  const auto [lo, hi] = std::minmax_element(rep.values.begin(), rep.values.end());
  double top = 0.0;
  for (double v : rep.values) top = std::max(top, std::abs(v));
  rep.spread = top == 0.0 ? 0.0 : (*hi - *lo) / top;
  return rep;
}

/// The telescoping trap: lambda^m (Tr(lambda + D_+^* D_+)^{-m} - Tr(lambda + D_+ D_+^*)^{-m})
/// from one truncated D_+ = d/dt (x) 1 + 1 (x) D2 + h (x) A. Finite-dimensional
/// isospectrality makes this vanish up to rounding whatever the model.
inline double telescoping_trap_value(const ModelSpec& spec, int m, double lambda,
                                     const LineDiscretization& disc, Index dense_cap = 3000) {
  detail::check_m_lambda(m, lambda, "telescoping_trap_value");
  detail::check_tensor_cap(disc.n, spec.inner_dim, dense_cap);
  const auto inner = build_inner_pair(spec);
  const auto line = build_line_operators(disc);
  const Index d = spec.inner_dim;
  const RealVector h = profile_on_grid(spec, disc);
  const Matrix dplus = kron(line.derivative.cast<Complex>(), Matrix::Identity(d, d)) +
                       kron(Matrix::Identity(disc.n, disc.n), inner.d2.matrix()) +
                       KronDiagonal{h, inner.a.matrix()}.to_dense();
  const HermitianOperator first(Matrix(dplus.adjoint() * dplus));
  const HermitianOperator second(Matrix(dplus * dplus.adjoint()));
  return detail::resolvent_trace_difference(first.eigenvalues(), second.eigenvalues(), lambda, m);
}

} // namespace indexlab

#endif // INDEXLAB_TRACE_FORMULA_HPP
