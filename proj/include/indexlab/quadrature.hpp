#ifndef INDEXLAB_QUADRATURE_HPP
#define INDEXLAB_QUADRATURE_HPP

// Quadrature rules shared by the identity checks: Gauss-Legendre (fixed and
// adaptive), generalized Gauss-Laguerre and a double-exponential rule on the
// real line.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace indexlab::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1].
inline Rule gauss_legendre(std::size_t n) {
  if (n == 0) throw ParameterError("gauss_legendre: n must be positive");
  Rule rule{std::vector<double>(n), std::vector<double>(n)};
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / static_cast<double>(k);
      }
      dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0, p1 = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / static_cast<double>(k);
    }
    dp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

/// Generalized Gauss-Laguerre rule for the weight x^alpha e^{-x} on (0, inf),
/// computed from the Jacobi matrix (Golub-Welsch).
inline Rule gauss_laguerre(std::size_t n, double alpha = 0.0) {
  if (n == 0) throw ParameterError("gauss_laguerre: n must be positive");
  if (alpha <= -1.0) throw ParameterError("gauss_laguerre: alpha must exceed -1");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                 static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    jacobi(i, i) = 2.0 * static_cast<double>(k) + alpha + 1.0;
    if (k + 1 < n) {
      const double kk = static_cast<double>(k + 1);
      const double b = std::sqrt(kk * (kk + alpha));
      jacobi(i, i + 1) = b;
      jacobi(i + 1, i) = b;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  if (eig.info() != Eigen::Success) throw AccuracyError("gauss_laguerre: Jacobi eigensolve failed");
  const double mu0 = std::tgamma(alpha + 1.0);
  Rule rule{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double v0 = eig.eigenvectors()(0, i);
    rule.nodes[k] = eig.eigenvalues()(i);
    rule.weights[k] = mu0 * v0 * v0;
  }
  return rule;
}

/// Double-exponential rule for integrands on the whole real line that decay
/// at least like exp(-decay |u|): u = (pi/2) sinh(x), uniform step in x.
inline Rule sinh_rule(std::size_t points, double decay) {
  if (points < 3) throw ParameterError("sinh_rule: need at least 3 points");
  if (!(decay > 0.0)) throw ParameterError("sinh_rule: decay rate must be positive");
  const double reach = 40.0 / decay;
  const double xmax = std::asinh(2.0 * reach / std::numbers::pi);
  const double step = 2.0 * xmax / static_cast<double>(points - 1);
  Rule rule{std::vector<double>(points), std::vector<double>(points)};
  for (std::size_t k = 0; k < points; ++k) {
    const double x = -xmax + step * static_cast<double>(k);
    rule.nodes[k] = 0.5 * std::numbers::pi * std::sinh(x);
    rule.weights[k] = step * 0.5 * std::numbers::pi * std::cosh(x);
  }
  return rule;
}

template <typename V>
double magnitude(const V& v) {
  if constexpr (std::is_arithmetic_v<V>) {
    return std::abs(v);
  } else if constexpr (std::is_same_v<V, std::complex<double>>) {
    return std::abs(v);
  } else {
    return v.norm();
  }
}

template <typename V>
struct Result {
  V value;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
};

struct AdaptiveOptions {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  std::size_t order = 15;
  int max_depth = 40;
};

namespace detail {

template <typename V, typename F>
V fixed_panel(const F& f, double a, double b, const Rule& rule, std::size_t& evals) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  V sum = f(mid + half * rule.nodes[0]) * (half * rule.weights[0]);
  for (std::size_t k = 1; k < rule.nodes.size(); ++k)
    sum = sum + f(mid + half * rule.nodes[k]) * (half * rule.weights[k]);
  evals += rule.nodes.size();
  return sum;
}

template <typename V, typename F>
V adapt(const F& f, double a, double b, const V& whole, double tol, int depth,
        const AdaptiveOptions& opt, const Rule& rule, std::size_t& evals,
        double& err_total, bool& converged) {
  const double mid = 0.5 * (a + b);
  V left = fixed_panel<V>(f, a, mid, rule, evals);
  V right = fixed_panel<V>(f, mid, b, rule, evals);
  V both = left + right;
  const double err = magnitude<V>(V(both - whole));
  if (err <= tol || depth >= opt.max_depth) {
    if (err > tol) converged = false;
    err_total += err;
    return both;
  }
  V l = adapt<V>(f, a, mid, left, 0.5 * tol, depth + 1, opt, rule, evals, err_total, converged);
  V r = adapt<V>(f, mid, b, right, 0.5 * tol, depth + 1, opt, rule, evals, err_total, converged);
  return l + r;
}

} // namespace detail

/// Adaptive Gauss-Legendre on [a, b] by recursive bisection; the local error
/// is the gap between one panel and its two halves. V may be a scalar or an
/// Eigen matrix.
template <typename V, typename F>
Result<V> adaptive_gauss_legendre(const F& f, double a, double b,
                                  const AdaptiveOptions& opt = {}) {
  const Rule rule = gauss_legendre(opt.order);
  std::size_t evals = 0;
  V whole = detail::fixed_panel<V>(f, a, b, rule, evals);
  double tol = opt.abs_tol;
  if (opt.rel_tol > 0.0) tol = std::max(tol, opt.rel_tol * magnitude<V>(whole));
  double err_total = 0.0;
  bool converged = true;
  V value = detail::adapt<V>(f, a, b, whole, tol, 0, opt, rule, evals, err_total, converged);
  if (!converged)
    throw AccuracyError("adaptive quadrature did not converge; achieved error estimate " +
                        std::to_string(err_total));
  return {value, err_total, evals};
}

/// Integral over the real line through xi = tan(theta), adaptive in theta.
/// Suitable for integrands decaying at least like |xi|^-2.
template <typename V, typename F>
Result<V> integrate_real_line(const F& f, const AdaptiveOptions& opt = {}) {
  const double edge = 0.5 * std::numbers::pi;
  auto g = [&f](double theta) -> V {
    const double c = std::cos(theta);
    return f(std::tan(theta)) * (1.0 / (c * c));
  };
  // stay clear of the poles of tan; the integrand vanishes there
  return adaptive_gauss_legendre<V>(g, -edge + 1e-12, edge - 1e-12, opt);
}

} // namespace indexlab::quad

#endif // INDEXLAB_QUADRATURE_HPP
