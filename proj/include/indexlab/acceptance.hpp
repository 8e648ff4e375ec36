#ifndef INDEXLAB_ACCEPTANCE_HPP
#define INDEXLAB_ACCEPTANCE_HPP

// Acceptance criteria A1-A11 plus a coverage criterion. Every criterion is a
// list of checks with pinned tolerances; a criterion passes when all of its
// checks pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "coverage.hpp"
#include "harness.hpp"
#include "random.hpp"
#include "resolvent_calculus.hpp"
#include "trace_formula.hpp"

namespace indexlab::acceptance {

struct Check {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct CriterionResult {
  std::string id;
  std::string title;
  std::vector<Check> checks;
  std::string error;  // set when the criterion threw
  double seconds = 0.0;

  bool pass() const {
    return error.empty() && !checks.empty() &&
           std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }

  /// The failing check, else the one closest to its tolerance.
  const Check* worst() const {
    const Check* w = nullptr;
    double score = -std::numeric_limits<double>::infinity();
    for (const auto& c : checks) {
      double s = c.tolerance != 0.0 ? c.measured / std::abs(c.tolerance) : c.measured;
      if (!c.pass) s = std::numeric_limits<double>::infinity();
      if (!w || s > score) {
        w = &c;
        score = s;
      }
    }
    return w;
  }
};

struct Options {
  /// nullopt runs every criterion; an empty list is rejected by the runner.
  std::optional<std::vector<std::string>> criteria;
  /// Replaces the gamma-function value of C_{3/2} inside A1.
  std::optional<double> c_three_halves_override;
  bool verbose = false;
};

namespace detail {

inline Check upper(std::string name, double measured, double tol) {
  const bool ok = std::isfinite(measured) && measured <= tol;
  return {std::move(name), measured, tol, ok};
}

inline double rel(const Matrix& a, const Matrix& b) {
  const double s = b.norm();
  return s == 0.0 ? a.norm() : (a - b).norm() / s;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Inverse of (Delta + alpha(z) + lambda), formed directly.
inline Matrix direct_resolvent(const QuadraticFamily& fam, Complex z) {
  const Index n = fam.dim();
  const Matrix op = fam.laplacian().matrix() + z * fam.t1() + (z * z) * fam.t0() +
                    fam.lambda() * Matrix::Identity(n, n);
  return op.partialPivLu().inverse();
}

inline Matrix direct_power(const QuadraticFamily& fam, Complex z, int m) {
  const Matrix r = direct_resolvent(fam, z);
  Matrix p = r;
  for (int k = 0; k < m; ++k) p = p * r;
  return p;
}

/// l-th derivative by the discrete Cauchy formula on a circle of radius rho.
inline Matrix cauchy_derivative(const QuadraticFamily& fam, Complex z0, int m, int l, double rho = 0.5,
                                int points = 32) {
  Matrix acc = Matrix::Zero(fam.dim(), fam.dim());
  for (int k = 0; k < points; ++k) {
    const Complex w = std::polar(1.0, 2.0 * std::numbers::pi * k / points);
    acc += direct_power(fam, z0 + rho * w, m) * std::pow(w, -l);
  }
  return acc * (std::tgamma(l + 1.0) / (points * std::pow(rho, l)));
}

/// Fourth-order central difference along the real z direction.
inline Matrix central_difference(const QuadraticFamily& fam, Complex z0, int m, double h) {
  return (-direct_power(fam, z0 + 2.0 * h, m) + 8.0 * direct_power(fam, z0 + h, m) -
          8.0 * direct_power(fam, z0 - h, m) + direct_power(fam, z0 - 2.0 * h, m)) /
         (12.0 * h);
}

/// Random 6x6 family with the smallest power-of-two lambda that meets the guard.
inline QuadraticFamily random_family(std::uint64_t seed, Index d = 6) {
  HermitianOperator lap(rnd::psd(d, seed, 2.0));
  const Matrix t1 = rnd::hermitian(d, seed + 1, 0.6);
  const Matrix t0 = rnd::hermitian(d, seed + 2, 0.2);
  for (double lambda = 1.0; lambda < 1e6; lambda *= 2.0) {
    try {
      return QuadraticFamily(lap, t1, t0, lambda);
    } catch (const GuardError&) {
    }
  }
  throw GuardError("no admissible lambda for the random family");
}

inline ModelSpec shifted_full_kink() {
  ModelSpec spec = presets::scalar_full_kink();
  spec.d2 = gen::Scalar{0.5};
  return spec;
}

inline ModelSpec spectral_flow_model(std::uint64_t seed) {
  ModelSpec spec;
  spec.inner_dim = 8;
  spec.d2 = gen::RandomHermitian{seed, 2.0};
  spec.a = gen::ConjugationDifference{seed + 1000};
  spec.profile = Profile::tanh_clamped(0.0, 1.0);
  return spec;
}

// ---- criteria ------------------------------------------------------------

inline std::vector<Check> a1(const Options& opt) {
  std::vector<Check> out;
  auto gamma = [&](int m) {
    if (m == 1 && opt.c_three_halves_override) return *opt.c_three_halves_override;
    return c_constant(m, ConstantMethod::gamma);
  };
  double worst = 0.0;
  for (int m = 1; m <= 8; ++m) {
    const double g = gamma(m);
    worst = std::max(worst, std::abs(g - c_constant(m, ConstantMethod::quadrature)) / std::abs(g));
  }
  out.push_back(upper("gamma vs quadrature, m=1..8 (relative)", worst, 1e-10));
  out.push_back(upper("C_{3/2} - 1/2", std::abs(gamma(1) - 0.5), 1e-12));
  out.push_back(upper("C_{5/2} - 3/4", std::abs(gamma(2) - 0.75), 1e-12));
  return out;
}

inline std::vector<Check> a2(const Options&) {
  std::vector<Check> out;
  double half = 0.0, full = 0.0;
  for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double exact = 1.0 / std::sqrt(1.0 + lambda);
    half = std::max(half, std::abs(rhs_integral(presets::scalar_half_kink(), 1, lambda).value - 0.5 * exact));
    full = std::max(full, std::abs(rhs_integral(presets::scalar_full_kink(), 1, lambda).value - exact));
  }
  out.push_back(upper("half kink RHS vs 0.5(1+lambda)^-1/2", half, 1e-8));
  out.push_back(upper("full kink RHS vs (1+lambda)^-1/2", full, 1e-8));
  return out;
}

inline std::vector<Check> a3(const Options&) {
  std::vector<Check> out;
  const LineDiscretization disc{40.0, 4096};
  const std::vector<double> lambdas{0.5, 1.0, 2.0};
  for (const auto& [name, spec] : {std::pair{"half kink", presets::scalar_half_kink()},
                                   std::pair{"full kink", presets::scalar_full_kink()}}) {
    const auto lhs = homological_index_lhs_sweep(spec, 1, lambdas, disc, LhsOptions{false});
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const double rhs = rhs_integral(spec, 1, lambdas[i]).value;
      out.push_back(upper(std::string(name) + " |LHS-RHS| at lambda=" + fmt(lambdas[i]),
                          std::abs(lhs[i].value - rhs), 1e-3));
    }
  }
  return out;
}

inline std::vector<Check> a4(const Options&) {
  std::vector<Check> out;
  const std::vector<double> rhs_grid{1e-3, 5e-4, 2.5e-4, 1.25e-4};
  const std::vector<double> lhs_grid{0.2, 0.1, 0.05, 0.025};
  for (const auto& [name, spec, limit] : {std::tuple{"half kink", presets::scalar_half_kink(), 0.5},
                                          std::tuple{"full kink", presets::scalar_full_kink(), 1.0}}) {
    const auto r = witten_index_estimate(spec, 1, rhs_grid, WittenSide::rhs);
    out.push_back(upper(std::string(name) + " RHS limit error", std::abs(r.limit - limit), 1e-6));
    const auto l = witten_index_estimate(spec, 1, lhs_grid, WittenSide::lhs, LineDiscretization{});
    out.push_back(upper(std::string(name) + " LHS limit error", std::abs(l.limit - limit), 2e-2));
  }
  return out;
}

inline std::vector<Check> a5(const Options&) {
  std::vector<Check> out;
  double flow_gap = 0.0, lambda_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelSpec spec = spectral_flow_model(seed);
    const int flow = spectral_flow_crossings([&](double r) { return inner_path_operator(spec, r, Side::plus); });
    for (int m : {1, 2})
      for (double lambda : {0.5, 1.0, 5.0}) {
        const double v = rhs_integral(spec, m, lambda).value;
        const double v10 = rhs_integral(spec, m, 10.0 * lambda).value;
        flow_gap = std::max(flow_gap, std::abs(v - flow));
        lambda_gap = std::max(lambda_gap, std::abs(v - v10));
      }
  }
  out.push_back(upper("|RHS - spectral flow| over 5 models", flow_gap, 1e-6));
  out.push_back(upper("|RHS(lambda) - RHS(10 lambda)|", lambda_gap, 1e-6));
  return out;
}

inline std::vector<Check> a6(const Options&) {
  std::vector<Check> out;
  double cauchy = 0.0, central = 0.0;
  const Complex z0(0.25, 0.1);
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    const QuadraticFamily fam = random_family(seed);
    const double h = 1e-3 / std::max(1.0, operator_norm(fam.t1()));
    for (int m = 0; m <= 2; ++m)
      for (int l = 1; l <= 4; ++l) {
        const Matrix d = resolvent_derivative(fam, m, l, z0);
        cauchy = std::max(cauchy, rel(d, cauchy_derivative(fam, z0, m, l)));
        if (l == 1) central = std::max(central, rel(d, central_difference(fam, z0, m, h)));
      }
  }
  out.push_back(upper("resolvent_derivative vs Cauchy-formula oracle (relative)", cauchy, 1e-5));
  out.push_back(upper("first derivative vs 4th-order central difference (relative)", central, 1e-5));

  const IndexCombination expected =
      IndexCombination::basis(MultiIndex{1, 1}, 2) + IndexCombination::basis(MultiIndex{2});
  out.push_back(upper("level-2 combination == 2d(1,1) + d(2)", derivative_combination(2) == expected ? 0.0 : 1.0, 0.0));

  std::uint64_t visited = 0;
  const QuadraticFamily fam = random_family(11);
  bracket_eval(fam, 2, MultiIndex{1, 2}, z0, &visited);
  out.push_back(upper("composition count - C(m+j, j)",
                      std::abs(static_cast<double>(visited) - static_cast<double>(composition_count(5, 3))), 0.0));

  const double lambda = fam.lambda();
  const auto bound = resolvent_bound_check(fam, 0.5, {lambda, 2 * lambda, 4 * lambda, 8 * lambda, 16 * lambda, 32 * lambda});
  double slope = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < 3; ++k)
    if (!bound.identically_zero[k]) slope = std::max(slope, bound.slopes[k]);
  Check c = upper("resolvent bound: max fitted slope (p=1/2)", slope, -0.4);
  c.pass = c.pass && bound.pass;
  out.push_back(c);
  return out;
}

inline std::vector<Check> a7(const Options&) {
  std::vector<Check> out;
  const ModelSpec spec = shifted_full_kink();
  const LineDiscretization coarse{40.0, 256};
  double worst = 0.0;
  for (const MultiIndex& k : {MultiIndex{1}, MultiIndex{2}, MultiIndex{1, 1}, MultiIndex{1, 2}})
    worst = std::max(worst, commutator_correction_check(spec, coarse, 1, k, 1.0));
  out.push_back(upper("commutator correction residual, K in {(1),(2),(1,1),(1,2)}", worst, 1e-9));

  double trace_gap = 0.0, contraction = 0.0;
  const KroneckerShape shape{6, 3};
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Matrix r = rnd::complex_gaussian(18, 18, 500 + s);
    const Matrix p = partial_trace_first(r, shape);
    trace_gap = std::max(trace_gap, std::abs(p.trace() - r.trace()));
    contraction = std::max(contraction, trace_norm(p) / trace_norm(r));
  }
  out.push_back(upper("|Tr((Tr x 1)(R)) - Tr(R)| over 100 samples", trace_gap, 1e-12));
  out.push_back(upper("max ||(Tr x 1)(R)||_1 / ||R||_1", contraction, 1.0));

  const LineDiscretization trap_disc{40.0, 512};
  const double trap = telescoping_trap_value(presets::scalar_full_kink(), 1, 1.0, trap_disc);
  const double honest = homological_index_lhs(presets::scalar_full_kink(), 1, 1.0, trap_disc, LhsOptions{false}).value;
  out.push_back(upper("telescoping trap value (single truncated D_+)", std::abs(trap), 1e-10));
  out.push_back(upper("independent assembly stays away from 0: 0.5 - |LHS|", 0.5 - std::abs(honest), 0.0));

  const HermitianOperator lap(rnd::psd(5, 77));
  const Matrix t = rnd::complex_gaussian(5, 5, 78);
  const Matrix shifted = lap.matrix() + Matrix::Identity(5, 5);
  const Matrix direct = shifted * shifted * t * (shifted * shifted).partialPivLu().inverse();
  out.push_back(upper("sigma^2(T) vs direct product (relative)", rel(sigma_conjugate(lap, t, 2), direct), 1e-10));
  return out;
}

inline std::vector<Check> a8(const Options&) {
  std::vector<Check> out;
  const HermitianOperator x(rnd::hermitian(6, 91, 2.0));
  out.push_back(upper("xi-integral identity, random 6x6, lambda=2, m=2", check_xi_integral_identity(x, 2.0, 2), 1e-8));

  const HermitianOperator h(rnd::psd(5, 92, 2.0));
  const auto& dec = spectral_decompose(h);
  const Matrix rebuilt = dec.eigenvectors * dec.eigenvalues.cast<Complex>().asDiagonal() * dec.eigenvectors.adjoint();
  out.push_back(upper("spectral reconstruction (relative)", rel(rebuilt, h.matrix()), 1e-10));

  const Matrix laplace = laplace_resolvent_power(h, 1.0, 2).matrix();
  out.push_back(upper("Laplace transform vs spectral, m=2", rel(laplace, fractional_resolvent_power(h, 1.0, 3.0).matrix()), 1e-8));

  double frac = 0.0;
  for (double s : {0.5, 1.5, 2.5}) {
    const Matrix a = fractional_resolvent_power(h, 0.7, s, PowerMethod::contour_quadrature).matrix();
    frac = std::max(frac, rel(a, fractional_resolvent_power(h, 0.7, s).matrix()));
  }
  out.push_back(upper("fractional power quadrature vs spectral", frac, 1e-8));
  return out;
}

inline std::vector<Check> a9(const Options&) {
  std::vector<Check> out;
  const ModelSpec spec = presets::scalar_half_kink();
  const double r2048 = check_flow_trace_identity(spec, {40.0, 2048}, 1, 1.0, 0, 0.0);
  const double r4096 = check_flow_trace_identity(spec, {40.0, 4096}, 1, 1.0, 0, 0.0);
  out.push_back(upper("flow-trace residual at n=2048", r2048, 1e-2));
  out.push_back(upper("residual(4096) / residual(2048)", r4096 / r2048, 1.0 - 1e-12));
  return out;
}

inline std::vector<Check> a10(const Options&) {
  std::vector<Check> out;
  const ModelSpec full = presets::scalar_full_kink();
  const auto rep = epsilon_invariance_report(full, 1, 1.0, {1.0, 0.5, 0.25}, {80.0, 8192, 2.0});
  out.push_back(upper("eps spread, eps in {1, 1/2, 1/4}", rep.spread, 2e-2));

  const LineDiscretization gap_disc{80.0, 4096, 1.2};
  std::vector<double> gaps;
  for (double eps : {1.0, 0.5, 0.25, 0.125}) gaps.push_back(adiabatic_isolation_gap(full, gap_disc, 1, 2, eps));
  double ratio = 0.0;
  for (std::size_t i = 0; i + 1 < gaps.size(); ++i) ratio = std::max(ratio, gaps[i + 1] / gaps[i]);
  out.push_back(upper("isolation gap: max gap(eps/2) / gap(eps), l=2", ratio, 1.0 - 1e-12));

  const QuadraticFamily scalar(HermitianOperator::scalar(0.0), Matrix::Constant(1, 1, 0.1),
                               Matrix::Constant(1, 1, 0.1), 4.0);
  const auto series = power_series_check(scalar, Matrix::Identity(1, 1), 1, 10);
  out.push_back(upper("power series error at L=10", series.errors.back(), 1e-8));
  return out;
}

inline std::vector<Check> a11(const Options&) {
  std::vector<Check> out;
  ExperimentConfig c;
  c.experiment = ExperimentKind::converge;
  c.model = presets::scalar_full_kink();
  c.disc = {40.0, 4095, 2.0};
  c.lambda_values = {1.0};
  c.n_ladder = {1024, 2048, 4096};
  c.T_ladder = {20.0, 40.0, 80.0};
  const RunResult r = execute(c);
  std::vector<double> values_n, spacings, errors, tail;
  for (const auto& rec : r.records) {
    if (rec.experiment == "converge/n") {
      errors.push_back(rec.error_estimate);
      spacings.push_back(LineDiscretization{*rec.T, *rec.n}.spacing());
    } else if (rec.experiment == "converge/T") {
      tail.push_back(rec.value);
    }
  }
  double worst = 0.0;
  for (double p : harness_detail::observed_orders(errors, spacings)) worst = std::max(worst, std::abs(p - 2.0));
  out.push_back(upper("|grid order - 2|, n in {1024, 2048, 4096}", worst, 0.5));
  out.push_back(upper("|LHS(T=80) - LHS(T=40)| at fixed spacing", std::abs(tail[2] - tail[1]), 1e-6));
  return out;
}

struct Entry {
  const char* id;
  const char* title;
  double budget_s;
  std::vector<Check> (*run)(const Options&);
};

inline const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries{
      {"A1", "constant C_{m+1/2}", 1.0, a1},
      {"A2", "RHS golden values", 1.0, a2},
      {"A3", "trace formula at desk scale", 60.0, a3},
      {"A4", "Witten limits", 90.0, a4},
      {"A5", "spectral flow", 30.0, a5},
      {"A6", "resolvent-derivative calculus", 30.0, a6},
      {"A7", "algebraic identities", 20.0, a7},
      {"A8", "quadrature identities", 10.0, a8},
      {"A9", "flow-trace identity", 60.0, a9},
      {"A10", "invariance properties", 120.0, a10},
      {"A11", "convergence discipline", 120.0, a11},
  };
  return entries;
}

} // namespace detail

inline std::vector<std::string> all_criteria() {
  std::vector<std::string> ids;
  for (const auto& e : detail::registry()) ids.push_back(e.id);
  ids.push_back("COV");
  return ids;
}

/// Runs one criterion by id. COV checks that every public operation has run
/// in this process, so it belongs at the end of a full run.
inline CriterionResult run_criterion(const std::string& id, const Options& opt = {}) {
  CriterionResult res;
  res.id = id;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (id == "COV") {
      res.title = "operation coverage";
      const auto missing = coverage::untouched();
      std::string names;
      for (auto n : missing) names += (names.empty() ? "" : ", ") + std::string(n);
      res.checks.push_back(detail::upper("operations never exercised" + (names.empty() ? "" : ": " + names),
                                         static_cast<double>(missing.size()), 0.0));
    } else {
      const auto& reg = detail::registry();
      auto it = std::find_if(reg.begin(), reg.end(), [&](const detail::Entry& e) { return id == e.id; });
      if (it == reg.end()) throw ParameterError("unknown criterion '" + id + "'");
      res.title = it->title;
      res.checks = it->run(opt);
      res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      res.checks.push_back(detail::upper("runtime [s]", res.seconds, it->budget_s));
      return res;
    }
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline std::string format_line(const CriterionResult& r) {
  char buf[512];
  const Check* w = r.worst();
  if (!r.error.empty()) {
    std::snprintf(buf, sizeof buf, "%-4s FAIL  error: %s  [%.1f s]", r.id.c_str(), r.error.c_str(), r.seconds);
  } else if (!w) {
    std::snprintf(buf, sizeof buf, "%-4s FAIL  no checks ran", r.id.c_str());
  } else {
    std::snprintf(buf, sizeof buf, "%-4s %s  measured=%.3e  tol=%.3e  %s  [%zu checks, %.1f s]", r.id.c_str(),
                  r.pass() ? "PASS" : "FAIL", w->measured, w->tolerance, w->name.c_str(), r.checks.size(),
                  r.seconds);
  }
  return buf;
}

/// Reads {"criteria": [...], "inject": {"c_three_halves": x}, "verbose": b}.
/// Missing "criteria" selects every criterion.
inline Options parse_options(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("acceptance config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("acceptance config: expected an object");
  Options opt;
  for (const auto& [key, value] : j.items()) {
    if (key == "criteria") {
      if (!value.is_array()) throw ConfigError("acceptance config: criteria: expected an array of ids");
      std::vector<std::string> ids;
      for (const auto& v : value) {
        if (!v.is_string()) throw ConfigError("acceptance config: criteria: expected strings");
        ids.push_back(v.get<std::string>());
      }
      opt.criteria = ids;
    } else if (key == "inject") {
      if (!value.is_object()) throw ConfigError("acceptance config: inject: expected an object");
      for (const auto& [k, v] : value.items()) {
        if (k != "c_three_halves" || !v.is_number())
          throw ConfigError("acceptance config: inject: unknown or non-numeric field '" + k + "'");
        opt.c_three_halves_override = v.get<double>();
      }
    } else if (key == "verbose") {
      if (!value.is_boolean()) throw ConfigError("acceptance config: verbose: expected a boolean");
      opt.verbose = value.get<bool>();
    } else {
      throw ConfigError("acceptance config: unknown field '" + key + "'");
    }
  }
  return opt;
}

/// Runs the selected criteria, printing one line each. Returns 0 when all
/// pass, 1 on any failure, 2 when the selection is empty or unknown.
inline int run(const Options& opt, std::ostream& out = std::cout) {
  const std::vector<std::string> ids = opt.criteria.value_or(all_criteria());
  if (ids.empty()) {
    out << "acceptance: empty criterion list\n";
    return 2;
  }
  const auto known = all_criteria();
  for (const auto& id : ids)
    if (std::find(known.begin(), known.end(), id) == known.end()) {
      out << "acceptance: unknown criterion '" << id << "'\n";
      return 2;
    }
  bool all = true;
  for (const auto& id : ids) {
    const auto r = run_criterion(id, opt);
    out << format_line(r) << std::endl;
    if (opt.verbose)
      for (const auto& c : r.checks)
        out << "       " << (c.pass ? "ok  " : "FAIL") << "  " << c.name << ": " << detail::fmt(c.measured)
            << " (tol " << detail::fmt(c.tolerance) << ")\n";
    all = all && r.pass();
  }
  out << (all ? "acceptance: PASS" : "acceptance: FAIL") << std::endl;
  return all ? 0 : 1;
}

} // namespace indexlab::acceptance

#endif // INDEXLAB_ACCEPTANCE_HPP
