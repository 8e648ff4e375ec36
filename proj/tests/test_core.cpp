// Operator substrate, quadrature, profiles and model assembly.

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "indexlab/block_tridiagonal.hpp"
#include "indexlab/model.hpp"
#include "indexlab/operator.hpp"
#include "indexlab/profile.hpp"
#include "indexlab/quadrature.hpp"
#include "indexlab/random.hpp"

using namespace indexlab;
using namespace indexlab::quad;

namespace {

double rel(const Matrix& a, const Matrix& b) {
  const double s = b.norm();
  return s == 0.0 ? a.norm() : (a - b).norm() / s;
}

Matrix diag(std::initializer_list<double> v) {
  RealVector d(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) d(i++) = x;
  return d.cast<Complex>().asDiagonal();
}

Matrix pauli_x() {
  Matrix p(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;
  return p;
}

} // namespace

// ---- hermitian operators --------------------------------------------------

TEST(Hermitian, SpectralDecomposeExamples) {
  EXPECT_TRUE(spectral_decompose(HermitianOperator::identity(3)).eigenvalues.isApprox(RealVector::Ones(3)));
  const RealVector d = spectral_decompose(HermitianOperator(diag({3, 1, 2}))).eigenvalues;
  EXPECT_NEAR(d(0), 1.0, 1e-14);
  EXPECT_NEAR(d(1), 2.0, 1e-14);
  EXPECT_NEAR(d(2), 3.0, 1e-14);
  const RealVector p = spectral_decompose(HermitianOperator(pauli_x())).eigenvalues;
  EXPECT_NEAR(p(0), -1.0, 1e-14);
  EXPECT_NEAR(p(1), 1.0, 1e-14);
}

TEST(Hermitian, DecompositionInvariants) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const HermitianOperator h(rnd::hermitian(7, seed));
    const auto& dec = spectral_decompose(h);
    const Matrix& u = dec.eigenvectors;
    EXPECT_LT(rel(u * dec.eigenvalues.cast<Complex>().asDiagonal() * u.adjoint(), h.matrix()), 1e-10);
    EXPECT_LT((u.adjoint() * u - Matrix::Identity(7, 7)).norm(), 1e-10);
    for (Index i = 1; i < 7; ++i) EXPECT_LE(dec.eigenvalues(i - 1), dec.eigenvalues(i));
  }
}

TEST(Hermitian, DecompositionIsCachedAndShared) {
  const HermitianOperator h(rnd::hermitian(4, 3));
  EXPECT_FALSE(h.has_decomposition());
  const HermitianOperator copy = h;
  const auto* first = &spectral_decompose(h);
  EXPECT_TRUE(copy.has_decomposition());
  EXPECT_EQ(first, &spectral_decompose(copy));
}

TEST(Hermitian, AsymmetryPolicy) {
  Matrix m = rnd::hermitian(4, 5);
  Matrix tiny = m;
  tiny(0, 1) += 1e-14;
  const HermitianOperator ok(tiny);
  EXPECT_EQ(ok.matrix(), ok.matrix().adjoint());

  int warnings = 0;
  auto previous = set_warning_handler([&](std::string_view) { ++warnings; });
  Matrix middle = m;
  middle(0, 1) += 1e-10;
  HermitianOperator warned(middle);
  set_warning_handler(previous);
  EXPECT_EQ(warnings, 1);

  Matrix bad = m;
  bad(0, 1) += 1e-3;
  EXPECT_THROW(HermitianOperator{bad}, ParameterError);
  EXPECT_THROW(HermitianOperator{Matrix(2, 3)}, DimensionError);
}

TEST(MatrixFunction, Examples) {
  const auto root = matrix_function(HermitianOperator(diag({1, 4, 9})), [](double x) { return std::sqrt(x); });
  EXPECT_LT(rel(root.matrix(), diag({1, 2, 3})), 1e-14);
  const auto sq = matrix_function(HermitianOperator(pauli_x()), [](double x) { return x * x; });
  EXPECT_LT(rel(sq.matrix(), Matrix::Identity(2, 2)), 1e-14);
  EXPECT_THROW(matrix_function(HermitianOperator(diag({-1, 1})), [](double x) { return std::log(x); }), DomainError);
}

TEST(MatrixFunction, IdentityMapReturnsInput) {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    const HermitianOperator h(rnd::hermitian(1 + static_cast<Index>(seed % 9), seed, 3.0));
    EXPECT_LT(rel(matrix_function(h, [](double x) { return x; }).matrix(), h.matrix()), 1e-10);
  }
}

// ---- fractional powers ----------------------------------------------------

TEST(FractionalPower, Examples) {
  EXPECT_NEAR(fractional_resolvent_power(HermitianOperator::zero(1), 4.0, 0.5).matrix()(0, 0).real(), 0.5, 1e-15);
  EXPECT_LT(rel(fractional_resolvent_power(HermitianOperator(diag({0, 3})), 1.0, 1.5).matrix(), diag({1, 0.125})), 1e-14);
  EXPECT_THROW(fractional_resolvent_power(HermitianOperator::zero(1), 0.0, 1.0), ParameterError);
  EXPECT_THROW(fractional_resolvent_power(HermitianOperator::identity(1), -1.0, 1.0), ParameterError);
}

TEST(FractionalPower, QuadratureAgreesWithSpectral) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const HermitianOperator h(rnd::psd(5, seed, 3.0));
    for (double s : {0.25, 0.5, 1.0, 1.5, 2.75}) {
      const auto a = fractional_resolvent_power(h, 0.5, s, PowerMethod::contour_quadrature);
      EXPECT_LT(rel(a.matrix(), fractional_resolvent_power(h, 0.5, s).matrix()), 1e-8) << "s=" << s;
    }
  }
}

TEST(FractionalPower, SemigroupLaw) {
  const HermitianOperator h(rnd::psd(6, 44, 2.0));
  for (double s : {0.5, 1.0, 1.5})
    for (double t : {0.5, 1.0, 1.5}) {
      const Matrix lhs = fractional_resolvent_power(h, 0.8, s).matrix() * fractional_resolvent_power(h, 0.8, t).matrix();
      EXPECT_LT(rel(lhs, fractional_resolvent_power(h, 0.8, s + t).matrix()), 1e-9);
    }
}

// ---- Schatten norms -------------------------------------------------------

TEST(Schatten, Examples) {
  EXPECT_NEAR(schatten_norm(Matrix::Identity(3, 3), 1.0), 3.0, 1e-14);
  EXPECT_NEAR(schatten_norm(diag({3, -4}), 2.0), 5.0, 1e-14);
  EXPECT_THROW(schatten_norm(Matrix::Identity(2, 2), 0.5), ParameterError);
}

TEST(Schatten, HoelderAndMonotonicity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix r = rnd::complex_gaussian(4, 4, 100 + seed);
    const Matrix s = rnd::complex_gaussian(4, 4, 200 + seed);
    EXPECT_LE(trace_norm(r * s), schatten_norm(r, 2.0) * schatten_norm(s, 2.0) * (1 + 1e-12));

    const Matrix t = r / operator_norm(r);
    double previous = std::numeric_limits<double>::infinity();
    for (double q : {1.0, 1.5, 2.0, 3.0, 8.0}) {
      const double v = schatten_norm(t, q);
      EXPECT_LE(v, previous * (1 + 1e-12));
      EXPECT_GE(v, operator_norm(t) * (1 - 1e-12));
      previous = v;
    }
  }
}

// ---- partial trace --------------------------------------------------------

TEST(PartialTrace, Examples) {
  const Matrix s = rnd::complex_gaussian(3, 3, 9);
  EXPECT_LT(rel(partial_trace_first(kron(Matrix::Identity(2, 2), s), {2, 3}), 2.0 * s), 1e-15);
  EXPECT_LT(partial_trace_first(kron(diag({1, -1}), s), {2, 3}).norm(), 1e-15);
  const Matrix t = rnd::complex_gaussian(4, 4, 10);
  EXPECT_LT(rel(partial_trace_first(kron(t, s), {4, 3}), t.trace() * s), 1e-13);
  EXPECT_THROW(partial_trace_first(Matrix::Identity(5, 5), {2, 3}), DimensionError);
}

TEST(PartialTrace, FactorizationAndContractivity) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Matrix r = rnd::complex_gaussian(18, 18, 1000 + seed);
    const Matrix p = partial_trace_first(r, {6, 3});
    EXPECT_LT(std::abs(p.trace() - r.trace()), 1e-12);
    EXPECT_LE(trace_norm(p), trace_norm(r) * (1 + 1e-12));
  }
}

// ---- commutators and sigma ------------------------------------------------

TEST(Commutator, Examples) {
  const HermitianOperator h(rnd::psd(4, 21));
  const Matrix t = rnd::complex_gaussian(4, 4, 22);
  EXPECT_EQ(iterated_commutator(h, t, 0), t);
  const HermitianOperator d(diag({1, 2, 5}));
  EXPECT_LT(iterated_commutator(d, diag({7, -1, 3}), 1).norm(), 1e-14);
  EXPECT_LT(iterated_commutator(d, diag({7, -1, 3}), 3).norm(), 1e-14);

  const Matrix root = psd_sqrt(h).matrix();
  const Matrix expanded = h.matrix() * t + t * h.matrix() - 2.0 * root * t * root;
  EXPECT_LT(rel(iterated_commutator(h, t, 2), expanded), 1e-10);
  EXPECT_THROW(iterated_commutator(h, t, -1), ParameterError);
}

TEST(Sigma, Examples) {
  const HermitianOperator lap(rnd::psd(5, 31));
  const Matrix t = rnd::complex_gaussian(5, 5, 32);
  EXPECT_EQ(sigma_conjugate(lap, t, 0), t);

  const auto& dec = spectral_decompose(lap);
  const Matrix commuting = dec.eigenvectors * diag({1, -2, 3, 0.5, 4}) * dec.eigenvectors.adjoint();
  EXPECT_LT(rel(sigma_conjugate(lap, commuting, 1), commuting), 1e-12);

  const Matrix shifted = lap.matrix() + Matrix::Identity(5, 5);
  const Matrix direct = shifted * t * shifted.inverse();
  EXPECT_NEAR(operator_norm(sigma_conjugate(lap, t, 1)), operator_norm(direct), 1e-10 * operator_norm(direct));
}

TEST(TraceOfProduct, MatchesProductTrace) {
  const Matrix x = rnd::complex_gaussian(6, 6, 41);
  const Matrix y = rnd::complex_gaussian(6, 6, 42);
  EXPECT_LT(std::abs(trace_of_product(x, y) - (x * y).trace()), 1e-12);
}

// ---- quadrature -----------------------------------------------------------

TEST(Quadrature, GaussLegendreIsExactOnPolynomials) {
  const auto rule = gauss_legendre(10);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * std::pow(rule.nodes[k], 18);
  EXPECT_NEAR(s, 2.0 / 19.0, 1e-14);
}

TEST(Quadrature, GeneralizedLaguerreMoments) {
  const auto rule = gauss_laguerre(40, 2.0);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * rule.nodes[k];
  EXPECT_NEAR(s, std::tgamma(4.0), 1e-10);
}

TEST(Quadrature, AdaptiveAndRealLine) {
  const auto r = adaptive_gauss_legendre<double>([](double x) { return std::exp(-x) * std::cos(3 * x); }, 0.0, 2.0);
  const double exact = (1.0 - std::exp(-2.0) * (std::cos(6.0) - 3.0 * std::sin(6.0))) / 10.0;
  EXPECT_NEAR(r.value, exact, 1e-12);
  const auto line = integrate_real_line<double>([](double x) { return 1.0 / ((1 + x * x) * (1 + x * x)); });
  EXPECT_NEAR(line.value, std::numbers::pi / 2.0, 1e-10);
}

// ---- profiles -------------------------------------------------------------

TEST(Profile, ConstantTailsAndCompactDerivative) {
  for (const Profile& p : {Profile::tanh_clamped(0.0, 1.0), Profile::tanh_clamped(-1.0, 1.0),
                           Profile::smoothed_step(-0.5, 1.0), Profile::tanh_clamped(0.0, 1.0, 3.0)}) {
    for (double t : {1.0, 1.5, 4.0, 100.0}) {
      EXPECT_EQ(p.value(t * p.cutoff()), p.h_plus());
      EXPECT_EQ(p.value(-t * p.cutoff()), p.h_minus());
      EXPECT_EQ(p.derivative(t * p.cutoff()), 0.0);
      EXPECT_EQ(p.derivative(-t * p.cutoff()), 0.0);
    }
    EXPECT_NE(p.derivative(0.0), 0.0);
  }
}

TEST(Profile, DerivativeMatchesDifferenceQuotient) {
  const Profile p = Profile::tanh_clamped(-1.0, 1.0);
  for (double t = -9.0; t <= 9.0; t += 0.37) {
    const double h = 1e-5;
    EXPECT_NEAR(p.derivative(t), (p.value(t + h) - p.value(t - h)) / (2 * h), 1e-8) << t;
  }
}

TEST(Profile, EpsilonRescaling) {
  const Profile p = Profile::smoothed_step(-0.5, 1.0);
  for (double eps : {1.0, 0.5, 0.25, 0.125}) {
    const Profile q = p.rescaled(eps);
    EXPECT_DOUBLE_EQ(q.cutoff(), p.cutoff() / eps);
    for (double t = -70.0; t <= 70.0; t += 1.3) {
      EXPECT_NEAR(q.value(t), p.value(eps * t), 1e-15);
      EXPECT_NEAR(q.derivative(t), eps * p.derivative(eps * t), 1e-15);
    }
  }
}

// ---- line operators -------------------------------------------------------

TEST(LineOperators, ThreePointStencil) {
  const auto ops = build_line_operators({2.0, 3});
  EXPECT_DOUBLE_EQ(ops.spacing, 1.0);
  RealMatrix expected(3, 3);
  expected << 2, -1, 0, -1, 2, -1, 0, -1, 2;
  EXPECT_EQ(ops.laplacian.to_dense().real(), expected);
  EXPECT_EQ(ops.derivative + ops.derivative.transpose(), RealMatrix::Zero(3, 3));
  EXPECT_THROW(build_line_operators({2.0, 2}), ParameterError);
}

TEST(LineOperators, LowestDirichletEigenvalue) {
  const auto ops = build_line_operators({2.0, 512});
  const double exact = std::pow(std::numbers::pi / 4.0, 2);
  EXPECT_NEAR(ops.laplacian.eigenvalues()(0), exact, 0.01 * exact);
}

TEST(BlockTridiagonal, SolversMatchDense) {
  ModelSpec spec;
  spec.inner_dim = 3;
  spec.d2 = gen::RandomHermitian{5, 1.0};
  spec.a = gen::RandomHermitian{6, 1.0};
  const LineDiscretization disc{10.0, 40, 1.0};
  const auto pair = assemble_schroedinger_pair(spec, disc);
  const Matrix dense = pair.plus.to_dense();
  const double shift = 2.0 - std::min(0.0, pair.plus.eigenvalues()(0));
  const Index d = pair.plus.block_dim();
  const Index n = pair.plus.blocks();
  // block-column layout: column t holds the line site t, matching index t * d + i
  const Matrix b = rnd::complex_gaussian(d, n, 7);
  const Matrix flat_b = b.reshaped();
  const Matrix x = BlockTridiagonalSolver(pair.plus, shift).solve(b);
  const Matrix flat_x = x.reshaped();
  EXPECT_LT(rel((dense + shift * Matrix::Identity(dense.rows(), dense.rows())) * flat_x, flat_b), 1e-12);
  const Matrix hb = pair.plus.apply(b);
  const Matrix flat_hb = hb.reshaped();
  EXPECT_LT(rel(flat_hb, dense * flat_b), 1e-13);
}

// ---- model assembly -------------------------------------------------------

TEST(Model, InnerPairExamples) {
  const auto scalar = build_inner_pair(presets::scalar_half_kink());
  EXPECT_EQ(scalar.d2.matrix()(0, 0), Complex(0.0));
  EXPECT_EQ(scalar.a.matrix()(0, 0), Complex(1.0));

  ModelSpec spec;
  spec.inner_dim = 5;
  spec.d2 = gen::DiagonalLinear{2};
  EXPECT_EQ(build_inner_pair(spec).d2.matrix(), diag({-2, -1, 0, 1, 2}));

  spec.a = gen::RandomHermitian{99, 1.0};
  EXPECT_EQ(build_inner_pair(spec).a.matrix(), build_inner_pair(spec).a.matrix());
  spec.a = gen::ConjugationDifference{4};
  const auto conj = build_inner_pair(spec);
  const RealVector before = conj.d2.eigenvalues();
  const RealVector after = HermitianOperator(Matrix(conj.d2.matrix() + conj.a.matrix())).eigenvalues();
  EXPECT_LT((before - after).norm(), 1e-12);
}

TEST(Model, ZeroCouplingGivesEqualOperators) {
  ModelSpec spec = presets::scalar_full_kink();
  spec.inner_dim = 3;
  spec.d2 = gen::Harmonic{};
  spec.a = gen::Scalar{0.0};
  const LineDiscretization disc{40.0, 64};
  const auto pair = assemble_schroedinger_pair(spec, disc);
  const Matrix minus = pair.minus.to_dense();
  EXPECT_EQ(minus, pair.plus.to_dense());
  const auto ops = build_line_operators(disc);
  const Matrix d2 = build_inner_pair(spec).d2.matrix();
  const Matrix expected = kron(ops.laplacian.to_dense(), Matrix::Identity(3, 3)) +
                          kron(Matrix::Identity(64, 64), d2 * d2);
  EXPECT_LT(rel(minus, expected), 1e-14);
}

TEST(Model, ScalarPairIsStencilPlusDiagonal) {
  const ModelSpec spec = presets::scalar_half_kink();
  const LineDiscretization disc{40.0, 128};
  const auto pair = assemble_schroedinger_pair(spec, disc);
  const auto ops = build_line_operators(disc);
  const RealVector t = disc.grid();
  const Profile p = spec.effective_profile();
  RealVector hm(t.size()), hp(t.size());
  for (Index i = 0; i < t.size(); ++i) {
    hm(i) = p(t(i)) * p(t(i)) - p.derivative(t(i));
    hp(i) = p(t(i)) * p(t(i)) + p.derivative(t(i));
  }
  const Matrix lap = ops.laplacian.to_dense();
  EXPECT_LT(rel(pair.minus.to_dense(), lap + Matrix(hm.cast<Complex>().asDiagonal())), 1e-14);
  EXPECT_LT(rel(pair.plus.to_dense(), lap + Matrix(hp.cast<Complex>().asDiagonal())), 1e-14);
}

TEST(Model, DifferenceEqualsF) {
  ModelSpec spec;
  spec.inner_dim = 3;
  spec.d2 = gen::RandomHermitian{1, 1.0};
  spec.a = gen::Banded{1, 0.5, 0.2};
  for (double eps : {1.0, 0.5}) {
    const ModelSpec s = spec.with_epsilon(eps);
    const LineDiscretization disc{40.0, 50, 1.0};
    const auto pair = assemble_schroedinger_pair(s, disc);
    const Matrix f = assemble_F(s, disc).to_dense();
    EXPECT_LE((pair.plus.to_dense() - pair.minus.to_dense() - f).cwiseAbs().maxCoeff(), 1e-14 * f.cwiseAbs().maxCoeff());
  }
  spec.profile = Profile::constant(0.7);
  EXPECT_EQ(assemble_F(spec, {40.0, 50}).to_dense(), Matrix::Zero(150, 150));
}

TEST(Model, WeightedFTraceNormStaysBounded) {
  const ModelSpec spec = presets::scalar_full_kink();
  std::vector<double> v;
  for (double eps : {1.0, 0.5, 0.25}) v.push_back(weighted_F_trace_norm(spec.with_epsilon(eps), {80.0, 1024, 2.0}, 1));
  for (double x : v) EXPECT_LT(x, 2.0 * v.front());
}

TEST(Model, InnerPathExamples) {
  ModelSpec spec;
  spec.inner_dim = 4;
  spec.d2 = gen::RandomHermitian{3, 1.0};
  spec.a = gen::RandomHermitian{4, 1.0};
  spec.profile = Profile::tanh_clamped(-0.5, 2.0);
  const auto inner = build_inner_pair(spec);
  EXPECT_EQ(inner_path_operator(spec, 0.0, Side::plus).matrix(), inner.d2.matrix());
  EXPECT_LT(rel(inner_path_operator(spec, 1.0, Side::plus).matrix(), inner.d2.matrix() + 2.0 * inner.a.matrix()), 1e-15);
  EXPECT_LT(rel(inner_path_operator(spec, 1.0, Side::minus).matrix(), inner.d2.matrix() - 0.5 * inner.a.matrix()), 1e-15);
  EXPECT_NEAR(inner_path_operator(presets::scalar_half_kink(), 0.5, Side::plus).matrix()(0, 0).real(), 0.5, 1e-15);
}

TEST(Model, Validation) {
  const Profile p = presets::scalar_full_kink().effective_profile();
  EXPECT_THROW((LineDiscretization{20.0, 4096}.validate(p)), ParameterError);
  EXPECT_NO_THROW((LineDiscretization{40.0, 4096}.validate(p)));
  EXPECT_THROW((LineDiscretization{40.0, 8}.validate(p)), ParameterError);
  ModelSpec bad;
  bad.d2 = gen::ConjugationDifference{1};
  EXPECT_THROW(build_inner_pair(bad), ConfigError);
  EXPECT_THROW(tensor_laplacian(presets::scalar_full_kink(), {40.0, 64}, 32), ResourceError);
}

TEST(Model, SummabilityDiagnostic) {
  ModelSpec spec;
  spec.inner_dim = 13;
  spec.d2 = gen::DiagonalLinear{6};
  spec.a = gen::Banded{1, 1.0, 0.0};
  const auto v = summability_profile(spec, 1.0, 1.0, {1.0, 2.0, 4.0});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_GE(v[0], v[1]);
  EXPECT_GE(v[1], v[2]);
}
