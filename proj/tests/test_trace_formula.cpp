// Both sides of the trace formula and the supporting identities.

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "indexlab/random.hpp"
#include "indexlab/trace_formula.hpp"

using namespace indexlab;

namespace {

// lambda^m C_{m+1/2} (h+ - h-) int_0^1 (lambda + r^2)^{-m-1/2} dr for the scalar kinks,
// from the antiderivatives of (lambda + r^2)^{-3/2} and (lambda + r^2)^{-5/2}.
double scalar_rhs(int m, double lambda, double jump) {
  if (m == 1) return jump * 0.5 * lambda * (1.0 / (lambda * std::sqrt(lambda + 1.0)));
  const double primitive = (2.0 + 3.0 * lambda) / (3.0 * lambda * lambda * std::pow(1.0 + lambda, 1.5));
  return jump * 0.75 * lambda * lambda * primitive;
}

ModelSpec decoupled(ModelSpec spec) {
  spec.a = gen::Scalar{0.0};
  return spec;
}

ModelSpec swapped(ModelSpec spec) {
  const Profile& p = spec.profile;
  spec.profile = p.kind() == ProfileKind::smoothed_step
                     ? Profile::smoothed_step(p.h_plus(), p.h_minus(), p.base_cutoff())
                     : Profile::tanh_clamped(p.h_plus(), p.h_minus(), p.base_cutoff());
  return spec;
}

const LineDiscretization desk{40.0, 4096};

} // namespace

// ---- constants ------------------------------------------------------------

TEST(CConstant, Examples) {
  EXPECT_NEAR(c_constant(1), 0.5, 1e-15);
  EXPECT_NEAR(c_constant(2), 0.75, 1e-15);
  for (int m = 1; m <= 8; ++m) {
    const double g = c_constant(m, ConstantMethod::gamma);
    EXPECT_LE(std::abs(c_constant(m, ConstantMethod::quadrature) - g) / g, 1e-10) << m;
  }
  EXPECT_THROW(c_constant(0), ParameterError);
}

// ---- right side -----------------------------------------------------------

TEST(Rhs, ScalarGolden) {
  for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    EXPECT_NEAR(rhs_integral(presets::scalar_half_kink(), 1, lambda).value, scalar_rhs(1, lambda, 1.0), 1e-8);
    EXPECT_NEAR(rhs_integral(presets::scalar_full_kink(), 1, lambda).value, scalar_rhs(1, lambda, 2.0), 1e-8);
    EXPECT_NEAR(rhs_integral(presets::scalar_full_kink(), 2, lambda).value, scalar_rhs(2, lambda, 2.0), 1e-8);
  }
  EXPECT_NEAR(rhs_integral(presets::scalar_half_kink(), 1, 1.0).value, 0.3535533906, 1e-10);
}

TEST(Rhs, ZeroCouplingAndErrors) {
  EXPECT_EQ(rhs_integral(decoupled(presets::scalar_full_kink()), 1, 1.0).value, 0.0);
  EXPECT_THROW(rhs_integral(presets::scalar_full_kink(), 1, 0.0), ParameterError);
  EXPECT_THROW(rhs_integral(presets::scalar_full_kink(), 0, 1.0), ParameterError);
}

TEST(Rhs, OrientationSwapNegates) {
  for (const ModelSpec& spec : {presets::scalar_half_kink(), presets::scalar_full_kink(), presets::scalar_smoothed_step()})
    for (int m : {1, 2})
      EXPECT_EQ(rhs_integral(swapped(spec), m, 0.7).value, -rhs_integral(spec, m, 0.7).value);
}

// ---- left side ------------------------------------------------------------

TEST(Lhs, ZeroCouplingIsExactlyZero) {
  ModelSpec spec = decoupled(presets::scalar_full_kink());
  spec.inner_dim = 3;
  spec.d2 = gen::Harmonic{};
  EXPECT_EQ(homological_index_lhs(spec, 1, 1.0, {40.0, 256}).value, 0.0);
  EXPECT_EQ(homological_index_lhs(decoupled(presets::scalar_half_kink()), 2, 0.5, {40.0, 512}).value, 0.0);
}

TEST(Lhs, MainTheoremAtDeskScale) {
  const std::vector<double> lambdas{0.5, 1.0, 2.0};
  for (const ModelSpec& spec : {presets::scalar_half_kink(), presets::scalar_full_kink(), presets::scalar_smoothed_step()}) {
    const auto lhs = homological_index_lhs_sweep(spec, 1, lambdas, desk);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const double rhs = rhs_integral(spec, 1, lambdas[i]).value;
      EXPECT_LE(std::abs(lhs[i].value - rhs), std::max(1e-3, 3.0 * lhs[i].error_estimate)) << "lambda=" << lambdas[i];
      EXPECT_GT(lhs[i].error_estimate, 0.0);
    }
  }
}

TEST(Lhs, ScalarClosedForms) {
  EXPECT_NEAR(homological_index_lhs(presets::scalar_half_kink(), 1, 1.0, desk, {false}).value, 1.0 / (2.0 * std::sqrt(2.0)), 1e-3);
  EXPECT_NEAR(homological_index_lhs(presets::scalar_full_kink(), 1, 1.0, desk, {false}).value, 1.0 / std::sqrt(2.0), 1e-3);
  EXPECT_NEAR(homological_index_lhs(presets::scalar_full_kink(), 2, 1.0, desk, {false}).value, scalar_rhs(2, 1.0, 2.0), 1e-3);
}

TEST(Lhs, SweepMatchesSinglePoints) {
  const LineDiscretization disc{40.0, 512};
  const auto sweep = homological_index_lhs_sweep(presets::scalar_full_kink(), 2, {0.5, 3.0}, disc, {false});
  EXPECT_EQ(sweep[1].value, homological_index_lhs(presets::scalar_full_kink(), 2, 3.0, disc, {false}).value);
  EXPECT_EQ(sweep[0].m, 2);
  EXPECT_EQ(sweep[0].disc->n, 512);
}

TEST(Lhs, OrientationSwapNegates) {
  const LineDiscretization disc{40.0, 1024};
  const double full = homological_index_lhs(presets::scalar_full_kink(), 1, 1.0, disc, {false}).value;
  EXPECT_EQ(homological_index_lhs(swapped(presets::scalar_full_kink()), 1, 1.0, disc, {false}).value, -full);
  const double half = homological_index_lhs(presets::scalar_half_kink(), 1, 1.0, disc, {false}).value;
  EXPECT_NEAR(homological_index_lhs(swapped(presets::scalar_half_kink()), 1, 1.0, disc, {false}).value, -half, 1e-9);
}

TEST(Lhs, MonotoneRefinement) {
  const double rhs = scalar_rhs(1, 1.0, 2.0);
  double previous = std::numeric_limits<double>::infinity();
  for (Index n : {1024, 2048, 4096}) {
    const double err = std::abs(homological_index_lhs(presets::scalar_full_kink(), 1, 1.0, {40.0, n}, {false}).value - rhs);
    EXPECT_LT(err, previous) << "n=" << n;
    if (std::isfinite(previous)) EXPECT_GT(previous / err, 3.0);
    previous = err;
  }
}

TEST(Lhs, RejectsBadInput) {
  EXPECT_THROW(homological_index_lhs(presets::scalar_full_kink(), 1, -1.0, {40.0, 256}), ParameterError);
  EXPECT_THROW(homological_index_lhs(presets::scalar_full_kink(), 1, 1.0, {10.0, 256}), ParameterError);
  EXPECT_THROW(homological_index_lhs(presets::scalar_full_kink(), 1, 1.0, {40.0, 256}, {false, 6000, 100}), ResourceError);
}

TEST(Lhs, TelescopingTrapIsAvoided) {
  const LineDiscretization disc{40.0, 512};
  EXPECT_LE(std::abs(telescoping_trap_value(presets::scalar_full_kink(), 1, 1.0, disc)), 1e-10);
  EXPECT_GT(homological_index_lhs(presets::scalar_full_kink(), 1, 1.0, disc, {false}).value, 0.5);
}

// ---- Witten limit ---------------------------------------------------------

TEST(Witten, RhsLimits) {
  const std::vector<double> grid{1e-3, 5e-4, 2.5e-4, 1.25e-4};
  EXPECT_NEAR(witten_index_estimate(presets::scalar_half_kink(), 1, grid, WittenSide::rhs).limit, 0.5, 1e-6);
  EXPECT_NEAR(witten_index_estimate(presets::scalar_full_kink(), 1, grid, WittenSide::rhs).limit, 1.0, 1e-6);
  const auto zero = witten_index_estimate(decoupled(presets::scalar_full_kink()), 1, grid, WittenSide::rhs);
  for (double v : zero.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(zero.limit, 0.0);
}

TEST(Witten, FitBasisOnClosedFormCurve) {
  // 0.5 (1+lambda)^{-1/2} has a lambda^2 term outside the fit basis, so the
  // extrapolation error scales like lambda_max^2
  const std::vector<double> coarse{0.2, 0.1, 0.05, 0.025};
  const std::vector<double> fine{0.05, 0.025, 0.0125, 0.00625};
  const auto a = witten_index_estimate(presets::scalar_half_kink(), 1, coarse, WittenSide::rhs);
  const auto b = witten_index_estimate(presets::scalar_half_kink(), 1, fine, WittenSide::rhs);
  for (std::size_t i = 0; i < coarse.size(); ++i) EXPECT_NEAR(a.values[i], scalar_rhs(1, coarse[i], 1.0), 1e-9);
  const double coarse_err = std::abs(a.limit - 0.5);
  const double fine_err = std::abs(b.limit - 0.5);
  EXPECT_LE(coarse_err, 0.1875 * 0.2 * 0.2);
  EXPECT_LE(fine_err, coarse_err / 10.0);
}

TEST(Witten, GridValidation) {
  EXPECT_THROW(witten_index_estimate(presets::scalar_half_kink(), 1, {0.1, 0.2, 0.05}, WittenSide::rhs), ParameterError);
  EXPECT_THROW(witten_index_estimate(presets::scalar_half_kink(), 1, {0.1, 0.05}, WittenSide::rhs), ParameterError);
}

// ---- spectral flow --------------------------------------------------------

TEST(SpectralFlow, Examples) {
  const HermitianOperator fixed(rnd::hermitian(4, 3));
  EXPECT_EQ(spectral_flow_crossings([&](double) { return fixed; }), 0);
  auto line = [](double r) { return HermitianOperator::scalar(2.0 * r - 1.0); };
  EXPECT_EQ(spectral_flow_crossings(line), 1);
  EXPECT_EQ(spectral_flow_crossings([](double r) { return HermitianOperator::scalar(1.0 - 2.0 * r); }), -1);
  const auto flow = spectral_flow(line);
  ASSERT_EQ(flow.crossings.size(), 1u);
  EXPECT_LE(flow.crossings[0].lower, 0.5);
  EXPECT_GE(flow.crossings[0].upper, 0.5);
  EXPECT_LT(flow.crossings[0].upper - flow.crossings[0].lower, 1e-9);
  EXPECT_EQ(flow.crossings[0].net, 1);
  EXPECT_THROW(spectral_flow_crossings([](double r) { return HermitianOperator::scalar(r); }), DegenerateEndpointError);
}

TEST(SpectralFlow, EqualsRhsForUnitarilyEquivalentEndpoints) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ModelSpec spec;
    spec.inner_dim = 8;
    spec.d2 = gen::RandomHermitian{seed, 2.0};
    spec.a = gen::ConjugationDifference{seed + 50};
    spec.profile = Profile::tanh_clamped(0.0, 1.0);
    const int flow = spectral_flow_crossings([&](double r) { return inner_path_operator(spec, r, Side::plus); });
    for (double lambda : {0.5, 1.0, 5.0}) {
      EXPECT_NEAR(rhs_integral(spec, 1, lambda).value, flow, 1e-6);
      EXPECT_NEAR(rhs_integral(spec, 1, lambda).value, rhs_integral(spec, 1, 10.0 * lambda).value, 1e-6);
    }
  }
}

// ---- quadrature identities ------------------------------------------------

TEST(XiIdentity, Examples) {
  EXPECT_LE(check_xi_integral_identity(HermitianOperator::zero(1), 1.0, 1), 1e-10);
  RealVector d(3);
  d << -2.0, 0.5, 3.0;
  EXPECT_LE(check_xi_integral_identity(HermitianOperator::diagonal(d), 0.7, 2), 1e-9);
  EXPECT_LE(check_xi_integral_identity(HermitianOperator(rnd::hermitian(6, 8, 2.0)), 2.0, 2), 1e-8);
}

TEST(FlowTrace, ScalarHalfKink) {
  const auto sides = flow_trace_sides(presets::scalar_half_kink(), {40.0, 2048}, 1, 1.0, 0, 0.0);
  EXPECT_NEAR(sides.rhs(0, 0).real(), 0.5, 1e-9);
  EXPECT_LE(sides.residual, 1e-2);
  const double coarse = check_flow_trace_identity(presets::scalar_half_kink(), {40.0, 1024}, 1, 1.0, 0, 0.0);
  const double fine = check_flow_trace_identity(presets::scalar_half_kink(), {40.0, 4096}, 1, 1.0, 0, 0.0);
  EXPECT_LE(fine, coarse);
}

TEST(FlowTrace, ConstantProfileBothSidesZero) {
  ModelSpec spec = presets::scalar_half_kink();
  spec.profile = Profile::constant(0.6);
  const auto sides = flow_trace_sides(spec, {40.0, 1024}, 1, 1.0, 0, 0.0);
  EXPECT_EQ(sides.lhs.norm(), 0.0);
  EXPECT_EQ(sides.rhs.norm(), 0.0);
}

// ---- epsilon invariance ---------------------------------------------------

TEST(EpsilonInvariance, ZeroCoupling) {
  const auto rep = epsilon_invariance_report(decoupled(presets::scalar_full_kink()), 1, 1.0, {1.0, 0.5}, {80.0, 512, 2.0});
  for (double v : rep.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(rep.spread, 0.0);
}

TEST(EpsilonInvariance, SpreadShrinksWithRefinement) {
  const std::vector<double> eps{1.0, 0.5, 0.25};
  const auto coarse = epsilon_invariance_report(presets::scalar_full_kink(), 1, 1.0, eps, {80.0, 2048, 2.0});
  const auto fine = epsilon_invariance_report(presets::scalar_full_kink(), 1, 1.0, eps, {80.0, 4096, 2.0});
  EXPECT_LT(fine.spread, coarse.spread);
  EXPECT_LE(fine.spread, 2e-2);
}
