#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mtem/random.hpp"
#include "mtem/truncation.hpp"
#include "support.hpp"

using namespace mtem;

namespace {

constexpr std::uint64_t kSeed = 99;

// Direct reading of the definition for scalar arguments.
double reference_truncate(double (*f)(double, double), double h, double x, double y) {
  const double s = std::max(std::abs(x), std::abs(y));
  if (s <= h) return f(x, y);
  return (s / h) * f(x * h / s, y * h / s);
}

double cubic(double x, double) { return x * x * x; }

double ex2_lipschitz(double h) { return 5.0 * std::pow(h, 4) + 4.0; }

}  // namespace

TEST(Truncate, CubicOutsideTheBall) {
  auto f = [](ConstVec x, ConstVec) { return x[0] * x[0] * x[0]; };
  EXPECT_EQ(truncate(f, 2.0, Vector{4.0}, Vector{0.0}), 16.0);
}

TEST(Truncate, InsideTheBallIsUnchanged) {
  const auto p = example2();
  auto f = [&](ConstVec x, ConstVec y) { return p.drift_at(x, y); };
  for (double x : {-1.9, 0.0, 1.2, 2.0})
    for (double y : {-2.0, 0.3, 1.999}) EXPECT_EQ(truncate(f, 2.0, Vector{x}, Vector{y}), p.drift_at(Vector{x}, Vector{y}));
}

TEST(Truncate, DegreeOneHomogeneousIsFixed) {
  auto f = [](ConstVec x, ConstVec) { return x[0]; };
  for (double x : {-50.0, -3.0, 0.5, 7.0, 1e6})
    for (double h : {0.1, 1.0, 3.0}) EXPECT_NEAR(truncate(f, h, Vector{x}, Vector{2.0 * x}), x, 1e-15 * std::abs(x));
}

TEST(Truncate, AgreesWithDirectDefinitionOnRandomCases) {
  PhiloxStream rng(kSeed, 0, 0, 1);
  auto f = [](ConstVec x, ConstVec y) { return cubic(x[0], y[0]); };
  double worst = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double h = std::pow(10.0, rng.uniform(-1.0, 1.0));
    const double x = h * rng.uniform(-10.0, 10.0);
    const double y = h * rng.uniform(-10.0, 10.0);
    const double want = reference_truncate(cubic, h, x, y);
    const double got = truncate(f, h, Vector{x}, Vector{y});
    if (want != 0.0) worst = std::max(worst, std::abs(got - want) / std::abs(want));
  }
  EXPECT_LE(worst, 1e-14);
}

TEST(Truncate, GateUsesTheMaxOfPerArgumentNorms) {
  // |x| = |y| = 1 < sqrt(2) = |(x, y)|: h = 1.2 keeps the inside branch.
  auto f = [](ConstVec x, ConstVec y) { return Vector{x[0] * x[0] + y[1] * y[1], x[1]}; };
  const Vector x{0.6, 0.8}, y{0.8, -0.6};
  EXPECT_EQ(gate_radius(x, y), 1.0);
  EXPECT_EQ(truncate(f, 1.2, x, y), f(x, y));
  const Vector scaled = truncate(f, 0.5, x, y);
  EXPECT_NEAR(scaled[0], 2.0 * (0.25 * 0.36 + 0.25 * 0.36), 1e-15);
  EXPECT_NEAR(scaled[1], 0.8, 1e-15);
}

TEST(Truncate, MatrixValuesScaleWholesale) {
  const auto p = fixtures::planar_problem();
  auto g = [&](ConstVec x, ConstVec y) { return p.diffusion_at(x, y); };
  const Vector x{3.0, 4.0}, y{0.0, 1.0};
  const Matrix got = truncate(g, 1.0, x, y);
  const Matrix inner = p.diffusion_at(Vector{0.6, 0.8}, Vector{0.0, 0.2});
  for (std::size_t i = 0; i < got.data.size(); ++i) EXPECT_NEAR(got.data[i], 5.0 * inner.data[i], 1e-14);
}

TEST(Truncate, ContinuousAcrossTheBoundary) {
  auto f = [](ConstVec x, ConstVec y) { return x[0] * x[0] * x[0] * x[0] * x[0] + y[0]; };
  const double h = 2.0;
  for (double eps : {1e-4, 1e-6, 1e-8}) {
    const double in = truncate(f, h, Vector{h - eps}, Vector{0.3});
    const double out = truncate(f, h, Vector{h + eps}, Vector{0.3});
    EXPECT_LT(std::abs(out - in), 5.0 * ex2_lipschitz(h) * 2.0 * eps);
  }
}

TEST(Truncate, IdempotentInsideTheBall) {
  auto f = [](ConstVec x, ConstVec y) { return std::sin(x[0]) * y[0] * y[0]; };
  auto once = [&](ConstVec x, ConstVec y) { return truncate(f, 1.5, x, y); };
  for (double x : {-1.4, 0.2, 1.5})
    EXPECT_EQ(truncate(once, 3.0, Vector{x}, Vector{0.7}), f(Vector{x}, Vector{0.7}));
}

TEST(TruncatedCoefficients, ReportWhichBranchFired) {
  const auto p = example2();
  const TruncatedCoefficients c(p, 2.0);
  Vector out(1);
  EXPECT_FALSE(c.drift(Vector{1.0}, Vector{1.5}, out));
  EXPECT_TRUE(c.drift(Vector{1.0}, Vector{2.5}, out));
  EXPECT_EQ(c.level(), 2.0);
}

TEST(HExample2, ClosedFormValue) {
  const double want = std::pow((std::pow(1e-4, -0.9) - 4.0) / 5.0, 0.25);
  EXPECT_DOUBLE_EQ(h_example2(1e-4, 0.9), want);
  EXPECT_NEAR(h_example2(1e-4, 0.9), 5.3107, 1e-4);
}

TEST(HExample2, DomainError) {
  EXPECT_THROW(h_example2(std::pow(4.0, -1.0 / 0.9), 0.9), DomainError);
  EXPECT_THROW(h_example2(0.5, 0.9), DomainError);
  EXPECT_THROW(h_example2(1e-3, 1.0), DomainError);
}

// With L_R = 5 R^4 + 4 the policy makes L_h equal to dt^-eps, so
// L_h^4 dt = dt^{1 - 4 eps}.
TEST(HExample2, LipschitzAtTheLevelIsDeltaToMinusEpsilon) {
  for (int i = 0; i < 20; ++i) {
    const double dt = std::pow(10.0, -2.0 - 6.0 * i / 19.0);
    const double l = ex2_lipschitz(h_example2(dt, 0.9));
    EXPECT_NEAR(l / std::pow(dt, -0.9), 1.0, 1e-9);
    EXPECT_NEAR(std::pow(l, 4) * dt / std::pow(dt, 1.0 - 4.0 * 0.9), 1.0, 1e-9);
  }
}

TEST(HExample1, InverseResidualAndMonotonicity) {
  double prev = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double dt = std::pow(10.0, -2.0 - 6.0 * i / 19.0);
    const double h = h_example1(dt, 0.5);
    const double l = 3.0 * (1.0 + h + h * h) * std::exp(h);
    EXPECT_NEAR(std::pow(h, 0.5) * std::pow(l, 4) * dt, 1.0, 1e-9);
    EXPECT_NEAR(std::pow(l, 4) * dt * std::pow(h, 0.5), 1.0, 1e-9);
    EXPECT_GT(h, prev);
    prev = h;
  }
}

TEST(HExample1, ReferenceValues) {
  EXPECT_NEAR(h_example1(1e-2, 0.5), 0.1435, 1e-4);
  EXPECT_NEAR(h_example1(1e-4, 0.5), 0.5978, 1e-4);
  // h = 1 exactly at dt = 1 / (9e)^4.
  EXPECT_NEAR(h_example1(std::pow(9.0 * std::numbers::e, -4.0), 0.5), 1.0, 1e-12);
}

TEST(HExample1, RejectsBadArguments) {
  EXPECT_THROW(h_example1(0.0, 0.5), DomainError);
  EXPECT_THROW(h_example1(1e-3, 0.0), DomainError);
}

TEST(Policy, DeltaStarIsTheLargestDyadicStepWithHAtLeastOne) {
  const auto p2 = policy_ex2_closed_form(0.9);
  EXPECT_EQ(p2.delta_star, 1.0 / 16.0);
  EXPECT_GE(p2.h(p2.delta_star), 1.0);
  EXPECT_LT(h_example2(1.0 / 8.0, 0.9), 1.0);
  const auto p1 = policy_ex1_inverse(0.5);
  EXPECT_GE(p1.h(p1.delta_star), 1.0);
  EXPECT_LT(p1.h(2.0 * p1.delta_star), 1.0);
  EXPECT_NO_THROW(p1.validate());
  EXPECT_NO_THROW(p2.validate());
}

TEST(Policy, RegistryAndDefaults) {
  EXPECT_EQ(make_policy("ex2-closed-form", 0.9).label, "ex2-closed-form");
  EXPECT_THROW(make_policy("nope", 0.9), UnknownNameError);
  EXPECT_THROW(make_policy("ex1-inverse", 1.2), DomainError);
  EXPECT_EQ(default_policy_for("example1").first, "ex1-inverse");
  EXPECT_EQ(default_policy_for("example2").second, 0.9);
  EXPECT_THROW(policy_ex2_closed_form(0.9).at(0.5), DomainError);
}

TEST(Admissibility, Example2AtNineTenths) {
  const auto pol = policy_ex2_closed_form(0.9);
  const auto r = check_admissibility(pol, ex2_lipschitz, 6.0, 4.0, {1.0 / 16, 1e-2, 1e-3, 1e-4, 1e-6});
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_GT(r.rows.front().delta, r.rows.back().delta);
  // The rate condition reduces to dt^{...} <= h and holds across the grid.
  EXPECT_TRUE(r.rate_condition_holds());
  for (const auto& row : r.rows) EXPECT_NEAR(row.l4_delta, std::pow(row.delta, 1.0 - 3.6), 1e-9 * row.l4_delta);
  EXPECT_FALSE(r.l4_decreasing());
}

TEST(Admissibility, Example2AtOneHalfAtOneMillionth) {
  const auto pol = policy_ex2_closed_form(0.5);
  const auto r = check_admissibility(pol, ex2_lipschitz, 6.0, 4.0, {1e-6});
  // The bound (L_h^8 dt^2)^{-1/2} = dt collapses because L_h = dt^{-1/2}.
  EXPECT_NEAR(r.rows[0].rate_bound, 1e-6, 1e-15);
  EXPECT_NEAR(r.rows[0].h, std::pow((1000.0 - 4.0) / 5.0, 0.25), 1e-12);
  EXPECT_TRUE(r.rows[0].rate_condition);
}

TEST(Admissibility, Example1HoldsForSmallSteps) {
  const auto pol = policy_ex1_inverse(0.5);
  const auto l = example1().lipschitz_of_radius;
  const auto r = check_admissibility(pol, l, 6.0, 4.0, {pol.delta_star, 1e-7, 1e-8, 1e-10});
  EXPECT_TRUE(r.all_hold());
}

TEST(Admissibility, RejectsBadArguments) {
  const auto pol = policy_ex2_closed_form(0.9);
  EXPECT_THROW(check_admissibility(pol, ex2_lipschitz, 6.0, 6.0, {1e-3}), ConfigError);
  EXPECT_THROW(check_admissibility(pol, ex2_lipschitz, 6.0, 4.0, {0.1}), ConfigError);
  EXPECT_THROW(check_admissibility(pol, ex2_lipschitz, 6.0, 4.0, {}), ConfigError);
}

TEST(TruncLipschitz, Example2AtOneThousandth) {
  const auto r = probe_trunc_lipschitz(example2(), policy_ex2_closed_form(0.9), 1e-3, 10000, {kSeed, 1});
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.witness.scalar, h_example2(1e-3, 0.9));
}

TEST(TruncLipschitz, CoincidentPairHasZeroMargin) {
  const TruncatedCoefficients c(example2(), 2.0);
  EXPECT_EQ(trunc_lipschitz_margin(c, Vector{5.0}, Vector{1.0}, Vector{5.0}, Vector{1.0}), 0.0);
}

TEST(TruncKhasminskii, MarginAtTheOrigin) {
  const TruncatedCoefficients c(example1(), 2.0);
  EXPECT_NEAR(trunc_khasminskii_margin(c, Vector{0.0}, Vector{0.0}), 2.0 * (7.0 + std::exp(2.0)) - 5.0, 1e-12);
}

TEST(TruncKhasminskii, Example1AtSmallStep) {
  const auto pol = policy_ex1_inverse(0.5);
  const auto r = probe_trunc_khasminskii(example1(), pol, pol.delta_star / 4.0, 10000, {kSeed, 1});
  EXPECT_EQ(r.violations, 0u);
}

TEST(TruncKhasminskii, Example2AcrossSteps) {
  const auto pol = policy_ex2_closed_form(0.9);
  for (double dt : {1e-2, 1e-3, 1e-4})
    EXPECT_EQ(probe_trunc_khasminskii(example2(), pol, dt, 10000, {kSeed, 1}).violations, 0u) << dt;
}

TEST(TruncProbes, WorkerCountDoesNotChangeReports) {
  const auto pol = policy_ex2_closed_form(0.9);
  const auto a = probe_trunc_lipschitz(example2(), pol, 1e-3, 4000, {kSeed, 1});
  const auto b = probe_trunc_lipschitz(example2(), pol, 1e-3, 4000, {kSeed, 4});
  EXPECT_EQ(a.worst_margin, b.worst_margin);
  EXPECT_EQ(a.witness.index, b.witness.index);
}
