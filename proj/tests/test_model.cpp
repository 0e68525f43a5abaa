#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mtem/model.hpp"
#include "support.hpp"

using namespace mtem;

namespace {

double scalar_drift(const NSDDEProblem& p, double x, double y) { return p.drift_at(Vector{x}, Vector{y})[0]; }
double scalar_diffusion(const NSDDEProblem& p, double x, double y) {
  return p.diffusion_at(Vector{x}, Vector{y}).data[0];
}

}  // namespace

TEST(Example1, CoefficientsAtTheOrigin) {
  const auto p = example1();
  EXPECT_EQ(scalar_drift(p, 0.0, 0.0), 0.0);
  EXPECT_EQ(scalar_diffusion(p, 0.0, 0.0), 1.0);
}

TEST(Example1, DeclaredLipschitzAtRadiusOne) {
  EXPECT_NEAR(example1().lipschitz_of_radius(1.0), 9.0 * std::numbers::e, 1e-12);
  EXPECT_NEAR(example1().lipschitz_of_radius(1.0), 24.4645, 1e-4);
}

TEST(Example1, DeclaredConstants) {
  const auto p = example1();
  EXPECT_EQ(p.khasminskii_p, 6.0);
  EXPECT_NEAR(p.khasminskii_K, 7.0 + std::exp(2.0), 1e-12);
  EXPECT_EQ(p.contractivity_u, 0.5);
  EXPECT_FALSE(p.growth.has_value());
  EXPECT_NO_THROW(p.validate());
}

TEST(Example2, CoefficientsAtReferencePoints) {
  const auto p = example2();
  EXPECT_EQ(scalar_drift(p, 1.0, 0.0), 1.0);
  EXPECT_EQ(scalar_diffusion(p, 1.0, 1.0), 0.25);
  EXPECT_EQ(p.lipschitz_of_radius(2.0), 84.0);
}

TEST(Example2, DeclaredConstants) {
  const auto p = example2();
  EXPECT_EQ(p.khasminskii_p, 6.0);
  EXPECT_EQ(p.khasminskii_K, 5.5);
  ASSERT_TRUE(p.growth.has_value());
  EXPECT_EQ(p.growth->r, 3.0);
  EXPECT_EQ(p.growth->Kbar, 1.0);
  EXPECT_NO_THROW(p.validate());
}

TEST(Example2, DiffusionFollowsTheProseForm) {
  const auto p = example2();
  for (double x : {-2.0, 0.5, 3.0})
    for (double y : {-1.5, 0.0, 2.0})
      EXPECT_DOUBLE_EQ(scalar_diffusion(p, x, y), x * x * x * y / (2.0 * (1.0 + y * y)));
}

TEST(Problems, NeutralTermIsHalfSine) {
  for (const auto& p : {example1(), example2()}) EXPECT_DOUBLE_EQ(p.neutral_at(Vector{1.2})[0], 0.5 * std::sin(1.2));
}

TEST(Problems, InitialPathIsTheConstantX0) {
  const auto p = example2(3.0);
  for (double theta : {-1.0, -0.3, 0.0}) EXPECT_EQ(p.initial_at(theta)[0], 3.0);
}

TEST(Problems, RegistryLookup) {
  EXPECT_EQ(make_problem("example1").name, "example1");
  EXPECT_EQ(make_problem("example2").name, "example2");
  EXPECT_THROW(make_problem("example3"), UnknownNameError);
}

TEST(Problems, ValidateRejectsBrokenDeclarations) {
  auto p = fixtures::zero_problem();
  EXPECT_NO_THROW(p.validate());
  auto bad_u = p;
  bad_u.contractivity_u = 1.0;
  EXPECT_THROW(bad_u.validate(), ConfigError);
  auto bad_p = p;
  bad_p.khasminskii_p = 2.0;
  EXPECT_THROW(bad_p.validate(), ConfigError);
  auto bad_r = p;
  bad_r.growth = GrowthBound{6.0, 1.0};
  EXPECT_THROW(bad_r.validate(), ConfigError);
  auto bad_l = p;
  bad_l.lipschitz_of_radius = [](double r) { return 1.0 / r; };
  EXPECT_THROW(bad_l.validate(), ConfigError);
  auto missing = p;
  missing.drift = nullptr;
  EXPECT_THROW(missing.validate(), ConfigError);
}

TEST(Problems, MatrixValuedDiffusionIsRowMajor) {
  const auto p = fixtures::planar_problem();
  const Matrix g = p.diffusion_at(Vector{2.0, 3.0}, Vector{5.0, 7.0});
  ASSERT_EQ(g.rows, 2u);
  ASSERT_EQ(g.cols, 3u);
  EXPECT_EQ(g(0, 0), 6.0);
  EXPECT_EQ(g(0, 2), 5.0);
  EXPECT_EQ(g(1, 1), -7.0);
}
