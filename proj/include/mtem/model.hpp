#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "mtem/errors.hpp"
#include "mtem/linalg.hpp"

namespace mtem {

// Coefficient callbacks write into caller-owned buffers so the simulation hot
// loop never allocates.
using DriftFn = std::function<void(ConstVec x, ConstVec y, VecOut out)>;
// Output is the d x n diffusion matrix in row-major order.
using DiffusionFn = std::function<void(ConstVec x, ConstVec y, VecOut out)>;
using NeutralFn = std::function<void(ConstVec y, VecOut out)>;
using InitialPathFn = std::function<void(double theta, VecOut out)>;

struct GrowthBound {
  double r = 2.0;
  double Kbar = 1.0;
};

// Neutral stochastic differential delay equation
//   d[x(t) - D(x(t - tau))] = f(x(t), x(t - tau)) dt + g(x(t), x(t - tau)) dB(t)
// together with the structural constants it declares. Immutable once built.
struct NSDDEProblem {
  std::string name;
  std::size_t dim_x = 1;
  std::size_t dim_w = 1;
  double delay = 1.0;

  DriftFn drift;
  DiffusionFn diffusion;
  NeutralFn neutral;
  InitialPathFn initial_path;

  double contractivity_u = 0.5;
  std::function<double(double)> lipschitz_of_radius;
  double khasminskii_p = 6.0;
  double khasminskii_K = 1.0;
  std::optional<GrowthBound> growth;

  // Throws ConfigError naming the first broken invariant.
  void validate() const {
    if (dim_x == 0 || dim_w == 0) throw ConfigError("problem " + name + ": dimensions must be positive");
    if (!(delay > 0.0)) throw ConfigError("problem " + name + ": delay must be positive");
    if (!drift || !diffusion || !neutral || !initial_path || !lipschitz_of_radius)
      throw ConfigError("problem " + name + ": all coefficient callbacks must be set");
    if (!(contractivity_u > 0.0 && contractivity_u < 1.0))
      throw ConfigError("problem " + name + ": contractivity_u must lie in (0, 1)");
    if (!(khasminskii_p > 2.0)) throw ConfigError("problem " + name + ": khasminskii_p must exceed 2");
    if (!(khasminskii_K > 0.0)) throw ConfigError("problem " + name + ": khasminskii_K must be positive");
    if (growth) {
      if (!(growth->r >= 2.0 && growth->r < khasminskii_p))
        throw ConfigError("problem " + name + ": growth r must satisfy 2 <= r < p");
      if (!(growth->Kbar > 0.0)) throw ConfigError("problem " + name + ": growth Kbar must be positive");
    }
    // Nondecreasing L_R, checked on a coarse log grid.
    double prev = lipschitz_of_radius(1e-3);
    for (double r = 2e-3; r <= 1e3; r *= 2.0) {
      const double cur = lipschitz_of_radius(r);
      if (!(cur >= prev)) throw ConfigError("problem " + name + ": lipschitz_of_radius must be nondecreasing");
      prev = cur;
    }
  }

  Vector drift_at(ConstVec x, ConstVec y) const {
    Vector out(dim_x);
    drift(x, y, out);
    return out;
  }

  Matrix diffusion_at(ConstVec x, ConstVec y) const {
    Matrix out(dim_x, dim_w);
    diffusion(x, y, out.data);
    return out;
  }

  Vector neutral_at(ConstVec y) const {
    Vector out(dim_x);
    neutral(y, out);
    return out;
  }

  Vector initial_at(double theta) const {
    Vector out(dim_x);
    initial_path(theta, out);
    return out;
  }
};

inline InitialPathFn constant_initial_path(Vector value) {
  return [value = std::move(value)](double, VecOut out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = value[i];
  };
}

namespace detail {

inline void half_sine(ConstVec y, VecOut out) { out[0] = 0.5 * std::sin(y[0]); }

}  // namespace detail

// Scalar problem with exponential drift and diffusion:
//   f(x, y) = 2x - x e^{3x} + sin(y)/2,  g(x, y) = sqrt(x^2 e^{3x}/5 + y^2 + 1),
//   D(y) = sin(y)/2, tau = 1.
inline NSDDEProblem example1(double x0 = 1.0) {
  NSDDEProblem p;
  p.name = "example1";
  p.drift = [](ConstVec x, ConstVec y, VecOut out) {
    out[0] = 2.0 * x[0] - x[0] * std::exp(3.0 * x[0]) + 0.5 * std::sin(y[0]);
  };
  p.diffusion = [](ConstVec x, ConstVec y, VecOut out) {
    out[0] = std::sqrt(0.2 * x[0] * x[0] * std::exp(3.0 * x[0]) + y[0] * y[0] + 1.0);
  };
  p.neutral = detail::half_sine;
  p.initial_path = constant_initial_path({x0});
  p.contractivity_u = 0.5;
  p.lipschitz_of_radius = [](double r) { return 3.0 * (1.0 + r + r * r) * std::exp(r); };
  p.khasminskii_p = 6.0;
  p.khasminskii_K = 7.0 + std::numbers::e * std::numbers::e;
  return p;
}

// Scalar problem with quintic drift and cubic diffusion:
//   f(x, y) = 2x - x^5 + sin(y)/2,  g(x, y) = x^3 y / (2 (1 + y^2)),
//   D(y) = sin(y)/2, tau = 1.
inline NSDDEProblem example2(double x0 = 1.0) {
  NSDDEProblem p;
  p.name = "example2";
  p.drift = [](ConstVec x, ConstVec y, VecOut out) {
    const double x2 = x[0] * x[0];
    out[0] = 2.0 * x[0] - x2 * x2 * x[0] + 0.5 * std::sin(y[0]);
  };
  p.diffusion = [](ConstVec x, ConstVec y, VecOut out) {
    out[0] = x[0] * x[0] * x[0] * y[0] / (2.0 * (1.0 + y[0] * y[0]));
  };
  p.neutral = detail::half_sine;
  p.initial_path = constant_initial_path({x0});
  p.contractivity_u = 0.5;
  p.lipschitz_of_radius = [](double r) { return 5.0 * r * r * r * r + 4.0; };
  p.khasminskii_p = 6.0;
  p.khasminskii_K = 5.5;
  p.growth = GrowthBound{3.0, 1.0};
  return p;
}

inline NSDDEProblem make_problem(std::string_view name, double x0 = 1.0) {
  if (name == "example1") return example1(x0);
  if (name == "example2") return example2(x0);
  throw UnknownNameError("unknown problem '" + std::string(name) + "' (known: example1, example2)");
}

}  // namespace mtem
