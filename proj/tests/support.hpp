#pragma once

#include <cmath>
#include <string>

#include "mtem/model.hpp"

namespace mtem::fixtures {

// Scalar problem with f = a x, g = s x, D = c sin(y); defaults give the zero
// problem.
inline NSDDEProblem scalar_problem(double a = 0.0, double s = 0.0, double c = 0.0, double x0 = 1.0) {
  NSDDEProblem p;
  p.name = "scalar";
  p.drift = [a](ConstVec x, ConstVec, VecOut out) { out[0] = a * x[0]; };
  p.diffusion = [s](ConstVec x, ConstVec, VecOut out) { out[0] = s * x[0]; };
  p.neutral = [c](ConstVec y, VecOut out) { out[0] = c * std::sin(y[0]); };
  p.initial_path = constant_initial_path({x0});
  p.contractivity_u = 0.5;
  p.lipschitz_of_radius = [a, s](double) { return std::abs(a) + std::abs(s) + 1.0; };
  p.khasminskii_p = 6.0;
  p.khasminskii_K = 1.0;
  return p;
}

inline NSDDEProblem zero_problem(double x0 = 1.0) { return scalar_problem(0.0, 0.0, 0.0, x0); }

// f = -x, g = 0, D = 0.
inline NSDDEProblem decay_problem(double x0 = 1.0) { return scalar_problem(-1.0, 0.0, 0.0, x0); }

// Two-dimensional problem driven by a three-dimensional Brownian motion,
// with a nonlinear drift and a delayed neutral term.
inline NSDDEProblem planar_problem() {
  NSDDEProblem p;
  p.name = "planar";
  p.dim_x = 2;
  p.dim_w = 3;
  p.delay = 0.5;
  p.drift = [](ConstVec x, ConstVec y, VecOut out) {
    out[0] = -x[0] * x[0] * x[0] + 0.3 * y[1];
    out[1] = x[0] - x[1] * (x[1] * x[1] + y[0] * y[0]);
  };
  p.diffusion = [](ConstVec x, ConstVec y, VecOut out) {
    out[0] = x[0] * x[1];
    out[1] = 0.2;
    out[2] = y[0];
    out[3] = 0.1 * x[1] * x[1];
    out[4] = -y[1];
    out[5] = 0.3;
  };
  p.neutral = [](ConstVec y, VecOut out) {
    out[0] = 0.25 * std::sin(y[1]);
    out[1] = 0.2 * std::tanh(y[0]);
  };
  p.initial_path = [](double theta, VecOut out) {
    out[0] = 0.5 + theta;
    out[1] = std::cos(theta);
  };
  p.contractivity_u = 0.5;
  p.lipschitz_of_radius = [](double r) { return 3.0 * r * r + 2.0; };
  p.khasminskii_p = 6.0;
  p.khasminskii_K = 10.0;
  return p;
}

}  // namespace mtem::fixtures
