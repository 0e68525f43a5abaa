#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mtem/errors.hpp"
#include "mtem/io.hpp"
#include "mtem/linalg.hpp"
#include "mtem/model.hpp"
#include "mtem/paths.hpp"
#include "mtem/truncation.hpp"

namespace mtem {

// Discrete states X_k, k = -m .. N, of one run on a coarse mesh.
struct PathSolution {
  MeshSpec mesh;
  std::size_t dim = 1;
  std::vector<double> states;  // node k stored at offset (k + m) * dim
  std::optional<double> h_value;
  std::size_t truncation_activations = 0;
  std::vector<std::uint8_t> truncated;  // per step k in [0, N)

  long first_index() const { return -static_cast<long>(mesh.steps_per_delay); }
  long last_index() const { return static_cast<long>(mesh.total_steps); }

  ConstVec state(long k) const {
    if (k < first_index() || k > last_index())
      throw ConfigError("state index " + std::to_string(k) + " outside [" + std::to_string(first_index()) + ", " +
                        std::to_string(last_index()) + "]");
    return ConstVec(states).subspan(static_cast<std::size_t>(k - first_index()) * dim, dim);
  }
  ConstVec final_state() const { return state(last_index()); }
};

struct StepWorkspace {
  Vector neutral_next, neutral_prev, drift;
  Vector diffusion;  // d x n row-major

  StepWorkspace(std::size_t d, std::size_t n) : neutral_next(d), neutral_prev(d), drift(d), diffusion(d * n) {}
};

// One step of
//   X_{k+1} = D(X_{k+1-m}) + X_k - D(X_{k-m}) + f_h(X_k, X_{k-m}) dt + g_h(X_k, X_{k-m}) dB_k.
// Coeffs is TruncatedCoefficients or PlainCoefficients. Returns whether the
// outside-ball branch fired for f or g; throws DivergenceError(step) on a
// non-finite result.
template <class Coeffs>
bool mtem_step(ConstVec x_k, ConstVec x_km, ConstVec x_k1m, const Coeffs& coeffs, double dt, ConstVec dB,
               VecOut next, StepWorkspace& ws, std::size_t step = 0) {
  const NSDDEProblem& p = coeffs.base();
  const std::size_t d = x_k.size();
  const std::size_t n = dB.size();
  p.neutral(x_k1m, ws.neutral_next);
  p.neutral(x_km, ws.neutral_prev);
  const bool fired_f = coeffs.drift(x_k, x_km, ws.drift);
  const bool fired_g = coeffs.diffusion(x_k, x_km, ws.diffusion);
  for (std::size_t i = 0; i < d; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < n; ++j) noise += ws.diffusion[i * n + j] * dB[j];
    next[i] = ws.neutral_next[i] + x_k[i] - ws.neutral_prev[i] + ws.drift[i] * dt + noise;
  }
  if (!all_finite(next)) throw DivergenceError(step, "scheme diverged");
  return fired_f || fired_g;
}

// Runs the recursion k = 0 .. N-1 on `mesh` driven by `increments`
// (step-major, N * n values).
template <class Coeffs>
PathSolution simulate_path(const Coeffs& coeffs, const MeshSpec& mesh, ConstVec increments) {
  const NSDDEProblem& p = coeffs.base();
  const std::size_t d = p.dim_x;
  const std::size_t n = p.dim_w;
  const std::size_t m = mesh.steps_per_delay;
  const std::size_t N = mesh.total_steps;
  if (mesh.delay != p.delay) throw ConfigError("simulate: mesh delay differs from the problem delay");
  if (increments.size() != N * n)
    throw ConfigError("simulate: expected " + std::to_string(N * n) + " increments, got " +
                      std::to_string(increments.size()));

  PathSolution sol;
  sol.mesh = mesh;
  sol.dim = d;
  sol.h_value = coeffs.h_value();
  sol.states.assign((m + N + 1) * d, 0.0);
  sol.truncated.assign(N, 0);
  for (std::size_t i = 0; i <= m; ++i) {
    const long k = static_cast<long>(i) - static_cast<long>(m);
    const double theta = std::max(static_cast<double>(k) * mesh.dt, -p.delay);
    p.initial_path(theta, VecOut(sol.states).subspan(i * d, d));
  }

  StepWorkspace ws(d, n);
  const double* base = sol.states.data();
  for (std::size_t k = 0; k < N; ++k) {
    // node j lives at offset (j + m) * d
    const ConstVec x_k(base + (k + m) * d, d);
    const ConstVec x_km(base + k * d, d);
    const ConstVec x_k1m(base + (k + 1) * d, d);
    const VecOut next(sol.states.data() + (k + m + 1) * d, d);
    if (mtem_step(x_k, x_km, x_k1m, coeffs, mesh.dt, increments.subspan(k * n, n), next, ws, k)) {
      sol.truncated[k] = 1;
      ++sol.truncation_activations;
    }
  }
  return sol;
}

inline PathSolution simulate_mtem(const NSDDEProblem& problem, const TruncationPolicy& policy, const MeshSpec& mesh,
                                  ConstVec increments) {
  const TruncatedCoefficients coeffs(problem, policy.at(mesh.dt));
  return simulate_path(coeffs, mesh, increments);
}

inline PathSolution simulate_mtem(const NSDDEProblem& problem, const TruncationPolicy& policy,
                                  const BrownianGrid& grid) {
  return simulate_mtem(problem, policy, grid.mesh(), grid.increments());
}

inline PathSolution simulate_em(const NSDDEProblem& problem, const MeshSpec& mesh, ConstVec increments) {
  return simulate_path(PlainCoefficients(problem), mesh, increments);
}

inline PathSolution simulate_em(const NSDDEProblem& problem, const BrownianGrid& grid) {
  return simulate_em(problem, grid.mesh(), grid.increments());
}

namespace detail {

inline long floor_div(long a, long b) {
  const long q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

}  // namespace detail

// Piecewise-constant version: the state of the coarse step containing fine
// node `fine_index` (left-closed, right-open). Negative indices address the
// initial segment; the final node N * ratio carries X_N.
inline ConstVec eval_piecewise(const PathSolution& sol, long fine_index, std::size_t mesh_ratio) {
  if (mesh_ratio == 0) throw ConfigError("eval_piecewise: mesh_ratio must be positive");
  const long r = static_cast<long>(mesh_ratio);
  const long k = detail::floor_div(fine_index, r);
  if (k < sol.first_index() || k > sol.last_index() || (k == sol.last_index() && fine_index != k * r))
    throw ConfigError("eval_piecewise: fine index " + std::to_string(fine_index) + " outside the solution");
  return sol.state(k);
}

// Continuous-time version on the nodes of a fine grid nested in the
// solution's mesh. On [k dt, (k+1) dt)
//   x(t) = D(xbar(t - tau)) + X_k - D(X_{k-m}) + f_h(X_k, X_{k-m}) (t - k dt)
//          + g_h(X_k, X_{k-m}) (B(t) - B(k dt)),
// with the per-step coefficient values precomputed once.
class Interpolant {
 public:
  Interpolant(const NSDDEProblem& problem, const PathSolution& sol, std::size_t mesh_ratio)
      : sol_(&sol), ratio_(mesh_ratio), d_(sol.dim), n_(problem.dim_w) {
    if (mesh_ratio == 0) throw ConfigError("interpolant: mesh_ratio must be positive");
    const std::size_t m = sol.mesh.steps_per_delay;
    const std::size_t N = sol.mesh.total_steps;
    neutral_.resize((m + N + 1) * d_);
    for (long k = sol.first_index(); k <= sol.last_index(); ++k)
      problem.neutral(sol.state(k), VecOut(neutral_).subspan(static_cast<std::size_t>(k + static_cast<long>(m)) * d_, d_));
    drift_.resize(N * d_);
    diffusion_.resize(N * d_ * n_);
    auto fill = [&](const auto& coeffs) {
      for (std::size_t k = 0; k < N; ++k) {
        const long kk = static_cast<long>(k);
        coeffs.drift(sol.state(kk), sol.state(kk - static_cast<long>(m)), VecOut(drift_).subspan(k * d_, d_));
        coeffs.diffusion(sol.state(kk), sol.state(kk - static_cast<long>(m)),
                         VecOut(diffusion_).subspan(k * d_ * n_, d_ * n_));
      }
    };
    if (sol.h_value)
      fill(TruncatedCoefficients(problem, *sol.h_value));
    else
      fill(PlainCoefficients(problem));
  }

  void eval(std::size_t fine_index, const BrownianGrid& grid, VecOut out) const {
    const PathSolution& sol = *sol_;
    const std::size_t m = sol.mesh.steps_per_delay;
    const std::size_t N = sol.mesh.total_steps;
    if (grid.mesh().total_steps != N * ratio_ || grid.mesh().steps_per_delay != m * ratio_)
      throw ConfigError("interpolant: Brownian grid is not the ratio-refinement of the solution mesh");
    if (fine_index > N * ratio_) throw ConfigError("interpolant: fine index outside [0, N * ratio]");
    const std::size_t k = fine_index / ratio_;
    const std::size_t offset = fine_index - k * ratio_;
    const ConstVec x_k = sol.state(static_cast<long>(k));
    if (offset == 0) {
      std::copy(x_k.begin(), x_k.end(), out.begin());
      return;
    }
    // t - tau falls in coarse step k - m, so the delayed argument is X_{k-m}.
    const long shifted = detail::floor_div(static_cast<long>(fine_index) - static_cast<long>(m * ratio_),
                                           static_cast<long>(ratio_));
    const double* d_shift = neutral_.data() + static_cast<std::size_t>(shifted + static_cast<long>(m)) * d_;
    const double* d_prev = neutral_.data() + k * d_;  // D(X_{k-m})
    const double elapsed = static_cast<double>(offset) * grid.mesh().dt;
    const ConstVec b_now = grid.value_at(fine_index);
    const ConstVec b_start = grid.value_at(k * ratio_);
    for (std::size_t i = 0; i < d_; ++i) {
      double noise = 0.0;
      for (std::size_t j = 0; j < n_; ++j) noise += diffusion_[(k * d_ + i) * n_ + j] * (b_now[j] - b_start[j]);
      out[i] = d_shift[i] + (x_k[i] - d_prev[i]) + drift_[k * d_ + i] * elapsed + noise;
    }
  }

  Vector at(std::size_t fine_index, const BrownianGrid& grid) const {
    Vector out(d_);
    eval(fine_index, grid, out);
    return out;
  }

 private:
  const PathSolution* sol_;
  std::size_t ratio_, d_, n_;
  std::vector<double> neutral_;    // D(X_k), k = -m .. N
  std::vector<double> drift_;      // f_h(X_k, X_{k-m}), k = 0 .. N-1
  std::vector<double> diffusion_;  // g_h(X_k, X_{k-m}), k = 0 .. N-1
};

inline Vector eval_interpolant(const NSDDEProblem& problem, const PathSolution& sol, std::size_t fine_index,
                               std::size_t mesh_ratio, const BrownianGrid& grid) {
  return Interpolant(problem, sol, mesh_ratio).at(fine_index, grid);
}

// Per-step trace: k, t, state components, truncation flag of the step leaving
// node k.
inline void write_trace_csv(std::ostream& os, const PathSolution& sol) {
  os << "k,t";
  for (std::size_t i = 0; i < sol.dim; ++i) os << ",x" << i;
  os << ",truncation_flag\n";
  for (long k = sol.first_index(); k <= sol.last_index(); ++k) {
    os << k << ',' << format_double(static_cast<double>(k) * sol.mesh.dt);
    for (double v : sol.state(k)) os << ',' << format_double(v);
    const int flag = (k >= 0 && k < sol.last_index()) ? sol.truncated[static_cast<std::size_t>(k)] : 0;
    os << ',' << flag << '\n';
  }
}

}  // namespace mtem
