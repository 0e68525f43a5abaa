#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mtem/errors.hpp"
#include "mtem/linalg.hpp"
#include "mtem/random.hpp"

namespace mtem {

// Uniform mesh with tau = m dt and T = N dt. dt is computed once as tau / m
// and never re-derived.
struct MeshSpec {
  double delay = 1.0;
  std::size_t steps_per_delay = 1;
  double horizon = 1.0;
  std::size_t total_steps = 1;
  double dt = 1.0;

  static MeshSpec make(double delay, std::size_t steps_per_delay, double horizon) {
    if (!(delay > 0.0)) throw ConfigError("mesh: delay must be positive");
    if (steps_per_delay == 0) throw ConfigError("mesh: steps_per_delay must be positive");
    if (!(horizon > 0.0)) throw ConfigError("mesh: horizon must be positive");
    const double n_real = horizon * static_cast<double>(steps_per_delay) / delay;
    const double n_round = std::round(n_real);
    if (n_round < 1.0 || std::abs(n_real - n_round) > 1e-9 * n_real)
      throw ConfigError("mesh: horizon must be an integer multiple of the step delay/m");
    MeshSpec mesh;
    mesh.delay = delay;
    mesh.steps_per_delay = steps_per_delay;
    mesh.horizon = horizon;
    mesh.total_steps = static_cast<std::size_t>(n_round);
    mesh.dt = delay / static_cast<double>(steps_per_delay);
    return mesh;
  }

  // The nested mesh with `factor` fine steps per coarse step.
  MeshSpec coarsened(std::size_t factor) const {
    if (factor == 0 || steps_per_delay % factor != 0 || total_steps % factor != 0)
      throw ConfigError("mesh: coarsening factor " + std::to_string(factor) +
                        " must divide both steps_per_delay and total_steps");
    return make(delay, steps_per_delay / factor, horizon);
  }
};

// The increment B((step+1) dt) - B(step dt) of component `component`, as a
// pure function of (seed, path_index, step, component). Two components share
// one 64-bit half of a Philox block each.
inline double brownian_increment(std::uint64_t seed, std::uint64_t path_index, std::uint64_t step,
                                 std::size_t component, std::size_t dim_w, double dt) {
  const std::uint64_t linear = step * dim_w + component;
  const std::uint64_t block = linear / 2;
  const auto out = Philox4x32::generate({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                         static_cast<std::uint32_t>(path_index),
                                         static_cast<std::uint32_t>(path_index >> 32)},
                                        Philox4x32::key_from_seed(seed));
  const std::size_t half = linear % 2;
  const std::uint64_t bits = (std::uint64_t{out[2 * half + 1]} << 32) | out[2 * half];
  return std::sqrt(dt) * standard_normal_quantile(open_unit(bits));
}

// Brownian increments of one path on a (fine) reference mesh. Immutable; the
// running values B(t_j) are built on first use and cached.
class BrownianGrid {
 public:
  BrownianGrid(std::uint64_t seed, std::uint64_t path_index, const MeshSpec& mesh, std::size_t dim_w)
      : seed_(seed), path_(path_index), mesh_(mesh), dim_w_(dim_w), cache_(std::make_shared<Cache>()) {
    if (dim_w == 0) throw ConfigError("brownian grid: dim_w must be positive");
    const std::size_t n = mesh.total_steps * dim_w;
    increments_.resize(n);
    const double scale = std::sqrt(mesh.dt);
    const auto key = Philox4x32::key_from_seed(seed);
    for (std::size_t block = 0; 2 * block < n; ++block) {
      const auto out = Philox4x32::generate(
          {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(std::uint64_t{block} >> 32),
           static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(path_index >> 32)},
          key);
      for (std::size_t half = 0; half < 2 && 2 * block + half < n; ++half) {
        const std::uint64_t bits = (std::uint64_t{out[2 * half + 1]} << 32) | out[2 * half];
        increments_[2 * block + half] = scale * standard_normal_quantile(open_unit(bits));
      }
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t path_index() const { return path_; }
  const MeshSpec& mesh() const { return mesh_; }
  std::size_t dim_w() const { return dim_w_; }

  // All increments, step-major: element [step * dim_w + component].
  ConstVec increments() const { return increments_; }
  ConstVec increment(std::size_t step) const { return ConstVec(increments_).subspan(step * dim_w_, dim_w_); }

  // B at fine node `index` in [0, N]; B(0) = 0.
  ConstVec value_at(std::size_t index) const {
    if (index > mesh_.total_steps)
      throw ConfigError("brownian_value_at: index " + std::to_string(index) + " outside [0, " +
                        std::to_string(mesh_.total_steps) + "]");
    const auto& b = values();
    return ConstVec(b).subspan(index * dim_w_, dim_w_);
  }

  std::size_t memory_bytes() const {
    std::size_t bytes = increments_.capacity() * sizeof(double);
    if (cache_->built) bytes += cache_->values.capacity() * sizeof(double);
    return bytes;
  }

 private:
  struct Cache {
    std::once_flag once;
    bool built = false;
    std::vector<double> values;
  };

  const std::vector<double>& values() const {
    std::call_once(cache_->once, [this] {
      auto& v = cache_->values;
      v.assign((mesh_.total_steps + 1) * dim_w_, 0.0);
      for (std::size_t k = 0; k < mesh_.total_steps; ++k)
        for (std::size_t c = 0; c < dim_w_; ++c)
          v[(k + 1) * dim_w_ + c] = v[k * dim_w_ + c] + increments_[k * dim_w_ + c];
      cache_->built = true;
    });
    return cache_->values;
  }

  std::uint64_t seed_;
  std::uint64_t path_;
  MeshSpec mesh_;
  std::size_t dim_w_;
  std::vector<double> increments_;
  std::shared_ptr<Cache> cache_;
};

inline BrownianGrid generate(std::uint64_t seed, std::uint64_t path_index, const MeshSpec& mesh, std::size_t dim_w) {
  return BrownianGrid(seed, path_index, mesh, dim_w);
}

namespace detail {

// Balanced pairwise sum of v[first], v[first + stride], ... (count terms):
// the first ceil(count/2) terms, then the rest. For power-of-two block
// sizes the tree of a block is built from the trees of its aligned
// sub-blocks, which makes nested coarsening exact.
inline double tree_sum(ConstVec v, std::size_t first, std::size_t count, std::size_t stride) {
  if (count == 1) return v[first];
  const std::size_t left = count - count / 2;
  return tree_sum(v, first, left, stride) + tree_sum(v, first + left * stride, count - left, stride);
}

}  // namespace detail

// Block sums of a step-major increment array. Each block is summed as a
// balanced pairwise tree over ascending indices, so coarsening by c1 and then
// by c2 reproduces coarsening by c1 * c2 bit for bit when both are powers of two.
inline std::vector<double> coarsen_increments(ConstVec increments, std::size_t dim_w, std::size_t factor) {
  if (factor == 0 || dim_w == 0 || increments.size() % dim_w != 0 || (increments.size() / dim_w) % factor != 0)
    throw ConfigError("coarsen: factor " + std::to_string(factor) + " must divide the number of steps");
  const std::size_t coarse = increments.size() / dim_w / factor;
  std::vector<double> out(coarse * dim_w, 0.0);
  for (std::size_t j = 0; j < coarse; ++j)
    for (std::size_t c = 0; c < dim_w; ++c)
      out[j * dim_w + c] = detail::tree_sum(increments, j * factor * dim_w + c, factor, dim_w);
  return out;
}

// Increments of the nested mesh with `factor` fine steps per coarse step.
// factor must divide both N_ref and m_ref.
inline std::vector<double> coarsen(const BrownianGrid& grid, std::size_t factor) {
  if (factor == 0 || grid.mesh().steps_per_delay % factor != 0)
    throw ConfigError("coarsen: factor " + std::to_string(factor) + " must divide steps_per_delay");
  return coarsen_increments(grid.increments(), grid.dim_w(), factor);
}

inline Vector brownian_value_at(const BrownianGrid& grid, std::size_t fine_index) {
  const ConstVec v = grid.value_at(fine_index);
  return Vector(v.begin(), v.end());
}

}  // namespace mtem
