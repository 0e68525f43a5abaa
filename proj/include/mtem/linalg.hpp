#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mtem {

using Vector = std::vector<double>;
using ConstVec = std::span<const double>;
using VecOut = std::span<double>;

// Dense row-major matrix; only what the coefficient plumbing needs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

inline double squared_norm(ConstVec v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Euclidean norm for vectors; applied to a row-major matrix buffer this is
// the Frobenius norm sqrt(trace(A^T A)).
inline double norm(ConstVec v) { return std::sqrt(squared_norm(v)); }

inline double frobenius(const Matrix& a) { return norm(a.data); }

inline double dot(ConstVec a, ConstVec b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double distance(ConstVec a, ConstVec b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline bool all_finite(ConstVec v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace mtem
