#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "mtem/errors.hpp"
#include "mtem/linalg.hpp"
#include "mtem/model.hpp"
#include "mtem/parallel.hpp"
#include "mtem/random.hpp"

namespace mtem {

enum class ConditionId {
  LocalLipschitz21,
  Contractivity22,
  Khasminskii28,
  Growth213,
  InitialModulus210,
  TruncLipschitz31,
  TruncKhasminskii32,
};

inline std::string_view to_string(ConditionId id) {
  switch (id) {
    case ConditionId::LocalLipschitz21: return "local_lipschitz";
    case ConditionId::Contractivity22: return "contractivity";
    case ConditionId::Khasminskii28: return "khasminskii";
    case ConditionId::Growth213: return "diffusion_growth";
    case ConditionId::InitialModulus210: return "initial_modulus";
    case ConditionId::TruncLipschitz31: return "truncated_lipschitz";
    case ConditionId::TruncKhasminskii32: return "truncated_khasminskii";
  }
  return "unknown";
}

// The sample point at which a probe observed its worst margin. Unused slots
// stay empty; `scalar` carries the extra coordinate of a sample (the a of the
// Khasminskii-type condition, or the time s of the initial-modulus check).
struct ProbeWitness {
  std::uint64_t index = 0;
  Vector x, y, x_bar, y_bar;
  double scalar = 0.0;
};

struct ConditionProbeReport {
  ConditionId condition = ConditionId::LocalLipschitz21;
  std::uint64_t samples_tested = 0;
  std::uint64_t violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  ProbeWitness witness;

  bool passed() const noexcept { return violations == 0; }
};

struct ProbeOptions {
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

namespace detail {

// High bit keeps probe counters disjoint from Brownian-increment counters.
inline PhiloxStream probe_stream(std::uint64_t seed, ConditionId id, std::uint64_t sample) {
  return PhiloxStream(seed, static_cast<std::uint32_t>(sample), static_cast<std::uint32_t>(sample >> 32),
                      0x80000000u | static_cast<std::uint32_t>(id));
}

// Uniform point in the closed Euclidean ball of the given radius. In one
// dimension this is the uniform law on [-radius, radius].
inline void sample_ball(PhiloxStream& rng, double radius, VecOut out) {
  if (out.size() == 1) {
    out[0] = rng.uniform(-radius, radius);
    return;
  }
  for (double& v : out) v = rng.normal();
  const double n = norm(out);
  const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(out.size()));
  for (double& v : out) v *= (n > 0.0 ? r / n : 0.0);
}

}  // namespace detail

// Evaluates margin(index, witness*) for every index in [0, count) and reduces
// by (margin, index) lexicographic minimum. margin must be a pure function of
// index; when the witness pointer is non-null it also records the sample.
template <class MarginFn>
ConditionProbeReport run_probe(ConditionId id, std::uint64_t count, unsigned workers, MarginFn&& margin) {
  struct Partial {
    double worst = std::numeric_limits<double>::infinity();
    std::uint64_t index = 0;
    std::uint64_t violations = 0;
  };
  const std::size_t chunks = std::min<std::uint64_t>(count, 64);
  std::vector<Partial> partial(std::max<std::size_t>(chunks, 1));
  parallel_chunks(count, chunks, workers, [&](std::size_t b, std::size_t e, std::size_t c) {
    Partial p;
    for (std::size_t i = b; i < e; ++i) {
      const double m = margin(static_cast<std::uint64_t>(i), static_cast<ProbeWitness*>(nullptr));
      if (m < 0.0 || std::isnan(m)) ++p.violations;
      if (m < p.worst || (std::isnan(m) && !std::isnan(p.worst))) {
        p.worst = m;
        p.index = i;
      }
    }
    partial[c] = p;
  });
  ConditionProbeReport report;
  report.condition = id;
  report.samples_tested = count;
  Partial best;
  bool have = false;
  for (const Partial& p : partial) {
    report.violations += p.violations;
    if (!have || p.worst < best.worst || (p.worst == best.worst && p.index < best.index) ||
        (std::isnan(p.worst) && !std::isnan(best.worst))) {
      best = p;
      have = true;
    }
  }
  if (count > 0) {
    report.worst_margin = margin(best.index, &report.witness);
    report.witness.index = best.index;
  }
  return report;
}

// Slack of |D(x) - D(y)| <= u |x - y|.
inline double contractivity_margin(const NSDDEProblem& p, ConstVec x, ConstVec y) {
  const Vector dx = p.neutral_at(x);
  const Vector dy = p.neutral_at(y);
  return p.contractivity_u * distance(x, y) - distance(dx, dy);
}

// Slack of 2<x - a D(y/a), f(x, y)> + (p - 1)|g(x, y)|^2 <= K (1 + |x|^2 + |y|^2).
inline double khasminskii_margin(const NSDDEProblem& p, ConstVec x, ConstVec y, double a) {
  Vector ya(y.begin(), y.end());
  for (double& v : ya) v /= a;
  const Vector dya = p.neutral_at(ya);
  const Vector f = p.drift_at(x, y);
  const Matrix g = p.diffusion_at(x, y);
  double inner = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) inner += (x[i] - a * dya[i]) * f[i];
  const double lhs = 2.0 * inner + (p.khasminskii_p - 1.0) * squared_norm(g.data);
  return p.khasminskii_K * (1.0 + squared_norm(x) + squared_norm(y)) - lhs;
}

// Slack of |g(x, y)|^2 <= Kbar (1 + |x|^r + |y|^r).
inline double growth_margin(const NSDDEProblem& p, ConstVec x, ConstVec y) {
  if (!p.growth) throw MissingGrowthError("problem " + p.name + " declares no diffusion growth bound (r, Kbar)");
  const Matrix g = p.diffusion_at(x, y);
  const double r = p.growth->r;
  return p.growth->Kbar * (1.0 + std::pow(norm(x), r) + std::pow(norm(y), r)) - squared_norm(g.data);
}

// Slack of max(|f(x,y) - f(xb,yb)|, |g(x,y) - g(xb,yb)|) <= L (|x - xb| + |y - yb|)
// for arbitrary drift/diffusion callbacks, so truncated coefficients reuse it.
template <class Drift, class Diffusion>
double lipschitz_margin(const Drift& f, const Diffusion& g, double lipschitz, ConstVec x, ConstVec y, ConstVec xb,
                        ConstVec yb) {
  const Vector f1 = f(x, y);
  const Vector f2 = f(xb, yb);
  const Matrix g1 = g(x, y);
  const Matrix g2 = g(xb, yb);
  const double spread = std::max(distance(f1, f2), distance(g1.data, g2.data));
  return lipschitz * (distance(x, xb) + distance(y, yb)) - spread;
}

inline ConditionProbeReport probe_contractivity(const NSDDEProblem& p, double domain_radius, std::uint64_t samples,
                                                ProbeOptions opt = {}) {
  if (samples == 0) throw ConfigError("probe_contractivity: samples must be at least 1");
  const std::size_t d = p.dim_x;
  return run_probe(ConditionId::Contractivity22, samples, opt.workers, [&](std::uint64_t i, ProbeWitness* w) {
    auto rng = detail::probe_stream(opt.seed, ConditionId::Contractivity22, i);
    Vector x(d), y(d);
    detail::sample_ball(rng, domain_radius, x);
    detail::sample_ball(rng, domain_radius, y);
    if (w) {
      w->x = x;
      w->y = y;
    }
    return contractivity_margin(p, x, y);
  });
}

// Every (x, y) sample is tested against each a in a_grid.
inline ConditionProbeReport probe_khasminskii(const NSDDEProblem& p, double domain_radius,
                                              const std::vector<double>& a_grid, std::uint64_t samples,
                                              ProbeOptions opt = {}) {
  if (a_grid.empty()) throw ConfigError("probe_khasminskii: a_grid must not be empty");
  for (double a : a_grid)
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("probe_khasminskii: every a must lie in (0, 1]");
  const std::size_t d = p.dim_x;
  const std::uint64_t na = a_grid.size();
  return run_probe(ConditionId::Khasminskii28, samples * na, opt.workers, [&](std::uint64_t i, ProbeWitness* w) {
    auto rng = detail::probe_stream(opt.seed, ConditionId::Khasminskii28, i / na);
    Vector x(d), y(d);
    detail::sample_ball(rng, domain_radius, x);
    detail::sample_ball(rng, domain_radius, y);
    const double a = a_grid[i % na];
    if (w) {
      w->x = x;
      w->y = y;
      w->scalar = a;
    }
    return khasminskii_margin(p, x, y, a);
  });
}

inline ConditionProbeReport probe_growth_g(const NSDDEProblem& p, double domain_radius, std::uint64_t samples,
                                           ProbeOptions opt = {}) {
  if (!p.growth) throw MissingGrowthError("problem " + p.name + " declares no diffusion growth bound (r, Kbar)");
  const std::size_t d = p.dim_x;
  return run_probe(ConditionId::Growth213, samples, opt.workers, [&](std::uint64_t i, ProbeWitness* w) {
    auto rng = detail::probe_stream(opt.seed, ConditionId::Growth213, i);
    Vector x(d), y(d);
    detail::sample_ball(rng, domain_radius, x);
    detail::sample_ball(rng, domain_radius, y);
    if (w) {
      w->x = x;
      w->y = y;
    }
    return growth_margin(p, x, y);
  });
}

// Checks sup_k sup_{s in [k dt, (k+1) dt]} |xi(s) - xi(k dt)|^q <= Khat dt^{q/2}
// for the problem's deterministic initial segment, each step resolved by
// `subdivisions` equal sub-steps (endpoints included). The report carries a
// single comparison: samples_tested counts the evaluated (k, s) points and
// violations is 0 or 1.
inline ConditionProbeReport probe_initial_modulus(const NSDDEProblem& p, double dt, double q, double khat,
                                                  std::size_t subdivisions = 64) {
  const double ratio = p.delay / dt;
  const double m_real = std::round(ratio);
  if (!(m_real >= 1.0) || std::abs(ratio - m_real) > 1e-9 * ratio)
    throw ConfigError("probe_initial_modulus: delay / dt must be a positive integer");
  if (subdivisions == 0) throw ConfigError("probe_initial_modulus: subdivisions must be positive");
  const auto m = static_cast<long>(m_real);
  double worst = 0.0;
  ProbeWitness w;
  std::uint64_t points = 0;
  for (long k = -m; k <= -1; ++k) {
    const double t0 = static_cast<double>(k) * dt;
    const Vector base = p.initial_at(t0);
    for (std::size_t j = 0; j <= subdivisions; ++j) {
      const double s = t0 + dt * static_cast<double>(j) / static_cast<double>(subdivisions);
      const Vector v = p.initial_at(s);
      const double dev = std::pow(distance(v, base), q);
      ++points;
      if (dev > worst) {
        worst = dev;
        w.x = v;
        w.y = base;
        w.scalar = s;
        w.index = points - 1;
      }
    }
  }
  ConditionProbeReport r;
  r.condition = ConditionId::InitialModulus210;
  r.samples_tested = points;
  r.worst_margin = khat * std::pow(dt, q / 2.0) - worst;
  r.violations = r.worst_margin < 0.0 ? 1 : 0;
  r.witness = std::move(w);
  return r;
}

inline ConditionProbeReport probe_local_lipschitz(const NSDDEProblem& p, double radius, std::uint64_t samples,
                                                  ProbeOptions opt = {}) {
  if (samples == 0) throw ConfigError("probe_local_lipschitz: samples must be at least 1");
  const std::size_t d = p.dim_x;
  const double lipschitz = p.lipschitz_of_radius(radius);
  auto f = [&](ConstVec x, ConstVec y) { return p.drift_at(x, y); };
  auto g = [&](ConstVec x, ConstVec y) { return p.diffusion_at(x, y); };
  return run_probe(ConditionId::LocalLipschitz21, samples, opt.workers, [&](std::uint64_t i, ProbeWitness* w) {
    auto rng = detail::probe_stream(opt.seed, ConditionId::LocalLipschitz21, i);
    Vector x(d), y(d), xb(d), yb(d);
    detail::sample_ball(rng, radius, x);
    detail::sample_ball(rng, radius, y);
    detail::sample_ball(rng, radius, xb);
    detail::sample_ball(rng, radius, yb);
    if (w) {
      w->x = x;
      w->y = y;
      w->x_bar = xb;
      w->y_bar = yb;
    }
    return lipschitz_margin(f, g, lipschitz, x, y, xb, yb);
  });
}

}  // namespace mtem
