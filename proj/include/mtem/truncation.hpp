#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mtem/errors.hpp"
#include "mtem/linalg.hpp"
#include "mtem/model.hpp"
#include "mtem/probes.hpp"

namespace mtem {

// |x| v |y| with the Euclidean norm taken per argument.
inline double gate_radius(ConstVec x, ConstVec y) { return std::max(norm(x), norm(y)); }

namespace detail {

inline void scale_value(double& v, double c) { v *= c; }
inline void scale_value(Vector& v, double c) {
  for (double& e : v) e *= c;
}
inline void scale_value(Matrix& m, double c) { scale_value(m.data, c); }

// Calls fn(a*x, a*y) with the scaled arguments held in stack storage for
// small dimensions.
template <class Fn>
decltype(auto) with_scaled(ConstVec x, ConstVec y, double a, Fn&& fn) {
  constexpr std::size_t kInline = 8;
  if (x.size() <= kInline && y.size() <= kInline) {
    std::array<double, kInline> xs{}, ys{};
    for (std::size_t i = 0; i < x.size(); ++i) xs[i] = a * x[i];
    for (std::size_t i = 0; i < y.size(); ++i) ys[i] = a * y[i];
    return fn(ConstVec(xs.data(), x.size()), ConstVec(ys.data(), y.size()));
  }
  Vector xs(x.begin(), x.end()), ys(y.begin(), y.end());
  for (double& v : xs) v *= a;
  for (double& v : ys) v *= a;
  return fn(ConstVec(xs), ConstVec(ys));
}

}  // namespace detail

// Modified truncation of a coefficient at level h: unchanged inside the ball
// max(|x|, |y|) <= h, radially rescaled as (s/h) coeff((h/s) x, (h/s) y)
// outside it, where s = max(|x|, |y|). coeff may return double, Vector or
// Matrix.
template <class Coeff>
auto truncate(Coeff&& coeff, double h_value, ConstVec x, ConstVec y) {
  using Result = std::decay_t<std::invoke_result_t<Coeff&, ConstVec, ConstVec>>;
  const double s = gate_radius(x, y);
  if (s <= h_value) return Result(std::invoke(coeff, x, y));
  Result value = detail::with_scaled(x, y, h_value / s, [&](ConstVec xs, ConstVec ys) {
    return Result(std::invoke(coeff, xs, ys));
  });
  detail::scale_value(value, s / h_value);
  return value;
}

// f and g of a problem, untruncated. Same interface as TruncatedCoefficients
// so the scheme can be instantiated for either.
class PlainCoefficients {
 public:
  explicit PlainCoefficients(const NSDDEProblem& base) : base_(&base) {}

  bool drift(ConstVec x, ConstVec y, VecOut out) const {
    base_->drift(x, y, out);
    return false;
  }
  bool diffusion(ConstVec x, ConstVec y, VecOut out) const {
    base_->diffusion(x, y, out);
    return false;
  }
  const NSDDEProblem& base() const { return *base_; }
  std::optional<double> h_value() const { return std::nullopt; }

 private:
  const NSDDEProblem* base_;
};

// f_h and g_h for a frozen truncation level h. The out-parameter methods
// return true when the outside-ball branch fired.
class TruncatedCoefficients {
 public:
  TruncatedCoefficients(const NSDDEProblem& base, double h_value) : base_(&base), h_(h_value) {
    if (!(h_value > 0.0)) throw DomainError("truncation level must be positive");
  }

  bool drift(ConstVec x, ConstVec y, VecOut out) const { return apply(base_->drift, x, y, out); }
  bool diffusion(ConstVec x, ConstVec y, VecOut out) const { return apply(base_->diffusion, x, y, out); }

  Vector drift_at(ConstVec x, ConstVec y) const {
    Vector out(base_->dim_x);
    drift(x, y, out);
    return out;
  }
  Matrix diffusion_at(ConstVec x, ConstVec y) const {
    Matrix out(base_->dim_x, base_->dim_w);
    diffusion(x, y, out.data);
    return out;
  }

  const NSDDEProblem& base() const { return *base_; }
  std::optional<double> h_value() const { return h_; }
  double level() const { return h_; }

 private:
  template <class Fn>
  bool apply(const Fn& fn, ConstVec x, ConstVec y, VecOut out) const {
    const double s = gate_radius(x, y);
    if (s <= h_) {
      fn(x, y, out);
      return false;
    }
    detail::with_scaled(x, y, h_ / s, [&](ConstVec xs, ConstVec ys) { fn(xs, ys, out); });
    const double c = s / h_;
    for (double& v : out) v *= c;
    return true;
  }

  const NSDDEProblem* base_;
  double h_;
};

// Step-size dependent truncation level h(dt).
struct TruncationPolicy {
  std::function<double(double)> h;
  // Largest dyadic step 2^-k inside the domain with h >= 1.
  double delta_star = 0.0;
  // h is defined for 0 < dt < domain_limit.
  double domain_limit = std::numeric_limits<double>::infinity();
  std::optional<double> epsilon;
  std::string label;

  bool in_domain(double dt) const { return dt > 0.0 && dt < domain_limit; }
  bool admissible(double dt) const { return in_domain(dt) && dt <= delta_star; }

  double at(double dt) const {
    if (!in_domain(dt))
      throw DomainError("step " + std::to_string(dt) + " outside the domain of truncation policy " + label);
    return h(dt);
  }

  // Strict decrease on a log grid over (0, delta_star], h >= 1 there, and
  // h(smallest)/h(delta_star) >= growth_factor.
  void validate(double growth_factor = 2.0, int points = 40, double decades = 12.0) const {
    if (!(delta_star > 0.0)) throw ConfigError("policy " + label + ": delta_star must be positive");
    double prev = h(delta_star);
    const double first = prev;
    if (!(prev >= 1.0)) throw ConfigError("policy " + label + ": h(delta_star) < 1");
    for (int i = 1; i <= points; ++i) {
      const double dt = delta_star * std::pow(10.0, -decades * i / points);
      const double cur = h(dt);
      if (!(cur > prev)) throw ConfigError("policy " + label + ": h is not strictly decreasing");
      prev = cur;
    }
    if (!(prev >= growth_factor * first)) throw ConfigError("policy " + label + ": h does not grow as dt -> 0");
  }
};

// Largest 2^-k inside the domain with h(2^-k) >= 1, or 0 if none exists.
inline double dyadic_delta_star(const std::function<double(double)>& h, double domain_limit) {
  for (int k = 0; k <= 200; ++k) {
    const double dt = std::ldexp(1.0, -k);
    if (!(dt < domain_limit)) continue;
    if (h(dt) >= 1.0) return dt;
  }
  return 0.0;
}

// ((dt^-eps - 4) / 5)^{1/4}; defined for dt < 4^{-1/eps}.
inline double h_example2(double dt, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("h_example2: epsilon must lie in (0, 1)");
  if (!(dt > 0.0) || dt >= std::pow(4.0, -1.0 / eps))
    throw DomainError("h_example2: step must satisfy 0 < dt < 4^(-1/epsilon)");
  return std::pow((std::pow(dt, -eps) - 4.0) / 5.0, 0.25);
}

inline double log_lipschitz_example1(double r) { return std::log(3.0 * (1.0 + r + r * r)) + r; }

// The x > 0 solving x^{1-eps} L_x^4 dt = 1 with L_x = 3 (1 + x + x^2) e^x,
// i.e. the inverse of the strictly decreasing l(x) = 1 / (x^{1-eps} L_x^4).
// Monotone bisection on the log residual, bracket grown from [1, 2].
inline double h_example1(double dt, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("h_example1: epsilon must lie in (0, 1)");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("h_example1: step must be positive and finite");
  const double log_dt = std::log(dt);
  auto residual = [&](double x) { return (1.0 - eps) * std::log(x) + 4.0 * log_lipschitz_example1(x) + log_dt; };
  double lo = 1.0, hi = 2.0;
  int guard = 0;
  while (residual(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200) throw Error("h_example1: could not bracket the inverse (upper end)");
  }
  guard = 0;
  while (residual(lo) > 0.0) {
    hi = lo;
    lo *= 0.5;
    if (++guard > 200) throw Error("h_example1: could not bracket the inverse (lower end)");
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (residual(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return 0.5 * (lo + hi);
}

inline TruncationPolicy policy_ex1_inverse(double eps = 0.5) {
  TruncationPolicy p;
  p.h = [eps](double dt) { return h_example1(dt, eps); };
  p.domain_limit = std::numeric_limits<double>::infinity();
  p.delta_star = dyadic_delta_star(p.h, p.domain_limit);
  p.epsilon = eps;
  p.label = "ex1-inverse";
  return p;
}

inline TruncationPolicy policy_ex2_closed_form(double eps = 0.9) {
  TruncationPolicy p;
  p.h = [eps](double dt) { return h_example2(dt, eps); };
  p.domain_limit = std::pow(4.0, -1.0 / eps);
  p.delta_star = dyadic_delta_star(p.h, p.domain_limit);
  p.epsilon = eps;
  p.label = "ex2-closed-form";
  return p;
}

inline TruncationPolicy make_policy(std::string_view name, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("policy epsilon must lie in (0, 1)");
  if (name == "ex1-inverse") return policy_ex1_inverse(eps);
  if (name == "ex2-closed-form") return policy_ex2_closed_form(eps);
  throw UnknownNameError("unknown truncation policy '" + std::string(name) +
                         "' (known: ex1-inverse, ex2-closed-form)");
}

// Policy name and epsilon paired with each built-in problem by default.
inline std::pair<std::string, double> default_policy_for(std::string_view problem) {
  if (problem == "example1") return {"ex1-inverse", 0.5};
  if (problem == "example2") return {"ex2-closed-form", 0.9};
  throw UnknownNameError("no default truncation policy for problem '" + std::string(problem) + "'");
}

struct AdmissibilityRow {
  double delta = 0.0;
  double h = 0.0;
  double l4_delta = 0.0;        // L_{h}^4 dt
  double rate_bound = 0.0;      // (L_h^{2q} dt^{q/2})^{-1/(p-q)}
  bool rate_condition = false;  // h >= rate_bound
  bool l4_decreasing = false;   // L_h^4 dt below its value at the next larger step
};

struct AdmissibilityReport {
  std::vector<AdmissibilityRow> rows;  // sorted by decreasing step

  bool rate_condition_holds() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.rate_condition; });
  }
  bool l4_decreasing() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.l4_decreasing; });
  }
  bool all_hold() const { return rate_condition_holds() && l4_decreasing(); }
};

inline AdmissibilityReport check_admissibility(const TruncationPolicy& policy,
                                               const std::function<double(double)>& lipschitz, double p, double q,
                                               std::vector<double> deltas) {
  if (!(q > 2.0 && q < p)) throw ConfigError("check_admissibility: need 2 < q < p");
  if (deltas.empty()) throw ConfigError("check_admissibility: no steps given");
  for (double dt : deltas)
    if (!policy.admissible(dt))
      throw ConfigError("check_admissibility: step " + std::to_string(dt) + " exceeds delta_star of policy " +
                        policy.label);
  std::sort(deltas.begin(), deltas.end(), std::greater<>());
  AdmissibilityReport report;
  double prev = std::numeric_limits<double>::infinity();
  for (double dt : deltas) {
    AdmissibilityRow row;
    row.delta = dt;
    row.h = policy.h(dt);
    const double log_l = std::log(lipschitz(row.h));
    row.l4_delta = std::exp(4.0 * log_l + std::log(dt));
    row.rate_bound = std::exp(-(2.0 * q * log_l + 0.5 * q * std::log(dt)) / (p - q));
    row.rate_condition = row.h >= row.rate_bound;
    row.l4_decreasing = row.l4_delta < prev;
    prev = row.l4_delta;
    report.rows.push_back(row);
  }
  return report;
}

namespace detail {

// Half the draws land uniformly in the ball of radius h, half get a
// log-uniform radius in [h/10, 10h], so both truncation branches and the
// boundary between them are exercised.
inline void sample_heavy(PhiloxStream& rng, double h, VecOut out) {
  const bool inside = rng.uniform() < 0.5;
  if (inside) {
    sample_ball(rng, h, out);
    return;
  }
  const double radius = h * std::pow(10.0, rng.uniform(-1.0, 1.0));
  if (out.size() == 1) {
    out[0] = rng.uniform() < 0.5 ? -radius : radius;
    return;
  }
  for (double& v : out) v = rng.normal();
  const double n = norm(out);
  for (double& v : out) v *= (n > 0.0 ? radius / n : 0.0);
}

}  // namespace detail

// Slack of the global Lipschitz bound 5 L_h (|x - xb| + |y - yb|) for the
// truncated coefficients at level h.
inline double trunc_lipschitz_margin(const TruncatedCoefficients& c, ConstVec x, ConstVec y, ConstVec xb,
                                     ConstVec yb) {
  const double bound = 5.0 * c.base().lipschitz_of_radius(c.level());
  auto f = [&](ConstVec a, ConstVec b) { return c.drift_at(a, b); };
  auto g = [&](ConstVec a, ConstVec b) { return c.diffusion_at(a, b); };
  return lipschitz_margin(f, g, bound, x, y, xb, yb);
}

// Slack of 2<x - D(y), f_h> + (p - 1)|g_h|^2 <= 2K (1 + |x|^2 + |y|^2).
inline double trunc_khasminskii_margin(const TruncatedCoefficients& c, ConstVec x, ConstVec y) {
  const NSDDEProblem& p = c.base();
  const Vector dy = p.neutral_at(y);
  const Vector f = c.drift_at(x, y);
  const Matrix g = c.diffusion_at(x, y);
  double inner = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) inner += (x[i] - dy[i]) * f[i];
  const double lhs = 2.0 * inner + (p.khasminskii_p - 1.0) * squared_norm(g.data);
  return 2.0 * p.khasminskii_K * (1.0 + squared_norm(x) + squared_norm(y)) - lhs;
}

// Second points of each pair are, with equal odds, drawn independently or as
// a small perturbation of the first (scale log-uniform in [1e-6 h, h]).
inline ConditionProbeReport probe_trunc_lipschitz(const NSDDEProblem& problem, const TruncationPolicy& policy,
                                                  double dt, std::uint64_t samples, ProbeOptions opt = {}) {
  const TruncatedCoefficients c(problem, policy.at(dt));
  const double h = c.level();
  const std::size_t d = problem.dim_x;
  return run_probe(ConditionId::TruncLipschitz31, samples, opt.workers, [&](std::uint64_t i, ProbeWitness* w) {
    auto rng = detail::probe_stream(opt.seed, ConditionId::TruncLipschitz31, i);
    Vector x(d), y(d), xb(d), yb(d);
    detail::sample_heavy(rng, h, x);
    detail::sample_heavy(rng, h, y);
    if (rng.uniform() < 0.5) {
      detail::sample_heavy(rng, h, xb);
      detail::sample_heavy(rng, h, yb);
    } else {
      const double scale = h * std::pow(10.0, rng.uniform(-6.0, 0.0));
      detail::sample_ball(rng, scale, xb);
      detail::sample_ball(rng, scale, yb);
      for (std::size_t k = 0; k < d; ++k) {
        xb[k] += x[k];
        yb[k] += y[k];
      }
    }
    if (w) {
      w->x = x;
      w->y = y;
      w->x_bar = xb;
      w->y_bar = yb;
      w->scalar = h;
    }
    return trunc_lipschitz_margin(c, x, y, xb, yb);
  });
}

// The bound is only claimed once h(dt) >= 1; the probe does not enforce that
// and reports whatever it finds (witness.scalar carries h).
inline ConditionProbeReport probe_trunc_khasminskii(const NSDDEProblem& problem, const TruncationPolicy& policy,
                                                    double dt, std::uint64_t samples, ProbeOptions opt = {}) {
  const TruncatedCoefficients c(problem, policy.at(dt));
  const double h = c.level();
  const std::size_t d = problem.dim_x;
  return run_probe(ConditionId::TruncKhasminskii32, samples, opt.workers, [&](std::uint64_t i, ProbeWitness* w) {
    auto rng = detail::probe_stream(opt.seed, ConditionId::TruncKhasminskii32, i);
    Vector x(d), y(d);
    detail::sample_heavy(rng, h, x);
    detail::sample_heavy(rng, h, y);
    if (w) {
      w->x = x;
      w->y = y;
      w->scalar = h;
    }
    return trunc_khasminskii_margin(c, x, y);
  });
}

}  // namespace mtem
