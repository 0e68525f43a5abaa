#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtem/errors.hpp"
#include "mtem/model.hpp"
#include "mtem/parallel.hpp"
#include "mtem/paths.hpp"
#include "mtem/scheme.hpp"
#include "mtem/truncation.hpp"

namespace mtem {

enum class Estimator { FixedT_x, FixedT_xbar, Sup_x, Sup_xbar };

inline std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::FixedT_x: return "fixedT_x";
    case Estimator::FixedT_xbar: return "fixedT_xbar";
    case Estimator::Sup_x: return "sup_x";
    case Estimator::Sup_xbar: return "sup_xbar";
  }
  return "unknown";
}

enum class SchemeKind { Mtem, Em };

inline std::string_view to_string(SchemeKind s) { return s == SchemeKind::Mtem ? "mtem" : "em"; }

inline SchemeKind parse_scheme(std::string_view s) {
  if (s == "mtem") return SchemeKind::Mtem;
  if (s == "em") return SchemeKind::Em;
  throw UnknownNameError("unknown scheme '" + std::string(s) + "' (known: mtem, em)");
}

struct SweepConfig {
  std::string problem_name = "example2";
  std::string policy_name = "ex2-closed-form";
  double epsilon = 0.9;
  std::vector<double> q_list{4.0};
  std::vector<std::size_t> coarse_m_list{8, 16, 32, 64, 128};
  std::size_t m_ref = 1024;
  double horizon = 2.0;
  std::size_t paths = 2000;
  std::uint64_t seed = 1;
  std::optional<double> moment_exponent;
  double x0 = 1.0;
  SchemeKind scheme = SchemeKind::Mtem;
  // Never changes results; excluded from config echoes.
  unsigned workers = 1;

  // Every broken invariant as "field: message".
  std::vector<std::string> issues(const NSDDEProblem& problem) const {
    std::vector<std::string> out;
    const double p = problem.khasminskii_p;
    if (paths == 0) out.push_back("paths: must be at least 1");
    if (m_ref == 0) out.push_back("m_ref: must be positive");
    if (!(horizon > 0.0)) out.push_back("horizon: must be positive");
    if (coarse_m_list.empty()) out.push_back("coarse_m_list: must not be empty");
    for (std::size_t i = 0; i < coarse_m_list.size(); ++i) {
      const std::size_t m = coarse_m_list[i];
      const std::string field = "coarse_m_list[" + std::to_string(i) + "]";
      if (m == 0 || (m_ref != 0 && m_ref % m != 0))
        out.push_back(field + ": " + std::to_string(m) + " does not divide m_ref " + std::to_string(m_ref));
    }
    for (std::size_t i = 0; i < q_list.size(); ++i)
      if (!(q_list[i] > 2.0 && q_list[i] < p))
        out.push_back("q_list[" + std::to_string(i) + "]: q must lie in (2, p) with p = " + format_double(p));
    if (moment_exponent) {
      const double pbar = *moment_exponent;
      if (!(pbar > 0.0)) out.push_back("moment_exponent: must be positive");
      if (problem.growth) {
        if (pbar > p + 2.0 - problem.growth->r)
          out.push_back("moment_exponent: running-sup moment bound needs pbar <= p + 2 - r = " +
                        format_double(p + 2.0 - problem.growth->r));
      } else if (pbar > p) {
        out.push_back("moment_exponent: moment bound needs pbar <= p = " + format_double(p));
      }
    }
    if (out.empty()) {
      try {
        MeshSpec::make(problem.delay, m_ref, horizon);
        for (std::size_t m : coarse_m_list) MeshSpec::make(problem.delay, m, horizon);
      } catch (const ConfigError& e) {
        out.push_back(std::string("horizon: ") + e.what());
      }
    }
    return out;
  }

  void validate(const NSDDEProblem& problem) const {
    const auto list = issues(problem);
    if (list.empty()) return;
    std::string msg = "invalid sweep configuration:";
    for (const auto& s : list) msg += "\n  " + s;
    throw ConfigError(msg);
  }
};

struct ErrorRow {
  double delta = 0.0;
  std::size_t m = 0;
  double q = 0.0;
  Estimator estimator = Estimator::FixedT_x;
  double error_q = 0.0;    // (E|.|^q)^{1/q}
  double moment = 0.0;     // E|.|^q
  double std_error = 0.0;  // Monte Carlo standard error of `moment`
  std::size_t divergent_paths = 0;
};

struct FittedOrder {
  double q = 0.0;
  Estimator estimator = Estimator::FixedT_x;
  double slope = 0.0;
  double slope_se = 0.0;
  std::size_t points = 0;
};

struct ErrorReport {
  SweepConfig config;
  std::vector<ErrorRow> rows;
  std::vector<FittedOrder> fitted_orders;
  std::vector<std::string> warnings;

  std::size_t divergent_paths_total() const {
    // fixedT_x rows carry one count per (m, q); count each m once.
    std::map<std::size_t, std::size_t> per_m;
    for (const auto& r : rows) per_m[r.m] = std::max(per_m[r.m], r.divergent_paths);
    std::size_t total = 0;
    for (const auto& [m, n] : per_m) total += n;
    return total;
  }

  const ErrorRow* find(std::size_t m, double q, Estimator e) const {
    for (const auto& r : rows)
      if (r.m == m && r.q == q && r.estimator == e) return &r;
    return nullptr;
  }

  const FittedOrder* order(double q, Estimator e) const {
    for (const auto& f : fitted_orders)
      if (f.q == q && f.estimator == e) return &f;
    return nullptr;
  }
};

// Mean of x^q over the finite entries, with the standard error of that
// mean; both sums compensated and taken in index order.
struct MomentEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

inline MomentEstimate estimate_moment(const std::vector<double>& values, double q) {
  MomentEstimate est;
  KahanSum sum;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum.add(std::pow(v, q));
    ++est.count;
  }
  if (est.count == 0) return est;
  est.mean = sum.value() / static_cast<double>(est.count);
  if (est.count > 1) {
    KahanSum sq;
    for (double v : values) {
      if (!std::isfinite(v)) continue;
      const double dev = std::pow(v, q) - est.mean;
      sq.add(dev * dev);
    }
    const double var = sq.value() / static_cast<double>(est.count - 1);
    est.std_error = std::sqrt(var / static_cast<double>(est.count));
  }
  return est;
}

// Least-squares slope of log(error_q) against log(delta) for every
// (q, estimator) group. Rows with zero error are dropped (reported through
// `warnings` when given); fewer than three usable distinct steps in any
// group throws InsufficientPointsError.
inline std::vector<FittedOrder> fit_order(const std::vector<ErrorRow>& rows,
                                          std::vector<std::string>* warnings = nullptr) {
  std::map<std::pair<double, int>, std::vector<const ErrorRow*>> groups;
  for (const auto& r : rows) groups[{r.q, static_cast<int>(r.estimator)}].push_back(&r);
  std::vector<FittedOrder> out;
  for (const auto& [key, members] : groups) {
    std::vector<std::pair<double, double>> pts;
    for (const ErrorRow* r : members) {
      if (!(r->error_q > 0.0) || !std::isfinite(r->error_q)) {
        if (warnings)
          warnings->push_back("fit_order: dropped zero/non-finite error at m=" + std::to_string(r->m) +
                              " q=" + format_double(r->q) + " " + std::string(to_string(r->estimator)));
        continue;
      }
      pts.emplace_back(std::log(r->delta), std::log(r->error_q));
    }
    std::vector<double> xs;
    for (const auto& p : pts) xs.push_back(p.first);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    if (xs.size() < 3)
      throw InsufficientPointsError("fit_order: need at least 3 distinct steps with positive error for q=" +
                                    format_double(key.first) + " " +
                                    std::string(to_string(static_cast<Estimator>(key.second))));
    const double n = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : pts) {
      sxx += (x - mx) * (x - mx);
      sxy += (x - mx) * (y - my);
    }
    FittedOrder f;
    f.q = key.first;
    f.estimator = static_cast<Estimator>(key.second);
    f.slope = sxy / sxx;
    f.points = pts.size();
    if (pts.size() > 2) {
      const double intercept = my - f.slope * mx;
      double rss = 0.0;
      for (const auto& [x, y] : pts) {
        const double res = y - (intercept + f.slope * x);
        rss += res * res;
      }
      f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
    }
    out.push_back(f);
  }
  return out;
}

namespace detail {

inline constexpr std::size_t kPathChunks = 64;

// Runs one scheme on a mesh. MTEM divergence inside the admissible range
// contradicts the moment bound and is fatal; anywhere else a divergent path
// yields std::nullopt and is counted by the caller.
inline std::optional<PathSolution> run_scheme(const NSDDEProblem& problem, const TruncationPolicy& policy,
                                              SchemeKind scheme, const MeshSpec& mesh, ConstVec increments,
                                              std::size_t path) {
  try {
    if (scheme == SchemeKind::Em) return simulate_em(problem, mesh, increments);
    return simulate_mtem(problem, policy, mesh, increments);
  } catch (const DivergenceError& e) {
    if (scheme == SchemeKind::Mtem && policy.admissible(mesh.dt))
      throw DivergenceError(e.step(), "MTEM diverged at admissible step " + format_double(mesh.dt) + " on path " +
                                          std::to_string(path));
    return std::nullopt;
  }
}

struct CoupledErrors {
  double at_T = std::numeric_limits<double>::quiet_NaN();
  double sup_x = std::numeric_limits<double>::quiet_NaN();
  double sup_xbar = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace detail

// Coupled strong errors: per path, a reference run at m_ref and a run at each
// coarse m on block sums of the same increments. Fixed-time rows always;
// running-sup rows (over all fine nodes) when include_sup.
inline ErrorReport convergence_sweep(const NSDDEProblem& problem, const TruncationPolicy& policy,
                                     const SweepConfig& cfg, bool include_sup) {
  cfg.validate(problem);
  const MeshSpec ref_mesh = MeshSpec::make(problem.delay, cfg.m_ref, cfg.horizon);
  const std::size_t nm = cfg.coarse_m_list.size();
  const std::size_t M = cfg.paths;
  std::vector<detail::CoupledErrors> buffer(M * nm);

  parallel_chunks(M, detail::kPathChunks, cfg.workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    Vector x_int(problem.dim_x);
    for (std::size_t path = begin; path < end; ++path) {
      const BrownianGrid grid(cfg.seed, path, ref_mesh, problem.dim_w);
      const auto ref = detail::run_scheme(problem, policy, cfg.scheme, ref_mesh, grid.increments(), path);
      if (!ref) throw Error("reference run diverged on path " + std::to_string(path));
      for (std::size_t mi = 0; mi < nm; ++mi) {
        const std::size_t factor = cfg.m_ref / cfg.coarse_m_list[mi];
        const MeshSpec mesh = ref_mesh.coarsened(factor);
        const std::vector<double> inc = coarsen(grid, factor);
        const auto sol = detail::run_scheme(problem, policy, cfg.scheme, mesh, inc, path);
        if (!sol) continue;
        auto& e = buffer[path * nm + mi];
        e.at_T = distance(ref->final_state(), sol->final_state());
        if (!include_sup) continue;
        const Interpolant interp(problem, *sol, factor);
        double sup_x = 0.0, sup_xbar = 0.0;
        for (std::size_t j = 0; j <= ref_mesh.total_steps; ++j) {
          const ConstVec x_ref = ref->state(static_cast<long>(j));
          interp.eval(j, grid, x_int);
          sup_x = std::max(sup_x, distance(x_ref, x_int));
          sup_xbar = std::max(sup_xbar, distance(x_ref, eval_piecewise(*sol, static_cast<long>(j), factor)));
        }
        e.sup_x = sup_x;
        e.sup_xbar = sup_xbar;
      }
    }
  });

  ErrorReport report;
  report.config = cfg;
  std::vector<double> column(M);
  for (std::size_t mi = 0; mi < nm; ++mi) {
    const std::size_t m = cfg.coarse_m_list[mi];
    const double delta = ref_mesh.coarsened(cfg.m_ref / m).dt;
    std::size_t divergent = 0;
    for (std::size_t path = 0; path < M; ++path)
      if (!std::isfinite(buffer[path * nm + mi].at_T)) ++divergent;
    auto emit = [&](Estimator est, double detail::CoupledErrors::*field) {
      for (std::size_t path = 0; path < M; ++path) column[path] = buffer[path * nm + mi].*field;
      for (double q : cfg.q_list) {
        const MomentEstimate mom = estimate_moment(column, q);
        ErrorRow row;
        row.delta = delta;
        row.m = m;
        row.q = q;
        row.estimator = est;
        row.moment = mom.mean;
        row.error_q = std::pow(mom.mean, 1.0 / q);
        row.std_error = mom.std_error;
        row.divergent_paths = divergent;
        report.rows.push_back(row);
      }
    };
    // x and xbar coincide at T, a coarse node.
    emit(Estimator::FixedT_x, &detail::CoupledErrors::at_T);
    emit(Estimator::FixedT_xbar, &detail::CoupledErrors::at_T);
    if (include_sup) {
      emit(Estimator::Sup_x, &detail::CoupledErrors::sup_x);
      emit(Estimator::Sup_xbar, &detail::CoupledErrors::sup_xbar);
    }
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const ErrorRow& a, const ErrorRow& b) {
    if (a.q != b.q) return a.q < b.q;
    if (a.estimator != b.estimator) return a.estimator < b.estimator;
    return a.m < b.m;
  });

  if (include_sup && problem.growth) {
    const double limit = problem.khasminskii_p - problem.growth->r;
    for (double q : cfg.q_list) {
      if (q > limit)
        report.warnings.push_back("q=" + format_double(q) + " exceeds p - r = " + format_double(limit) +
                                  "; the running-sup bound is not claimed there");
      if (!(q < 4.0))
        report.warnings.push_back("q=" + format_double(q) +
                                  " is outside 2 < q < 4; the piecewise running-sup bound is not claimed there");
    }
  }
  for (const auto& [q, est] : [&] {
         std::vector<std::pair<double, Estimator>> keys;
         for (double q : cfg.q_list) {
           keys.emplace_back(q, Estimator::FixedT_x);
           keys.emplace_back(q, Estimator::FixedT_xbar);
           if (include_sup) {
             keys.emplace_back(q, Estimator::Sup_x);
             keys.emplace_back(q, Estimator::Sup_xbar);
           }
         }
         return keys;
       }()) {
    std::vector<ErrorRow> group;
    for (const auto& r : report.rows)
      if (r.q == q && r.estimator == est) group.push_back(r);
    try {
      for (const auto& f : fit_order(group, &report.warnings)) report.fitted_orders.push_back(f);
    } catch (const InsufficientPointsError& e) {
      report.warnings.push_back(e.what());
    }
  }
  return report;
}

inline ErrorReport strong_error_at_T(const NSDDEProblem& problem, const TruncationPolicy& policy,
                                     const SweepConfig& cfg) {
  return convergence_sweep(problem, policy, cfg, false);
}

// Requires the problem's (r, Kbar) growth declaration.
inline ErrorReport strong_error_sup(const NSDDEProblem& problem, const TruncationPolicy& policy,
                                    const SweepConfig& cfg) {
  if (!problem.growth)
    throw MissingGrowthError("strong_error_sup: problem " + problem.name +
                             " declares no diffusion growth bound (r, Kbar)");
  ErrorReport full = convergence_sweep(problem, policy, cfg, true);
  std::erase_if(full.rows, [](const ErrorRow& r) {
    return r.estimator == Estimator::FixedT_x || r.estimator == Estimator::FixedT_xbar;
  });
  std::erase_if(full.fitted_orders, [](const FittedOrder& f) {
    return f.estimator == Estimator::FixedT_x || f.estimator == Estimator::FixedT_xbar;
  });
  return full;
}

inline ErrorReport strong_error_at_T(const SweepConfig& cfg) {
  const NSDDEProblem problem = make_problem(cfg.problem_name, cfg.x0);
  return strong_error_at_T(problem, make_policy(cfg.policy_name, cfg.epsilon), cfg);
}

inline ErrorReport strong_error_sup(const SweepConfig& cfg) {
  const NSDDEProblem problem = make_problem(cfg.problem_name, cfg.x0);
  return strong_error_sup(problem, make_policy(cfg.policy_name, cfg.epsilon), cfg);
}

struct MomentRow {
  std::size_t m = 0;
  double delta = 0.0;
  double t = 0.0;
  double sup_moment = 0.0;  // E sup_{s <= t} |x(s)|^pbar over fine nodes
  double sup_std_error = 0.0;
  double fixed_moment = 0.0;  // E |x(t)|^pbar
  double fixed_std_error = 0.0;
  std::size_t divergent_paths = 0;
};

struct MomentTable {
  SweepConfig config;
  double exponent = 0.0;
  std::vector<MomentRow> rows;

  // E sup_{t <= T} |x(t)|^pbar for each step, in coarse_m_list order.
  std::vector<double> horizon_sup_moments() const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.t == config.horizon) out.push_back(r.sup_moment);
    return out;
  }
  double max_over_steps() const {
    const auto v = horizon_sup_moments();
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  }
  // max/min across steps; 1 when every entry is zero.
  double ratio_across_steps() const {
    const auto v = horizon_sup_moments();
    if (v.empty()) return 1.0;
    const double hi = *std::max_element(v.begin(), v.end());
    const double lo = *std::min_element(v.begin(), v.end());
    if (hi == 0.0) return 1.0;
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  }
  std::size_t divergent_paths_total() const {
    std::map<std::size_t, std::size_t> per_m;
    for (const auto& r : rows) per_m[r.m] = r.divergent_paths;
    std::size_t total = 0;
    for (const auto& [m, n] : per_m) total += n;
    return total;
  }
};

// Moments of the continuous-time solution for each step in coarse_m_list,
// at checkpoints t = j tau / g (g = gcd of the coarse m values), which are
// nodes of every mesh in the sweep. Running sups use all nodes of the m_ref
// grid.
inline MomentTable moment_sweep(const NSDDEProblem& problem, const TruncationPolicy& policy, const SweepConfig& cfg) {
  if (!cfg.moment_exponent) throw ConfigError("moment_sweep: moment_exponent is required");
  cfg.validate(problem);
  const double pbar = *cfg.moment_exponent;
  const MeshSpec ref_mesh = MeshSpec::make(problem.delay, cfg.m_ref, cfg.horizon);
  std::size_t g = 0;
  for (std::size_t m : cfg.coarse_m_list) g = std::gcd(g, m);
  const std::size_t fine_per_checkpoint = cfg.m_ref / g;
  const std::size_t checkpoints = ref_mesh.total_steps / fine_per_checkpoint;
  const std::size_t nm = cfg.coarse_m_list.size();
  const std::size_t M = cfg.paths;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // [path][m][checkpoint] -> (running sup, value at checkpoint)
  std::vector<double> sups(M * nm * checkpoints, nan), fixed(M * nm * checkpoints, nan);

  parallel_chunks(M, detail::kPathChunks, cfg.workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    Vector x(problem.dim_x);
    for (std::size_t path = begin; path < end; ++path) {
      const BrownianGrid grid(cfg.seed, path, ref_mesh, problem.dim_w);
      for (std::size_t mi = 0; mi < nm; ++mi) {
        const std::size_t factor = cfg.m_ref / cfg.coarse_m_list[mi];
        const MeshSpec mesh = ref_mesh.coarsened(factor);
        const std::vector<double> inc = coarsen(grid, factor);
        const auto sol = detail::run_scheme(problem, policy, cfg.scheme, mesh, inc, path);
        if (!sol) continue;
        const Interpolant interp(problem, *sol, factor);
        double running = 0.0;
        std::size_t c = 0;
        for (std::size_t j = 0; j <= ref_mesh.total_steps; ++j) {
          interp.eval(j, grid, x);
          const double v = norm(x);
          running = std::max(running, v);
          if (j > 0 && j % fine_per_checkpoint == 0) {
            const std::size_t idx = (path * nm + mi) * checkpoints + c++;
            sups[idx] = running;
            fixed[idx] = v;
          }
        }
      }
    }
  });

  MomentTable table;
  table.config = cfg;
  table.exponent = pbar;
  std::vector<double> col_sup(M), col_fixed(M);
  for (std::size_t mi = 0; mi < nm; ++mi) {
    const std::size_t m = cfg.coarse_m_list[mi];
    const double delta = ref_mesh.coarsened(cfg.m_ref / m).dt;
    std::size_t divergent = 0;
    for (std::size_t path = 0; path < M; ++path)
      if (!std::isfinite(sups[(path * nm + mi) * checkpoints])) ++divergent;
    for (std::size_t c = 0; c < checkpoints; ++c) {
      for (std::size_t path = 0; path < M; ++path) {
        col_sup[path] = sups[(path * nm + mi) * checkpoints + c];
        col_fixed[path] = fixed[(path * nm + mi) * checkpoints + c];
      }
      const MomentEstimate s = estimate_moment(col_sup, pbar);
      const MomentEstimate f = estimate_moment(col_fixed, pbar);
      MomentRow row;
      row.m = m;
      row.delta = delta;
      row.t = c + 1 == checkpoints ? cfg.horizon
                                   : static_cast<double>((c + 1) * fine_per_checkpoint) * ref_mesh.dt;
      row.sup_moment = s.mean;
      row.sup_std_error = s.std_error;
      row.fixed_moment = f.mean;
      row.fixed_std_error = f.std_error;
      row.divergent_paths = divergent;
      table.rows.push_back(row);
    }
  }
  return table;
}

inline MomentTable moment_sweep(const SweepConfig& cfg) {
  const NSDDEProblem problem = make_problem(cfg.problem_name, cfg.x0);
  return moment_sweep(problem, make_policy(cfg.policy_name, cfg.epsilon), cfg);
}

}  // namespace mtem
