#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtem/errors.hpp"
#include "mtem/model.hpp"
#include "mtem/montecarlo.hpp"
#include "mtem/paths.hpp"
#include "mtem/probes.hpp"
#include "mtem/report.hpp"
#include "mtem/scheme.hpp"
#include "mtem/truncation.hpp"

namespace mtem::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kValidation = 3,
  kViolation = 4,
  kDivergence = 5,
};

struct CheckSection {
  double radius = 5.0;
  std::uint64_t samples = 10000;
  double q = 4.0;
  std::vector<double> deltas;  // empty: delta_star and the decades 1e-2 .. 1e-6 below it
  std::vector<double> a_grid{0.25, 0.5, 0.75, 1.0};
  double khat = 1.0;
};

struct SimulateSection {
  std::string scheme = "mtem";
  std::size_t m = 8;
  double horizon = 2.0;
  std::uint64_t path_index = 0;
};

struct SweepSection {
  std::string scheme = "mtem";
  std::vector<double> q_list{4.0};
  std::vector<std::size_t> coarse_m_list{8, 16, 32, 64, 128};
  std::size_t m_ref = 1024;
  double horizon = 2.0;
  std::size_t paths = 2000;
  std::optional<double> moment_exponent;
};

struct RunConfig {
  std::string command;
  std::string problem = "example2";
  std::string policy;              // empty: the problem's default
  std::optional<double> epsilon;   // empty: the policy's default
  double x0 = 1.0;
  std::uint64_t seed = 1;
  unsigned worker_count = 1;       // never changes results; not echoed
  std::string output_dir = "runs"; // not echoed
  CheckSection check;
  SimulateSection simulate;
  SweepSection sweep;
};

inline double default_epsilon_for_policy(std::string_view policy) {
  if (policy == "ex1-inverse") return 0.5;
  if (policy == "ex2-closed-form") return 0.9;
  throw UnknownNameError("unknown truncation policy '" + std::string(policy) +
                         "' (known: ex1-inverse, ex2-closed-form)");
}

// Fills the policy and epsilon defaults; throws UnknownNameError for an
// unknown problem or policy.
inline void resolve(RunConfig& c) {
  make_problem(c.problem);
  if (c.policy.empty()) c.policy = default_policy_for(c.problem).first;
  if (!c.epsilon) c.epsilon = default_epsilon_for_policy(c.policy);
}

inline SweepConfig sweep_config(const RunConfig& c) {
  SweepConfig s;
  s.problem_name = c.problem;
  s.policy_name = c.policy;
  s.epsilon = c.epsilon.value_or(0.9);
  s.q_list = c.sweep.q_list;
  s.coarse_m_list = c.sweep.coarse_m_list;
  s.m_ref = c.sweep.m_ref;
  s.horizon = c.sweep.horizon;
  s.paths = c.sweep.paths;
  s.seed = c.seed;
  s.moment_exponent = c.sweep.moment_exponent;
  s.x0 = c.x0;
  s.scheme = parse_scheme(c.sweep.scheme);
  s.workers = c.worker_count;
  return s;
}

// The echo holds the resolved globals and the section of the command.
inline Json echo(const RunConfig& c) {
  Json j;
  j["command"] = c.command;
  j["problem"] = c.problem;
  j["policy"] = c.policy;
  if (c.epsilon) j["epsilon"] = *c.epsilon;
  j["x0"] = c.x0;
  j["seed"] = c.seed;
  if (c.command == "check") {
    j["check"] = {{"radius", c.check.radius}, {"samples", c.check.samples}, {"q", c.check.q},
                  {"deltas", c.check.deltas}, {"a_grid", c.check.a_grid}, {"khat", c.check.khat}};
  } else if (c.command == "simulate") {
    j["simulate"] = {{"scheme", c.simulate.scheme}, {"m", c.simulate.m}, {"horizon", c.simulate.horizon},
                     {"path_index", c.simulate.path_index}};
  } else if (c.command == "converge" || c.command == "moments") {
    Json s = {{"scheme", c.sweep.scheme},     {"q_list", c.sweep.q_list}, {"coarse_m_list", c.sweep.coarse_m_list},
              {"m_ref", c.sweep.m_ref},       {"horizon", c.sweep.horizon}, {"paths", c.sweep.paths}};
    if (c.sweep.moment_exponent) s["moment_exponent"] = *c.sweep.moment_exponent;
    j["sweep"] = s;
  }
  return j;
}

namespace detail {

// Typed field extraction that records "path: message" for every problem and
// flags unknown keys.
class Reader {
 public:
  Reader(const Json& j, std::string prefix, std::vector<std::string>& issues)
      : j_(j), prefix_(std::move(prefix)), issues_(issues) {
    if (!j_.is_object()) issues_.push_back(where("") + "must be an object");
  }

  void text(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
      if (v->is_string())
        out = v->get<std::string>();
      else
        issues_.push_back(where(key) + "must be a string");
    }
  }

  void real(const char* key, double& out) {
    if (const Json* v = find(key)) {
      if (v->is_number())
        out = v->get<double>();
      else
        issues_.push_back(where(key) + "must be a number");
    }
  }

  void real(const char* key, std::optional<double>& out) {
    double tmp = 0.0;
    if (const Json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (v->is_number()) {
        tmp = v->get<double>();
        out = tmp;
      } else {
        issues_.push_back(where(key) + "must be a number");
      }
    }
  }

  template <class Int>
  void count(const char* key, Int& out) {
    if (const Json* v = find(key)) {
      if (v->is_number_unsigned())
        out = v->get<Int>();
      else
        issues_.push_back(where(key) + "must be a non-negative integer");
    }
  }

  void reals(const char* key, std::vector<double>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) {
        issues_.push_back(where(key) + "must be an array of numbers");
        return;
      }
      std::vector<double> tmp;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if ((*v)[i].is_number())
          tmp.push_back((*v)[i].get<double>());
        else
          issues_.push_back(where(key) + "[" + std::to_string(i) + "] must be a number");
      }
      out = std::move(tmp);
    }
  }

  void counts(const char* key, std::vector<std::size_t>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) {
        issues_.push_back(where(key) + "must be an array of non-negative integers");
        return;
      }
      std::vector<std::size_t> tmp;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if ((*v)[i].is_number_unsigned())
          tmp.push_back((*v)[i].get<std::size_t>());
        else
          issues_.push_back(prefix_ + key + "[" + std::to_string(i) + "]: must be a non-negative integer");
      }
      out = std::move(tmp);
    }
  }

  const Json* section(const char* key) { return find(key); }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) issues_.push_back(prefix_ + k + ": unknown field");
  }

 private:
  const Json* find(const char* key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }
  std::string where(const std::string& key) const {
    if (key.empty()) return (prefix_.empty() ? std::string("config") : prefix_.substr(0, prefix_.size() - 1)) + ": ";
    return prefix_ + key + ": ";
  }

  const Json& j_;
  std::string prefix_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

}  // namespace detail

// Overlays the fields present in `j` onto `c`; type problems and unknown
// keys are appended to `issues` with their path.
inline void apply_json(const Json& j, RunConfig& c, std::vector<std::string>& issues) {
  detail::Reader r(j, "", issues);
  std::string command;
  r.text("command", command);
  r.text("problem", c.problem);
  r.text("policy", c.policy);
  r.real("epsilon", c.epsilon);
  r.real("x0", c.x0);
  r.count("seed", c.seed);
  r.count("worker_count", c.worker_count);
  r.text("output_dir", c.output_dir);
  if (const Json* s = r.section("check")) {
    detail::Reader cr(*s, "check.", issues);
    cr.real("radius", c.check.radius);
    cr.count("samples", c.check.samples);
    cr.real("q", c.check.q);
    cr.reals("deltas", c.check.deltas);
    cr.reals("a_grid", c.check.a_grid);
    cr.real("khat", c.check.khat);
    cr.finish();
  }
  if (const Json* s = r.section("simulate")) {
    detail::Reader sr(*s, "simulate.", issues);
    sr.text("scheme", c.simulate.scheme);
    sr.count("m", c.simulate.m);
    sr.real("horizon", c.simulate.horizon);
    sr.count("path_index", c.simulate.path_index);
    sr.finish();
  }
  if (const Json* s = r.section("sweep")) {
    detail::Reader wr(*s, "sweep.", issues);
    wr.text("scheme", c.sweep.scheme);
    wr.reals("q_list", c.sweep.q_list);
    wr.counts("coarse_m_list", c.sweep.coarse_m_list);
    wr.count("m_ref", c.sweep.m_ref);
    wr.real("horizon", c.sweep.horizon);
    wr.count("paths", c.sweep.paths);
    wr.real("moment_exponent", c.sweep.moment_exponent);
    wr.finish();
  }
  r.finish();
}

// Default check steps: delta_star and every 10^-k (k = 2..6) not above it.
inline std::vector<double> default_check_deltas(const TruncationPolicy& policy) {
  std::vector<double> out{policy.delta_star};
  for (int k = 2; k <= 6; ++k) {
    const double dt = std::pow(10.0, -k);
    if (dt < policy.delta_star) out.push_back(dt);
  }
  return out;
}

// Semantic checks for `c.command` on a resolved config.
inline std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> issues;
  const NSDDEProblem problem = make_problem(c.problem, c.x0);
  const double p = problem.khasminskii_p;
  if (!(c.epsilon && *c.epsilon > 0.0 && *c.epsilon < 1.0)) {
    issues.push_back("epsilon: must lie in (0, 1)");
    return issues;
  }
  const TruncationPolicy policy = make_policy(c.policy, *c.epsilon);
  if (!std::isfinite(c.x0)) issues.push_back("x0: must be finite");
  if (c.worker_count == 0) issues.push_back("worker_count: must be at least 1");

  auto check_scheme = [&](const std::string& field, const std::string& name) {
    if (name != "mtem" && name != "em") issues.push_back(field + ": unknown scheme '" + name + "' (known: mtem, em)");
  };
  auto check_step = [&](const std::string& field, std::size_t m, const std::string& scheme) {
    if (scheme != "mtem" || m == 0) return;
    const double dt = problem.delay / static_cast<double>(m);
    if (!policy.in_domain(dt))
      issues.push_back(field + ": step " + format_double(dt) + " lies outside the domain of policy " + policy.label +
                       " (dt < " + format_double(policy.domain_limit) + ")");
  };

  if (c.command == "check") {
    const auto& s = c.check;
    if (!(s.radius > 0.0)) issues.push_back("check.radius: must be positive");
    if (s.samples == 0) issues.push_back("check.samples: must be at least 1");
    if (!(s.q > 2.0 && s.q < p)) issues.push_back("check.q: must lie in (2, p) with p = " + format_double(p));
    if (!(s.khat > 0.0)) issues.push_back("check.khat: must be positive");
    for (std::size_t i = 0; i < s.a_grid.size(); ++i)
      if (!(s.a_grid[i] > 0.0 && s.a_grid[i] <= 1.0))
        issues.push_back("check.a_grid[" + std::to_string(i) + "]: must lie in (0, 1]");
    if (s.a_grid.empty()) issues.push_back("check.a_grid: must not be empty");
    if (!(policy.delta_star > 0.0)) issues.push_back("policy: no admissible step for " + policy.label);
    for (std::size_t i = 0; i < s.deltas.size(); ++i) {
      const double dt = s.deltas[i];
      const std::string field = "check.deltas[" + std::to_string(i) + "]";
      if (!policy.admissible(dt)) {
        issues.push_back(field + ": must lie in (0, delta_star = " + format_double(policy.delta_star) + "]");
        continue;
      }
      const double ratio = problem.delay / dt;
      if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
        issues.push_back(field + ": delay / delta must be an integer");
    }
  } else if (c.command == "simulate") {
    const auto& s = c.simulate;
    check_scheme("simulate.scheme", s.scheme);
    if (s.m == 0) issues.push_back("simulate.m: must be at least 1");
    if (!(s.horizon > 0.0)) issues.push_back("simulate.horizon: must be positive");
    if (s.m > 0 && s.horizon > 0.0) {
      try {
        MeshSpec::make(problem.delay, s.m, s.horizon);
      } catch (const ConfigError& e) {
        issues.push_back(std::string("simulate.horizon: ") + e.what());
      }
    }
    check_step("simulate.m", s.m, s.scheme);
  } else if (c.command == "converge" || c.command == "moments") {
    const auto& s = c.sweep;
    check_scheme("sweep.scheme", s.scheme);
    if (c.command == "moments" && !s.moment_exponent)
      issues.push_back("sweep.moment_exponent: required by the moments command");
    if (issues.empty()) {
      for (const auto& msg : sweep_config(c).issues(problem)) issues.push_back("sweep." + msg);
      for (std::size_t i = 0; i < s.coarse_m_list.size(); ++i)
        check_step("sweep.coarse_m_list[" + std::to_string(i) + "]", s.coarse_m_list[i], s.scheme);
      check_step("sweep.m_ref", s.m_ref, s.scheme);
    }
  }
  return issues;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
}

inline std::string with_echo_line(const Json& e, const std::string& csv) { return "# config " + e.dump() + "\n" + csv; }

inline std::filesystem::path prepare_run_dir(const RunConfig& c, const Json& e) {
  const std::filesystem::path dir = std::filesystem::path(c.output_dir) / run_id(e);
  std::filesystem::create_directories(dir);
  write_file(dir / "config.json", e.dump(2) + "\n");
  return dir;
}

}  // namespace detail

inline int cmd_check(const RunConfig& c, std::ostream& out) {
  const NSDDEProblem problem = make_problem(c.problem, c.x0);
  const TruncationPolicy policy = make_policy(c.policy, *c.epsilon);
  const ProbeOptions opt{c.seed, c.worker_count};
  const auto& s = c.check;
  const std::vector<double> deltas = s.deltas.empty() ? default_check_deltas(policy) : s.deltas;

  struct Entry {
    std::string context;
    ConditionProbeReport report;
  };
  std::vector<Entry> entries;
  const std::string ball = "radius=" + format_double(s.radius);
  entries.push_back({ball, probe_local_lipschitz(problem, s.radius, s.samples, opt)});
  entries.push_back({ball, probe_contractivity(problem, s.radius, s.samples, opt)});
  entries.push_back({ball, probe_khasminskii(problem, s.radius, s.a_grid, s.samples, opt)});
  if (problem.growth) entries.push_back({ball, probe_growth_g(problem, s.radius, s.samples, opt)});
  for (double dt : deltas) {
    const std::string ctx = "delta=" + format_double(dt);
    entries.push_back({ctx, probe_initial_modulus(problem, dt, s.q, s.khat)});
    entries.push_back({ctx, probe_trunc_lipschitz(problem, policy, dt, s.samples, opt)});
    entries.push_back({ctx, probe_trunc_khasminskii(problem, policy, dt, s.samples, opt)});
  }
  const AdmissibilityReport adm = check_admissibility(policy, problem.lipschitz_of_radius, problem.khasminskii_p, s.q, deltas);

  const Json e = echo(c);
  const auto dir = detail::prepare_run_dir(c, e);
  std::ostringstream csv;
  csv << "condition,context,samples_tested,violations,worst_margin\n";
  bool ok = true;
  Json reports = Json::array();
  for (const auto& [ctx, r] : entries) {
    csv << to_string(r.condition) << ',' << ctx << ',' << r.samples_tested << ',' << r.violations << ','
        << format_double(r.worst_margin) << '\n';
    Json jr = to_json(r);
    jr["context"] = ctx;
    reports.push_back(jr);
    ok = ok && r.passed();
    out << (r.passed() ? "ok   " : "FAIL ") << to_string(r.condition) << " [" << ctx << "] samples=" << r.samples_tested
        << " violations=" << r.violations << " worst_margin=" << format_double(r.worst_margin) << '\n';
  }
  for (const auto& row : adm.rows)
    out << ((row.rate_condition && row.l4_decreasing) ? "ok   " : "FAIL ") << "admissibility [delta="
        << format_double(row.delta) << "] h=" << format_double(row.h) << " L^4*delta=" << format_double(row.l4_delta)
        << (row.l4_decreasing ? "" : " (not decreasing)") << " rate_bound=" << format_double(row.rate_bound)
        << (row.rate_condition ? "" : " (rate condition fails)") << '\n';
  ok = ok && adm.all_hold();
  detail::write_file(dir / "probes.csv", detail::with_echo_line(e, csv.str()));
  Json summary;
  summary["run_id"] = run_id(e);
  summary["config"] = e;
  summary["probes"] = reports;
  summary["admissibility"] = to_json(adm);
  summary["passed"] = ok;
  detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
  out << "run " << dir.string() << '\n';
  return ok ? kOk : kViolation;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
  const NSDDEProblem problem = make_problem(c.problem, c.x0);
  const TruncationPolicy policy = make_policy(c.policy, *c.epsilon);
  const auto& s = c.simulate;
  const MeshSpec mesh = MeshSpec::make(problem.delay, s.m, s.horizon);
  const BrownianGrid grid(c.seed, s.path_index, mesh, problem.dim_w);
  const PathSolution sol =
      s.scheme == "em" ? simulate_em(problem, grid) : simulate_mtem(problem, policy, grid);
  const Json e = echo(c);
  const auto dir = detail::prepare_run_dir(c, e);
  std::ostringstream csv;
  write_trace_csv(csv, sol);
  detail::write_file(dir / "trace.csv", detail::with_echo_line(e, csv.str()));
  Json summary;
  summary["run_id"] = run_id(e);
  summary["config"] = e;
  summary["delta"] = mesh.dt;
  if (sol.h_value) summary["h"] = *sol.h_value;
  summary["truncation_activations"] = sol.truncation_activations;
  const ConstVec fin = sol.final_state();
  summary["final_state"] = std::vector<double>(fin.begin(), fin.end());
  detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
  out << "truncation_activations " << sol.truncation_activations << '\n';
  out << "run " << dir.string() << '\n';
  return kOk;
}

inline int cmd_converge(const RunConfig& c, std::ostream& out) {
  const NSDDEProblem problem = make_problem(c.problem, c.x0);
  const TruncationPolicy policy = make_policy(c.policy, *c.epsilon);
  const ErrorReport report = convergence_sweep(problem, policy, sweep_config(c), problem.growth.has_value());
  const Json e = echo(c);
  const auto dir = detail::prepare_run_dir(c, e);
  std::ostringstream csv;
  write_error_csv(csv, report);
  detail::write_file(dir / "errors.csv", detail::with_echo_line(e, csv.str()));
  detail::write_file(dir / "summary.json", error_summary_json(report, e).dump(2) + "\n");
  for (std::size_t m : c.sweep.coarse_m_list) {
    out << "m=" << m;
    for (const auto& r : report.rows)
      if (r.m == m) out << ' ' << to_string(r.estimator) << "(q=" << format_double(r.q) << ")=" << format_double(r.error_q);
    out << '\n';
  }
  for (const auto& f : report.fitted_orders)
    out << "order " << to_string(f.estimator) << " q=" << format_double(f.q) << " slope=" << format_double(f.slope)
        << " se=" << format_double(f.slope_se) << '\n';
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  out << "run " << dir.string() << '\n';
  return kOk;
}

inline int cmd_moments(const RunConfig& c, std::ostream& out) {
  const NSDDEProblem problem = make_problem(c.problem, c.x0);
  const TruncationPolicy policy = make_policy(c.policy, *c.epsilon);
  const MomentTable table = moment_sweep(problem, policy, sweep_config(c));
  const Json e = echo(c);
  const auto dir = detail::prepare_run_dir(c, e);
  std::ostringstream csv;
  write_moment_csv(csv, table);
  detail::write_file(dir / "moments.csv", detail::with_echo_line(e, csv.str()));
  detail::write_file(dir / "summary.json", moment_summary_json(table, e).dump(2) + "\n");
  const auto sups = table.horizon_sup_moments();
  for (std::size_t i = 0; i < sups.size() && i < c.sweep.coarse_m_list.size(); ++i)
    out << "m=" << c.sweep.coarse_m_list[i] << " E sup|x|^pbar=" << format_double(sups[i]) << '\n';
  out << "ratio_across_steps " << format_double(table.ratio_across_steps()) << '\n';
  out << "divergent_paths " << table.divergent_paths_total() << '\n';
  out << "run " << dir.string() << '\n';
  return kOk;
}

// Entry point: parses `args` (without the program name), runs the command and
// returns its exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Modified truncated Euler-Maruyama for neutral stochastic delay equations"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string problem, policy, output_dir;
  double epsilon = 0.0, x0 = 0.0;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  auto* o_config = app.add_option("--config", config_path, "JSON config file; flags override its fields");
  auto* o_problem = app.add_option("--problem", problem, "example1 | example2");
  auto* o_policy = app.add_option("--policy", policy, "ex1-inverse | ex2-closed-form");
  auto* o_eps = app.add_option("--epsilon", epsilon, "truncation policy exponent");
  auto* o_x0 = app.add_option("--x0", x0, "constant initial value");
  auto* o_seed = app.add_option("--seed", seed, "random seed");
  auto* o_workers = app.add_option("--workers,--worker-count", workers, "worker threads (results do not depend on it)");
  auto* o_outdir = app.add_option("--output-dir", output_dir, "root directory for run artifacts");

  auto* check = app.add_subcommand("check", "probe the structural conditions and step admissibility");
  double radius = 0.0, check_q = 0.0, khat = 0.0;
  std::uint64_t samples = 0;
  std::vector<double> deltas;
  auto* o_radius = check->add_option("--radius", radius, "probe domain radius");
  auto* o_samples = check->add_option("--samples", samples, "samples per probe");
  auto* o_check_q = check->add_option("--q", check_q, "moment order for admissibility");
  auto* o_deltas = check->add_option("--deltas", deltas, "steps for the truncated probes and admissibility");
  auto* o_khat = check->add_option("--khat", khat, "initial-segment modulus constant");

  auto* simulate = app.add_subcommand("simulate", "run one path and write its trace");
  std::string sim_scheme;
  std::size_t sim_m = 0;
  double sim_horizon = 0.0;
  std::uint64_t sim_path = 0;
  auto* o_sim_scheme = simulate->add_option("--scheme", sim_scheme, "mtem | em");
  auto* o_sim_m = simulate->add_option("--m", sim_m, "steps per delay");
  auto* o_sim_horizon = simulate->add_option("--horizon", sim_horizon, "final time T");
  auto* o_sim_path = simulate->add_option("--path-index", sim_path, "Brownian path index");

  auto* converge = app.add_subcommand("converge", "coupled strong-error sweep and order fit");
  auto* moments = app.add_subcommand("moments", "moment sweep across steps");
  std::string sw_scheme;
  std::vector<double> sw_q;
  std::vector<std::size_t> sw_m;
  std::size_t sw_mref = 0, sw_paths = 0;
  double sw_horizon = 0.0, sw_pbar = 0.0;
  std::vector<CLI::Option*> sweep_opts;
  for (CLI::App* sub : {converge, moments}) {
    sweep_opts.push_back(sub->add_option("--scheme", sw_scheme, "mtem | em"));
    sweep_opts.push_back(sub->add_option("--q", sw_q, "moment orders")->delimiter(','));
    sweep_opts.push_back(sub->add_option("--m-list", sw_m, "coarse steps per delay")->delimiter(','));
    sweep_opts.push_back(sub->add_option("--m-ref", sw_mref, "reference steps per delay"));
    sweep_opts.push_back(sub->add_option("--horizon", sw_horizon, "final time T"));
    sweep_opts.push_back(sub->add_option("--paths", sw_paths, "Monte Carlo paths"));
  }
  auto* o_pbar = moments->add_option("--pbar", sw_pbar, "moment exponent");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  RunConfig c;
  for (CLI::App* sub : app.get_subcommands()) c.command = sub->get_name();
  std::vector<std::string> issues;
  if (o_config->count()) {
    std::ifstream f(config_path);
    if (!f) {
      err << "validation error:\n  config: cannot read " << config_path << '\n';
      return kValidation;
    }
    Json j;
    try {
      j = Json::parse(f);
    } catch (const Json::parse_error& e) {
      err << "validation error:\n  config: " << e.what() << '\n';
      return kValidation;
    }
    apply_json(j, c, issues);
  }
  if (o_problem->count()) c.problem = problem;
  if (o_policy->count()) c.policy = policy;
  if (o_eps->count()) c.epsilon = epsilon;
  if (o_x0->count()) c.x0 = x0;
  if (o_seed->count()) c.seed = seed;
  if (o_workers->count()) c.worker_count = workers;
  if (o_outdir->count()) c.output_dir = output_dir;
  if (o_radius->count()) c.check.radius = radius;
  if (o_samples->count()) c.check.samples = samples;
  if (o_check_q->count()) c.check.q = check_q;
  if (o_deltas->count()) c.check.deltas = deltas;
  if (o_khat->count()) c.check.khat = khat;
  if (o_sim_scheme->count()) c.simulate.scheme = sim_scheme;
  if (o_sim_m->count()) c.simulate.m = sim_m;
  if (o_sim_horizon->count()) c.simulate.horizon = sim_horizon;
  if (o_sim_path->count()) c.simulate.path_index = sim_path;
  auto given = [&](std::size_t k) { return sweep_opts[k]->count() + sweep_opts[k + 6]->count() > 0; };
  if (given(0)) c.sweep.scheme = sw_scheme;
  if (given(1)) c.sweep.q_list = sw_q;
  if (given(2)) c.sweep.coarse_m_list = sw_m;
  if (given(3)) c.sweep.m_ref = sw_mref;
  if (given(4)) c.sweep.horizon = sw_horizon;
  if (given(5)) c.sweep.paths = sw_paths;
  if (o_pbar->count()) c.sweep.moment_exponent = sw_pbar;

  try {
    resolve(c);
  } catch (const UnknownNameError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  if (issues.empty()) issues = validate(c);
  if (!issues.empty()) {
    err << "validation error:\n";
    for (const auto& s : issues) err << "  " << s << '\n';
    return kValidation;
  }

  try {
    if (c.command == "check") return cmd_check(c, out);
    if (c.command == "simulate") return cmd_simulate(c, out);
    if (c.command == "converge") return cmd_converge(c, out);
    return cmd_moments(c, out);
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const ConfigError& e) {
    err << "validation error:\n  " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace mtem::cli
