#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtem/io.hpp"
#include "mtem/montecarlo.hpp"
#include "mtem/probes.hpp"
#include "mtem/truncation.hpp"

namespace mtem {

using Json = nlohmann::ordered_json;

// Content hash of a config echo; names the run directory.
inline std::string run_id(const Json& echo) { return hex64(fnv1a64(echo.dump())); }

inline void write_error_csv(std::ostream& os, const ErrorReport& report) {
  const SweepConfig& c = report.config;
  os << "problem,policy,epsilon,q,estimator,m,delta,error_q,std_error,divergent_paths\n";
  for (const auto& r : report.rows)
    os << c.problem_name << ',' << c.policy_name << ',' << format_double(c.epsilon) << ',' << format_double(r.q)
       << ',' << to_string(r.estimator) << ',' << r.m << ',' << format_double(r.delta) << ','
       << format_double(r.error_q) << ',' << format_double(r.std_error) << ',' << r.divergent_paths << '\n';
}

inline Json fitted_orders_json(const std::vector<FittedOrder>& orders) {
  Json arr = Json::array();
  for (const auto& f : orders)
    arr.push_back({{"q", f.q},
                   {"estimator", std::string(to_string(f.estimator))},
                   {"slope", f.slope},
                   {"slope_se", f.slope_se},
                   {"points", f.points}});
  return arr;
}

inline Json error_summary_json(const ErrorReport& report, const Json& echo) {
  Json out;
  out["run_id"] = run_id(echo);
  out["config"] = echo;
  out["fitted_orders"] = fitted_orders_json(report.fitted_orders);
  out["divergent_paths_total"] = report.divergent_paths_total();
  out["warnings"] = report.warnings;
  return out;
}

inline void write_moment_csv(std::ostream& os, const MomentTable& table) {
  os << "problem,scheme,pbar,m,delta,t,sup_moment,sup_std_error,fixed_moment,fixed_std_error,divergent_paths\n";
  for (const auto& r : table.rows)
    os << table.config.problem_name << ',' << to_string(table.config.scheme) << ',' << format_double(table.exponent)
       << ',' << r.m << ',' << format_double(r.delta) << ',' << format_double(r.t) << ','
       << format_double(r.sup_moment) << ',' << format_double(r.sup_std_error) << ',' << format_double(r.fixed_moment)
       << ',' << format_double(r.fixed_std_error) << ',' << r.divergent_paths << '\n';
}

inline Json moment_summary_json(const MomentTable& table, const Json& echo) {
  Json out;
  out["run_id"] = run_id(echo);
  out["config"] = echo;
  out["pbar"] = table.exponent;
  out["horizon_sup_moments"] = table.horizon_sup_moments();
  out["max_over_steps"] = table.max_over_steps();
  out["ratio_across_steps"] = table.ratio_across_steps();
  out["divergent_paths_total"] = table.divergent_paths_total();
  return out;
}

inline Json to_json(const ProbeWitness& w) {
  return {{"index", w.index}, {"x", w.x}, {"y", w.y}, {"x_bar", w.x_bar}, {"y_bar", w.y_bar}, {"scalar", w.scalar}};
}

inline Json to_json(const ConditionProbeReport& r) {
  return {{"condition", std::string(to_string(r.condition))},
          {"samples_tested", r.samples_tested},
          {"violations", r.violations},
          {"worst_margin", r.worst_margin},
          {"witness", to_json(r.witness)}};
}

inline Json to_json(const AdmissibilityReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"delta", row.delta},
                    {"h", row.h},
                    {"l4_delta", row.l4_delta},
                    {"rate_bound", row.rate_bound},
                    {"rate_condition", row.rate_condition},
                    {"l4_decreasing", row.l4_decreasing}});
  return {{"rows", rows},
          {"rate_condition_holds", r.rate_condition_holds()},
          {"l4_decreasing", r.l4_decreasing()}};
}

}  // namespace mtem
