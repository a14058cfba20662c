#pragma once

#include <json.hpp>
#include <ostream>
#include <sstream>
#include <string>

#include "corrstop/csv.hpp"
#include "corrstop/procedure.hpp"

// Serialization of selection traces: a JSON document carrying the full
// record (config included, so a trace can be replayed), and a flat CSV with
// one row per step.

namespace corrstop {

inline std::string test_policy_name(TestPolicy p) {
  switch (p) {
    case TestPolicy::Auto: return "auto";
    case TestPolicy::ForceIid: return "iid";
    case TestPolicy::ForceEquicorr: return "equicorr";
    case TestPolicy::ForcePermutation: return "perm";
  }
  return "?";
}

inline TestPolicy test_policy_from_name(const std::string& s) {
  if (s == "auto") return TestPolicy::Auto;
  if (s == "iid") return TestPolicy::ForceIid;
  if (s == "equicorr") return TestPolicy::ForceEquicorr;
  if (s == "perm") return TestPolicy::ForcePermutation;
  throw std::invalid_argument("unknown test mode '" + s + "'");
}

inline Method method_from_name(const std::string& s) {
  if (s == "fsr") return Method::Fsr;
  if (s == "lars") return Method::Lars;
  if (s == "lasso") return Method::Lasso;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline TestMode test_mode_from_name(const std::string& s) {
  if (s == "IID_ANALYTIC") return TestMode::IidAnalytic;
  if (s == "EQUICORR_ANALYTIC") return TestMode::EquicorrAnalytic;
  if (s == "PERMUTATION") return TestMode::Permutation;
  throw std::invalid_argument("unknown test mode '" + s + "'");
}

inline nlohmann::json trace_to_json(const SelectionTrace& trace) {
  nlohmann::json j;
  j["config"] = {
      {"method", method_name(trace.config.method)},
      {"gamma", trace.config.gamma},
      {"test_mode", test_policy_name(trace.config.test_mode)},
      {"permutation_rounds", trace.config.permutation_rounds},
      {"c_switch", trace.config.c_switch},
      {"seed", trace.config.seed},
  };
  j["n"] = trace.n;
  j["p"] = trace.p;
  if (!trace.column_names.empty()) j["column_names"] = trace.column_names;
  j["rho_hat"] = trace.rho_hat;
  nlohmann::json steps = nlohmann::json::array();
  for (const StepRecord& rec : trace.steps) {
    nlohmann::json r;
    r["k"] = rec.step_k;
    r["event"] = trace_event_name(rec.event);
    r["variable"] = rec.variable;
    r["active_after"] = rec.active_after;
    if (rec.p_value) r["p_value"] = *rec.p_value;
    if (rec.mode) r["mode"] = test_mode_name(*rec.mode);
    if (rec.statistics) {
      r["statistics"] = {
          {"r_max", rec.statistics->r_max},       {"u_max", rec.statistics->u_max},
          {"v_max", rec.statistics->v_max},       {"t_stat", rec.statistics->t_stat},
          {"argmax_index", rec.statistics->argmax_index},
          {"inactive_count", rec.statistics->inactive_count},
      };
    }
    steps.push_back(std::move(r));
  }
  j["steps"] = std::move(steps);
  j["final_active"] = trace.final_active;
  j["final_coefficients"] = {
      {"indices", trace.final_coefficients.indices},
      {"values", trace.final_coefficients.values},
      {"intercept", trace.final_coefficients.intercept},
  };
  j["skipped_rank_deficient"] = trace.skipped_rank_deficient;
  j["stop_reason"] = trace.stop_reason;
  j["wall_seconds"] = trace.wall_seconds;
  return j;
}

inline SelectionTrace trace_from_json(const nlohmann::json& j) {
  SelectionTrace trace;
  const auto& c = j.at("config");
  trace.config.method = method_from_name(c.at("method").get<std::string>());
  trace.config.gamma = c.at("gamma").get<double>();
  trace.config.test_mode = test_policy_from_name(c.at("test_mode").get<std::string>());
  trace.config.permutation_rounds = c.at("permutation_rounds").get<int>();
  trace.config.c_switch = c.at("c_switch").get<double>();
  trace.config.seed = c.at("seed").get<std::uint64_t>();
  trace.n = j.at("n").get<int>();
  trace.p = j.at("p").get<int>();
  if (j.contains("column_names"))
    trace.column_names = j.at("column_names").get<std::vector<std::string>>();
  trace.rho_hat = j.at("rho_hat").get<double>();
  for (const auto& r : j.at("steps")) {
    StepRecord rec;
    rec.step_k = r.at("k").get<int>();
    const std::string ev = r.at("event").get<std::string>();
    rec.event = ev == "enter"       ? TraceEventKind::Enter
                : ev == "drop"      ? TraceEventKind::Drop
                : ev == "exhausted" ? TraceEventKind::Exhausted
                                    : TraceEventKind::Stop;
    rec.variable = r.at("variable").get<int>();
    rec.active_after = r.at("active_after").get<std::vector<int>>();
    if (r.contains("p_value")) rec.p_value = r.at("p_value").get<double>();
    if (r.contains("mode")) rec.mode = test_mode_from_name(r.at("mode").get<std::string>());
    if (r.contains("statistics")) {
      StepStatistics st;
      const auto& s = r.at("statistics");
      st.r_max = s.at("r_max").get<double>();
      st.u_max = s.at("u_max").get<double>();
      st.v_max = s.at("v_max").get<double>();
      st.t_stat = s.at("t_stat").get<double>();
      st.argmax_index = s.at("argmax_index").get<int>();
      st.inactive_count = s.at("inactive_count").get<int>();
      rec.statistics = st;
    }
    trace.steps.push_back(std::move(rec));
  }
  trace.final_active = j.at("final_active").get<std::vector<int>>();
  const auto& fc = j.at("final_coefficients");
  trace.final_coefficients.indices = fc.at("indices").get<std::vector<int>>();
  trace.final_coefficients.values = fc.at("values").get<std::vector<double>>();
  trace.final_coefficients.intercept = fc.at("intercept").get<double>();
  trace.skipped_rank_deficient = j.at("skipped_rank_deficient").get<std::vector<int>>();
  trace.stop_reason = j.at("stop_reason").get<std::string>();
  trace.wall_seconds = j.at("wall_seconds").get<double>();
  return trace;
}

inline std::string trace_to_json_text(const SelectionTrace& trace) {
  return trace_to_json(trace).dump(2) + "\n";
}

// One row per step: k, event_kind, variable, p_value, mode, R, U, V, T.
inline void trace_to_csv(const SelectionTrace& trace, std::ostream& out) {
  out.precision(17);
  out << "k,event_kind,variable,p_value,mode,r,u,v,t\n";
  auto var_label = [&](int v) -> std::string {
    if (v < 0) return "";
    if (v < static_cast<int>(trace.column_names.size()))
      return trace.column_names[static_cast<std::size_t>(v)];
    return std::to_string(v);
  };
  for (const StepRecord& rec : trace.steps) {
    out << rec.step_k << ',' << trace_event_name(rec.event) << ','
        << csv_quote(var_label(rec.variable)) << ',';
    if (rec.p_value) out << *rec.p_value;
    out << ',';
    if (rec.mode) out << test_mode_name(*rec.mode);
    out << ',';
    if (rec.statistics) {
      out << rec.statistics->r_max << ',' << rec.statistics->u_max << ','
          << rec.statistics->v_max << ',' << rec.statistics->t_stat;
    } else {
      out << ",,,";
    }
    out << '\n';
  }
}

}  // namespace corrstop
