#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corrstop/linalg.hpp"
#include "corrstop/selectors.hpp"
#include "corrstop/testing.hpp"

// The test-based sequential selection driver: at each step the inactive
// columns and the response are residualized against the current active set,
// the maximal-correlation statistic and its p-value are computed, and the
// path advances only while the p-value stays at or below gamma (and the step
// count below n-2).

namespace corrstop {

struct SelectionConfig {
  Method method = Method::Lars;
  double gamma = 0.05;
  TestPolicy test_mode = TestPolicy::Auto;
  int permutation_rounds = 500;
  double c_switch = 0.01;
  std::uint64_t seed = 0;
  QuadratureGrid grid{};
};

enum class TraceEventKind { Enter, Drop, Stop, Exhausted };

inline const char* trace_event_name(TraceEventKind k) {
  switch (k) {
    case TraceEventKind::Enter: return "enter";
    case TraceEventKind::Drop: return "drop";
    case TraceEventKind::Stop: return "stop";
    case TraceEventKind::Exhausted: return "exhausted";
  }
  return "?";
}

struct StepRecord {
  int step_k = 0;  // test index; 0 for untested drop rows
  TraceEventKind event = TraceEventKind::Stop;
  int variable = -1;
  std::vector<int> active_after;
  std::optional<double> p_value;
  std::optional<TestMode> mode;
  std::optional<StepStatistics> statistics;
};

struct SelectionTrace {
  SelectionConfig config;
  int n = 0;
  int p = 0;
  std::vector<std::string> column_names;
  std::vector<StepRecord> steps;
  std::vector<int> final_active;
  SparseCoefficients final_coefficients;
  double rho_hat = 0.0;
  std::vector<int> skipped_rank_deficient;
  std::string stop_reason;
  double wall_seconds = 0.0;
};

namespace detail {

// Residual state for the statistic side of the procedure: the active-set
// projector plus the residualized columns and response, updated in O(np) per
// accepted entry.
struct ResidualState {
  ActiveBasis basis;
  Matrix columns;   // residualized copies of the design columns
  Vector y_resid;
  Vector orig_norms;
  std::vector<bool> eligible;

  ResidualState(const DesignData& data)
      : basis(data.n_rows(), 1e-10),
        columns(data.n_rows(), data.n_cols()),
        orig_norms(data.n_cols()),
        eligible(static_cast<std::size_t>(data.n_cols()), true) {
    for (int j = 0; j < data.n_cols(); ++j) {
      if (data.degenerate[static_cast<std::size_t>(j)]) {
        columns.col(j).setZero();
        orig_norms(j) = 0.0;
        eligible[static_cast<std::size_t>(j)] = false;
      } else {
        columns.col(j) = data.x.col(j).array() - data.column_means(j);
        orig_norms(j) = columns.col(j).norm();
      }
    }
    y_resid = center(data.y);
  }

  void extend(const DesignData& data, int entered) {
    if (!basis.try_extend(data.x.col(entered), entered)) {
      // the selector vetted the entrant at a looser tolerance
      throw DataError("run_selection: projector extension failed for accepted entrant");
    }
    eligible[static_cast<std::size_t>(entered)] = false;
    for (int j = 0; j < static_cast<int>(eligible.size()); ++j) {
      if (!eligible[static_cast<std::size_t>(j)]) continue;
      auto col = columns.col(j);
      Vector v = col;
      basis.residualize_against_last(v);
      col = v;
    }
    basis.residualize_against_last(y_resid);
  }

  // Full rebuild after a drop event (the orthonormal basis cannot shed a
  // column incrementally). Span-retired columns get a fresh chance: the span
  // just shrank.
  void rebuild(const DesignData& data, const std::vector<int>& active) {
    basis = ActiveBasis(data.n_rows(), 1e-10);
    std::vector<bool> in_active(static_cast<std::size_t>(data.n_cols()), false);
    for (int j : active) {
      in_active[static_cast<std::size_t>(j)] = true;
      if (!basis.try_extend(data.x.col(j), j))
        throw DataError("run_selection: projector rebuild failed");
    }
    for (int j = 0; j < data.n_cols(); ++j) {
      const auto idx = static_cast<std::size_t>(j);
      eligible[idx] = !data.degenerate[idx] && !in_active[idx];
      if (!eligible[idx]) {
        columns.col(j).setZero();
        continue;
      }
      columns.col(j) = basis.residualize(data.x.col(j));
    }
    y_resid = basis.residualize(data.y);
  }

  // Candidates for the statistic: eligible columns whose residual retains a
  // non-negligible share of the original norm. Columns absorbed by the span
  // are retired for good.
  std::vector<int> candidates() {
    std::vector<int> out;
    for (int j = 0; j < static_cast<int>(eligible.size()); ++j) {
      if (!eligible[static_cast<std::size_t>(j)]) continue;
      if (columns.col(j).norm() <= 1e-8 * orig_norms(j)) {
        eligible[static_cast<std::size_t>(j)] = false;
        columns.col(j).setZero();
        continue;
      }
      out.push_back(j);
    }
    return out;
  }
};

}  // namespace detail

inline SelectionTrace run_selection(const DesignData& data, const SelectionConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = data.n_rows();
  if (n < 4) throw DataError("run_selection: need at least 4 observations");
  if (!(config.gamma >= 0.0 && config.gamma < 1.0))
    throw std::domain_error("run_selection: gamma outside [0,1)");
  if (config.permutation_rounds < 1)
    throw std::domain_error("run_selection: permutation_rounds must be >= 1");

  SelectionTrace trace;
  trace.config = config;
  trace.n = n;
  trace.p = data.n_cols();
  trace.column_names = data.column_names;

  // Degenerate columns can never attain the maximum, so the effective
  // dimension of the null law is the live column count.
  const int p_eff = data.non_degenerate_count();
  trace.rho_hat = p_eff >= 2 ? estimate_rho(data) : 0.0;

  PathState selector(data, config.method);
  detail::ResidualState resid(data);
  std::vector<int> active;

  int k = 1;
  bool stopped = false;
  while (!stopped) {
    // the k <= n-2 guard short-circuits: beyond it no entry can be accepted
    // and the null law's domain (n >= s+3) may no longer hold
    if (k > n - 2) {
      trace.stop_reason = "step_cap";
      break;
    }
    const int s = static_cast<int>(active.size());
    const std::vector<int> candidates = resid.candidates();
    if (candidates.empty()) {
      trace.stop_reason = "path_exhausted";
      break;
    }
    // the closed-form constants degenerate with a single variable left; the
    // convolution and permutation routes stay valid down to one candidate
    if (resolve_test_mode(trace.rho_hat, config.test_mode) == TestMode::IidAnalytic &&
        candidates.size() < 2) {
      trace.stop_reason = "insufficient_inactive";
      break;
    }

    const StepStatistics stats =
        step_statistics(resid.columns, candidates, resid.y_resid, n, s);
    PermutationInputs perm;
    perm.residual_cols = &resid.columns;
    perm.candidates = &candidates;
    perm.basis = &resid.basis;
    perm.y = &data.y;
    perm.rounds = config.permutation_rounds;
    perm.seed = derive_seed(config.seed, static_cast<std::uint64_t>(k));
    const TestOutcome outcome =
        pvalue_auto(stats, p_eff, n, s, trace.rho_hat, config.test_mode, perm,
                    config.grid, config.c_switch);

    if (!(outcome.p_value <= config.gamma)) {
      StepRecord rec;
      rec.step_k = k;
      rec.event = TraceEventKind::Stop;
      rec.active_after = active;
      rec.p_value = outcome.p_value;
      rec.mode = outcome.mode;
      rec.statistics = outcome.statistics;
      trace.steps.push_back(std::move(rec));
      trace.stop_reason = "p_value_above_gamma";
      break;
    }

    // Test passed: advance the selector to its next entry; drop events in
    // between are applied untested.
    while (true) {
      const StepEvent ev = selector.next_event();
      if (ev.kind == EventKind::Exhausted) {
        StepRecord rec;
        rec.step_k = k;
        rec.event = TraceEventKind::Exhausted;
        rec.active_after = active;
        rec.p_value = outcome.p_value;
        rec.mode = outcome.mode;
        rec.statistics = outcome.statistics;
        trace.steps.push_back(std::move(rec));
        trace.stop_reason = "path_exhausted";
        stopped = true;
        break;
      }
      if (ev.kind == EventKind::Drop) {
        active.erase(std::find(active.begin(), active.end(), ev.variable));
        resid.rebuild(data, active);
        StepRecord rec;
        rec.step_k = 0;
        rec.event = TraceEventKind::Drop;
        rec.variable = ev.variable;
        rec.active_after = active;
        trace.steps.push_back(std::move(rec));
        continue;
      }
      // Enter
      active.push_back(ev.variable);
      resid.extend(data, ev.variable);
      StepRecord rec;
      rec.step_k = k;
      rec.event = TraceEventKind::Enter;
      rec.variable = ev.variable;
      rec.active_after = active;
      rec.p_value = outcome.p_value;
      rec.mode = outcome.mode;
      rec.statistics = outcome.statistics;
      trace.steps.push_back(std::move(rec));
      ++k;
      break;
    }
  }

  trace.final_active = active;
  trace.skipped_rank_deficient = selector.skipped_rank_deficient();

  if (active.empty()) {
    trace.final_coefficients.intercept = data.y.mean();
  } else if (config.method == Method::Fsr) {
    trace.final_coefficients = selector.coefficients();
  } else {
    // The path solution with the accepted variables lives at the end of the
    // current segment; peek one event ahead on a copy to reach it.
    PathState peek = selector;
    if (!peek.exhausted()) peek.next_event();
    trace.final_coefficients = peek.coefficients();
  }

  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return trace;
}

// Recomputes the trace on the same data and checks that every recorded
// p-value reproduces: within 1e-10 for the analytic modes, exactly for the
// permutation test (the seed pins it).
inline bool replay_trace(const DesignData& data, const SelectionTrace& trace) {
  const SelectionTrace fresh = run_selection(data, trace.config);
  if (fresh.steps.size() != trace.steps.size()) return false;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const StepRecord& a = trace.steps[i];
    const StepRecord& b = fresh.steps[i];
    if (a.event != b.event || a.variable != b.variable) return false;
    if (a.active_after != b.active_after) return false;
    if (a.p_value.has_value() != b.p_value.has_value()) return false;
    if (a.p_value) {
      const bool perm = a.mode && *a.mode == TestMode::Permutation;
      const double tol = perm ? 0.0 : 1e-10;
      if (std::fabs(*a.p_value - *b.p_value) > tol) return false;
    }
  }
  return fresh.final_active == trace.final_active;
}

}  // namespace corrstop
