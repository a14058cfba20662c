#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "corrstop/linalg.hpp"
#include "corrstop/nulldist.hpp"
#include "corrstop/rng.hpp"

// Step statistics (signed maxima of the residual correlations) and the three
// p-value routes: closed-form for independent covariates, convolution
// approximation for equicorrelated ones, and the permutation test.

namespace corrstop {

struct AllDegenerateError : std::runtime_error {
  AllDegenerateError() : std::runtime_error("step_statistics: every inactive residual has zero norm") {}
};

struct YDegenerateError : std::runtime_error {
  YDegenerateError() : std::runtime_error("step_statistics: response residual has zero norm") {}
};

struct StepStatistics {
  double r_max = 0.0;   // max_j |corr|
  double u_max = 0.0;   // max_j corr
  double v_max = 0.0;   // -min_j corr
  double t_stat = 0.0;
  int argmax_index = -1;
  int inactive_count = 0;
};

enum class TestMode { IidAnalytic, EquicorrAnalytic, Permutation };

enum class TestPolicy { Auto, ForceIid, ForceEquicorr, ForcePermutation };

struct TestOutcome {
  StepStatistics statistics;
  double p_value = 1.0;
  TestMode mode = TestMode::IidAnalytic;
  std::optional<double> rho_hat;
  std::optional<int> permutations_used;
};

inline const char* test_mode_name(TestMode m) {
  switch (m) {
    case TestMode::IidAnalytic: return "IID_ANALYTIC";
    case TestMode::EquicorrAnalytic: return "EQUICORR_ANALYTIC";
    case TestMode::Permutation: return "PERMUTATION";
  }
  return "?";
}

// Signed maxima of corr(residual_j, y_residual) over the candidate columns.
// Zero-norm residuals contribute correlation 0 and can never be the argmax;
// ties go to the lowest column index.
inline StepStatistics step_statistics(const Matrix& residual_cols,
                                      const std::vector<int>& candidates,
                                      const Vector& y_residual, int n, int s) {
  if (candidates.empty()) throw AllDegenerateError();
  const double ynorm = y_residual.norm();
  if (ynorm == 0.0) throw YDegenerateError();

  StepStatistics st;
  st.inactive_count = static_cast<int>(candidates.size());
  st.u_max = -std::numeric_limits<double>::infinity();
  st.v_max = -std::numeric_limits<double>::infinity();
  bool any_live = false;
  double best_abs = -1.0;
  for (int j : candidates) {
    const auto col = residual_cols.col(j);
    const double cnorm = col.norm();
    double corr = 0.0;
    if (cnorm > 0.0) {
      corr = std::clamp(col.dot(y_residual) / (cnorm * ynorm), -1.0, 1.0);
      any_live = true;
    }
    if (corr > st.u_max) st.u_max = corr;
    if (-corr > st.v_max) st.v_max = -corr;
    const double a = std::fabs(corr);
    if (a > best_abs) {
      best_abs = a;
      st.argmax_index = j;
    }
  }
  if (!any_live) throw AllDegenerateError();
  st.r_max = std::max(st.u_max, st.v_max);
  const double m = static_cast<double>(n - s - 2);
  const double r2 = st.r_max * st.r_max;
  st.t_stat = r2 >= 1.0 ? std::numeric_limits<double>::infinity()
                        : std::sqrt(m * r2 / (1.0 - r2));
  return st;
}

// Average pairwise correlation of the standardized non-degenerate columns,
// via ||sum_j x_j||^2 = p + sum_{j != k} corr(j,k) so the whole estimate is
// one pass over the matrix.
inline double estimate_rho(const DesignData& data) {
  const int n = data.n_rows();
  const int p = data.n_cols();
  Vector acc = Vector::Zero(n);
  int live = 0;
  for (int j = 0; j < p; ++j) {
    if (data.degenerate[static_cast<std::size_t>(j)]) continue;
    Vector col = data.x.col(j).array() - data.column_means(j);
    col /= col.norm();
    acc += col;
    ++live;
  }
  if (live < 2) throw std::domain_error("estimate_rho: needs >= 2 non-degenerate columns");
  const double pd = static_cast<double>(live);
  return (acc.squaredNorm() - pd) / (pd * (pd - 1.0));
}

// The rho-hat rule of the sequential procedure: near-zero average correlation
// uses the closed form, clearly positive uses the equicorrelated
// approximation, and clearly negative falls back to the permutation test
// (the equicorrelated decomposition has no negative-rho form).
inline TestMode resolve_test_mode(double rho_hat, TestPolicy policy) {
  switch (policy) {
    case TestPolicy::ForceIid: return TestMode::IidAnalytic;
    case TestPolicy::ForceEquicorr: return TestMode::EquicorrAnalytic;
    case TestPolicy::ForcePermutation: return TestMode::Permutation;
    case TestPolicy::Auto: break;
  }
  if (std::fabs(rho_hat) < 0.01) return TestMode::IidAnalytic;
  return rho_hat > 0.0 ? TestMode::EquicorrAnalytic : TestMode::Permutation;
}

// Inputs the permutation fallback needs when pvalue_auto routes to it.
struct PermutationInputs {
  const Matrix* residual_cols = nullptr;
  const std::vector<int>* candidates = nullptr;
  const ActiveBasis* basis = nullptr;
  const Vector* y = nullptr;  // original (uncentered) response
  int rounds = 500;
  std::uint64_t seed = 0;
};

namespace detail {

// Permutation rounds against a fixed active-set residualization: the column
// residuals are reused, only the permuted response is re-residualized.
inline TestOutcome permutation_rounds(const Matrix& residual_cols,
                                      const std::vector<int>& candidates,
                                      const ActiveBasis& basis, const Vector& y,
                                      int rounds, std::uint64_t seed, int n, int s) {
  if (rounds < 1) throw std::domain_error("permutation test: rounds must be >= 1");
  Vector y_res = basis.residualize(y);
  const StepStatistics observed = step_statistics(residual_cols, candidates, y_res, n, s);

  std::vector<double> y_perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y_perm[static_cast<std::size_t>(i)] = y(i);

  int exceed = 0;
  Vector buf(n);
  for (int q = 0; q < rounds; ++q) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(q)));
    std::vector<double> shuffled = y_perm;
    rng.shuffle(shuffled);
    for (int i = 0; i < n; ++i) buf(i) = shuffled[static_cast<std::size_t>(i)];
    basis.residualize_inplace(buf);
    const StepStatistics st = step_statistics(residual_cols, candidates, buf, n, s);
    if (st.r_max >= observed.r_max) ++exceed;
  }

  TestOutcome out;
  out.statistics = observed;
  // Add-one rank estimator: never zero, valid under exchangeability.
  out.p_value = static_cast<double>(1 + exceed) / static_cast<double>(rounds + 1);
  out.mode = TestMode::Permutation;
  out.permutations_used = rounds;
  return out;
}

}  // namespace detail

// Permutation test at a given active set: builds the projector, residualizes
// the inactive columns once, then runs the rounds.
inline TestOutcome permutation_pvalue(const DesignData& data,
                                      const std::vector<int>& active, int rounds,
                                      std::uint64_t seed) {
  const int n = data.n_rows();
  const int p = data.n_cols();
  ActiveBasis basis(n);
  std::vector<bool> in_active(static_cast<std::size_t>(p), false);
  for (int j : active) {
    in_active[static_cast<std::size_t>(j)] = true;
    if (!basis.try_extend(data.x.col(j), j))
      throw DataError("permutation_pvalue: active set is rank deficient");
  }
  Matrix residuals(n, p);
  std::vector<int> candidates;
  for (int j = 0; j < p; ++j) {
    if (in_active[static_cast<std::size_t>(j)] || data.degenerate[static_cast<std::size_t>(j)]) {
      residuals.col(j).setZero();
      continue;
    }
    residuals.col(j) = basis.residualize(data.x.col(j));
    candidates.push_back(j);
  }
  return detail::permutation_rounds(residuals, candidates, basis, data.y, rounds,
                                    seed, n, static_cast<int>(active.size()));
}

// Resolves the test mode from rho_hat (or the forced policy) and produces the
// p-value for precomputed step statistics. The permutation route needs data
// access, so its inputs ride along.
inline TestOutcome pvalue_auto(const StepStatistics& stats, int p, int n, int s,
                               double rho_hat, TestPolicy policy,
                               const PermutationInputs& perm = {},
                               const QuadratureGrid& grid = {},
                               double c_switch = 0.01) {
  const TestMode mode = resolve_test_mode(rho_hat, policy);
  TestOutcome out;
  out.statistics = stats;
  out.mode = mode;
  switch (mode) {
    case TestMode::IidAnalytic:
      out.p_value = pvalue_iid(stats.r_max, p, n, s);
      break;
    case TestMode::EquicorrAnalytic: {
      out.rho_hat = rho_hat;
      const EquicorrContext ctx(rho_hat, p, n, s, grid, c_switch);
      out.p_value = pvalue_equicorr(stats.r_max, stats.u_max, ctx);
      break;
    }
    case TestMode::Permutation: {
      if (perm.residual_cols == nullptr || perm.candidates == nullptr ||
          perm.basis == nullptr || perm.y == nullptr)
        throw std::domain_error("pvalue_auto: permutation mode needs PermutationInputs");
      out = detail::permutation_rounds(*perm.residual_cols, *perm.candidates,
                                       *perm.basis, *perm.y, perm.rounds, perm.seed,
                                       n, s);
      out.rho_hat = rho_hat;
      break;
    }
  }
  return out;
}

}  // namespace corrstop
