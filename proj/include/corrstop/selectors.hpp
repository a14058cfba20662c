#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "corrstop/linalg.hpp"

// Sequential path engines emitting one event at a time: forward stepwise
// entry by maximal absolute correlation with the current residual, least
// angle regression, and its lasso modification with drop events. Columns are
// standardized internally; reported coefficients map back to the original
// scale.

namespace corrstop {

enum class Method { Fsr, Lars, Lasso };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Fsr: return "fsr";
    case Method::Lars: return "lars";
    case Method::Lasso: return "lasso";
  }
  return "?";
}

enum class EventKind { Enter, Drop, Exhausted };

struct StepEvent {
  EventKind kind = EventKind::Exhausted;
  int variable = -1;
};

class PathState {
 public:
  PathState(const DesignData& data, Method method)
      : method_(method),
        n_(data.n_rows()),
        p_(data.n_cols()),
        basis_(data.n_rows(), 1e-10) {
    xstd_.resize(n_, p_);
    scales_.resize(p_);
    means_.resize(p_);
    eligible_.assign(static_cast<std::size_t>(p_), true);
    for (int j = 0; j < p_; ++j) {
      means_(j) = data.column_means(j);
      Vector col = data.x.col(j).array() - means_(j);
      const double norm = col.norm();
      scales_(j) = norm;
      if (data.degenerate[static_cast<std::size_t>(j)] || norm == 0.0) {
        xstd_.col(j).setZero();
        eligible_[static_cast<std::size_t>(j)] = false;
      } else {
        xstd_.col(j) = col / norm;
      }
    }
    ybar_ = data.y.mean();
    y_centered_ = data.y.array() - ybar_;
    ynorm_ = y_centered_.norm();
    residual_ = y_centered_;
    beta_ = Vector::Zero(p_);
    if (method_ == Method::Fsr) x_original_ = data.x;
    max_active_ = std::min(p_, n_ - 2);
  }

  Method method() const { return method_; }
  int n() const { return n_; }
  int p() const { return p_; }
  int step_count() const { return step_count_; }
  int max_active() const { return max_active_; }
  const std::vector<int>& active() const { return active_; }
  const std::vector<double>& active_signs() const { return signs_; }
  const Vector& current_residual() const { return residual_; }
  const std::vector<int>& skipped_rank_deficient() const { return skipped_; }
  bool exhausted() const { return finished_; }

  StepEvent next_event() {
    if (finished_) return {EventKind::Exhausted, -1};
    return method_ == Method::Fsr ? next_fsr() : next_lars();
  }

  // Coefficients on the standardized columns (lars/lasso path scale).
  const Vector& coefficients_std() const { return beta_; }

  // Coefficients mapped back to the original column scale, with the
  // intercept recovered from the column means.
  SparseCoefficients coefficients() const {
    SparseCoefficients out;
    if (method_ == Method::Fsr) {
      if (!active_.empty()) {
        const Vector coef = basis_.solve_coefficients(y_centered_);
        // Sources are [intercept, j1, j2, ...] on original columns; the
        // response was centered, so fold the mean back into the intercept.
        out.intercept = ybar_ + coef(0);
        for (int i = 1; i < basis_.size(); ++i) {
          out.indices.push_back(basis_.source_indices()[static_cast<std::size_t>(i)]);
          out.values.push_back(coef(i));
        }
      } else {
        out.intercept = ybar_;
      }
      return out;
    }
    out.intercept = ybar_;
    for (int j = 0; j < p_; ++j) {
      if (beta_(j) != 0.0) {
        const double v = beta_(j) / scales_(j);
        out.indices.push_back(j);
        out.values.push_back(v);
        out.intercept -= v * means_(j);
      }
    }
    return out;
  }

  // |x_j' r| for every column on the standardized scale (zero for degenerate
  // columns); the lasso stationarity conditions are stated in these terms.
  Vector abs_inner_products() const {
    return (xstd_.transpose() * residual_).cwiseAbs();
  }

  double current_lambda() const {
    double c = 0.0;
    const Vector v = xstd_.transpose() * residual_;
    for (int j : active_) c = std::max(c, std::fabs(v(j)));
    return c;
  }

  // Copy with one coefficient nudged off the path (what-if probe for the
  // stationarity check).
  PathState perturbed(int j, double delta) const {
    PathState copy = *this;
    copy.beta_(j) += delta;
    copy.residual_ = copy.y_centered_ - copy.xstd_ * copy.beta_;
    return copy;
  }

 private:
  bool is_active(int j) const {
    return std::find(active_.begin(), active_.end(), j) != active_.end();
  }

  StepEvent next_fsr() {
    if (static_cast<int>(active_.size()) >= max_active_) {
      finished_ = true;
      return {EventKind::Exhausted, -1};
    }
    const double rnorm = residual_.norm();
    if (rnorm <= 1e-12 * ynorm_) {
      finished_ = true;
      return {EventKind::Exhausted, -1};
    }
    const Vector c = xstd_.transpose() * residual_;
    while (true) {
      int best = -1;
      double best_abs = 0.0;
      for (int j = 0; j < p_; ++j) {
        if (!eligible_[static_cast<std::size_t>(j)] || is_active(j)) continue;
        const double a = std::fabs(c(j));
        if (a > best_abs) {
          best_abs = a;
          best = j;
        }
      }
      if (best < 0 || best_abs / rnorm <= 1e-12) {
        finished_ = true;
        return {EventKind::Exhausted, -1};
      }
      if (!basis_.try_extend(x_original_.col(best), best)) {
        eligible_[static_cast<std::size_t>(best)] = false;
        skipped_.push_back(best);
        continue;
      }
      active_.push_back(best);
      basis_.residualize_against_last(residual_);
      ++step_count_;
      return {EventKind::Enter, best};
    }
  }

  StepEvent next_lars() {
    constexpr double corr_tol = 1e-12;
    constexpr double gamma_tol = 1e-12;
    while (true) {
      const Vector c = xstd_.transpose() * residual_;

      if (active_.empty()) {
        int best = -1;
        double best_abs = 0.0;
        for (int j = 0; j < p_; ++j) {
          if (!eligible_[static_cast<std::size_t>(j)]) continue;
          const double a = std::fabs(c(j));
          if (a > best_abs) {
            best_abs = a;
            best = j;
          }
        }
        if (best < 0 || max_active_ < 1 || best_abs / ynorm_ <= corr_tol) {
          finished_ = true;
          return {EventKind::Exhausted, -1};
        }
        active_.push_back(best);
        signs_.push_back(c(best) >= 0.0 ? 1.0 : -1.0);
        chol_.assign(1, 1.0);  // standardized columns have unit norm
        ++step_count_;
        return {EventKind::Enter, best};
      }

      const int k = static_cast<int>(active_.size());
      double big_c = 0.0;
      for (int j : active_) big_c = std::max(big_c, std::fabs(c(j)));
      const double rnorm = residual_.norm();
      if (rnorm <= 1e-12 * ynorm_ || big_c / std::max(rnorm, 1e-300) <= corr_tol) {
        finished_ = true;
        return {EventKind::Exhausted, -1};
      }

      // Equiangular direction: solve G w = 1 on the sign-folded active Gram.
      std::vector<double> omega = solve_gram_ones();
      double ssum = 0.0;
      for (double v : omega) ssum += v;
      const double unit_scale = 1.0 / std::sqrt(ssum);
      Vector u = Vector::Zero(n_);
      std::vector<double> dir(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) {
        const double w = unit_scale * omega[static_cast<std::size_t>(i)];
        dir[static_cast<std::size_t>(i)] = signs_[static_cast<std::size_t>(i)] * w;
        u += dir[static_cast<std::size_t>(i)] * xstd_.col(active_[static_cast<std::size_t>(i)]);
      }
      const Vector a = xstd_.transpose() * u;
      const double gamma_max = big_c / unit_scale;

      double gamma_entry = std::numeric_limits<double>::infinity();
      int j_entry = -1;
      double sign_entry = 1.0;
      if (k < max_active_) {
        for (int j = 0; j < p_; ++j) {
          if (!eligible_[static_cast<std::size_t>(j)] || is_active(j)) continue;
          const double num1 = big_c - c(j);
          const double den1 = unit_scale - a(j);
          if (den1 > gamma_tol && num1 > gamma_tol && num1 / den1 < gamma_entry) {
            gamma_entry = num1 / den1;
            j_entry = j;
            sign_entry = 1.0;
          }
          const double num2 = big_c + c(j);
          const double den2 = unit_scale + a(j);
          if (den2 > gamma_tol && num2 > gamma_tol && num2 / den2 < gamma_entry) {
            gamma_entry = num2 / den2;
            j_entry = j;
            sign_entry = -1.0;
          }
        }
      }

      double gamma_drop = std::numeric_limits<double>::infinity();
      int drop_pos = -1;
      if (method_ == Method::Lasso) {
        for (int i = 0; i < k; ++i) {
          const double d = dir[static_cast<std::size_t>(i)];
          if (d == 0.0) continue;
          const double g = -beta_(active_[static_cast<std::size_t>(i)]) / d;
          if (g > gamma_tol && g < gamma_drop) {
            gamma_drop = g;
            drop_pos = i;
          }
        }
      }

      enum class Winner { DropVar, EnterVar, Complete } winner;
      double gamma;
      if (drop_pos >= 0 && gamma_drop < gamma_entry && gamma_drop < gamma_max) {
        winner = Winner::DropVar;
        gamma = gamma_drop;
      } else if (j_entry >= 0 && gamma_entry <= gamma_max) {
        winner = Winner::EnterVar;
        gamma = gamma_entry;
      } else {
        winner = Winner::Complete;
        gamma = gamma_max;
      }

      for (int i = 0; i < k; ++i)
        beta_(active_[static_cast<std::size_t>(i)]) += gamma * dir[static_cast<std::size_t>(i)];
      residual_.noalias() -= gamma * u;

      if (winner == Winner::DropVar) {
        const int j = active_[static_cast<std::size_t>(drop_pos)];
        beta_(j) = 0.0;
        active_.erase(active_.begin() + drop_pos);
        signs_.erase(signs_.begin() + drop_pos);
        refactor_gram();
        ++step_count_;
        return {EventKind::Drop, j};
      }
      if (winner == Winner::EnterVar) {
        if (!chol_append(j_entry, sign_entry)) {
          eligible_[static_cast<std::size_t>(j_entry)] = false;
          skipped_.push_back(j_entry);
          continue;  // path proceeds from this knot with the entrant barred
        }
        active_.push_back(j_entry);
        signs_.push_back(sign_entry);
        ++step_count_;
        return {EventKind::Enter, j_entry};
      }
      // Stepped to the least-squares point of the active set.
      finished_ = true;
      return {EventKind::Exhausted, -1};
    }
  }

  // --- sign-folded active Gram, maintained as a packed Cholesky factor ---

  double& lref(int i, int j) { return chol_[static_cast<std::size_t>(i * (i + 1) / 2 + j)]; }
  double lval(int i, int j) const { return chol_[static_cast<std::size_t>(i * (i + 1) / 2 + j)]; }

  // Appends the entrant's sign-folded column to the factor; fails when its
  // residual against the active span falls below the rank tolerance.
  bool chol_append(int j_new, double sign_new) {
    constexpr double rank_tol = 1e-8;
    const int k = static_cast<int>(active_.size());
    std::vector<double> b(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
      b[static_cast<std::size_t>(i)] =
          xstd_.col(active_[static_cast<std::size_t>(i)]).dot(xstd_.col(j_new));
    std::vector<double> l(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      double acc = signs_[static_cast<std::size_t>(i)] * sign_new * b[static_cast<std::size_t>(i)];
      for (int t = 0; t < i; ++t) acc -= lval(i, t) * l[static_cast<std::size_t>(t)];
      l[static_cast<std::size_t>(i)] = acc / lval(i, i);
    }
    double diag2 = 1.0;
    for (double v : l) diag2 -= v * v;
    if (diag2 <= rank_tol * rank_tol) return false;
    chol_.resize(static_cast<std::size_t>((k + 1) * (k + 2) / 2));
    for (int t = 0; t < k; ++t) lref(k, t) = l[static_cast<std::size_t>(t)];
    lref(k, k) = std::sqrt(diag2);
    return true;
  }

  void refactor_gram() {
    const int k = static_cast<int>(active_.size());
    chol_.assign(static_cast<std::size_t>(k * (k + 1) / 2), 0.0);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j <= i; ++j) {
        double g = xstd_.col(active_[static_cast<std::size_t>(i)])
                       .dot(xstd_.col(active_[static_cast<std::size_t>(j)])) *
                   signs_[static_cast<std::size_t>(i)] * signs_[static_cast<std::size_t>(j)];
        for (int t = 0; t < j; ++t) g -= lval(i, t) * lval(j, t);
        if (j == i) {
          if (g <= 0.0) throw std::runtime_error("lasso path: active Gram lost rank");
          lref(i, i) = std::sqrt(g);
        } else {
          lref(i, j) = g / lval(j, j);
        }
      }
    }
  }

  // Solves (L L') omega = 1.
  std::vector<double> solve_gram_ones() const {
    const int k = static_cast<int>(active_.size());
    std::vector<double> z(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      double acc = 1.0;
      for (int t = 0; t < i; ++t) acc -= lval(i, t) * z[static_cast<std::size_t>(t)];
      z[static_cast<std::size_t>(i)] = acc / lval(i, i);
    }
    std::vector<double> w(static_cast<std::size_t>(k));
    for (int i = k - 1; i >= 0; --i) {
      double acc = z[static_cast<std::size_t>(i)];
      for (int t = i + 1; t < k; ++t) acc -= lval(t, i) * w[static_cast<std::size_t>(t)];
      w[static_cast<std::size_t>(i)] = acc / lval(i, i);
    }
    return w;
  }

  Method method_;
  int n_;
  int p_;
  int max_active_ = 0;
  Matrix xstd_;
  Matrix x_original_;  // kept for the stepwise refit basis only
  Vector scales_;
  Vector means_;
  Vector y_centered_;
  double ybar_ = 0.0;
  double ynorm_ = 0.0;
  Vector residual_;
  Vector beta_;  // standardized scale
  std::vector<int> active_;
  std::vector<double> signs_;
  std::vector<double> chol_;  // packed lower triangle of the active Gram factor
  std::vector<bool> eligible_;
  std::vector<int> skipped_;
  ActiveBasis basis_;  // stepwise refit projector (intercept first)
  bool finished_ = false;
  int step_count_ = 0;
};

inline PathState init_path(const DesignData& data, Method method) {
  return PathState(data, method);
}

// Lasso stationarity at penalty level lambda on the standardized scale:
// active columns sit exactly at lambda, inactive ones below it.
inline bool kkt_check(const PathState& state, double lambda) {
  if (state.method() != Method::Lasso)
    throw std::domain_error("kkt_check: lasso paths only");
  constexpr double tol = 1e-6;
  const Vector v = state.abs_inner_products();
  std::vector<bool> active_flag(static_cast<std::size_t>(state.p()), false);
  for (int j : state.active()) active_flag[static_cast<std::size_t>(j)] = true;
  for (int j = 0; j < state.p(); ++j) {
    if (active_flag[static_cast<std::size_t>(j)]) {
      if (std::fabs(v(j) - lambda) > tol) return false;
    } else if (v(j) > lambda + tol) {
      return false;
    }
  }
  return true;
}

}  // namespace corrstop
