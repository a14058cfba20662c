#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "corrstop/quadrature.hpp"
#include "corrstop/special.hpp"

// Null distribution of the maximal absolute partial correlation between a
// growing active set's leftover covariates and the response. Covers the
// closed-form limit law for independent covariates, its t-statistic variant,
// and the convolution approximation for equally correlated covariates.

namespace corrstop {

// Standardization constants for the squared maximal correlation: under the
// null, (R^2 - location)/scale converges to limit_cdf as the number of
// covariates grows, uniformly in the sample size.
struct NullParams {
  double location;    // subtracted from R^2
  double scale;       // divides the centered statistic
  double correction;  // Beta-function correction factor entering both
  int p = 0;
  int n = 0;
  int s = 0;
};

inline void check_nulldist_domain(int p, int n, int s) {
  if (n < s + 3) throw std::domain_error("nulldist: requires n >= s + 3");
  if (p < s + 2) throw std::domain_error("nulldist: requires p >= s + 2");
}

// The convolution route stays meaningful down to a single inactive variable;
// only the closed-form constants need p - s >= 2.
inline void check_equicorr_domain(int p, int n, int s) {
  if (n < s + 3) throw std::domain_error("nulldist: requires n >= s + 3");
  if (p < s + 1) throw std::domain_error("nulldist: requires p >= s + 1");
}

inline NullParams null_params(int p, int n, int s) {
  check_nulldist_domain(p, n, s);
  const double m = static_cast<double>(n - s - 2);
  const double log_ps = std::log(static_cast<double>(p - s));
  // (p-s)^(-2/m), kept in log form so tiny and huge regimes both survive.
  const double pow_ps = std::exp(-2.0 * log_ps / m);
  const double log_c =
      (2.0 / m) * (std::log(0.5 * m) + log_beta(0.5, 0.5 * m) +
                   0.5 * std::log1p(-pow_ps));
  const double c = std::exp(log_c);
  NullParams out;
  out.correction = c;
  out.location = 1.0 - pow_ps * c;
  out.scale = (2.0 / m) * pow_ps * c;
  out.p = p;
  out.n = n;
  out.s = s;
  return out;
}

// Limit law of the standardized squared statistic:
//   F(x) = exp{-(1 - 2x/m)^(m/2)} for x <= m/2, 1 beyond, with m = n-s-2.
inline double limit_cdf(double x, int n, int s) {
  if (n < s + 3) throw std::domain_error("limit_cdf: requires n >= s + 3");
  const double m = static_cast<double>(n - s - 2);
  if (x >= 0.5 * m) return 1.0;
  const double t = std::exp(0.5 * m * std::log1p(-2.0 * x / m));
  return std::exp(-t);
}

// Upper tail 1 - F(x), computed with expm1 so small p-values keep relative
// accuracy.
inline double limit_sf(double x, int n, int s) {
  if (n < s + 3) throw std::domain_error("limit_sf: requires n >= s + 3");
  const double m = static_cast<double>(n - s - 2);
  if (x >= 0.5 * m) return 0.0;
  const double t = std::exp(0.5 * m * std::log1p(-2.0 * x / m));
  return -std::expm1(-t);
}

// p-value for an observed maximal absolute correlation r. The statistic is
// squared before standardizing; the constants are built for R^2.
inline double pvalue_iid(double r_obs, int p, int n, int s) {
  if (r_obs < 0.0 || r_obs > 1.0)
    throw std::domain_error("pvalue_iid: r_obs outside [0,1]");
  const NullParams np = null_params(p, n, s);
  return limit_sf((r_obs * r_obs - np.location) / np.scale, n, s);
}

// Monotone map from the maximal correlation to its t-statistic form.
inline double max_t(double r, int n, int s) {
  if (n < s + 3) throw std::domain_error("max_t: requires n >= s + 3");
  if (r < 0.0 || r >= 1.0) throw std::domain_error("max_t: requires r in [0,1)");
  const double m = static_cast<double>(n - s - 2);
  return std::sqrt(m * r * r / (1.0 - r * r));
}

struct TParams {
  double location;
  double scale;
};

inline TParams t_params(int p, int n, int s) {
  const NullParams np = null_params(p, n, s);
  const double m = static_cast<double>(n - s - 2);
  const double a = np.location;
  if (a <= 0.0 || a >= 1.0) throw std::domain_error("t_params: location outside (0,1)");
  return {std::sqrt(m * a / (1.0 - a)), 1.0 / std::sqrt(m * a * (1.0 - a))};
}

inline double pvalue_t(double t_obs, int p, int n, int s) {
  const TParams tp = t_params(p, n, s);
  return limit_sf((t_obs - tp.location) / tp.scale, n, s);
}

// Weight of the shared component in the equicorrelated decomposition
// X_j = sqrt(1-rho) Z_j + w * mean-factor.
inline double mixing_weight(double rho, int p) {
  if (p < 2) throw std::domain_error("mixing_weight: requires p >= 2");
  if (rho < -1.0 / (p - 1) || rho > 1.0)
    throw std::domain_error("mixing_weight: rho outside [-1/(p-1), 1]");
  const double pd = static_cast<double>(p);
  return (std::sqrt(1.0 + (pd - 1.0) * rho) - std::sqrt(1.0 - rho)) / std::sqrt(pd);
}

// Density of one signed null correlation (its square is Beta(1/2,(n-s-2)/2)):
// |x| f_B(x^2) simplifies to (1-x^2)^{(n-s-2)/2 - 1} / B(1/2,(n-s-2)/2).
inline double single_corr_density(double x, int n, int s) {
  if (x <= -1.0 || x >= 1.0)
    throw std::domain_error("single_corr_density: |x| >= 1");
  const double b = beta_half_shape(n, s);
  return std::exp((b - 1.0) * std::log1p(-x * x) - log_beta(0.5, b));
}

// Log density of the maximum of the p-s inactive signed correlations,
//   f(x) = p |x| f_B(x^2) {(1 + sign(x) F_B(x^2)) / 2}^(p-s-1),
// evaluated in the log domain because the power term underflows otherwise.
inline double max_corr_log_density(double x, int p, int n, int s) {
  if (x <= -1.0 || x >= 1.0)
    throw std::domain_error("max_corr_log_density: |x| >= 1");
  check_equicorr_domain(p, n, s);
  const double b = beta_half_shape(n, s);
  const double x2 = x * x;
  const double log_single = (b - 1.0) * std::log1p(-x2) - log_beta(0.5, b);
  double log_tail;
  if (x >= 0.0) {
    log_tail = std::log1p(beta_half_cdf(x2, n, s)) - std::log(2.0);
  } else {
    const double sf = beta_half_sf(x2, n, s);
    if (sf <= 0.0) return -std::numeric_limits<double>::infinity();
    log_tail = std::log(sf) - std::log(2.0);
  }
  return std::log(static_cast<double>(p)) + log_single +
         static_cast<double>(p - s - 1) * log_tail;
}

struct QuadratureGrid {
  int inner_panels = 32;   // 16-point panels: 512 nodes by default
  int outer_panels = 32;
  double rel_tol = 1e-4;
  int max_refinements = 5;
};

// Everything needed to evaluate the equicorrelated null at one (p, n, s).
struct EquicorrContext {
  double rho;
  double weight;  // mixing_weight(rho, p)
  int p;
  int n;
  int s;
  QuadratureGrid grid;
  double c_switch = 0.01;  // selects two-sided vs one-sided rule

  EquicorrContext(double rho_in, int p_in, int n_in, int s_in,
                  QuadratureGrid grid_in = {}, double c_switch_in = 0.01)
      : rho(rho_in),
        weight(mixing_weight(rho_in, p_in)),
        p(p_in),
        n(n_in),
        s(s_in),
        grid(grid_in),
        c_switch(c_switch_in) {
    check_equicorr_domain(p_in, n_in, s_in);
    if (c_switch <= 0.0 || c_switch >= 1.0)
      throw std::domain_error("EquicorrContext: c_switch outside (0,1)");
  }
};

namespace detail {

// Density of sqrt(1-rho) * (max component).
inline double scaled_max_density(double v, const EquicorrContext& ctx, double sq) {
  const double u = v / sq;
  if (u <= -1.0 || u >= 1.0) return 0.0;
  const double lf = max_corr_log_density(u, ctx.p, ctx.n, ctx.s);
  return std::isfinite(lf) ? std::exp(lf) / sq : 0.0;
}

// Density of weight * (shared component).
inline double scaled_shared_density(double x, const EquicorrContext& ctx, double w) {
  const double u = x / w;
  if (u <= -1.0 || u >= 1.0) return 0.0;
  return single_corr_density(u, ctx.n, ctx.s) / w;
}

}  // namespace detail

// Convolution of the two scaled component densities: the approximate density
// of the signed maximum correlation under equicorrelation.
inline double convolved_density(double z, const EquicorrContext& ctx) {
  if (ctx.rho <= 0.0 || ctx.rho >= 1.0)
    throw std::domain_error("convolved_density: requires 0 < rho < 1");
  const double sq = std::sqrt(1.0 - ctx.rho);
  const double w = ctx.weight;
  const double lo = std::max(-w, z - sq);
  const double hi = std::min(w, z + sq);
  if (lo >= hi) return 0.0;
  auto integrand = [&](double x) {
    return detail::scaled_max_density(z - x, ctx, sq) *
           detail::scaled_shared_density(x, ctx, w);
  };
  return integrate_adaptive(integrand, lo, hi, ctx.grid.inner_panels,
                            ctx.grid.rel_tol, ctx.grid.max_refinements);
}

// Upper-tail probability of the signed maximum under the equicorrelated
// null, by nested quadrature of the convolution density over [t, 1].
inline double tail_prob_equicorr(double t, const EquicorrContext& ctx) {
  if (ctx.rho <= 0.0 || ctx.rho >= 1.0)
    throw std::domain_error("tail_prob_equicorr: requires 0 < rho < 1");
  if (t >= 1.0) return 0.0;
  const double sq = std::sqrt(1.0 - ctx.rho);
  const double support = sq + ctx.weight;
  const double lo = std::max(t, -support);
  const double hi = std::min(1.0, support);
  if (lo >= hi) return t >= hi ? 0.0 : 1.0;
  auto f3 = [&](double z) { return convolved_density(z, ctx); };
  const double mass = integrate_adaptive(f3, lo, hi, ctx.grid.outer_panels,
                                         ctx.grid.rel_tol, ctx.grid.max_refinements);
  return std::clamp(mass, 0.0, 1.0);
}

// Two-sided approximation 2 P(U >= r) when that bound is already small
// (below c_switch); otherwise the one-sided tail at the signed maximum.
inline double pvalue_equicorr(double r_obs, double u_obs, const EquicorrContext& ctx) {
  if (r_obs < u_obs)
    throw std::domain_error("pvalue_equicorr: r_obs must be max(u_obs, v_obs)");
  const double two_sided = 2.0 * tail_prob_equicorr(r_obs, ctx);
  if (two_sided <= ctx.c_switch) return std::clamp(two_sided, 0.0, 1.0);
  return std::clamp(tail_prob_equicorr(u_obs, ctx), 0.0, 1.0);
}

}  // namespace corrstop
