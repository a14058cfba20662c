#pragma once

#include <cmath>
#include <stdexcept>

// Beta-family special functions. All Beta/Gamma evaluation goes through
// std::lgamma so that large shape parameters never overflow.

namespace corrstop {

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double ibeta_cf(double a, double b, double x) {
  constexpr int max_iter = 400;
  constexpr double eps = 1e-16;
  constexpr double fpmin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * detail::ibeta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * detail::ibeta_cf(b, a, 1.0 - x) / b;
}

// Complement 1 - I_x(a, b), evaluated without cancellation for x near 1.
inline double ibeta_c(double a, double b, double x) {
  if (x <= 0.0) return 1.0;
  if (x >= 1.0) return 0.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return 1.0 - std::exp(log_front) * detail::ibeta_cf(a, b, x) / a;
  }
  return std::exp(log_front) * detail::ibeta_cf(b, a, 1.0 - x) / b;
}

// The squared sample correlation of two independent Gaussians, computed on
// residuals against an active set of size s, follows Beta(1/2, (n-s-2)/2).
// The helpers below fix the first shape at 1/2 and take (n, s) directly.

inline double beta_half_shape(int n, int s) {
  if (n < s + 3) throw std::domain_error("beta_half: requires n >= s + 3");
  return 0.5 * static_cast<double>(n - s - 2);
}

inline double beta_half_log_pdf(double x, int n, int s) {
  const double b = beta_half_shape(n, s);
  if (x <= 0.0 || x >= 1.0) throw std::domain_error("beta_half_pdf: x outside (0,1)");
  return -0.5 * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(0.5, b);
}

inline double beta_half_pdf(double x, int n, int s) {
  return std::exp(beta_half_log_pdf(x, n, s));
}

inline double beta_half_cdf(double x, int n, int s) {
  const double b = beta_half_shape(n, s);
  return ibeta(0.5, b, x);
}

// Survival function 1 - cdf, stable in the upper tail.
inline double beta_half_sf(double x, int n, int s) {
  const double b = beta_half_shape(n, s);
  return ibeta_c(0.5, b, x);
}

}  // namespace corrstop
