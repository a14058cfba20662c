#pragma once

// Shared test utilities and the independent oracles the expected values come
// from. Everything here stays out of the library: oracles must not share a
// code path with the implementation they check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>
#include <vector>

#include "corrstop/linalg.hpp"
#include "corrstop/rng.hpp"

namespace testutil {

using corrstop::Matrix;
using corrstop::Vector;

// One-sample Kolmogorov-Smirnov distance against a reference CDF.
inline double ks_distance(std::vector<double> sample,
                          const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::fabs((i + 1) / n - f));
    d = std::max(d, std::fabs(f - i / n));
  }
  return d;
}

inline double ks_uniform(std::vector<double> sample) {
  return ks_distance(std::move(sample), [](double x) { return std::clamp(x, 0.0, 1.0); });
}

// Adaptive Simpson quadrature; integrand must be finite on [a, b].
inline double simpson_adaptive(const std::function<double(double)>& f, double a,
                               double b, double tol = 1e-12, int depth = 30) {
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole,
          int d) -> double {
    const double mid = 0.5 * (lo + hi);
    const double lmid = 0.5 * (lo + mid);
    const double rmid = 0.5 * (mid + hi);
    const double flm = f(lmid);
    const double frm = f(rmid);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    if (d <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
      return left + right + (left + right - whole) / 15.0;
    return rec(lo, mid, flo, flm, fmid, left, d - 1) +
           rec(mid, hi, fmid, frm, fhi, right, d - 1);
  };
  const double mid = 0.5 * (a + b);
  const double fa = f(a), fm = f(mid), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return rec(a, b, fa, fm, fb, whole, depth);
}

// Paneled Simpson for sharply peaked integrands the plain adaptive rule can
// step over: every panel is integrated adaptively and summed.
inline double simpson_paneled(const std::function<double(double)>& f, double a,
                              double b, int panels, double tol = 1e-12) {
  double total = 0.0;
  const double w = (b - a) / panels;
  for (int k = 0; k < panels; ++k)
    total += simpson_adaptive(f, a + k * w, a + (k + 1) * w, tol / panels);
  return total;
}

// Independent oracle for the regularized incomplete beta with first shape
// 1/2: the substitution x = u^2 removes the endpoint singularity, so
//   I_x(1/2, b) = 2/B(1/2,b) * int_0^sqrt(x) (1-u^2)^(b-1) du
// and plain Simpson integration applies.
inline double ibeta_half_oracle(double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_b =
      std::lgamma(0.5) + std::lgamma(b) - std::lgamma(0.5 + b);
  const double integral = simpson_adaptive(
      [b](double u) { return std::pow(1.0 - u * u, b - 1.0); }, 0.0, std::sqrt(x));
  return 2.0 * integral / std::exp(log_b);
}

// Gaussian elimination with partial pivoting; the normal-equations oracle
// for least squares stays independent of the library's decomposition.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a[r][c] * x[static_cast<std::size_t>(c)];
    x[static_cast<std::size_t>(r)] = acc / a[r][r];
  }
  return x;
}

inline std::vector<double> ols_normal_equations(const Matrix& design, const Vector& y) {
  const int k = static_cast<int>(design.cols());
  std::vector<std::vector<double>> ata(static_cast<std::size_t>(k),
                                       std::vector<double>(static_cast<std::size_t>(k)));
  std::vector<double> aty(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j)
      ata[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          design.col(i).dot(design.col(j));
    aty[static_cast<std::size_t>(i)] = design.col(i).dot(y);
  }
  return solve_dense(std::move(ata), std::move(aty));
}

// Runs fn(rep) over [0, reps) on two workers; each rep must seed its own
// randomness so the split cannot change results.
inline void run_parallel(int reps, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  auto worker = [&]() {
    int r;
    while ((r = next.fetch_add(1)) < reps) fn(r);
  };
  std::thread t1(worker), t2(worker);
  t1.join();
  t2.join();
}

// Fills a matrix with standard normal draws.
inline Matrix gaussian_matrix(int n, int p, corrstop::Rng& rng) {
  Matrix x(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) x(i, j) = rng.normal();
  return x;
}

inline Vector gaussian_vector(int n, corrstop::Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// One global-null draw of the maximal correlation statistic: X iid standard
// normal (n x p), independent response, both centered.
struct NullDraw {
  double r_max;
  double u_max;
};

inline NullDraw null_max_corr_draw(int n, int p, corrstop::Rng& rng) {
  Matrix x = gaussian_matrix(n, p, rng);
  Vector y = gaussian_vector(n, rng);
  y.array() -= y.mean();
  const double ynorm = y.norm();
  double umax = -2.0, umin = 2.0;
  for (int j = 0; j < p; ++j) {
    const double mean = x.col(j).mean();
    x.col(j).array() -= mean;
    const double c = x.col(j).dot(y) / (x.col(j).norm() * ynorm);
    umax = std::max(umax, c);
    umin = std::min(umin, c);
  }
  return {std::max(umax, -umin), umax};
}

// Coordinate descent for the lasso objective 0.5*||y - X b||^2 + lambda*||b||_1
// on standardized (unit-norm) columns; the grid oracle for path checks.
inline Vector lasso_coordinate_descent(const Matrix& xstd, const Vector& y,
                                       double lambda, Vector beta0,
                                       double tol = 1e-12, int max_sweeps = 20000) {
  const int p = static_cast<int>(xstd.cols());
  Vector beta = std::move(beta0);
  Vector r = y - xstd * beta;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      const double old = beta(j);
      const double rho = xstd.col(j).dot(r) + old;  // unit-norm columns
      double next = 0.0;
      if (rho > lambda) next = rho - lambda;
      else if (rho < -lambda) next = rho + lambda;
      if (next != old) {
        r += (old - next) * xstd.col(j);
        beta(j) = next;
        max_change = std::max(max_change, std::fabs(next - old));
      }
    }
    if (max_change < tol) break;
  }
  return beta;
}

}  // namespace testutil
