#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace corrstop {

struct QuadratureFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// 16-point Gauss-Legendre rule on [-1, 1] (positive abscissae; the rule is
// symmetric).
inline constexpr std::array<double, 8> gl16_x = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
    0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
    0.9445750230732326, 0.9894009349916499};
inline constexpr std::array<double, 8> gl16_w = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
    0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
    0.0622535239386479, 0.0271524594117541};

}  // namespace detail

// Composite 16-point Gauss-Legendre over `panels` equal subintervals.
template <typename F>
double composite_gauss_legendre(F&& f, double lo, double hi, int panels) {
  if (!(hi > lo) || panels < 1) return 0.0;
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double mid = lo + (k + 0.5) * width;
    const double half = 0.5 * width;
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) {
      const double dx = half * detail::gl16_x[i];
      acc += detail::gl16_w[i] * (f(mid + dx) + f(mid - dx));
    }
    total += half * acc;
  }
  return total;
}

// Panel-doubling refinement until successive composite rules agree to
// rel_tol. Throws QuadratureFailure if max_refinements doublings are not
// enough.
template <typename F>
double integrate_adaptive(F&& f, double lo, double hi, int initial_panels,
                          double rel_tol, int max_refinements = 5) {
  if (!(hi > lo)) return 0.0;
  int panels = initial_panels < 1 ? 1 : initial_panels;
  double prev = composite_gauss_legendre(f, lo, hi, panels);
  for (int r = 0; r < max_refinements; ++r) {
    panels *= 2;
    const double next = composite_gauss_legendre(f, lo, hi, panels);
    if (std::fabs(next - prev) <= rel_tol * std::fabs(next) + 1e-14) {
      return next;
    }
    prev = next;
  }
  throw QuadratureFailure("integrate_adaptive: panel doubling did not converge");
}

}  // namespace corrstop
