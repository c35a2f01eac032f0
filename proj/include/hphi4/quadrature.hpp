#pragma once

#include <functional>
#include <vector>

namespace hphi4 {

// One-dimensional Gauss-Hermite rule. Depending on the builder used, the
// weights either include the e^{-y^2} factor (natural rule) or compensate a
// Gaussian factor already present in the integrand (flattened rule).
struct GaussHermite1d {
  std::vector<double> nodes;    // ascending, symmetric about 0
  std::vector<double> weights;  // strictly positive
};

// Natural rule: integral_R f(y) e^{-y^2} dy ~= sum_i w_i f(y_i),
// exact for polynomials f of degree <= 2*order-1.
GaussHermite1d gauss_hermite(int order);

// Flattened rule: integral_R g(x) dx ~= sum_i W_i g(x_i), exact whenever
// g(x) = p(x) e^{-alpha x^2} with deg p <= 2*order-1. The e^{+y^2}
// compensation is folded into the weight computation so no intermediate
// over- or underflow occurs even for orders of several hundred.
GaussHermite1d gauss_hermite_flattened(int order, double alpha);

struct QuadResult {
  double value = 0.0;
  double error_estimate = 0.0;
  int panels = 0;
  bool converged = true;
};

// Adaptive Gauss-Kronrod 7/15 with bisection on [a, b].
QuadResult integrate_gk15(const std::function<double(double)>& f, double a, double b,
                          double abs_tol, int max_panels = 4000);

// Same, but the interval is pre-split at the given interior breakpoints
// before adaptation starts. Useful when the integrand has a known
// near-singular scale (splits clustered at the lower endpoint).
QuadResult integrate_gk15_split(const std::function<double(double)>& f, double a, double b,
                                const std::vector<double>& splits, double abs_tol,
                                int max_panels = 4000);

// Breakpoints a + first_step * {1, 2, 4, ...} strictly inside (a, b).
std::vector<double> geometric_breakpoints(double a, double b, double first_step);

// Fixed composite rule: `panels_per_interval` GK15 panels on each interval of
// the breakpoint list (which must include both endpoints). Reusable across
// many integrands that share the same panel structure.
struct FixedRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
FixedRule composite_gk15(const std::vector<double>& breakpoints, int panels_per_interval);

}  // namespace hphi4
