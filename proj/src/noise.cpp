#include "hphi4/noise.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hphi4/errors.hpp"
#include "hphi4/philox.hpp"
#include "hphi4/quadrature.hpp"

namespace hphi4 {

namespace {

void check_config(const NoiseConfig& config) {
  if (!config.basis) throw UsageError("noise: config has no basis");
  if (config.level < 0) throw UsageError("noise: level must be >= 0");
  if (!(config.dt > 0.0)) throw UsageError("noise: dt must be > 0");
  if (!(config.horizon >= config.dt)) throw UsageError("noise: horizon must be >= dt");
}

void check_dimension(int dimension) {
  if (dimension < 1 || dimension > 3)
    throw UsageError("noise: dimension must be 1, 2, or 3");
}

double point_norm(const Point& x) {
  return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
}

// breakpoints {lo, 2 lo, 3 lo, 5 lo, ...} up to hi, resolving an integrand
// whose natural scale is the distance to lo
std::vector<double> scale_breakpoints(double lo, double hi) {
  std::vector<double> pts;
  pts.push_back(lo);
  for (double p : geometric_breakpoints(lo, hi, lo)) pts.push_back(p);
  pts.push_back(hi);
  return pts;
}

}  // namespace

double regularization_scale(int level) {
  if (level < 0) throw UsageError("noise: level must be >= 0");
  return std::ldexp(1.0, -level);
}

Eigen::VectorXd noise_increment(const NoiseConfig& config, std::uint32_t replica,
                                std::int64_t step) {
  check_config(config);
  if (step < 0) throw UsageError("noise_increment: step must be >= 0");
  const auto& basis = *config.basis;
  const double eps = regularization_scale(config.level);
  NoiseStream stream(config.seed);
  Eigen::VectorXd out(basis.mode_count());
  for (int k = 0; k < basis.mode_count(); ++k) {
    const double lambda = basis.lambdas[k];
    const double sd = std::sqrt(-std::expm1(-2.0 * lambda * config.dt) / (2.0 * lambda));
    out[k] = std::exp(-eps * lambda) * sd *
             stream.normal(replica, static_cast<std::uint32_t>(k),
                           static_cast<std::uint64_t>(step));
  }
  return out;
}

StochConvPath sample_stoch_conv(const NoiseConfig& config, std::uint32_t replica) {
  check_config(config);
  const auto& basis = *config.basis;
  const std::int64_t steps = std::llround(config.horizon / config.dt);
  if (steps < 1 || std::abs(steps * config.dt - config.horizon) >
                       1e-9 * std::max(1.0, config.horizon))
    throw UsageError("sample_stoch_conv: horizon must be a multiple of dt");

  const Eigen::VectorXd decay = (-config.dt * basis.lambdas.array()).exp();
  StochConvPath out;
  out.config = config;
  out.replica = replica;
  out.path.basis = config.basis;
  out.path.times.reserve(steps + 1);
  out.path.coeff.reserve(steps + 1);
  Eigen::VectorXd state = Eigen::VectorXd::Zero(basis.mode_count());
  out.path.times.push_back(0.0);
  out.path.coeff.push_back(state);
  for (std::int64_t m = 0; m < steps; ++m) {
    state = decay.cwiseProduct(state) + noise_increment(config, replica, m);
    out.path.times.push_back((m + 1) * config.dt);
    out.path.coeff.push_back(state);
  }
  return out;
}

double covariance_exact(int dimension, int level, double t1, double t2, const Point& y1,
                        const Point& y2, double abs_tol) {
  check_dimension(dimension);
  if (t1 < 0.0 || t2 < 0.0) throw UsageError("covariance_exact: times must be >= 0");
  const double eps = regularization_scale(level);
  const double lo = std::abs(t2 - t1) + 2.0 * eps;
  const double hi = t1 + t2 + 2.0 * eps;
  if (!(hi > lo)) return 0.0;
  const auto res = integrate_gk15_split(
      [&](double sigma) { return mehler_kernel(dimension, sigma, y1, y2); }, lo, hi,
      geometric_breakpoints(lo, hi, lo), abs_tol);
  if (!res.converged)
    throw NumericalError("covariance_exact: quadrature did not converge");
  return 0.5 * res.value;
}

double covariance_modesum(const SpectralBasis& basis, int level, double t1, double t2,
                          const Point& y1, const Point& y2) {
  if (t1 < 0.0 || t2 < 0.0) throw UsageError("covariance_modesum: times must be >= 0");
  const double eps = regularization_scale(level);
  std::array<Eigen::MatrixXd, 3> h1, h2;
  for (int a = 0; a < basis.dimension; ++a) {
    h1[a] = hermite_table({y1[a]}, basis.max_degree);
    h2[a] = hermite_table({y2[a]}, basis.max_degree);
  }
  double sum = 0.0;
  for (int k = 0; k < basis.mode_count(); ++k) {
    const double lambda = basis.lambdas[k];
    double p = std::exp(-2.0 * eps * lambda) *
               (std::exp(-lambda * std::abs(t2 - t1)) - std::exp(-lambda * (t1 + t2))) /
               (2.0 * lambda);
    for (int a = 0; a < basis.dimension; ++a) {
      const int deg = basis.modes[k].index[a];
      p *= h1[a](0, deg) * h2[a](0, deg);
    }
    sum += p;
  }
  return sum;
}

double compute_c1(int dimension, int level, double t, const Point& x, double abs_tol) {
  check_dimension(dimension);
  if (t < 0.0) throw UsageError("compute_c1: t must be >= 0");
  if (t == 0.0) return 0.0;
  const double eps = regularization_scale(level);
  const auto res = integrate_gk15_split(
      [&](double sigma) { return mehler_kernel(dimension, 2.0 * sigma, x, x); }, eps,
      t + eps, geometric_breakpoints(eps, t + eps, eps), abs_tol);
  if (!res.converged) throw NumericalError("compute_c1: quadrature did not converge");
  return res.value;
}

double compute_c2(int dimension, int level, double t, const Point& x, const C2Quad& quad) {
  check_dimension(dimension);
  if (t < 0.0) throw UsageError("compute_c2: t must be >= 0");
  if (t == 0.0) return 0.0;
  if (quad.w_order < 2) throw UsageError("compute_c2: w_order must be >= 2");
  const double eps = regularization_scale(level);
  const double xr = point_norm(x);
  const Point xa{xr, 0.0, 0.0};  // the kernel depends on |x|, |w|, x.w only

  auto s_integrand = [&](double s) {
    const double tau = std::max(t - s, 1e-300);
    // fixed sigma rule for C(t, s, x, w) = (1/2) int_lo^hi K_sigma(x, w) dsigma
    const double lo = tau + 2.0 * eps;
    const double hi = t + s + 2.0 * eps;
    const FixedRule sigma_rule =
        composite_gk15(scale_breakpoints(lo, hi), quad.sigma_panels);
    auto f_at = [&](const Point& w) {
      double cov = 0.0;
      for (std::size_t q = 0; q < sigma_rule.nodes.size(); ++q)
        cov += sigma_rule.weights[q] * mehler_kernel(dimension, sigma_rule.nodes[q], xa, w);
      cov *= 0.5;
      return mehler_kernel(dimension, tau, xa, w) * cov * cov;
    };
    // complete the square of K_tau(x, .): exponent -a |w - m e1|^2 + const
    const double a = 0.5 * std::cosh(2.0 * tau) / std::sinh(2.0 * tau);
    const double m = xr / std::cosh(2.0 * tau);
    const auto axis = gauss_hermite_flattened(quad.w_order, a);
    double total = 0.0;
    if (dimension == 1) {
      for (int i = 0; i < quad.w_order; ++i)
        total += axis.weights[i] * f_at({m + axis.nodes[i], 0.0, 0.0});
    } else if (dimension == 2) {
      for (int i = 0; i < quad.w_order; ++i)
        for (int j = 0; j < quad.w_order; ++j)
          total += axis.weights[i] * axis.weights[j] *
                   f_at({m + axis.nodes[i], axis.nodes[j], 0.0});
    } else {
      constexpr double kTwoPi = 6.2831853071795864769252867665590;
      const double rho_max = 10.0 / std::sqrt(a);
      for (int i = 0; i < quad.w_order; ++i) {
        const double u = m + axis.nodes[i];
        const auto radial = integrate_gk15(
            [&](double rho) { return kTwoPi * rho * f_at({u, rho, 0.0}); }, 0.0, rho_max,
            quad.rho_tol);
        total += axis.weights[i] * radial.value;
      }
    }
    return total;
  };

  // boundary layer of width eps at s -> t, resolved geometrically
  std::vector<double> splits;
  for (double g : geometric_breakpoints(0.0, t, eps)) splits.push_back(t - g);
  std::sort(splits.begin(), splits.end());
  const auto res = integrate_gk15_split(s_integrand, 0.0, t, splits, quad.s_tol);
  return 2.0 * res.value;
}

RenormTable build_renorm_table(int dimension, int level, const std::vector<double>& times,
                               const std::vector<Point>& points, const C2Quad& quad) {
  check_dimension(dimension);
  if (times.empty() || points.empty())
    throw UsageError("build_renorm_table: need at least one time and one point");
  for (double t : times)
    if (t < 0.0) throw UsageError("build_renorm_table: times must be >= 0");
  RenormTable table;
  table.level = level;
  table.dimension = dimension;
  table.times = times;
  table.points = points;
  const int nt = static_cast<int>(times.size());
  const int np = static_cast<int>(points.size());
  table.c1.resize(nt, np);
  table.c2.resize(nt, np);
  table.combined.resize(nt, np);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < np; ++j) {
      table.c1(i, j) = compute_c1(dimension, level, times[i], points[j]);
      table.c2(i, j) = compute_c2(dimension, level, times[i], points[j], quad);
      table.combined(i, j) = 3.0 * table.c1(i, j) - 9.0 * table.c2(i, j);
    }
  return table;
}

}  // namespace hphi4
