#include "hphi4/basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hphi4/errors.hpp"
#include "hphi4/quadrature.hpp"

namespace hphi4 {

namespace {

constexpr double kLogPi = 1.1447298858494001741434273513531;

void check_dimension(int d) {
  if (d < 1 || d > 3) throw UsageError("dimension must be 1, 2 or 3");
}

// All degree tuples with l1 + ... + ld == s, lexicographically increasing.
void tuples_with_sum(int d, int s, std::array<int, 3> prefix, int axis,
                     std::vector<std::array<int, 3>>& out) {
  if (axis == d - 1) {
    prefix[axis] = s;
    out.push_back(prefix);
    return;
  }
  for (int l = 0; l <= s; ++l) {
    prefix[axis] = l;
    tuples_with_sum(d, s - l, prefix, axis + 1, out);
  }
}

}  // namespace

BasisPtr build_basis(int dimension, int n_modes, int capacity_per_axis) {
  check_dimension(dimension);
  if (n_modes < 1) throw UsageError("build_basis: need at least one mode");
  auto basis = std::make_shared<SpectralBasis>();
  basis->dimension = dimension;
  basis->capacity_per_axis = capacity_per_axis;
  basis->modes.reserve(n_modes);
  // Enumerate by total degree s (lambda = 2s + d); within one eigenvalue the
  // lexicographic tuple order is the declared tie-break.
  for (int s = 0; static_cast<int>(basis->modes.size()) < n_modes; ++s) {
    if (s > dimension * capacity_per_axis)
      throw CapacityError("build_basis: mode request exceeds axis capacity");
    std::vector<std::array<int, 3>> tuples;
    tuples_with_sum(dimension, s, {0, 0, 0}, 0, tuples);
    for (const auto& t : tuples) {
      if (static_cast<int>(basis->modes.size()) >= n_modes) break;
      if (*std::max_element(t.begin(), t.end()) > capacity_per_axis)
        throw CapacityError("build_basis: per-axis degree exceeds capacity");
      EigenMode m;
      m.index = t;
      m.lambda = 2.0 * s + dimension;
      basis->modes.push_back(m);
    }
  }
  basis->lambdas.resize(n_modes);
  for (int k = 0; k < n_modes; ++k) {
    basis->lambdas[k] = basis->modes[k].lambda;
    for (int a = 0; a < dimension; ++a)
      basis->max_degree = std::max(basis->max_degree, basis->modes[k].index[a]);
  }
  basis->lambda_max = basis->modes.back().lambda;
  return basis;
}

Eigen::MatrixXd hermite_table(const std::vector<double>& ys, int max_degree) {
  const int n = static_cast<int>(ys.size());
  Eigen::MatrixXd H(n, max_degree + 1);
  constexpr double kPiQuarter = 0.75112554446494248285870300477623;  // pi^{-1/4}
  // Beyond |y| ~ 38.6 the seed e^{-y^2/2} underflows double range while
  // high-degree entries are still O(1) near their turning points. The
  // recurrence is therefore carried at a power-of-two offset,
  // stored = true * 2^shift, and entries leave through ldexp, which scales
  // exactly and flushes genuinely subnormal magnitudes to zero.
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  for (int i = 0; i < n; ++i) {
    const double y = ys[i];
    const double log0 = -0.5 * y * y;
    int shift = 0;
    double a;
    if (log0 < -600.0) {
      shift = static_cast<int>((-600.0 - log0) / kLn2Hi) + 1;
      a = kPiQuarter * std::exp((log0 + shift * kLn2Hi) + shift * kLn2Lo);
    } else {
      a = kPiQuarter * std::exp(log0);
    }
    double b = std::sqrt(2.0) * y * a;
    H(i, 0) = std::ldexp(a, -shift);
    if (max_degree >= 1) H(i, 1) = std::ldexp(b, -shift);
    for (int k = 1; k < max_degree; ++k) {
      const double c = std::sqrt(2.0 / (k + 1)) * y * b -
                       std::sqrt(double(k) / (k + 1)) * a;
      a = b;
      b = c;
      if (shift > 0 && std::abs(b) > 1e140) {
        const int down = std::min(shift, 466);  // 2^466 ~ 1.9e140
        a = std::ldexp(a, -down);
        b = std::ldexp(b, -down);
        shift -= down;
      }
      H(i, k + 1) = std::ldexp(b, -shift);
    }
  }
  return H;
}

std::shared_ptr<const QuadratureGrid> make_custom_grid(const SpectralBasis& basis,
                                                       int order_per_axis,
                                                       double alpha) {
  auto grid = std::make_shared<QuadratureGrid>();
  grid->owner = &basis;
  grid->dimension = basis.dimension;
  grid->alpha = alpha;
  grid->order_per_axis = order_per_axis;
  const int md = basis.max_degree;
  const auto rule = gauss_hermite_flattened(grid->order_per_axis, grid->alpha);
  grid->axis_nodes = rule.nodes;
  grid->axis_weights = rule.weights;

  const int d = grid->dimension;
  const int ord = grid->order_per_axis;
  std::int64_t total = 1;
  for (int a = 0; a < d; ++a) total *= ord;
  if (total * basis.mode_count() > 100'000'000)
    throw CapacityError("quadrature grid: node x mode table too large");

  const Eigen::MatrixXd H = hermite_table(rule.nodes, md);
  grid->nodes.resize(total);
  grid->weights.resize(total);
  grid->phi.resize(total, basis.mode_count());
  for (std::int64_t n = 0; n < total; ++n) {
    std::array<int, 3> idx{0, 0, 0};
    std::int64_t rem = n;
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % ord);
      rem /= ord;
    }
    Point p{0.0, 0.0, 0.0};
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      p[a] = rule.nodes[idx[a]];
      w *= rule.weights[idx[a]];
    }
    grid->nodes[n] = p;
    grid->weights[n] = w;
    for (int k = 0; k < basis.mode_count(); ++k) {
      double v = 1.0;
      for (int a = 0; a < d; ++a) v *= H(idx[a], basis.modes[k].index[a]);
      grid->phi(n, k) = v;
    }
  }
  return grid;
}

namespace {

std::shared_ptr<const QuadratureGrid> build_grid(const SpectralBasis& basis,
                                                 GridKind kind) {
  const int md = basis.max_degree;
  switch (kind) {
    case GridKind::Pair:
      return make_custom_grid(basis, (3 * md) / 2 + 2, 1.5);
    case GridKind::Cube:
      return make_custom_grid(basis, 2 * md + 1, 2.0);
    default:
      return make_custom_grid(basis, md + 1, 1.0);
  }
}

}  // namespace

const QuadratureGrid& SpectralBasis::grid(GridKind kind) const {
  const int k = static_cast<int>(kind);
  std::lock_guard<std::mutex> lock(grid_mutex_);
  if (!grid_cache_[k]) grid_cache_[k] = build_grid(*this, kind);
  return *grid_cache_[k];
}

Field zero_field(const BasisPtr& basis) {
  if (!basis) throw UsageError("zero_field: null basis");
  return {basis, Eigen::VectorXd::Zero(basis->mode_count())};
}

void require_same_basis(const Field& a, const Field& b) {
  if (!a.basis || !b.basis || a.basis.get() != b.basis.get())
    throw UsageError("field operation: bases differ");
}

Field operator+(const Field& a, const Field& b) {
  require_same_basis(a, b);
  return {a.basis, a.coeff + b.coeff};
}

Field operator-(const Field& a, const Field& b) {
  require_same_basis(a, b);
  return {a.basis, a.coeff - b.coeff};
}

Field operator*(double s, const Field& a) { return {a.basis, s * a.coeff}; }

double eval_eigenfunction(const SpectralBasis& basis, int mode, const Point& x) {
  if (mode < 0 || mode >= basis.mode_count())
    throw UsageError("eval_eigenfunction: mode index out of range");
  double v = 1.0;
  for (int a = 0; a < basis.dimension; ++a) {
    const std::vector<double> y{x[a]};
    v *= hermite_table(y, basis.modes[mode].index[a])(0, basis.modes[mode].index[a]);
  }
  return v;
}

double eval_field(const Field& u, const Point& x) {
  const auto& basis = *u.basis;
  std::array<Eigen::MatrixXd, 3> H;
  for (int a = 0; a < basis.dimension; ++a)
    H[a] = hermite_table({x[a]}, basis.max_degree);
  double v = 0.0;
  for (int k = 0; k < basis.mode_count(); ++k) {
    double p = u.coeff[k];
    for (int a = 0; a < basis.dimension; ++a) p *= H[a](0, basis.modes[k].index[a]);
    v += p;
  }
  return v;
}

Eigen::VectorXd inverse_transform(const Field& u, const QuadratureGrid& grid) {
  if (grid.owner != u.basis.get())
    throw UsageError("inverse_transform: grid belongs to a different basis");
  return grid.phi * u.coeff;
}

Field forward_transform(const BasisPtr& basis, const QuadratureGrid& grid,
                        const Eigen::VectorXd& values) {
  if (grid.owner != basis.get())
    throw UsageError("forward_transform: grid belongs to a different basis");
  if (values.size() != grid.weights.size())
    throw UsageError("forward_transform: value count does not match grid");
  return {basis, grid.phi.transpose() * grid.weights.cwiseProduct(values)};
}

Field apply_semigroup(const Field& u, double t) {
  if (t < 0.0) throw UsageError("apply_semigroup: t must be >= 0");
  Field r{u.basis, u.coeff};
  for (int k = 0; k < r.coeff.size(); ++k)
    r.coeff[k] *= std::exp(-t * u.basis->lambdas[k]);
  return r;
}

Field apply_fractional_power(const Field& u, double s) {
  Field r{u.basis, u.coeff};
  for (int k = 0; k < r.coeff.size(); ++k)
    r.coeff[k] *= std::pow(u.basis->lambdas[k], s);
  return r;
}

Field product_pair(const Field& f, const Field& g) {
  require_same_basis(f, g);
  const auto& grid = f.basis->grid(GridKind::Pair);
  const Eigen::VectorXd vals =
      (grid.phi * f.coeff).cwiseProduct(grid.phi * g.coeff);
  return forward_transform(f.basis, grid, vals);
}

Field product_triple(const Field& f, const Field& g, const Field& h) {
  require_same_basis(f, g);
  require_same_basis(f, h);
  const auto& grid = f.basis->grid(GridKind::Cube);
  const Eigen::VectorXd vals = (grid.phi * f.coeff)
                                   .cwiseProduct(grid.phi * g.coeff)
                                   .cwiseProduct(grid.phi * h.coeff);
  return forward_transform(f.basis, grid, vals);
}

namespace {

double log_2pi_sinh_2t(double t) {
  // log(2 pi sinh 2t) = log(pi) + 2t + log(1 - e^{-4t}); the expm1 form keeps
  // the last term exact down to t near the underflow threshold.
  return kLogPi + 2.0 * t + std::log(-std::expm1(-4.0 * t));
}

}  // namespace

double mehler_kernel(int dimension, double t, const Point& x, const Point& y) {
  check_dimension(dimension);
  if (!(t > 0.0)) throw UsageError("mehler_kernel: t must be > 0");
  const double T = std::tanh(t);
  double d2 = 0.0, s2 = 0.0;
  for (int a = 0; a < dimension; ++a) {
    d2 += (x[a] - y[a]) * (x[a] - y[a]);
    s2 += (x[a] + y[a]) * (x[a] + y[a]);
  }
  const double logK =
      -0.5 * dimension * log_2pi_sinh_2t(t) - d2 / (4.0 * T) - 0.25 * T * s2;
  return std::exp(logK);
}

double mehler_kernel_modesum(const SpectralBasis& basis, double t, const Point& x,
                             const Point& y) {
  if (!(t > 0.0)) throw UsageError("mehler_kernel_modesum: t must be > 0");
  std::array<Eigen::MatrixXd, 3> Hx, Hy;
  for (int a = 0; a < basis.dimension; ++a) {
    Hx[a] = hermite_table({x[a]}, basis.max_degree);
    Hy[a] = hermite_table({y[a]}, basis.max_degree);
  }
  double sum = 0.0;
  for (int k = 0; k < basis.mode_count(); ++k) {
    double p = std::exp(-t * basis.modes[k].lambda);
    for (int a = 0; a < basis.dimension; ++a) {
      const int deg = basis.modes[k].index[a];
      p *= Hx[a](0, deg) * Hy[a](0, deg);
    }
    sum += p;
  }
  return sum;
}

double mehler_lp_norm(int dimension, double t, const Point& x, double p) {
  check_dimension(dimension);
  if (!(t > 0.0)) throw UsageError("mehler_lp_norm: t must be > 0");
  const double T = std::tanh(t);
  const double A = (1.0 + T * T) / (4.0 * T);
  const double B = (1.0 - T * T) / (4.0 * T);
  Point m{0.0, 0.0, 0.0};
  for (int a = 0; a < dimension; ++a) m[a] = (B / A) * x[a];
  if (std::isinf(p)) {
    // The kernel is a Gaussian in y centered at m; scan around the peak to
    // confirm the maximum numerically.
    double best = mehler_kernel(dimension, t, x, m);
    const double halfwidth = 4.0 / std::sqrt(2.0 * A);
    const int n1 = 11;
    Point y = m;
    if (dimension == 1) {
      for (int i = 0; i < n1; ++i) {
        y[0] = m[0] + halfwidth * (2.0 * i / (n1 - 1) - 1.0);
        best = std::max(best, mehler_kernel(dimension, t, x, y));
      }
    } else {
      for (int i = 0; i < n1; ++i)
        for (int jj = 0; jj < n1; ++jj)
          for (int kk = 0; kk < (dimension == 3 ? n1 : 1); ++kk) {
            y[0] = m[0] + halfwidth * (2.0 * i / (n1 - 1) - 1.0);
            y[1] = m[1] + halfwidth * (2.0 * jj / (n1 - 1) - 1.0);
            if (dimension == 3) y[2] = m[2] + halfwidth * (2.0 * kk / (n1 - 1) - 1.0);
            best = std::max(best, mehler_kernel(dimension, t, x, y));
          }
    }
    return best;
  }
  if (!(p >= 1.0)) throw UsageError("mehler_lp_norm: p must be >= 1 or infinity");
  // K(x, .)^p = const * e^{-pA |y-m|^2}: integrate with the matching
  // flattened Gauss-Hermite rule, shifted to the center.
  const auto rule = gauss_hermite_flattened(8, p * A);
  double total = 0.0;
  const int ord = static_cast<int>(rule.nodes.size());
  std::int64_t count = 1;
  for (int a = 0; a < dimension; ++a) count *= ord;
  for (std::int64_t n = 0; n < count; ++n) {
    std::array<int, 3> idx{0, 0, 0};
    std::int64_t rem = n;
    for (int a = dimension - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % ord);
      rem /= ord;
    }
    Point y = m;
    double w = 1.0;
    for (int a = 0; a < dimension; ++a) {
      y[a] = m[a] + rule.nodes[idx[a]];
      w *= rule.weights[idx[a]];
    }
    total += w * std::pow(mehler_kernel(dimension, t, x, y), p);
  }
  return std::pow(total, 1.0 / p);
}

double spectral_function(int dimension, int j, const Point& x, int capacity_per_axis) {
  check_dimension(dimension);
  if (j < 0) throw UsageError("spectral_function: j must be >= 0");
  const std::int64_t lo = std::int64_t(1) << (2 * j);
  const std::int64_t hi = std::int64_t(1) << (2 * j + 2);
  // lambda = 2s + d in [lo, hi] <=> s in [smin, smax]
  const std::int64_t smin = std::max<std::int64_t>(0, (lo - dimension + 1) / 2);
  const std::int64_t smax = (hi - dimension) / 2;
  if (smax > capacity_per_axis)
    throw CapacityError("spectral_function: window exceeds axis capacity");
  const int S = static_cast<int>(smax);
  std::array<Eigen::MatrixXd, 3> H;
  for (int a = 0; a < dimension; ++a) H[a] = hermite_table({x[a]}, S);
  auto sq = [&](int a, int k) { return H[a](0, k) * H[a](0, k); };
  const int s0 = static_cast<int>(smin);
  if (dimension == 1) {
    double sum = 0.0;
    for (int s = s0; s <= S; ++s) sum += sq(0, s);
    return sum;
  }
  // prefix[k] = sum of last-axis squares up to degree k
  std::vector<double> prefix(S + 2, 0.0);
  for (int k = 0; k <= S; ++k) prefix[k + 1] = prefix[k] + sq(dimension - 1, k);
  auto range_sum = [&](int lo_k, int hi_k) {
    lo_k = std::max(lo_k, 0);
    if (hi_k < lo_k) return 0.0;
    return prefix[hi_k + 1] - prefix[lo_k];
  };
  double sum = 0.0;
  if (dimension == 2) {
    for (int l1 = 0; l1 <= S; ++l1) sum += sq(0, l1) * range_sum(s0 - l1, S - l1);
  } else {
    for (int l1 = 0; l1 <= S; ++l1)
      for (int l2 = 0; l2 + l1 <= S; ++l2)
        sum += sq(0, l1) * sq(1, l2) * range_sum(s0 - l1 - l2, S - l1 - l2);
  }
  return sum;
}

double h_gamma_diag(int dimension, double gamma, const Point& x) {
  check_dimension(dimension);
  if (!(gamma < -0.5 * dimension))
    throw UsageError("h_gamma_diag: need gamma < -d/2 for a finite diagonal");
  double x2 = 0.0;
  for (int a = 0; a < dimension; ++a) x2 += x[a] * x[a];
  auto integrand = [&](double t) {
    const double logK = -0.5 * dimension * log_2pi_sinh_2t(t) - std::tanh(t) * x2;
    return std::pow(t, -gamma - 1.0) * std::exp(logK);
  };
  const double upper = 60.0;
  const auto splits = geometric_breakpoints(0.0, upper, 1e-6);
  const auto r = integrate_gk15_split(integrand, 0.0, upper, splits, 1e-12);
  return r.value / std::tgamma(-gamma);
}

double h_gamma_diag_modesum(int dimension, double gamma, const Point& x,
                            double lambda_cap) {
  check_dimension(dimension);
  const int S = static_cast<int>(std::floor((lambda_cap - dimension) / 2.0));
  if (S < 0) return 0.0;
  std::array<Eigen::MatrixXd, 3> H;
  for (int a = 0; a < dimension; ++a) H[a] = hermite_table({x[a]}, S);
  auto sq = [&](int a, int k) { return H[a](0, k) * H[a](0, k); };
  double sum = 0.0;
  if (dimension == 1) {
    for (int s = 0; s <= S; ++s) sum += std::pow(2.0 * s + 1.0, gamma) * sq(0, s);
    return sum;
  }
  if (dimension == 2) {
    for (int s = 0; s <= S; ++s) {
      double u = 0.0;
      for (int l1 = 0; l1 <= s; ++l1) u += sq(0, l1) * sq(1, s - l1);
      sum += std::pow(2.0 * s + 2.0, gamma) * u;
    }
    return sum;
  }
  // d = 3: convolve axes 2 and 3, then axis 1.
  std::vector<double> conv23(S + 1, 0.0);
  for (int m = 0; m <= S; ++m)
    for (int l2 = 0; l2 <= m; ++l2) conv23[m] += sq(1, l2) * sq(2, m - l2);
  for (int s = 0; s <= S; ++s) {
    double u = 0.0;
    for (int l1 = 0; l1 <= s; ++l1) u += sq(0, l1) * conv23[s - l1];
    sum += std::pow(2.0 * s + 3.0, gamma) * u;
  }
  return sum;
}

double max_abs_on_box(const Field& u, int points_per_axis, double radius) {
  const auto& basis = *u.basis;
  if (points_per_axis < 2) throw UsageError("max_abs_on_box: need >= 2 points");
  std::vector<double> ys(points_per_axis);
  for (int i = 0; i < points_per_axis; ++i)
    ys[i] = radius * (2.0 * i / (points_per_axis - 1) - 1.0);
  const Eigen::MatrixXd H = hermite_table(ys, basis.max_degree);
  const int d = basis.dimension;
  std::int64_t total = 1;
  for (int a = 0; a < d; ++a) total *= points_per_axis;
  double best = 0.0;
  for (std::int64_t n = 0; n < total; ++n) {
    std::array<int, 3> idx{0, 0, 0};
    std::int64_t rem = n;
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % points_per_axis);
      rem /= points_per_axis;
    }
    double v = 0.0;
    for (int k = 0; k < basis.mode_count(); ++k) {
      double p = u.coeff[k];
      for (int a = 0; a < d; ++a) p *= H(idx[a], basis.modes[k].index[a]);
      v += p;
    }
    best = std::max(best, std::abs(v));
  }
  return best;
}

}  // namespace hphi4
