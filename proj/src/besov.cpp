#include "hphi4/besov.hpp"

#include <algorithm>
#include <cmath>

#include "hphi4/errors.hpp"

namespace hphi4 {

namespace {

// standard exp(-1/s) mollifier step: 0 at s <= 0, 1 at s >= 1, smooth
double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double g = std::exp(-1.0 / s);
  const double h = std::exp(-1.0 / (1.0 - s));
  return g / (g + h);
}

// falls from 1 to 0 across [3/4, 4/3]
double low_profile(double xi) {
  return smooth_step((4.0 / 3.0 - xi) / (7.0 / 12.0));
}

}  // namespace

double DyadicCutoff::chi_low(double xi) const { return low_profile(xi); }

double DyadicCutoff::chi(double xi) const {
  return low_profile(0.5 * xi) - low_profile(xi);
}

double DyadicCutoff::chi_j(int j, double xi) const {
  if (j < -1) throw UsageError("chi_j: block index must be >= -1");
  if (j == -1) return chi_low(xi);
  return chi(std::ldexp(xi, -j));
}

DyadicCutoff build_cutoff() { return DyadicCutoff{}; }

int blocks_needed(const SpectralBasis& basis) {
  // partition sums to low_profile(sqrt(lambda)/2^{J+1}), which is 1 once
  // sqrt(lambda_max) <= (3/4) 2^{J+1}
  const double target = 4.0 * std::sqrt(basis.lambda_max) / 3.0;
  int J = -1;
  while (std::ldexp(1.0, J + 1) < target) ++J;
  return J;
}

NormSpec norm_spec(const SpectralBasis& basis, double sigma, double p, double q) {
  if (p < 1.0 || q < 1.0) throw UsageError("norm_spec: need p, q >= 1");
  return NormSpec{sigma, p, q, blocks_needed(basis)};
}

Field apply_block(const Field& u, int j, const DyadicCutoff& cutoff) {
  if (j < -1) throw UsageError("apply_block: block index must be >= -1");
  Field out = u;
  const auto& lambdas = u.basis->lambdas;
  for (Eigen::Index k = 0; k < out.coeff.size(); ++k)
    out.coeff[k] *= cutoff.chi_j(j, std::sqrt(lambdas[k]));
  return out;
}

double lp_norm(const Field& u, double p, const QuadratureGrid& grid) {
  if (p < 1.0) throw UsageError("lp_norm: need p >= 1");
  const Eigen::VectorXd values = inverse_transform(u, grid);
  if (std::isinf(p)) {
    const double node_max = values.cwiseAbs().maxCoeff();
    const int d = u.basis->dimension;
    const int pts = d == 1 ? 401 : (d == 2 ? 41 : 17);
    const double radius = std::sqrt(u.basis->lambda_max) + 2.0;
    return std::max(node_max, max_abs_on_box(u, pts, radius));
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    acc += grid.weights[i] * std::pow(std::abs(values[i]), p);
  return std::pow(acc, 1.0 / p);
}

double besov_norm(const Field& u, const NormSpec& spec, const QuadratureGrid& grid) {
  if (std::ldexp(1.0, 2 * spec.max_block + 2) < u.basis->lambda_max)
    throw UsageError("besov_norm: max_block too small for the basis truncation");
  const DyadicCutoff cutoff = build_cutoff();
  double acc = 0.0;
  for (int j = -1; j <= spec.max_block; ++j) {
    const double block = lp_norm(apply_block(u, j, cutoff), spec.p, grid);
    const double term = std::pow(2.0, j * spec.sigma) * block;
    if (std::isinf(spec.q))
      acc = std::max(acc, term);
    else
      acc += std::pow(term, spec.q);
  }
  return std::isinf(spec.q) ? acc : std::pow(acc, 1.0 / spec.q);
}

double besov_norm(const Field& u, const NormSpec& spec) {
  return besov_norm(u, spec, u.basis->grid(GridKind::Transform));
}

double sobolev_norm(const Field& u, double sigma, double p, const QuadratureGrid& grid) {
  return lp_norm(apply_fractional_power(u, 0.5 * sigma), p, grid);
}

FieldPath zero_path(const BasisPtr& basis, const std::vector<double>& times) {
  FieldPath path;
  path.basis = basis;
  path.times = times;
  path.coeff.assign(times.size(), Eigen::VectorXd::Zero(basis->mode_count()));
  return path;
}

FieldPath path_antiderivative(const FieldPath& path) {
  if (path.times.size() < 2)
    throw UsageError("path_antiderivative: need at least 2 time points");
  FieldPath out;
  out.basis = path.basis;
  out.times = path.times;
  out.coeff.resize(path.coeff.size());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(path.coeff.front().size());
  out.coeff[0] = acc;
  for (std::size_t i = 1; i < path.coeff.size(); ++i) {
    const double dt = path.times[i] - path.times[i - 1];
    acc += 0.5 * dt * (path.coeff[i - 1] + path.coeff[i]);
    out.coeff[i] = acc;
  }
  return out;
}

double holder_norm(const FieldPath& path, double eta, const NormSpec& spatial,
                   const QuadratureGrid& grid) {
  if (path.times.size() < 2)
    throw UsageError("holder_norm: need at least 2 time points");
  double seminorm = 0.0;
  for (std::size_t a = 0; a < path.times.size(); ++a) {
    for (std::size_t b = a + 1; b < path.times.size(); ++b) {
      const double gap = path.times[b] - path.times[a];
      if (gap <= 0.0) continue;
      const Field diff{path.basis, path.coeff[b] - path.coeff[a]};
      seminorm = std::max(seminorm, besov_norm(diff, spatial, grid) / std::pow(gap, eta));
    }
  }
  return besov_norm(path.at(0), spatial, grid) + seminorm;
}

double holder_norm(const FieldPath& path, double eta, const NormSpec& spatial) {
  return holder_norm(path, eta, spatial, path.basis->grid(GridKind::Transform));
}

double neg_holder_norm(const FieldPath& path, double lambda, const NormSpec& spatial) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw UsageError("neg_holder_norm: lambda must lie in (0,1)");
  return holder_norm(path_antiderivative(path), 1.0 - lambda, spatial);
}

}  // namespace hphi4
