#pragma once

#include <limits>
#include <vector>

#include "hphi4/basis.hpp"

namespace hphi4 {

inline constexpr double kInfExponent = std::numeric_limits<double>::infinity();

// Smooth dyadic partition on the square root of the spectrum. chi_low == 1 on
// [0, 3/4] and vanishes beyond 4/3; chi is supported in [3/4, 8/3]; together
// chi_low(xi) + sum_{j>=0} chi(xi/2^j) = 1 for every xi >= 0.
struct DyadicCutoff {
  double chi_low(double xi) const;
  double chi(double xi) const;
  // j = -1 selects chi_low, j >= 0 gives chi(xi / 2^j)
  double chi_j(int j, double xi) const;
};

DyadicCutoff build_cutoff();

// Parameters of the block-weighted norm (sum_j (2^{j sigma} |block_j|_p)^q)^{1/q}.
// p or q equal to kInfExponent select the corresponding supremum.
struct NormSpec {
  double sigma = 0.0;
  double p = 2.0;
  double q = 2.0;
  int max_block = 0;
};

// Smallest J such that blocks -1..J cover the whole truncated spectrum, i.e.
// the partial partition sum is exactly 1 at lambda_max.
int blocks_needed(const SpectralBasis& basis);

NormSpec norm_spec(const SpectralBasis& basis, double sigma, double p, double q);

// Coefficient-wise multiplication by chi_j(sqrt(lambda_k)).
Field apply_block(const Field& u, int j, const DyadicCutoff& cutoff);

// L^p norm through the grid's quadrature weights. p = kInfExponent scans the
// grid nodes together with a uniform box lattice, so the result is a lower
// bound to the true supremum.
double lp_norm(const Field& u, double p, const QuadratureGrid& grid);

double besov_norm(const Field& u, const NormSpec& spec, const QuadratureGrid& grid);
double besov_norm(const Field& u, const NormSpec& spec);

// |H^{sigma/2} u|_p on the given grid.
double sobolev_norm(const Field& u, double sigma, double p, const QuadratureGrid& grid);

// A field sampled on a time grid; coefficients share one basis.
struct FieldPath {
  BasisPtr basis;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> coeff;

  Field at(std::size_t i) const { return Field{basis, coeff.at(i)}; }
};

FieldPath zero_path(const BasisPtr& basis, const std::vector<double>& times);

// Cumulative trapezoid antiderivative, zero at the first time.
FieldPath path_antiderivative(const FieldPath& path);

// |f(t_first)| + sup over grid pairs of |f(v) - f(u)| / |v - u|^eta, spatial
// norms per spec (on the basis transform grid unless one is supplied).
double holder_norm(const FieldPath& path, double eta, const NormSpec& spatial);
double holder_norm(const FieldPath& path, double eta, const NormSpec& spatial,
                   const QuadratureGrid& grid);

// Negative-exponent convention: the Hölder norm at exponent 1 - lambda of the
// cumulative antiderivative.
double neg_holder_norm(const FieldPath& path, double lambda, const NormSpec& spatial);

}  // namespace hphi4
