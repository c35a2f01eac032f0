#pragma once

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <mutex>
#include <vector>

namespace hphi4 {

// A point in R^d with d <= 3; coordinates beyond the active dimension are 0.
using Point = std::array<double, 3>;

// One eigenmode of H = -Laplacian + |x|^2: per-axis Hermite degrees and the
// eigenvalue lambda = sum_a (2 l_a + 1).
struct EigenMode {
  std::array<int, 3> index{0, 0, 0};
  double lambda = 0.0;
};

class SpectralBasis;

// Tensor-product quadrature grid bound to one basis. `alpha` declares the
// Gaussian weight class e^{-alpha |x|^2} the rule integrates exactly against
// (times polynomials up to degree 2*order_per_axis - 1 per axis). The matrix
// phi caches phi_k at every node so transforms reduce to matrix products.
struct QuadratureGrid {
  const SpectralBasis* owner = nullptr;
  int dimension = 1;
  int order_per_axis = 0;
  double alpha = 1.0;
  std::vector<double> axis_nodes;
  std::vector<double> axis_weights;
  std::vector<Point> nodes;        // row-major over axes, axis 0 slowest
  Eigen::VectorXd weights;         // tensor weights
  Eigen::MatrixXd phi;             // (node, mode)
};

// Transform: alpha = 1, exact for products of two basis elements.
// Pair:      alpha = 3/2, exact for phi * phi * phi integrands.
// Cube:      alpha = 2, exact for quartic products (u^3 against a mode).
enum class GridKind { Transform = 0, Pair = 1, Cube = 2 };

class SpectralBasis {
 public:
  int dimension = 1;
  int capacity_per_axis = 256;
  std::vector<EigenMode> modes;   // sorted by (lambda, lexicographic index)
  Eigen::VectorXd lambdas;        // modes[k].lambda, as a vector
  int max_degree = 0;             // max per-axis Hermite degree across modes
  double lambda_max = 0.0;

  int mode_count() const { return static_cast<int>(modes.size()); }

  // Grids are built on first use and cached; a basis shared across threads
  // hands out the same immutable grid object.
  const QuadratureGrid& grid(GridKind kind) const;

 private:
  mutable std::mutex grid_mutex_;
  mutable std::array<std::shared_ptr<const QuadratureGrid>, 3> grid_cache_;
};

using BasisPtr = std::shared_ptr<const SpectralBasis>;

// Builds the basis of the n_modes smallest eigenvalues (ties broken by
// lexicographic index order). Throws CapacityError if the required per-axis
// degree exceeds capacity_per_axis.
BasisPtr build_basis(int dimension, int n_modes, int capacity_per_axis = 256);

// Spectral coefficients of a function with respect to one basis.
struct Field {
  BasisPtr basis;
  Eigen::VectorXd coeff;
};

Field zero_field(const BasisPtr& basis);
void require_same_basis(const Field& a, const Field& b);
Field operator+(const Field& a, const Field& b);
Field operator-(const Field& a, const Field& b);
Field operator*(double s, const Field& a);

// Values phi_k(y_i) for k = 0..max_degree at the given 1d points.
Eigen::MatrixXd hermite_table(const std::vector<double>& ys, int max_degree);

double eval_eigenfunction(const SpectralBasis& basis, int mode, const Point& x);
double eval_field(const Field& u, const Point& x);

// Node values of u on a grid of its own basis (phi * coeff).
Eigen::VectorXd inverse_transform(const Field& u, const QuadratureGrid& grid);

// Projection coefficients from node values: c_k = sum_i W_i v_i phi_k(x_i).
// Exact when the sampled function times the grid weight class lies in the
// polynomial range of the rule.
Field forward_transform(const BasisPtr& basis, const QuadratureGrid& grid,
                        const Eigen::VectorXd& values);

Field apply_semigroup(const Field& u, double t);          // e^{-tH}, t >= 0
Field apply_fractional_power(const Field& u, double s);   // H^s, any real s

// Galerkin products: multiply pointwise on the suitable grid, then project
// back onto the basis span.
Field product_pair(const Field& f, const Field& g);
Field product_triple(const Field& f, const Field& g, const Field& h);

// Heat kernel of H in closed form (t > 0):
// K_t(x,y) = (2 pi sinh 2t)^{-d/2}
//            exp(-|x-y|^2 / (4 tanh t) - tanh(t) |x+y|^2 / 4).
double mehler_kernel(int dimension, double t, const Point& x, const Point& y);

// Truncated eigen-sum of the same kernel over the basis modes.
double mehler_kernel_modesum(const SpectralBasis& basis, double t, const Point& x,
                             const Point& y);

// || K_t(x, .) ||_{L^p}; pass p = infinity() for the sup norm.
double mehler_lp_norm(int dimension, double t, const Point& x, double p);

// Psi_j(x) = sum over modes with 4^j <= lambda <= 4^{j+1} of phi_k(x)^2.
double spectral_function(int dimension, int j, const Point& x,
                         int capacity_per_axis = 256);

// Diagonal of the kernel of H^gamma for gamma < 0, via the subordination
// integral h_gamma(x,x) = Gamma(-gamma)^{-1} int_0^inf t^{-gamma-1} K_t(x,x) dt.
double h_gamma_diag(int dimension, double gamma, const Point& x);

// Same quantity as a truncated mode sum over lambda <= lambda_cap.
double h_gamma_diag_modesum(int dimension, double gamma, const Point& x,
                            double lambda_cap);

// max |u| over the tensor grid with points_per_axis uniform points per axis
// on [-radius, radius]. Used as the scan part of sup-norm estimates.
double max_abs_on_box(const Field& u, int points_per_axis, double radius);

// Tensor quadrature grid with a caller-chosen per-axis order and weight
// class exp(-alpha |x|^2), for integrands outside the three standard kinds.
std::shared_ptr<const QuadratureGrid> make_custom_grid(const SpectralBasis& basis,
                                                       int order_per_axis,
                                                       double alpha);

}  // namespace hphi4
