#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "hphi4/basis.hpp"
#include "hphi4/besov.hpp"

namespace hphi4 {

// Driving noise configuration: mode k is damped by e^{-eps lambda_k} with
// eps = 2^{-level}, so growing the level sharpens the noise toward white.
struct NoiseConfig {
  BasisPtr basis;
  int level = 4;
  std::uint64_t seed = 1;
  double dt = 1e-2;
  double horizon = 1.0;
};

double regularization_scale(int level);  // 2^{-level}

// Exact noise increment over step m: per mode e^{-eps lambda} zeta with
// zeta ~ N(0, (1 - e^{-2 lambda dt}) / (2 lambda)). Draws are addressed by
// (seed, replica, mode, step), so different levels, mode counts, and horizons
// built from one seed share the underlying randomness.
Eigen::VectorXd noise_increment(const NoiseConfig& config, std::uint32_t replica,
                                std::int64_t step);

struct StochConvPath {
  NoiseConfig config;
  std::uint32_t replica = 0;
  FieldPath path;  // samples at times m dt, zero at t = 0
};

// Stochastic convolution by the exact-in-law Ornstein-Uhlenbeck recursion
// Psi_k(t + dt) = e^{-lambda_k dt} Psi_k(t) + increment_k.
StochConvPath sample_stoch_conv(const NoiseConfig& config, std::uint32_t replica = 0);

// Covariance of the damped stochastic convolution between space-time points:
// (1/2) int_{|t2-t1| + 2 eps}^{t1 + t2 + 2 eps} K_sigma(y1, y2) dsigma with
// the closed-form kernel of e^{-sigma H}.
double covariance_exact(int dimension, int level, double t1, double t2, const Point& y1,
                        const Point& y2, double abs_tol = 1e-10);

// Same covariance on a truncated basis, through per-mode cross-covariances
// e^{-2 eps lambda} (e^{-lambda |t2-t1|} - e^{-lambda (t1+t2)}) / (2 lambda).
double covariance_modesum(const SpectralBasis& basis, int level, double t1, double t2,
                          const Point& y1, const Point& y2);

// First counterterm: int_{eps}^{t+eps} K_{2 sigma}(x, x) dsigma, integrating
// the exact diagonal kernel (no small-sigma asymptotic substitution).
double compute_c1(int dimension, int level, double t, const Point& x,
                  double abs_tol = 1e-10);

// Quadrature controls for the second counterterm.
struct C2Quad {
  int w_order = 48;       // Gauss-Hermite order along the axis through x
  double s_tol = 1e-7;    // absolute tolerance of the outer time integral
  int sigma_panels = 1;   // panels per geometric interval of the sigma rules
  double rho_tol = 1e-9;  // tolerance of the transverse radial integrals (d = 3)
};

// Second counterterm: 2 int_0^t ds int dw K_{t-s}(x, w) C(t, s, x, w)^2.
// The w integral runs in a frame aligned with x: a scaled Gauss-Hermite rule
// along the axis (square completed against K_{t-s}) tensor the transverse
// directions; the inner sigma rule is fixed per s and shared across w nodes.
double compute_c2(int dimension, int level, double t, const Point& x,
                  const C2Quad& quad = {});

struct RenormTable {
  int level = 0;
  int dimension = 1;
  std::vector<double> times;
  std::vector<Point> points;
  Eigen::MatrixXd c1;        // (time, point)
  Eigen::MatrixXd c2;
  Eigen::MatrixXd combined;  // 3 c1 - 9 c2
};

RenormTable build_renorm_table(int dimension, int level, const std::vector<double>& times,
                               const std::vector<Point>& points, const C2Quad& quad = {});

}  // namespace hphi4
