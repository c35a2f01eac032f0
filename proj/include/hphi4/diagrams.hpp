#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hphi4/basis.hpp"
#include "hphi4/besov.hpp"
#include "hphi4/noise.hpp"
#include "hphi4/paracalc.hpp"

namespace hphi4 {

// Counterterm table on the value grids the diagram constructions read from:
// points are the pair-grid nodes followed by the cube-grid nodes (flattened
// to Points), times are the intended path times. Both counterterms are
// radial, so values are computed once per distinct node radius and fanned
// out; c1 is accumulated incrementally across the sorted times.
RenormTable driver_renorm_table(const BasisPtr& basis, int level,
                                const std::vector<double>& times,
                                const C2Quad& quad = {});

// Renormalized powers, formed pointwise in value space and projected back:
// psi^2 - c1 on the pair grid, psi^3 - 3 c1 psi on the cube grid. The table
// must come from driver_renorm_table on the same basis, level, and times.
FieldPath wick_square(const StochConvPath& psi, const RenormTable& table);
FieldPath wick_cube(const StochConvPath& psi, const RenormTable& table);

// I f_t = int_0^t e^{-(t-s)H} f_s ds by one exponential-Euler pass:
// I_{m+1} = e^{-dt H} I_m + dt phi1(dt H) f_m with phi1(z) = (1 - e^{-z})/z.
// Exact whenever f is constant in time; first order otherwise.
FieldPath mild_convolve(const FieldPath& f);

struct DriverOptions {
  bool zero_cube = false;      // replace the cubic power by zero downstream
  double eps_exponent = 0.05;  // exponent shift used in the norm summary
  ParaConfig para;             // resonant-product convention

  // The Holder summaries scan every time pair, which dominates the build on
  // long grids; callers that only feed a solver can skip the norm map.
  bool with_norms = true;
};

// The driver tuple: the linear path, its renormalized square, the two mild
// convolutions, and the three resonant combinations, each centered by the
// matching counterterm column. Antiderivatives of the resonant paths are
// kept for integrals evaluated in the Young sense.
struct DriverSet {
  int level = 0;
  double eps_exponent = 0.05;
  StochConvPath psi;
  FieldPath wick2;        // psi^2 - c1, projected
  FieldPath wick3;        // psi^3 - 3 c1 psi, projected
  FieldPath big_psi;      // I wick3
  FieldPath i_wick2;      // I wick2
  FieldPath res_psi_big;  // psi o big_psi
  FieldPath res_w2_iw2;   // wick2 o i_wick2 - c2
  FieldPath res_w2_big;   // wick2 o big_psi - 3 c2 psi
  FieldPath anti_psi_big, anti_w2_iw2, anti_w2_big;  // trapezoid antiderivatives

  // sup-in-time block norms at the regularity each component is expected to
  // carry (exponent shifted by eps_exponent), plus Holder summaries of the
  // antiderivative paths
  std::map<std::string, double> norms;
};

DriverSet build_driver_set(const StochConvPath& psi, const RenormTable& table,
                           const DriverOptions& opts = {});

// Norm of a driver-space difference: max over the seven component paths of
// the sup-in-time block norm at that component's exponent.
double driver_distance(const DriverSet& a, const DriverSet& b);

struct DriverStudyReport {
  std::vector<int> levels;
  int replicas = 0;
  double eps_exponent = 0.05;
  std::vector<std::map<std::string, double>> median_norms;  // per level
  std::vector<double> median_diffs;  // consecutive levels, common streams
  bool monotone = false;             // median_diffs strictly decreasing
  double rate = 0.0;                 // kappa fitted from diffs ~ 2^{-kappa n / 2}

  // centering diagnostics at (horizon, probe): ensemble mean of the centered
  // resonant square pairing and of the full-minus-resonant product gap
  Point probe{0.4, 0.0, 0.0};
  double centered_mean = 0.0, centered_se = 0.0;
  double gap_mean = 0.0, gap_se = 0.0;
  double wick2_z = 0.0;  // ensemble-mean z of wick2 at the probe cell
};

// Builds driver sets over a level list on common streams (one seed, replica
// indexed) and reports component norms, consecutive differences, and the
// centering diagnostics. The renorm tables are built once per level.
DriverStudyReport driver_convergence_study(const BasisPtr& basis,
                                           const std::vector<int>& levels,
                                           std::uint64_t seed, int replicas, double dt,
                                           double horizon, const C2Quad& quad = {},
                                           const DriverOptions& opts = {});

}  // namespace hphi4
