#pragma once

#include <vector>

#include "hphi4/basis.hpp"
#include "hphi4/besov.hpp"

namespace hphi4 {

// Frequency conventions of the product decomposition: the low-high part
// couples blocks with j <= k - separation, the resonant part couples
// |k - j| <= resonance_width.
struct ParaConfig {
  int separation = 4;
  int resonance_width = 3;
};

// delta_j u for j = -1 .. blocks_needed(basis), in that order.
std::vector<Field> block_decomposition(const Field& u, const DyadicCutoff& cutoff);

// Low-high part sum_k (S_{k-3} f)(delta_k g) with S_m = sum_{j <= m-1} delta_j,
// products formed pointwise on the dealiasing pair grid and projected once.
Field para_lo(const Field& f, const Field& g, const ParaConfig& cfg = {});
// Resonant part sum over |k-j| <= resonance_width of (delta_j f)(delta_k g).
Field para_res(const Field& f, const Field& g, const ParaConfig& cfg = {});
// High-low part, g's low frequencies against f's high ones.
Field para_hi(const Field& f, const Field& g, const ParaConfig& cfg = {});

// [delta_k, f](g) = delta_k(fg) - f delta_k(g). The second form takes f by its
// node values on the supplied grid, for multipliers outside the basis span.
Field commutator_block(int k, const Field& f, const Field& g);
Field commutator_block(int k, const Eigen::VectorXd& f_values, const Field& g,
                       const QuadratureGrid& grid);

// (f lo g) res h - f (g res h)
Field commutator_para_res(const Field& f, const Field& g, const Field& h,
                          const ParaConfig& cfg = {});

// e^{-tH}(f lo g) - f lo (e^{-tH} g)
Field heat_commutator(double t, const Field& f, const Field& g,
                      const ParaConfig& cfg = {});

// Four-variable function in separable form: sum over terms r of
// y1[r](y_1) y2[r](y_2) z1[r](z_1) z2[r](z_2), all on one basis.
struct FourVarFunction {
  BasisPtr basis;
  std::vector<Field> y1, y2, z1, z2;
};

// Resonant diagonal contraction: block-filter the y1/z1 axes over pairs
// i ~ i', the y2/z2 axes over j ~ j', multiply all four pointwise at the
// diagonal, and project the result back onto the basis.
Field resonance_operator(const FourVarFunction& F, const ParaConfig& cfg = {});

// Linear interpolation of stored coefficients at time t.
Eigen::VectorXd path_value(const FieldPath& path, double t);

struct YoungResult {
  Field value;
  double cauchy_increment;  // coefficient l2 gap between levels n and n-1
};

// Dyadic Riemann sum sum_i e^{-(t-t_i)H}(u_{t_i} (f_{t_{i+1}} - f_{t_i}))
// over 2^levels subintervals of [s, t].
YoungResult young_mild_integral(const FieldPath& u, const FieldPath& f, double s,
                                double t, int levels);

}  // namespace hphi4
