#pragma once

#include <cstdint>
#include <vector>

#include "hphi4/diagrams.hpp"

namespace hphi4 {

enum class SolveMode { Direct = 0, Auxiliary = 1, Both = 2 };
enum class StopReason { Horizon = 0, Blowup = 1 };

// One time-stepped run of the renormalized cubic dynamics. The time grid is
// taken from the supplied noise path / driver set; dt and horizon here must
// agree with it.
struct SolveConfig {
  Field x0;                     // initial state, also the v-equation's v0
  int level = 4;                // regularization level of the run
  double dt = 1e-2;
  double horizon = 1.0;
  int picard_iters = 24;        // sweep cap for the auxiliary fixed point
  double picard_tol = 1e-10;    // sweep-difference stop in the C_t block norms
  double blowup_threshold = kInfExponent;
  SolveMode mode = SolveMode::Both;
  bool with_cubic = true;       // direct scheme: include the -X^3 term
  bool with_renorm = true;      // direct scheme: include the (3c1 - 9c2) X term
  double eps_exponent = 0.05;   // shift for the convergence-norm exponents
  int n_young = 6;              // dyadic refinements per step in the Young terms
  ParaConfig para;
};

// Output of a run. x is filled by the direct scheme, (v, w) by the auxiliary
// one; reconstructed = psi - big_psi + v + w and the per-step residual norms
// against x are filled only when both formulations ran on shared streams.
struct SolutionBundle {
  FieldPath x;
  FieldPath v;
  FieldPath w;
  FieldPath reconstructed;
  std::vector<double> residual_norms;
  StopReason stop_reason = StopReason::Horizon;
  double t_stop = 0.0;
  int steps_taken = 0;
  double eps_exponent = 0.05;  // echoed from the config, fixes the residual norm

  // auxiliary-run diagnostics
  int sweeps = 0;
  std::vector<double> sweep_diffs;   // successive (v, w) differences per sweep
  double young_gap = 0.0;            // Young vs ordinary quadrature on the
                                     // (v + w - big_psi) d(psi o big_psi) term
  double young_cauchy = 0.0;         // largest dyadic Cauchy increment seen
};

// Exponential Euler for (d/dt + H) X = -X^3 + (3c1 - 9c2) X + noise:
//   X_{m+1} = e^{-dt H} X_m + dt phi1(dt H) P(-X_m^3 + c X_m) + eta_m
// with P the grid projection (cube grid, dealiased for the cube) and eta_m
// the exact per-mode OU increment of the supplied path. Stops early when the
// node-max of |X| (a sup lower bound) exceeds config.blowup_threshold.
SolutionBundle solve_direct(const SolveConfig& config, const StochConvPath& psi,
                            const RenormTable& table);

// Picard iteration of the mild (v, w) system driven by the set Z:
//   v_t = e^{-tH} v0 - 3 int_0^t e^{-(t-s)H} ((v+w-big_psi) lo wick2)_s ds
//   w_t = e^{-tH} w0 + int_0^t e^{-(t-s)H} G_s ds
// where G collects the cube of u = v + w, the resonant and high paraproduct
// terms, the commutator corrections, the renormalized polynomial tau0 + tau1 u
// + tau2 u^2, and the three Young-interpreted driver integrals taken against
// the stored antiderivatives. Sweeps stop when the combined block-norm
// difference drops below picard_tol; three consecutive growing differences
// raise NumericalError.
SolutionBundle solve_auxiliary(const Field& v0, const Field& w0, const DriverSet& z,
                               const SolveConfig& config);

// Runs both formulations on the shared streams of z (the direct scheme uses
// z.psi and the matching counterterm table) and fills the reconstruction
// x_hat = psi - big_psi + v + w together with the per-step residual norms
// |x_hat - x| in the weighted-coefficient norm at exponent -1/2 - eps.
SolutionBundle solve_both(const SolveConfig& config, const DriverSet& z,
                          const RenormTable& table);

// Residual summary of a bundle holding both formulations.
struct ResidualReport {
  std::vector<double> residual_norms;  // per step, weighted-coefficient norm
  double max_residual = 0.0;
  double t0_residual = 0.0;            // equals |x0 - (v0 + w0)| exactly
};

ResidualReport reconstruct_and_compare(const SolutionBundle& bundle);

// Cross-validation order: rerun solve_both at dt, dt/2, ..., dt/2^(halvings-1)
// (fresh drivers per grid, same seed and replica) and fit the slope of
// log2(max residual) against the halving index.
struct ReconcileReport {
  std::vector<double> dts;
  std::vector<double> max_residuals;
  double order = 0.0;  // least-squares slope, residual ~ dt^order
};

ReconcileReport reconciliation_order_study(const BasisPtr& basis, int level,
                                           std::uint64_t seed, std::uint32_t replica,
                                           const Field& x0, double dt, int halvings,
                                           double horizon, const C2Quad& quad = {},
                                           const DriverOptions& opts = {});

// Direct runs across regularization levels on common streams. For consecutive
// levels reports the median over replicas of sup_t |X^(n) - X^(n+1)| at
// exponent -1/2 - eta, plus the regularity-gain diagnostic: the remainder
// X - psi + big_psi measured at +1/2 stays bounded while X itself at +1/2
// grows with the level.
struct SolveStudyReport {
  std::vector<int> levels;
  int replicas = 0;
  double eta = 0.0;
  std::vector<double> median_diffs;      // one per consecutive level pair
  bool monotone = false;
  std::vector<double> remainder_half;    // median |X - psi + big_psi| at +1/2
  std::vector<double> raw_half;          // median |X| at +1/2
  std::vector<double> raw_minus_half;    // median |X| at -1/2 - eta
};

SolveStudyReport solution_convergence_study(const BasisPtr& basis,
                                            const std::vector<int>& levels,
                                            std::uint64_t seed, int replicas,
                                            const Field& x0, double dt, double horizon,
                                            const C2Quad& quad = {}, double eta = 0.05);

// First passage of the node-max proxy above the threshold.
struct BlowupDecision {
  bool triggered = false;
  int step = -1;          // first offending step, -1 when never triggered
  double t_max = 0.0;     // time of that step, horizon end otherwise
  double peak_proxy = 0.0;
};

BlowupDecision blowup_monitor(const FieldPath& path, double threshold);

}  // namespace hphi4
