#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hphi4/errors.hpp"
#include "hphi4/solver.hpp"

using namespace hphi4;

namespace {

// cheaper two-loop-integral settings, accurate to ~1e-8, plenty below the
// tolerances asserted here
const C2Quad kCheapQuad{24, 1e-6, 1, 1e-8};

std::vector<double> uniform_times(double dt, int steps) {
  std::vector<double> times(steps + 1);
  for (int i = 0; i <= steps; ++i) times[i] = i * dt;
  return times;
}

StochConvPath zero_noise(const BasisPtr& basis, int level, double dt, double horizon) {
  StochConvPath path;
  path.config = NoiseConfig{basis, level, 1, dt, horizon};
  path.replica = 0;
  path.path =
      zero_path(basis, uniform_times(dt, static_cast<int>(std::llround(horizon / dt))));
  return path;
}

// a counterterm table of zeros on the standard value grids, for runs with the
// noise and renormalization switched off
RenormTable zero_table(const BasisPtr& basis, int level,
                       const std::vector<double>& times) {
  RenormTable table;
  table.level = level;
  table.dimension = basis->dimension;
  table.times = times;
  const auto& pair = basis->grid(GridKind::Pair);
  const auto& cube = basis->grid(GridKind::Cube);
  table.points = pair.nodes;
  table.points.insert(table.points.end(), cube.nodes.begin(), cube.nodes.end());
  table.c1 = Eigen::MatrixXd::Zero(static_cast<int>(times.size()),
                                   static_cast<int>(table.points.size()));
  table.c2 = table.c1;
  table.combined = table.c1;
  return table;
}

// every driver path identically zero; the auxiliary system then collapses to
// the plain deterministic cubic dynamics
DriverSet zero_drivers(const BasisPtr& basis, int level, double dt, double horizon) {
  DriverSet z;
  z.level = level;
  z.psi = zero_noise(basis, level, dt, horizon);
  const auto& times = z.psi.path.times;
  for (FieldPath* p : {&z.wick2, &z.wick3, &z.big_psi, &z.i_wick2, &z.res_psi_big,
                       &z.res_w2_iw2, &z.res_w2_big, &z.anti_psi_big, &z.anti_w2_iw2,
                       &z.anti_w2_big})
    *p = zero_path(basis, times);
  return z;
}

Field mode_field(const BasisPtr& basis, int mode, double amp) {
  Field f = zero_field(basis);
  f.coeff[mode] = amp;
  return f;
}

// embedded Cash-Karp 4(5) pair with step control on the truncated system
// du/dt = -lambda u + proj(-u^3); the reference the exponential scheme is
// checked against
Eigen::VectorXd adaptive_reference(const BasisPtr& basis, const Eigen::VectorXd& u0,
                                   double horizon, double tol) {
  const auto& cube = basis->grid(GridKind::Cube);
  const Eigen::ArrayXd lam = basis->lambdas.array();
  const auto rhs = [&](const Eigen::VectorXd& u) {
    const Eigen::ArrayXd vals = (cube.phi * u).array();
    return ((-lam * u.array()).matrix() +
            forward_transform(basis, cube, (-vals.cube()).matrix()).coeff)
        .eval();
  };
  const double a2 = 1.0 / 5, a3 = 3.0 / 10, a4 = 3.0 / 5, a5 = 1.0, a6 = 7.0 / 8;
  const double b21 = 1.0 / 5;
  const double b31 = 3.0 / 40, b32 = 9.0 / 40;
  const double b41 = 3.0 / 10, b42 = -9.0 / 10, b43 = 6.0 / 5;
  const double b51 = -11.0 / 54, b52 = 5.0 / 2, b53 = -70.0 / 27, b54 = 35.0 / 27;
  const double b61 = 1631.0 / 55296, b62 = 175.0 / 512, b63 = 575.0 / 13824,
               b64 = 44275.0 / 110592, b65 = 253.0 / 4096;
  const double c1 = 37.0 / 378, c3 = 250.0 / 621, c4 = 125.0 / 594, c6 = 512.0 / 1771;
  const double d1 = 2825.0 / 27648, d3 = 18575.0 / 48384, d4 = 13525.0 / 55296,
               d5 = 277.0 / 14336, d6 = 1.0 / 4;
  (void)a2;
  (void)a3;
  (void)a4;
  (void)a5;
  (void)a6;

  Eigen::VectorXd u = u0;
  double t = 0.0, h = 1e-3;
  while (t < horizon) {
    h = std::min(h, horizon - t);
    const Eigen::VectorXd k1 = rhs(u);
    const Eigen::VectorXd k2 = rhs(u + h * b21 * k1);
    const Eigen::VectorXd k3 = rhs(u + h * (b31 * k1 + b32 * k2));
    const Eigen::VectorXd k4 = rhs(u + h * (b41 * k1 + b42 * k2 + b43 * k3));
    const Eigen::VectorXd k5 = rhs(u + h * (b51 * k1 + b52 * k2 + b53 * k3 + b54 * k4));
    const Eigen::VectorXd k6 =
        rhs(u + h * (b61 * k1 + b62 * k2 + b63 * k3 + b64 * k4 + b65 * k5));
    const Eigen::VectorXd u5 = u + h * (c1 * k1 + c3 * k3 + c4 * k4 + c6 * k6);
    const Eigen::VectorXd u4 =
        u + h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6);
    const double err = (u5 - u4).cwiseAbs().maxCoeff();
    if (err <= tol) {
      t += h;
      u = u5;
    }
    const double grow = err > 0.0 ? 0.9 * std::pow(tol / err, 0.2) : 5.0;
    h *= std::clamp(grow, 0.2, 5.0);
  }
  return u;
}

struct LiveBundle {
  BasisPtr basis;
  RenormTable table;
  DriverSet drivers;
  SolveConfig config;
};

// one shared stochastic setup: d=1, 16 modes, level 4, six steps of 0.05
const LiveBundle& live_bundle() {
  static const LiveBundle bundle = [] {
    LiveBundle lb;
    lb.basis = build_basis(1, 16);
    NoiseConfig ncfg{lb.basis, 4, 99, 0.05, 0.3};
    const StochConvPath psi = sample_stoch_conv(ncfg, 0);
    lb.table = driver_renorm_table(lb.basis, 4, psi.path.times, kCheapQuad);
    lb.drivers = build_driver_set(psi, lb.table);
    lb.config.x0 = mode_field(lb.basis, 0, 0.2);
    lb.config.level = 4;
    lb.config.dt = 0.05;
    lb.config.horizon = 0.3;
    return lb;
  }();
  return bundle;
}

double sup_path_diff(const FieldPath& a, const FieldPath& b) {
  double sup = 0.0;
  REQUIRE(a.coeff.size() == b.coeff.size());
  for (std::size_t m = 0; m < a.coeff.size(); ++m)
    sup = std::max(sup, (a.coeff[m] - b.coeff[m]).cwiseAbs().maxCoeff());
  return sup;
}

}  // namespace

TEST_CASE("direct euler matches an adaptive reference on the deterministic system") {
  auto basis = build_basis(1, 16);
  SolveConfig cfg;
  cfg.x0 = mode_field(basis, 0, 0.3);
  cfg.level = 4;
  cfg.dt = 1e-3;
  cfg.horizon = 0.5;
  const StochConvPath psi = zero_noise(basis, 4, cfg.dt, cfg.horizon);
  const RenormTable table = zero_table(basis, 4, psi.path.times);

  const SolutionBundle bundle = solve_direct(cfg, psi, table);
  CHECK(bundle.stop_reason == StopReason::Horizon);
  CHECK(bundle.steps_taken == 500);

  // reference integrator, cross-checked against itself at a tighter tolerance
  const Eigen::VectorXd ref = adaptive_reference(basis, cfg.x0.coeff, 0.5, 1e-10);
  const Eigen::VectorXd ref_tight = adaptive_reference(basis, cfg.x0.coeff, 0.5, 1e-12);
  CHECK((ref - ref_tight).cwiseAbs().maxCoeff() < 1e-9);

  const double err = (bundle.x.coeff.back() - ref).cwiseAbs().maxCoeff();
  CHECK(err < 1e-4);
  CHECK(err > 1e-9);  // exponential Euler is first order, not exact

  // cubic drift is dissipative: from large data the norm decreases at once
  SolveConfig big = cfg;
  big.x0 = mode_field(basis, 0, 5.0);
  big.dt = 1e-3;
  big.horizon = 0.1;
  const StochConvPath psi_b = zero_noise(basis, 4, big.dt, big.horizon);
  const SolutionBundle heavy = solve_direct(big, psi_b, zero_table(basis, 4, psi_b.path.times));
  CHECK(heavy.x.coeff[1].norm() < heavy.x.coeff[0].norm());
  CHECK(heavy.x.coeff.back().norm() < 0.6 * heavy.x.coeff[0].norm());

  // zero data with zero forcing stays zero
  SolveConfig nil = cfg;
  nil.x0 = zero_field(basis);
  const SolutionBundle rest = solve_direct(nil, psi, table);
  for (const auto& c : rest.x.coeff) CHECK(c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("direct scheme with no nonlinearity is the exact mode-wise ou relation") {
  auto basis = build_basis(1, 16);
  SolveConfig cfg;
  cfg.x0 = zero_field(basis);
  cfg.x0.coeff[0] = 0.7;
  cfg.x0.coeff[3] = -0.4;
  cfg.level = 4;
  cfg.dt = 0.05;
  cfg.horizon = 0.5;
  cfg.with_cubic = false;
  cfg.with_renorm = false;
  NoiseConfig ncfg{basis, 4, 77, cfg.dt, cfg.horizon};
  const StochConvPath psi = sample_stoch_conv(ncfg, 1);
  const RenormTable table = zero_table(basis, 4, psi.path.times);
  const SolutionBundle bundle = solve_direct(cfg, psi, table);

  // X_m - psi_m telescopes to the decayed initial data; recovering it from
  // the stored path costs one rounding of the noise addition per step
  const Eigen::ArrayXd decay = (-cfg.dt * basis->lambdas.array()).exp();
  Eigen::VectorXd free = cfg.x0.coeff;
  for (std::size_t m = 1; m < bundle.x.coeff.size(); ++m) {
    free = (decay * free.array()).matrix();
    CHECK((bundle.x.coeff[m] - psi.path.coeff[m] - free).cwiseAbs().maxCoeff() < 1e-15);
  }

  // and the run is bit-reproducible
  const SolutionBundle again = solve_direct(cfg, psi, table);
  CHECK(sup_path_diff(bundle.x, again.x) == 0.0);
}

TEST_CASE("auxiliary picard reproduces the direct deterministic dynamics") {
  auto basis = build_basis(1, 16);
  const double dt = 1e-3, horizon = 0.5;
  const DriverSet z = zero_drivers(basis, 4, dt, horizon);
  const RenormTable table = zero_table(basis, 4, z.psi.path.times);

  SolveConfig cfg;
  cfg.x0 = zero_field(basis);
  cfg.x0.coeff[0] = 0.8;
  cfg.x0.coeff[2] = 0.3;
  cfg.level = 4;
  cfg.dt = dt;
  cfg.horizon = horizon;

  const SolutionBundle bundle = solve_both(cfg, z, table);
  const ResidualReport report = reconstruct_and_compare(bundle);

  // with every driver zero both formulations march the same explicit
  // recursion, so the fixed point agrees with the direct path to the sweep
  // tolerance
  CHECK(report.max_residual < 1e-8);
  CHECK(report.t0_residual == 0.0);
  CHECK(bundle.young_gap == 0.0);
  CHECK(bundle.sweeps <= 12);
  CHECK(bundle.sweep_diffs.back() < cfg.picard_tol);
  for (std::size_t i = 1; i < bundle.sweep_diffs.size(); ++i)
    CHECK(bundle.sweep_diffs[i] < bundle.sweep_diffs[i - 1]);

  // the v equation sees no forcing, so v is exactly the decayed initial data
  const Eigen::ArrayXd decay = (-dt * basis->lambdas.array()).exp();
  Eigen::VectorXd sem = cfg.x0.coeff;
  for (std::size_t m = 1; m < bundle.v.coeff.size(); ++m) {
    sem = (decay * sem.array()).matrix();
    CHECK((bundle.v.coeff[m] - sem).cwiseAbs().maxCoeff() == 0.0);
  }

  // zero data on zero drivers stays identically zero and matches the direct
  // run started from zero
  SolveConfig nil = cfg;
  nil.x0 = zero_field(basis);
  const SolutionBundle rest = solve_both(nil, z, table);
  for (std::size_t m = 0; m < rest.x.coeff.size(); ++m) {
    CHECK(rest.x.coeff[m].cwiseAbs().maxCoeff() == 0.0);
    CHECK(rest.v.coeff[m].cwiseAbs().maxCoeff() == 0.0);
    CHECK(rest.w.coeff[m].cwiseAbs().maxCoeff() == 0.0);
    CHECK(rest.reconstructed.coeff[m].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("auxiliary picard contracts geometrically on live drivers") {
  const LiveBundle& lb = live_bundle();
  const SolutionBundle bundle = solve_both(lb.config, lb.drivers, lb.table);

  CHECK(bundle.sweeps <= 8);
  CHECK(bundle.sweep_diffs.back() < lb.config.picard_tol);
  REQUIRE(bundle.sweep_diffs.size() >= 4);
  for (int i = 0; i < 3; ++i)
    CHECK(bundle.sweep_diffs[i + 1] < 0.1 * bundle.sweep_diffs[i]);

  const ResidualReport report = reconstruct_and_compare(bundle);
  CHECK(report.t0_residual == 0.0);
  CHECK(report.max_residual > 1e-6);
  CHECK(report.max_residual < 2e-4);

  // the reconstruction is literally psi - big_psi + v + w
  for (std::size_t m = 0; m < bundle.reconstructed.coeff.size(); ++m) {
    const Eigen::VectorXd by_hand = lb.drivers.psi.path.coeff[m] -
                                    lb.drivers.big_psi.coeff[m] + bundle.v.coeff[m] +
                                    bundle.w.coeff[m];
    CHECK((bundle.reconstructed.coeff[m] - by_hand).cwiseAbs().maxCoeff() == 0.0);
  }

  // Young diagnostics: positive dyadic Cauchy increment, small against the
  // ordinary-quadrature cross-check at this step size
  CHECK(bundle.young_cauchy > 0.0);
  CHECK(bundle.young_cauchy < 1e-4);
  CHECK(bundle.young_gap > 0.0);
  CHECK(bundle.young_gap < 0.05);

  // residual norms ignore the absolute time labels
  SolutionBundle shifted = bundle;
  for (FieldPath* p : {&shifted.x, &shifted.v, &shifted.w, &shifted.reconstructed})
    for (double& t : p->times) t += 5.0;
  const ResidualReport relabeled = reconstruct_and_compare(shifted);
  REQUIRE(relabeled.residual_norms.size() == report.residual_norms.size());
  for (std::size_t i = 0; i < report.residual_norms.size(); ++i)
    CHECK(relabeled.residual_norms[i] == report.residual_norms[i]);

  // both solvers are bit-reproducible
  const SolutionBundle again = solve_both(lb.config, lb.drivers, lb.table);
  CHECK(sup_path_diff(bundle.x, again.x) == 0.0);
  CHECK(sup_path_diff(bundle.v, again.v) == 0.0);
  CHECK(sup_path_diff(bundle.w, again.w) == 0.0);

  // a bundle holding a single formulation cannot be reconciled
  const SolutionBundle direct_only = solve_direct(lb.config, lb.drivers.psi, lb.table);
  CHECK_THROWS_AS((void)reconstruct_and_compare(direct_only), UsageError);
  const SolutionBundle aux_only = solve_auxiliary(
      lb.config.x0, zero_field(lb.basis), lb.drivers, lb.config);
  CHECK_THROWS_AS((void)reconstruct_and_compare(aux_only), UsageError);
}

TEST_CASE("young integrals agree with ordinary quadrature on smooth drivers") {
  auto basis = build_basis(1, 12);
  Field x0 = mode_field(basis, 0, 0.2);

  const auto gap_at = [&](double dt) {
    NoiseConfig ncfg{basis, 3, 11, dt, 0.05};
    const StochConvPath psi = sample_stoch_conv(ncfg, 0);
    const RenormTable table = driver_renorm_table(basis, 3, psi.path.times, kCheapQuad);
    const DriverSet z = build_driver_set(psi, table);
    SolveConfig cfg;
    cfg.x0 = x0;
    cfg.level = 3;
    cfg.dt = dt;
    cfg.horizon = 0.05;
    const SolutionBundle bundle = solve_auxiliary(x0, zero_field(basis), z, cfg);
    return bundle.young_gap;
  };

  // at a fixed regularization level the drivers are smooth in time, so the
  // Young evaluation and the trapezoid mild quadrature converge to the same
  // integral as dt shrinks
  const double fine = gap_at(1e-3);
  const double coarse = gap_at(1e-2);
  CHECK(fine < 1e-3);
  CHECK(fine > 1e-8);
  CHECK(coarse < 2e-2);
  CHECK(fine < coarse);
}

TEST_CASE("non contracting sweeps raise a convergence error") {
  auto basis = build_basis(1, 16);
  const DriverSet z = zero_drivers(basis, 4, 0.05, 0.5);
  SolveConfig cfg;
  cfg.x0 = mode_field(basis, 0, 30.0);  // far outside the contraction regime
  cfg.level = 4;
  cfg.dt = 0.05;
  cfg.horizon = 0.5;
  CHECK_THROWS_WITH_AS(
      (void)solve_auxiliary(cfg.x0, zero_field(basis), z, cfg),
      doctest::Contains("grew three times"), NumericalError);
}

TEST_CASE("reconciliation residual decays at first order under dt halving") {
  auto basis = build_basis(1, 24);
  Field x0 = mode_field(basis, 0, 0.2);
  const ReconcileReport report =
      reconciliation_order_study(basis, 4, 2026, 0, x0, 0.05, 3, 0.2, kCheapQuad);

  REQUIRE(report.dts.size() == 3);
  CHECK(report.dts[0] == doctest::Approx(0.05));
  CHECK(report.dts[2] == doctest::Approx(0.0125));
  for (std::size_t i = 1; i < report.max_residuals.size(); ++i)
    CHECK(report.max_residuals[i] < report.max_residuals[i - 1]);
  CHECK(report.order > 0.8);
  CHECK(report.order < 1.2);
}

TEST_CASE("time zero residual equals the initial data mismatch exactly") {
  auto basis = build_basis(1, 16);
  const double dt = 0.05, horizon = 0.2;
  const DriverSet z = zero_drivers(basis, 4, dt, horizon);
  const RenormTable table = zero_table(basis, 4, z.psi.path.times);

  SolveConfig cfg;
  cfg.x0 = mode_field(basis, 0, 0.5);
  cfg.level = 4;
  cfg.dt = dt;
  cfg.horizon = horizon;
  const SolutionBundle direct = solve_direct(cfg, z.psi, table);

  // auxiliary run started from mismatched data
  const Field v0 = mode_field(basis, 0, 0.3);
  SolveConfig acfg = cfg;
  acfg.x0 = v0;
  const SolutionBundle aux = solve_auxiliary(v0, zero_field(basis), z, acfg);

  SolutionBundle both;
  both.eps_exponent = cfg.eps_exponent;
  both.x = direct.x;
  both.v = aux.v;
  both.w = aux.w;
  both.reconstructed.basis = basis;
  both.reconstructed.times = aux.v.times;
  for (std::size_t m = 0; m < aux.v.coeff.size(); ++m)
    both.reconstructed.coeff.push_back(z.psi.path.coeff[m] - z.big_psi.coeff[m] +
                                       aux.v.coeff[m] + aux.w.coeff[m]);

  const ResidualReport report = reconstruct_and_compare(both);
  const NormSpec spec =
      norm_spec(*basis, -0.5 - both.eps_exponent, kInfExponent, kInfExponent);
  const double expected =
      besov_norm(Field{basis, both.reconstructed.coeff[0] - both.x.coeff[0]}, spec);
  CHECK(report.t0_residual == expected);
  // the mismatch is (0.3 - 0.5) phi_0, so the norm scales the single-mode norm
  const double unit = besov_norm(mode_field(basis, 0, 1.0), spec);
  CHECK(report.t0_residual == doctest::Approx(0.2 * unit).epsilon(1e-12));
}

TEST_CASE("solution study gains half a derivative over the rough component") {
  auto basis = build_basis(1, 12);
  const SolveStudyReport report = solution_convergence_study(
      basis, {3, 5, 7}, 515, 6, zero_field(basis), 0.05, 0.3, kCheapQuad);

  REQUIRE(report.median_diffs.size() == 2);
  CHECK(report.monotone);
  CHECK(report.median_diffs[0] > 0.10);
  CHECK(report.median_diffs[0] < 0.20);
  CHECK(report.median_diffs[1] > 0.035);
  CHECK(report.median_diffs[1] < 0.09);

  // the remainder X - psi + big_psi holds at +1/2 while the solution itself
  // grows there with the level
  REQUIRE(report.remainder_half.size() == 3);
  for (double r : report.remainder_half) CHECK(r < 0.01);
  CHECK(report.raw_half.back() > 1.5 * report.raw_half.front());
  for (double r : report.raw_minus_half) {
    CHECK(r > 0.2);
    CHECK(r < 0.7);
  }

  // identical levels on common streams differ by exactly zero
  const SolveStudyReport same = solution_convergence_study(
      basis, {4, 4}, 515, 2, zero_field(basis), 0.05, 0.2, kCheapQuad);
  REQUIRE(same.median_diffs.size() == 1);
  CHECK(same.median_diffs[0] == 0.0);
}

TEST_CASE("blowup monitor flags the first passage of the sup proxy") {
  auto basis = build_basis(1, 16);

  // closed-form surrogate x(t) = x0 / sqrt(1 - 2 x0^2 t), carried on the
  // lowest mode; the proxy crosses a threshold thr where
  //   t* = (1 - (phi_max / thr)^2) / 2   for x0 = 1
  FieldPath path;
  path.basis = basis;
  const double dt = 1e-3;
  for (int m = 0; m * dt < 0.49; ++m) {
    const double t = m * dt;
    path.times.push_back(t);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(16);
    c[0] = 1.0 / std::sqrt(1.0 - 2.0 * t);
    path.coeff.push_back(c);
  }
  const double phi_max = basis->grid(GridKind::Cube).phi.col(0).cwiseAbs().maxCoeff();
  const double threshold = 5.0;
  const double t_star = (1.0 - std::pow(phi_max / threshold, 2)) / 2.0;

  const BlowupDecision decision = blowup_monitor(path, threshold);
  CHECK(decision.triggered);
  CHECK(decision.t_max >= t_star);
  CHECK(decision.t_max <= t_star + dt);
  CHECK(decision.step == static_cast<int>(std::ceil(t_star / dt)));

  // an infinite threshold never stops
  const BlowupDecision never = blowup_monitor(path, kInfExponent);
  CHECK_FALSE(never.triggered);
  CHECK(never.step == -1);
  CHECK(never.t_max == path.times.back());
  CHECK(never.peak_proxy > threshold);

  // the dissipative dynamics from large data never reach ten times the
  // initial proxy
  SolveConfig cfg;
  cfg.x0 = mode_field(basis, 0, 5.0);
  cfg.level = 4;
  cfg.dt = 1e-3;
  cfg.horizon = 0.1;
  const StochConvPath psi = zero_noise(basis, 4, cfg.dt, cfg.horizon);
  const RenormTable table = zero_table(basis, 4, psi.path.times);
  cfg.blowup_threshold = 10.0 * 5.0 * phi_max;
  const SolutionBundle calm = solve_direct(cfg, psi, table);
  CHECK(calm.stop_reason == StopReason::Horizon);
  CHECK(calm.steps_taken == 100);

  // an in-run stop truncates the path at the step the monitor flags
  const LiveBundle& lb = live_bundle();
  const SolutionBundle full = solve_direct(lb.config, lb.drivers.psi, lb.table);
  const double peak = blowup_monitor(full.x, kInfExponent).peak_proxy;
  const double partial = 0.6 * peak;
  const BlowupDecision flagged = blowup_monitor(full.x, partial);
  REQUIRE(flagged.triggered);
  SolveConfig stopped_cfg = lb.config;
  stopped_cfg.blowup_threshold = partial;
  const SolutionBundle stopped = solve_direct(stopped_cfg, lb.drivers.psi, lb.table);
  CHECK(stopped.stop_reason == StopReason::Blowup);
  CHECK(stopped.steps_taken == flagged.step);
  CHECK(stopped.t_stop == flagged.t_max);
  CHECK(static_cast<int>(stopped.x.coeff.size()) == flagged.step + 1);
}

TEST_CASE("solver guards reject malformed configurations") {
  auto basis = build_basis(1, 12);
  const double dt = 0.05, horizon = 0.2;
  const DriverSet z = zero_drivers(basis, 3, dt, horizon);
  const RenormTable table = zero_table(basis, 3, z.psi.path.times);

  SolveConfig good;
  good.x0 = mode_field(basis, 0, 0.1);
  good.level = 3;
  good.dt = dt;
  good.horizon = horizon;

  SolveConfig bad = good;
  bad.dt = 0.0;
  CHECK_THROWS_AS((void)solve_direct(bad, z.psi, table), UsageError);
  bad = good;
  bad.horizon = -1.0;
  CHECK_THROWS_AS((void)solve_direct(bad, z.psi, table), UsageError);
  bad = good;
  bad.picard_iters = 0;
  CHECK_THROWS_AS((void)solve_auxiliary(good.x0, zero_field(basis), z, bad), UsageError);
  bad = good;
  bad.n_young = 0;
  CHECK_THROWS_AS((void)solve_auxiliary(good.x0, zero_field(basis), z, bad), UsageError);
  bad = good;
  bad.x0 = Field{};
  CHECK_THROWS_AS((void)solve_direct(bad, z.psi, table), UsageError);

  // grid mismatches
  bad = good;
  bad.dt = 0.025;
  CHECK_THROWS_AS((void)solve_direct(bad, z.psi, table), UsageError);
  bad = good;
  bad.horizon = 0.4;
  CHECK_THROWS_AS((void)solve_direct(bad, z.psi, table), UsageError);

  // level and table mismatches
  bad = good;
  bad.level = 4;
  CHECK_THROWS_AS((void)solve_direct(bad, z.psi, table), UsageError);
  CHECK_THROWS_AS((void)solve_auxiliary(good.x0, zero_field(basis), z, bad), UsageError);
  RenormTable wrong = zero_table(basis, 4, z.psi.path.times);
  CHECK_THROWS_AS((void)solve_direct(good, z.psi, wrong), UsageError);
  RenormTable short_times = zero_table(basis, 3, uniform_times(dt, 2));
  CHECK_THROWS_AS((void)solve_direct(good, z.psi, short_times), UsageError);

  // basis mismatches
  auto other = build_basis(1, 8);
  SolveConfig foreign = good;
  foreign.x0 = mode_field(other, 0, 0.1);
  CHECK_THROWS_AS((void)solve_direct(foreign, z.psi, table), UsageError);
  CHECK_THROWS_AS((void)solve_auxiliary(foreign.x0, zero_field(other), z, foreign),
                  UsageError);

  // study guards
  CHECK_THROWS_AS((void)reconciliation_order_study(nullptr, 3, 1, 0, good.x0, 0.05, 3,
                                                   0.2, kCheapQuad),
                  UsageError);
  CHECK_THROWS_AS((void)reconciliation_order_study(basis, 3, 1, 0, good.x0, 0.05, 1,
                                                   0.2, kCheapQuad),
                  UsageError);
  CHECK_THROWS_AS((void)reconciliation_order_study(basis, 3, 1, 0, good.x0, 0.03, 2,
                                                   0.2, kCheapQuad),
                  UsageError);
  CHECK_THROWS_AS(
      (void)solution_convergence_study(basis, {}, 1, 4, good.x0, 0.05, 0.2, kCheapQuad),
      UsageError);
  CHECK_THROWS_AS((void)solution_convergence_study(basis, {3, 4}, 1, 0, good.x0, 0.05,
                                                   0.2, kCheapQuad),
                  UsageError);

  // monitor guards
  CHECK_THROWS_AS((void)blowup_monitor(FieldPath{}, 1.0), UsageError);
}
