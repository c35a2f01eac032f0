#include "hphi4/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "hphi4/errors.hpp"
#include "hphi4/paracalc.hpp"
#include "hphi4/quadrature.hpp"

namespace hphi4 {

namespace {

void check_config(const SolveConfig& config) {
  if (!config.x0.basis) throw UsageError("solve: config.x0 carries no basis");
  if (!(config.dt > 0.0)) throw UsageError("solve: dt must be positive");
  if (!(config.horizon > 0.0)) throw UsageError("solve: horizon must be positive");
  if (config.picard_iters < 1) throw UsageError("solve: picard_iters must be at least 1");
  if (config.n_young < 1) throw UsageError("solve: n_young must be at least 1");
}

// The run's grid comes from the supplied path; dt and horizon in the config
// describe it and must agree.
void check_grid(const std::vector<double>& times, const SolveConfig& config) {
  if (times.size() < 2) throw UsageError("solve: time grid needs at least two samples");
  for (std::size_t i = 0; i + 1 < times.size(); ++i)
    if (std::abs(times[i + 1] - times[i] - config.dt) > 1e-9 * std::max(1.0, config.dt))
      throw UsageError("solve: config.dt does not match the path's time grid");
  if (std::abs(times.back() - config.horizon) > 1e-9 * std::max(1.0, config.horizon))
    throw UsageError("solve: config.horizon does not match the path's final time");
}

void check_table(const RenormTable& table, const std::vector<double>& times,
                 const SolveConfig& config, const SpectralBasis& basis) {
  if (table.level != config.level)
    throw UsageError("solve: renorm table level differs from config.level");
  if (table.dimension != basis.dimension)
    throw UsageError("solve: renorm table dimension differs from the basis");
  if (table.times.size() != times.size())
    throw UsageError("solve: renorm table times differ from the path grid");
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::abs(table.times[i] - times[i]) > 1e-12 * std::max(1.0, std::abs(times[i])))
      throw UsageError("solve: renorm table times differ from the path grid");
  const auto& pair = basis.grid(GridKind::Pair);
  const auto& cube = basis.grid(GridKind::Cube);
  if (table.points.size() != pair.nodes.size() + cube.nodes.size())
    throw UsageError("solve: renorm table points do not cover the value grids");
}

// dt * phi1(dt lambda) = (1 - e^{-dt lambda}) / lambda, and the step decay.
struct EtdWeights {
  Eigen::ArrayXd decay;
  Eigen::ArrayXd phi1dt;
};

EtdWeights etd_weights(const Eigen::ArrayXd& lambdas, double dt) {
  EtdWeights w;
  const Eigen::ArrayXd z = dt * lambdas;
  w.decay = (-z).exp();
  w.phi1dt = -z.unaryExpr([](double v) { return std::expm1(-v); }) / lambdas;
  return w;
}

double node_max(const QuadratureGrid& grid, const Eigen::VectorXd& coeff) {
  return (grid.phi * coeff).cwiseAbs().maxCoeff();
}

bool path_active(const FieldPath& path) {
  for (const auto& c : path.coeff)
    if (c.cwiseAbs().maxCoeff() > 0.0) return true;
  return false;
}

// e^{-tH} v0 sampled on the uniform grid by repeated one-step decay, matching
// how the marching schemes accumulate the semigroup.
std::vector<Eigen::VectorXd> semigroup_path(const Eigen::VectorXd& v0,
                                            const Eigen::ArrayXd& decay, int nt) {
  std::vector<Eigen::VectorXd> out(nt + 1);
  out[0] = v0;
  for (int m = 0; m < nt; ++m) out[m + 1] = (decay * out[m].array()).matrix();
  return out;
}

// Mild convolution with the integrand taken linear on each step,
//   I_{m+1} = e^{-dt H} I_m + w1 f_m + w2 (f_{m+1} - f_m),
// w1 = (1 - e^{-dt lam}) / lam and w2 = (dt - w1) / (dt lam). Second order in
// dt; serves as the ordinary-quadrature reference for the Young integrals.
std::vector<Eigen::VectorXd> mild_trapezoid(const std::vector<Eigen::VectorXd>& f,
                                            const Eigen::ArrayXd& lambdas, double dt) {
  const Eigen::ArrayXd z = dt * lambdas;
  const Eigen::ArrayXd decay = (-z).exp();
  const Eigen::ArrayXd w1 = -z.unaryExpr([](double v) { return std::expm1(-v); }) / lambdas;
  const Eigen::ArrayXd w2 = (dt - w1) / (dt * lambdas);
  std::vector<Eigen::VectorXd> out(f.size());
  out[0] = Eigen::VectorXd::Zero(f[0].size());
  for (std::size_t m = 0; m + 1 < f.size(); ++m)
    out[m + 1] = (decay * out[m].array() + w1 * f[m].array() +
                  w2 * (f[m + 1] - f[m]).array())
                     .matrix();
  return out;
}

// int_{t_m}^{t_{m+1}} e^{-(t_{m+1}-r)H} dF_r for a mode-wise antiderivative
// path F, by the same left-endpoint dyadic sum young_mild_integral uses. The
// coefficient here is the constant one, which has no representation in the
// basis, so the sum is taken directly on the increments of F.
Eigen::VectorXd young_const_step(const FieldPath& f, int m, int levels,
                                 const Eigen::ArrayXd& lambdas, double* cauchy) {
  const double s = f.times[m];
  const double t = f.times[m + 1];
  const auto sum_at = [&](int lev) {
    const int n = 1 << lev;
    const double delta = (t - s) / n;
    // F is piecewise linear between grid samples, so each dyadic increment is
    // the same fraction of the step increment.
    const Eigen::VectorXd df = (f.coeff[m + 1] - f.coeff[m]) / n;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(df.size());
    for (int i = 0; i < n; ++i) {
      const double gap = t - (s + i * delta);
      acc += ((-gap * lambdas).exp() * df.array()).matrix();
    }
    return acc;
  };
  const Eigen::VectorXd fine = sum_at(levels);
  if (cauchy != nullptr) *cauchy = (fine - sum_at(levels - 1)).norm();
  return fine;
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
    return 0.5 * (hi + v[n / 2 - 1]);
  }
  return hi;
}

}  // namespace

SolutionBundle solve_direct(const SolveConfig& config, const StochConvPath& psi,
                            const RenormTable& table) {
  check_config(config);
  const BasisPtr& basis = config.x0.basis;
  if (!psi.path.basis || psi.path.basis.get() != basis.get())
    throw UsageError("solve_direct: path basis differs from the x0 basis");
  if (psi.config.level != config.level)
    throw UsageError("solve_direct: path level differs from config.level");
  check_grid(psi.path.times, config);
  check_table(table, psi.path.times, config, *basis);

  const std::vector<double>& times = psi.path.times;
  const int nt = static_cast<int>(times.size()) - 1;
  const auto& pair = basis->grid(GridKind::Pair);
  const auto& cube = basis->grid(GridKind::Cube);
  const int n_pair = static_cast<int>(pair.nodes.size());
  const int n_cube = static_cast<int>(cube.nodes.size());
  const EtdWeights w = etd_weights(basis->lambdas.array(), config.dt);

  SolutionBundle out;
  out.eps_exponent = config.eps_exponent;
  out.x.basis = basis;
  out.x.times = {times[0]};
  out.x.coeff = {config.x0.coeff};
  out.stop_reason = StopReason::Horizon;
  out.t_stop = times[0];

  Eigen::VectorXd cur = config.x0.coeff;
  if (node_max(cube, cur) > config.blowup_threshold) {
    out.stop_reason = StopReason::Blowup;
    out.steps_taken = 0;
    return out;
  }
  const bool forced = config.with_cubic || config.with_renorm;
  for (int m = 0; m < nt; ++m) {
    // decay (X_m - psi_m) + psi_{m+1} adds the exact OU increment of the path
    // over the step and keeps the noise-free part telescoped per mode
    Eigen::VectorXd next =
        (w.decay * (cur - psi.path.coeff[m]).array()).matrix() + psi.path.coeff[m + 1];
    if (forced) {
      const Eigen::ArrayXd vals = (cube.phi * cur).array();
      Eigen::ArrayXd f_vals = Eigen::ArrayXd::Zero(n_cube);
      if (config.with_cubic) f_vals -= vals.cube();
      if (config.with_renorm)
        f_vals += table.combined.row(m).segment(n_pair, n_cube).transpose().array() * vals;
      const Field f = forward_transform(basis, cube, f_vals.matrix());
      next += (w.phi1dt * f.coeff.array()).matrix();
    }

    cur = next;
    out.x.times.push_back(times[m + 1]);
    out.x.coeff.push_back(cur);
    out.steps_taken = m + 1;
    out.t_stop = times[m + 1];
    if (node_max(cube, cur) > config.blowup_threshold) {
      out.stop_reason = StopReason::Blowup;
      break;
    }
  }
  return out;
}

SolutionBundle solve_auxiliary(const Field& v0, const Field& w0, const DriverSet& z,
                               const SolveConfig& config) {
  check_config(config);
  const BasisPtr& basis = config.x0.basis;
  if (!v0.basis || v0.basis.get() != basis.get() || !w0.basis ||
      w0.basis.get() != basis.get())
    throw UsageError("solve_auxiliary: v0/w0 basis differs from the config basis");
  if (!z.psi.path.basis || z.psi.path.basis.get() != basis.get())
    throw UsageError("solve_auxiliary: driver basis differs from the config basis");
  if (z.level != config.level)
    throw UsageError("solve_auxiliary: driver level differs from config.level");
  check_grid(z.psi.path.times, config);

  const std::vector<double>& times = z.psi.path.times;
  const int nt = static_cast<int>(times.size()) - 1;
  const int nm = basis->mode_count();
  const Eigen::ArrayXd lambdas = basis->lambdas.array();
  const EtdWeights ew = etd_weights(lambdas, config.dt);
  const ParaConfig& pc = config.para;
  const auto fld = [&](const Eigen::VectorXd& c) { return Field{basis, c}; };

  // All drivers identically zero collapses G to the plain cubic; skip the
  // product machinery in that case so deterministic runs stay cheap.
  const bool live = path_active(z.wick2) || path_active(z.big_psi) ||
                    path_active(z.i_wick2) || path_active(z.psi.path);

  // Renormalized polynomial with the rough resonant paths pulled out; those
  // re-enter through the Young integrals below.
  //   tau0_smooth = big^3 - 3 [psi hi big^2 + psi lo big^2
  //                            + psi o (big o big) + 2 [lo,o](big, big, psi)]
  //   tau1_smooth = 6 [big hi psi + big lo psi] - 3 big^2
  //   tau2        = 3 (big - psi)
  std::vector<Eigen::VectorXd> tau0s(nt + 1), tau1s(nt + 1), tau2(nt + 1);
  if (live) {
    for (int m = 0; m <= nt; ++m) {
      const Field ps = z.psi.path.at(m);
      const Field bg = z.big_psi.at(m);
      const Field sq = product_pair(bg, bg);
      tau0s[m] = product_triple(bg, bg, bg).coeff -
                 3.0 * (para_hi(ps, sq, pc).coeff + para_lo(ps, sq, pc).coeff +
                        para_res(ps, para_res(bg, bg, pc), pc).coeff +
                        2.0 * commutator_para_res(bg, bg, ps, pc).coeff);
      tau1s[m] = 6.0 * (para_hi(bg, ps, pc).coeff + para_lo(bg, ps, pc).coeff) -
                 3.0 * sq.coeff;
      tau2[m] = 3.0 * (bg.coeff - ps.coeff);
    }
  }

  const std::vector<Eigen::VectorXd> sem_v0 = semigroup_path(v0.coeff, ew.decay, nt);
  const std::vector<Eigen::VectorXd> sem_w0 = semigroup_path(w0.coeff, ew.decay, nt);

  // Picard iterate, seeded with the free evolutions.
  std::vector<Eigen::VectorXd> v = sem_v0;
  std::vector<Eigen::VectorXd> w = sem_w0;

  const NormSpec spec_v =
      norm_spec(*basis, 0.5 + 2.0 * config.eps_exponent, kInfExponent, kInfExponent);
  const NormSpec spec_w =
      norm_spec(*basis, 1.0 + 2.0 * config.eps_exponent, kInfExponent, kInfExponent);

  SolutionBundle out;
  out.eps_exponent = config.eps_exponent;
  out.stop_reason = StopReason::Horizon;
  out.t_stop = times.back();
  out.steps_taken = nt;

  double young_cauchy = 0.0;
  int growing = 0;
  bool converged = false;
  for (int sweep = 0; sweep < config.picard_iters; ++sweep) {
    // previous iterate's u = v + w and q = u - big_psi
    FieldPath qpath;
    qpath.basis = basis;
    qpath.times = times;
    qpath.coeff.resize(nt + 1);
    for (int m = 0; m <= nt; ++m)
      qpath.coeff[m] = v[m] + w[m] - z.big_psi.coeff[m];

    // v update: mild convolution of F = -3 q lo wick2
    FieldPath fpath;
    fpath.basis = basis;
    fpath.times = times;
    fpath.coeff.resize(nt + 1);
    for (int m = 0; m <= nt; ++m) {
      if (live)
        fpath.coeff[m] = -3.0 * para_lo(fld(qpath.coeff[m]), z.wick2.at(m), pc).coeff;
      else
        fpath.coeff[m] = Eigen::VectorXd::Zero(nm);
    }
    const FieldPath fmild = mild_convolve(fpath);
    std::vector<Eigen::VectorXd> v_new(nt + 1);
    for (int m = 0; m <= nt; ++m) v_new[m] = sem_v0[m] + fmild.coeff[m];

    // smooth part of G at the previous iterate (v update feeds the first
    // commutator, which telescopes the F integral against q lo i_wick2)
    FieldPath gpath;
    gpath.basis = basis;
    gpath.times = times;
    gpath.coeff.resize(nt + 1);
    for (int m = 0; m <= nt; ++m) {
      const Eigen::VectorXd u_m = v[m] + w[m];
      const Field u = fld(u_m);
      Eigen::VectorXd g = -product_triple(u, u, u).coeff;
      if (live) {
        const Field q = fld(qpath.coeff[m]);
        const Field w2 = z.wick2.at(m);
        const Field com1 =
            fld(v_new[m] + 3.0 * para_lo(q, z.i_wick2.at(m), pc).coeff);
        const Field com2 = commutator_para_res(fld(-3.0 * qpath.coeff[m]),
                                               z.i_wick2.at(m), w2, pc);
        g += -3.0 * (para_res(com1, w2, pc).coeff + com2.coeff) -
             3.0 * para_res(fld(w[m]), w2, pc).coeff -
             3.0 * para_hi(q, w2, pc).coeff + tau0s[m] +
             product_pair(fld(tau1s[m]), u).coeff +
             product_triple(fld(tau2[m]), u, u).coeff;
      }
      gpath.coeff[m] = g;
    }
    const FieldPath gmild = mild_convolve(gpath);

    // Young-interpreted driver integrals, stepped through the semigroup:
    //   6 int e^{-(t-r)H} q_r d(anti psi o big)_r
    // + 9 int e^{-(t-r)H} q_r d(anti wick2 o i_wick2)_r
    // + 3 int e^{-(t-r)H}     d(anti wick2 o big)_r
    std::vector<Eigen::VectorXd> young(nt + 1, Eigen::VectorXd::Zero(nm));
    if (live) {
      for (int m = 0; m < nt; ++m) {
        const YoungResult ya = young_mild_integral(qpath, z.anti_psi_big, times[m],
                                                   times[m + 1], config.n_young);
        const YoungResult yb = young_mild_integral(qpath, z.anti_w2_iw2, times[m],
                                                   times[m + 1], config.n_young);
        double cc = 0.0;
        const Eigen::VectorXd yc =
            young_const_step(z.anti_w2_big, m, config.n_young, lambdas, &cc);
        young_cauchy = std::max({young_cauchy, 6.0 * ya.cauchy_increment,
                                 9.0 * yb.cauchy_increment, 3.0 * cc});
        young[m + 1] = (ew.decay * young[m].array()).matrix() + 6.0 * ya.value.coeff +
                       9.0 * yb.value.coeff + 3.0 * yc;
      }
    }

    std::vector<Eigen::VectorXd> w_new(nt + 1);
    for (int m = 0; m <= nt; ++m) w_new[m] = sem_w0[m] + gmild.coeff[m] + young[m];

    double diff = 0.0;
    for (int m = 0; m <= nt; ++m) {
      diff = std::max(diff, besov_norm(fld(v_new[m] - v[m]), spec_v));
      diff = std::max(diff, besov_norm(fld(w_new[m] - w[m]), spec_w));
    }
    out.sweep_diffs.push_back(diff);
    v = std::move(v_new);
    w = std::move(w_new);
    out.sweeps = sweep + 1;

    if (diff < config.picard_tol) {
      converged = true;
      break;
    }
    const std::size_t k = out.sweep_diffs.size();
    if (!std::isfinite(diff) || (k >= 2 && diff > out.sweep_diffs[k - 2]))
      ++growing;
    else
      growing = 0;
    if (growing >= 3) {
      std::ostringstream msg;
      msg << "solve_auxiliary: sweep differences grew three times in a row:";
      for (std::size_t i = k >= 4 ? k - 4 : 0; i < k; ++i)
        msg << " " << out.sweep_diffs[i];
      throw NumericalError(msg.str());
    }
  }
  (void)converged;

  out.v.basis = basis;
  out.v.times = times;
  out.v.coeff = std::move(v);
  out.w.basis = basis;
  out.w.times = times;
  out.w.coeff = std::move(w);
  out.young_cauchy = young_cauchy;

  // ordinary-quadrature cross-check of the first Young term: the finite-level
  // drivers are smooth, so the Young evaluation of
  //   int e^{-(t-r)H} 6 q_r d(anti psi o big)_r
  // and a trapezoid mild quadrature of 6 q (psi o big) agree up to the step
  // error; reported as a relative gap at the horizon
  if (live) {
    FieldPath qpath;
    qpath.basis = basis;
    qpath.times = times;
    qpath.coeff.resize(nt + 1);
    std::vector<Eigen::VectorXd> prod(nt + 1);
    for (int m = 0; m <= nt; ++m) {
      qpath.coeff[m] = out.v.coeff[m] + out.w.coeff[m] - z.big_psi.coeff[m];
      prod[m] = 6.0 * product_pair(fld(qpath.coeff[m]), z.res_psi_big.at(m)).coeff;
    }
    const std::vector<Eigen::VectorXd> ordinary =
        mild_trapezoid(prod, lambdas, config.dt);
    Eigen::VectorXd young_term = Eigen::VectorXd::Zero(nm);
    for (int m = 0; m < nt; ++m) {
      const YoungResult ya = young_mild_integral(qpath, z.anti_psi_big, times[m],
                                                 times[m + 1], config.n_young);
      young_term = (ew.decay * young_term.array()).matrix() + 6.0 * ya.value.coeff;
    }
    const double ref = ordinary[nt].norm();
    out.young_gap = ref > 0.0 ? (young_term - ordinary[nt]).norm() / ref : 0.0;
  }
  return out;
}

SolutionBundle solve_both(const SolveConfig& config, const DriverSet& z,
                          const RenormTable& table) {
  SolutionBundle direct = solve_direct(config, z.psi, table);
  SolutionBundle aux = solve_auxiliary(config.x0, zero_field(config.x0.basis), z, config);

  SolutionBundle out = std::move(aux);
  out.x = std::move(direct.x);
  out.stop_reason = direct.stop_reason;
  out.t_stop = direct.t_stop;
  out.steps_taken = direct.steps_taken;

  // x_hat = psi - big_psi + v + w, compared in the weighted-coefficient norm
  // at exponent -1/2 - eps over the steps both runs produced
  const BasisPtr& basis = config.x0.basis;
  const NormSpec res_spec =
      norm_spec(*basis, -0.5 - config.eps_exponent, kInfExponent, kInfExponent);
  const std::size_t common = std::min(out.x.coeff.size(), out.v.coeff.size());
  out.reconstructed.basis = basis;
  out.reconstructed.times.assign(out.x.times.begin(), out.x.times.begin() + common);
  out.reconstructed.coeff.resize(common);
  out.residual_norms.resize(common);
  for (std::size_t m = 0; m < common; ++m) {
    out.reconstructed.coeff[m] = z.psi.path.coeff[m] - z.big_psi.coeff[m] +
                                 out.v.coeff[m] + out.w.coeff[m];
    out.residual_norms[m] =
        besov_norm(Field{basis, out.reconstructed.coeff[m] - out.x.coeff[m]}, res_spec);
  }
  return out;
}

ResidualReport reconstruct_and_compare(const SolutionBundle& bundle) {
  if (bundle.x.coeff.empty() || bundle.v.coeff.empty() ||
      bundle.reconstructed.coeff.empty())
    throw UsageError("reconstruct_and_compare: bundle must hold both formulations");
  const BasisPtr& basis = bundle.x.basis;
  const NormSpec res_spec =
      norm_spec(*basis, -0.5 - bundle.eps_exponent, kInfExponent, kInfExponent);
  ResidualReport report;
  const std::size_t common =
      std::min(bundle.x.coeff.size(), bundle.reconstructed.coeff.size());
  report.residual_norms.resize(common);
  for (std::size_t m = 0; m < common; ++m) {
    report.residual_norms[m] = besov_norm(
        Field{basis, bundle.reconstructed.coeff[m] - bundle.x.coeff[m]}, res_spec);
    report.max_residual = std::max(report.max_residual, report.residual_norms[m]);
  }
  report.t0_residual = report.residual_norms.empty() ? 0.0 : report.residual_norms[0];
  return report;
}

ReconcileReport reconciliation_order_study(const BasisPtr& basis, int level,
                                           std::uint64_t seed, std::uint32_t replica,
                                           const Field& x0, double dt, int halvings,
                                           double horizon, const C2Quad& quad,
                                           const DriverOptions& opts) {
  if (!basis) throw UsageError("reconciliation_order_study: null basis");
  if (halvings < 2)
    throw UsageError("reconciliation_order_study: need at least two grids");
  if (!(dt > 0.0) || !(horizon > dt))
    throw UsageError("reconciliation_order_study: need 0 < dt < horizon");

  // One noise realization on the finest grid; coarser runs restrict it, so
  // every dt sees the same path and the residual decay is a per-path order.
  const double dt_fine = dt / static_cast<double>(1 << (halvings - 1));
  const auto steps_fine = static_cast<int>(std::llround(horizon / dt_fine));
  if (std::abs(steps_fine * dt_fine - horizon) > 1e-9 * horizon)
    throw UsageError("reconciliation_order_study: dt must divide the horizon");
  NoiseConfig fine_cfg{basis, level, seed, dt_fine, horizon};
  const StochConvPath fine = sample_stoch_conv(fine_cfg, replica);
  const RenormTable fine_table =
      driver_renorm_table(basis, level, fine.path.times, quad);

  ReconcileReport report;
  std::vector<double> log2_res;
  std::vector<double> index;
  for (int h = 0; h < halvings; ++h) {
    const int stride = 1 << (halvings - 1 - h);
    const double dt_h = dt / static_cast<double>(1 << h);

    StochConvPath psi;
    psi.config = NoiseConfig{basis, level, seed, dt_h, horizon};
    psi.replica = replica;
    psi.path.basis = basis;
    RenormTable table;
    table.level = level;
    table.dimension = fine_table.dimension;
    table.points = fine_table.points;
    const int rows = steps_fine / stride + 1;
    table.c1.resize(rows, fine_table.c1.cols());
    table.c2.resize(rows, fine_table.c2.cols());
    table.combined.resize(rows, fine_table.combined.cols());
    for (int r = 0; r < rows; ++r) {
      const int src = r * stride;
      psi.path.times.push_back(fine.path.times[src]);
      psi.path.coeff.push_back(fine.path.coeff[src]);
      table.times.push_back(fine_table.times[src]);
      table.c1.row(r) = fine_table.c1.row(src);
      table.c2.row(r) = fine_table.c2.row(src);
      table.combined.row(r) = fine_table.combined.row(src);
    }
    const DriverSet z = build_driver_set(psi, table, opts);

    SolveConfig cfg;
    cfg.x0 = x0;
    cfg.level = level;
    cfg.dt = dt_h;
    cfg.horizon = horizon;
    cfg.mode = SolveMode::Both;
    cfg.eps_exponent = opts.eps_exponent;
    cfg.para = opts.para;
    const SolutionBundle bundle = solve_both(cfg, z, table);
    const ResidualReport res = reconstruct_and_compare(bundle);

    report.dts.push_back(dt_h);
    report.max_residuals.push_back(res.max_residual);
    index.push_back(static_cast<double>(h));
    log2_res.push_back(std::log2(std::max(res.max_residual, 1e-300)));
  }
  // residual ~ dt^order and dt halves per index step
  report.order = -fit_slope(index, log2_res);
  return report;
}

SolveStudyReport solution_convergence_study(const BasisPtr& basis,
                                            const std::vector<int>& levels,
                                            std::uint64_t seed, int replicas,
                                            const Field& x0, double dt, double horizon,
                                            const C2Quad& quad, double eta) {
  if (!basis) throw UsageError("solution_convergence_study: null basis");
  if (levels.empty()) throw UsageError("solution_convergence_study: empty level list");
  if (replicas < 1) throw UsageError("solution_convergence_study: need replicas >= 1");

  SolveStudyReport report;
  report.levels = levels;
  report.replicas = replicas;
  report.eta = eta;

  const NormSpec low_spec = norm_spec(*basis, -0.5 - eta, kInfExponent, kInfExponent);
  const NormSpec half_spec = norm_spec(*basis, 0.5, kInfExponent, kInfExponent);

  const int n_levels = static_cast<int>(levels.size());
  // per level and replica: the direct path and the remainder x - psi + big
  std::vector<std::vector<FieldPath>> paths(n_levels);
  std::vector<std::vector<double>> rem_half(n_levels), raw_half(n_levels),
      raw_low(n_levels);
  for (int li = 0; li < n_levels; ++li) {
    NoiseConfig ncfg{basis, levels[li], seed, dt, horizon};
    const StochConvPath probe = sample_stoch_conv(ncfg, 0);
    const RenormTable table =
        driver_renorm_table(basis, levels[li], probe.path.times, quad);
    SolveConfig cfg;
    cfg.x0 = x0;
    cfg.level = levels[li];
    cfg.dt = dt;
    cfg.horizon = horizon;
    cfg.mode = SolveMode::Direct;
    for (int r = 0; r < replicas; ++r) {
      const StochConvPath psi =
          sample_stoch_conv(ncfg, static_cast<std::uint32_t>(r));
      const SolutionBundle bundle = solve_direct(cfg, psi, table);
      const FieldPath big = mild_convolve(wick_cube(psi, table));
      double rh = 0.0, xh = 0.0, xl = 0.0;
      for (std::size_t m = 0; m < bundle.x.coeff.size(); ++m) {
        const Eigen::VectorXd rem =
            bundle.x.coeff[m] - psi.path.coeff[m] + big.coeff[m];
        rh = std::max(rh, besov_norm(Field{basis, rem}, half_spec));
        xh = std::max(xh, besov_norm(bundle.x.at(m), half_spec));
        xl = std::max(xl, besov_norm(bundle.x.at(m), low_spec));
      }
      rem_half[li].push_back(rh);
      raw_half[li].push_back(xh);
      raw_low[li].push_back(xl);
      paths[li].push_back(std::move(bundle.x));
    }
    report.remainder_half.push_back(median_of(rem_half[li]));
    report.raw_half.push_back(median_of(raw_half[li]));
    report.raw_minus_half.push_back(median_of(raw_low[li]));
  }
  for (int li = 0; li + 1 < n_levels; ++li) {
    std::vector<double> diffs;
    for (int r = 0; r < replicas; ++r) {
      double d = 0.0;
      for (std::size_t m = 0; m < paths[li][r].coeff.size(); ++m)
        d = std::max(d, besov_norm(Field{basis, paths[li][r].coeff[m] -
                                              paths[li + 1][r].coeff[m]},
                                   low_spec));
      diffs.push_back(d);
    }
    report.median_diffs.push_back(median_of(diffs));
  }
  report.monotone = true;
  for (std::size_t i = 0; i + 1 < report.median_diffs.size(); ++i)
    if (!(report.median_diffs[i + 1] < report.median_diffs[i])) report.monotone = false;
  return report;
}

BlowupDecision blowup_monitor(const FieldPath& path, double threshold) {
  if (!path.basis || path.coeff.empty())
    throw UsageError("blowup_monitor: empty path");
  const auto& cube = path.basis->grid(GridKind::Cube);
  BlowupDecision decision;
  for (std::size_t i = 0; i < path.coeff.size(); ++i) {
    const double proxy = node_max(cube, path.coeff[i]);
    decision.peak_proxy = std::max(decision.peak_proxy, proxy);
    if (proxy > threshold) {
      decision.triggered = true;
      decision.step = static_cast<int>(i);
      decision.t_max = path.times[i];
      return decision;
    }
  }
  decision.t_max = path.times.back();
  return decision;
}

}  // namespace hphi4
