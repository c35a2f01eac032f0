#include "hphi4/diagrams.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>

#include "hphi4/errors.hpp"
#include "hphi4/quadrature.hpp"

namespace hphi4 {

namespace {

// dedup key: absolute components sorted largest first, so every node on the
// same orbit of sign flips and axis permutations shares one counterterm
// evaluation. descending order keeps the mass in the leading slots, which is
// what dimension-aware kernels read.
std::array<double, 3> radial_key(const Point& p) {
  std::array<double, 3> k{std::fabs(p[0]), std::fabs(p[1]), std::fabs(p[2])};
  std::sort(k.begin(), k.end(), std::greater<>());
  return k;
}

void check_times(const std::vector<double>& times) {
  if (times.empty()) throw UsageError("driver_renorm_table: empty time grid");
  if (times.front() < 0.0) throw UsageError("driver_renorm_table: negative time");
  for (std::size_t m = 0; m + 1 < times.size(); ++m)
    if (!(times[m + 1] > times[m]))
      throw UsageError("driver_renorm_table: times must be strictly increasing");
}

struct TableLayout {
  const QuadratureGrid* pair = nullptr;
  const QuadratureGrid* cube = nullptr;
  int n_pair = 0;
  int n_cube = 0;
};

TableLayout table_layout(const SpectralBasis& basis) {
  TableLayout lay;
  lay.pair = &basis.grid(GridKind::Pair);
  lay.cube = &basis.grid(GridKind::Cube);
  lay.n_pair = static_cast<int>(lay.pair->nodes.size());
  lay.n_cube = static_cast<int>(lay.cube->nodes.size());
  return lay;
}

// the wick/centering steps read table columns as grid values, so the table
// must carry exactly the pair nodes followed by the cube nodes
void check_table(const StochConvPath& psi, const RenormTable& table,
                 const TableLayout& lay) {
  if (!psi.path.basis) throw UsageError("diagrams: path has no basis");
  const SpectralBasis& basis = *psi.path.basis;
  if (psi.config.level != table.level) throw UsageError("diagrams: level mismatch");
  if (basis.dimension != table.dimension)
    throw UsageError("diagrams: dimension mismatch");
  if (psi.path.times.size() != table.times.size())
    throw UsageError("diagrams: table times do not match the path");
  for (std::size_t m = 0; m < table.times.size(); ++m)
    if (std::fabs(table.times[m] - psi.path.times[m]) >
        1e-12 * std::max(1.0, std::fabs(psi.path.times[m])))
      throw UsageError("diagrams: table times do not match the path");
  if (static_cast<int>(table.points.size()) != lay.n_pair + lay.n_cube)
    throw UsageError("diagrams: table grid does not match the basis");
  for (int i = 0; i < lay.n_pair; ++i)
    if (table.points[i] != lay.pair->nodes[i])
      throw UsageError("diagrams: table grid does not match the basis");
  for (int i = 0; i < lay.n_cube; ++i)
    if (table.points[lay.n_pair + i] != lay.cube->nodes[i])
      throw UsageError("diagrams: table grid does not match the basis");
}

NormSpec sup_spec(const SpectralBasis& basis, double sigma) {
  return norm_spec(basis, sigma, kInfExponent, kInfExponent);
}

double sup_block_norm(const FieldPath& path, double sigma) {
  const NormSpec spec = sup_spec(*path.basis, sigma);
  double out = 0.0;
  for (std::size_t m = 0; m < path.coeff.size(); ++m)
    out = std::max(out, besov_norm(path.at(m), spec));
  return out;
}

FieldPath path_difference(const FieldPath& a, const FieldPath& b) {
  FieldPath out = a;
  for (std::size_t m = 0; m < out.coeff.size(); ++m) out.coeff[m] -= b.coeff[m];
  return out;
}

// component exponents used for summaries and driver-space distances
struct ComponentSigma {
  const char* name;
  const FieldPath DriverSet::*path;
  double shift;  // sigma = shift - eps
};

constexpr ComponentSigma kComponents[] = {
    {"psi", nullptr, -0.5},  // placeholder, psi lives inside StochConvPath
    {"wick2", &DriverSet::wick2, -1.0},
    {"big_psi", &DriverSet::big_psi, 0.5},
    {"i_wick2", &DriverSet::i_wick2, 1.0},
    {"res_psi_big", &DriverSet::res_psi_big, 0.0},
    {"res_w2_iw2", &DriverSet::res_w2_iw2, 0.0},
    {"res_w2_big", &DriverSet::res_w2_big, -0.5},
};

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
  return 0.5 * (v[mid - 1] + hi);
}

}  // namespace

RenormTable driver_renorm_table(const BasisPtr& basis, int level,
                                const std::vector<double>& times, const C2Quad& quad) {
  if (!basis) throw UsageError("driver_renorm_table: no basis");
  check_times(times);
  const TableLayout lay = table_layout(*basis);
  const int dim = basis->dimension;
  const double eps = regularization_scale(level);

  RenormTable table;
  table.level = level;
  table.dimension = dim;
  table.times = times;
  table.points.reserve(lay.n_pair + lay.n_cube);
  for (const Point& p : lay.pair->nodes) table.points.push_back(p);
  for (const Point& p : lay.cube->nodes) table.points.push_back(p);

  const int nt = static_cast<int>(times.size());
  const int np = static_cast<int>(table.points.size());
  table.c1.resize(nt, np);
  table.c2.resize(nt, np);
  table.combined.resize(nt, np);

  // one evaluation per distinct radial orbit
  std::map<std::array<double, 3>, std::vector<int>> orbits;
  for (int j = 0; j < np; ++j) orbits[radial_key(table.points[j])].push_back(j);

  for (const auto& [key, cols] : orbits) {
    const Point rep{key[0], key[1], key[2]};
    // c1(t) accumulates incrementally: the integrand never changes, only the
    // upper endpoint moves with t
    double acc = 0.0;
    double prev = 0.0;
    auto kernel = [&](double sigma) { return mehler_kernel(dim, 2.0 * sigma, rep, rep); };
    for (int i = 0; i < nt; ++i) {
      const double t = times[i];
      double c1 = 0.0;
      if (t > 0.0) {
        const auto res = integrate_gk15_split(
            kernel, prev + eps, t + eps,
            geometric_breakpoints(prev + eps, t + eps, eps), 1e-10);
        if (!res.converged)
          throw NumericalError("driver_renorm_table: c1 quadrature did not converge");
        acc += res.value;
        prev = t;
        c1 = acc;
      }
      const double c2 = t > 0.0 ? compute_c2(dim, level, t, rep, quad) : 0.0;
      for (int j : cols) {
        table.c1(i, j) = c1;
        table.c2(i, j) = c2;
        table.combined(i, j) = 3.0 * c1 - 9.0 * c2;
      }
    }
  }
  return table;
}

FieldPath wick_square(const StochConvPath& psi, const RenormTable& table) {
  const TableLayout lay = table_layout(*psi.path.basis);
  check_table(psi, table, lay);
  FieldPath out;
  out.basis = psi.path.basis;
  out.times = psi.path.times;
  out.coeff.reserve(out.times.size());
  for (std::size_t m = 0; m < out.times.size(); ++m) {
    const Eigen::VectorXd vals = inverse_transform(psi.path.at(m), *lay.pair);
    const Eigen::VectorXd centered =
        vals.cwiseAbs2() - table.c1.row(m).head(lay.n_pair).transpose();
    out.coeff.push_back(forward_transform(out.basis, *lay.pair, centered).coeff);
  }
  return out;
}

FieldPath wick_cube(const StochConvPath& psi, const RenormTable& table) {
  const TableLayout lay = table_layout(*psi.path.basis);
  check_table(psi, table, lay);
  FieldPath out;
  out.basis = psi.path.basis;
  out.times = psi.path.times;
  out.coeff.reserve(out.times.size());
  for (std::size_t m = 0; m < out.times.size(); ++m) {
    const Eigen::VectorXd vals = inverse_transform(psi.path.at(m), *lay.cube);
    const Eigen::VectorXd c1 = table.c1.row(m).segment(lay.n_pair, lay.n_cube).transpose();
    const Eigen::VectorXd centered =
        vals.array().cube().matrix() - 3.0 * c1.cwiseProduct(vals);
    out.coeff.push_back(forward_transform(out.basis, *lay.cube, centered).coeff);
  }
  return out;
}

FieldPath mild_convolve(const FieldPath& f) {
  if (!f.basis) throw UsageError("mild_convolve: path has no basis");
  if (f.times.empty()) throw UsageError("mild_convolve: empty path");
  if (f.times.size() != f.coeff.size())
    throw UsageError("mild_convolve: time and coefficient counts differ");
  const Eigen::ArrayXd lambdas = f.basis->lambdas.array();

  FieldPath out;
  out.basis = f.basis;
  out.times = f.times;
  out.coeff.reserve(f.times.size());
  Eigen::VectorXd state = Eigen::VectorXd::Zero(f.basis->mode_count());
  out.coeff.push_back(state);

  double last_dt = -1.0;
  Eigen::ArrayXd decay, weight;
  for (std::size_t m = 0; m + 1 < f.times.size(); ++m) {
    const double dt = f.times[m + 1] - f.times[m];
    if (!(dt > 0.0)) throw UsageError("mild_convolve: times must be strictly increasing");
    if (dt != last_dt) {
      const Eigen::ArrayXd z = dt * lambdas;
      decay = (-z).exp();
      // dt phi1(z) with phi1(z) = (1 - e^{-z})/z, stable as z -> 0
      weight = -z.unaryExpr([](double v) { return std::expm1(-v); }) / lambdas;
      last_dt = dt;
    }
    state = (decay * state.array() + weight * f.coeff[m].array()).matrix();
    out.coeff.push_back(state);
  }
  return out;
}

DriverSet build_driver_set(const StochConvPath& psi, const RenormTable& table,
                           const DriverOptions& opts) {
  const TableLayout lay = table_layout(*psi.path.basis);
  check_table(psi, table, lay);
  const BasisPtr& basis = psi.path.basis;
  const std::size_t nt = psi.path.times.size();

  DriverSet out;
  out.level = psi.config.level;
  out.eps_exponent = opts.eps_exponent;
  out.psi = psi;
  out.wick2 = wick_square(psi, table);
  out.wick3 = opts.zero_cube ? zero_path(basis, psi.path.times) : wick_cube(psi, table);
  out.big_psi = mild_convolve(out.wick3);
  out.i_wick2 = mild_convolve(out.wick2);

  out.res_psi_big.basis = basis;
  out.res_psi_big.times = psi.path.times;
  out.res_w2_iw2.basis = basis;
  out.res_w2_iw2.times = psi.path.times;
  out.res_w2_big.basis = basis;
  out.res_w2_big.times = psi.path.times;
  for (std::size_t m = 0; m < nt; ++m) {
    const Field psi_m = psi.path.at(m);
    const Field w2_m = out.wick2.at(m);
    out.res_psi_big.coeff.push_back(
        para_res(psi_m, out.big_psi.at(m), opts.para).coeff);

    // wick2 o i_wick2 - c2, the counterterm entering as a field
    const Eigen::VectorXd c2_pair = table.c2.row(m).head(lay.n_pair).transpose();
    const Field c2_field = forward_transform(basis, *lay.pair, c2_pair);
    out.res_w2_iw2.coeff.push_back(
        para_res(w2_m, out.i_wick2.at(m), opts.para).coeff - c2_field.coeff);

    // wick2 o big_psi - 3 c2 psi, the product formed in value space. with the
    // cube zeroed the pairing this counterterm matches is gone, so the whole
    // component is zero as well.
    if (opts.zero_cube) {
      out.res_w2_big.coeff.push_back(Eigen::VectorXd::Zero(basis->mode_count()));
    } else {
      const Eigen::VectorXd psi_vals = inverse_transform(psi_m, *lay.pair);
      const Field c2_psi =
          forward_transform(basis, *lay.pair, c2_pair.cwiseProduct(psi_vals));
      out.res_w2_big.coeff.push_back(
          para_res(w2_m, out.big_psi.at(m), opts.para).coeff - 3.0 * c2_psi.coeff);
    }
  }

  out.anti_psi_big = path_antiderivative(out.res_psi_big);
  out.anti_w2_iw2 = path_antiderivative(out.res_w2_iw2);
  out.anti_w2_big = path_antiderivative(out.res_w2_big);

  const double e = opts.eps_exponent;
  out.norms["psi"] = sup_block_norm(psi.path, -0.5 - e);
  out.norms["wick2"] = sup_block_norm(out.wick2, -1.0 - e);
  out.norms["wick3"] = sup_block_norm(out.wick3, -1.5 - e);
  out.norms["big_psi"] = sup_block_norm(out.big_psi, 0.5 - e);
  out.norms["i_wick2"] = sup_block_norm(out.i_wick2, 1.0 - e);
  out.norms["res_psi_big"] = sup_block_norm(out.res_psi_big, -e);
  out.norms["res_w2_iw2"] = sup_block_norm(out.res_w2_iw2, -e);
  out.norms["res_w2_big"] = sup_block_norm(out.res_w2_big, -0.5 - e);
  const NormSpec anti_spec = sup_spec(*basis, -e);
  out.norms["anti_psi_big_h12"] = holder_norm(out.anti_psi_big, 0.5, anti_spec);
  out.norms["anti_w2_iw2_h12"] = holder_norm(out.anti_w2_iw2, 0.5, anti_spec);
  const NormSpec anti_spec_low = sup_spec(*basis, -0.5 - e);
  out.norms["anti_w2_big_h12"] = holder_norm(out.anti_w2_big, 0.5, anti_spec_low);
  return out;
}

double driver_distance(const DriverSet& a, const DriverSet& b) {
  if (a.psi.path.basis != b.psi.path.basis)
    throw UsageError("driver_distance: different bases");
  if (a.psi.path.times.size() != b.psi.path.times.size())
    throw UsageError("driver_distance: different time grids");
  const double e = a.eps_exponent;
  double out = sup_block_norm(path_difference(a.psi.path, b.psi.path), -0.5 - e);
  for (const auto& comp : kComponents) {
    if (!comp.path) continue;
    out = std::max(out, sup_block_norm(path_difference(a.*(comp.path), b.*(comp.path)),
                                       comp.shift - e));
  }
  return out;
}

DriverStudyReport driver_convergence_study(const BasisPtr& basis,
                                           const std::vector<int>& levels,
                                           std::uint64_t seed, int replicas, double dt,
                                           double horizon, const C2Quad& quad,
                                           const DriverOptions& opts) {
  if (!basis) throw UsageError("driver_convergence_study: no basis");
  if (levels.empty()) throw UsageError("driver_convergence_study: no levels");
  if (replicas < 1) throw UsageError("driver_convergence_study: replicas must be >= 1");

  DriverStudyReport report;
  report.levels = levels;
  report.replicas = replicas;
  report.eps_exponent = opts.eps_exponent;

  // one probe path fixes the time grid; tables are shared across replicas
  std::vector<NoiseConfig> configs;
  for (int n : levels) configs.push_back(NoiseConfig{basis, n, seed, dt, horizon});
  const auto probe_path = sample_stoch_conv(configs.front(), 0);
  std::vector<RenormTable> tables;
  for (std::size_t i = 0; i < levels.size(); ++i)
    tables.push_back(driver_renorm_table(basis, levels[i], probe_path.path.times, quad));

  const std::size_t nl = levels.size();
  std::vector<std::vector<std::map<std::string, double>>> norms(nl);
  std::vector<std::vector<double>> diffs(nl > 1 ? nl - 1 : 0);
  std::vector<double> centered_samples, gap_samples, wick2_samples;

  for (int r = 0; r < replicas; ++r) {
    std::vector<DriverSet> sets;
    sets.reserve(nl);
    for (std::size_t i = 0; i < nl; ++i)
      sets.push_back(
          build_driver_set(sample_stoch_conv(configs[i], static_cast<std::uint32_t>(r)),
                           tables[i], opts));
    for (std::size_t i = 0; i < nl; ++i) norms[i].push_back(sets[i].norms);
    for (std::size_t i = 0; i + 1 < nl; ++i)
      diffs[i].push_back(driver_distance(sets[i], sets[i + 1]));

    // centering diagnostics on the sharpest level at the final time
    const DriverSet& last = sets.back();
    const std::size_t mt = last.wick2.coeff.size() - 1;
    centered_samples.push_back(eval_field(last.res_w2_iw2.at(mt), report.probe));
    const Field full = product_pair(last.wick2.at(mt), last.i_wick2.at(mt));
    const Field res = para_res(last.wick2.at(mt), last.i_wick2.at(mt), opts.para);
    gap_samples.push_back(eval_field(full, report.probe) - eval_field(res, report.probe));
    wick2_samples.push_back(eval_field(last.wick2.at(mt), report.probe));
  }

  for (std::size_t i = 0; i < nl; ++i) {
    std::map<std::string, double> med;
    for (const auto& [key, unused] : norms[i].front()) {
      std::vector<double> vals;
      vals.reserve(norms[i].size());
      for (const auto& m : norms[i]) vals.push_back(m.at(key));
      med[key] = median_of(std::move(vals));
    }
    report.median_norms.push_back(std::move(med));
  }
  for (auto& d : diffs) report.median_diffs.push_back(median_of(std::move(d)));

  report.monotone = report.median_diffs.size() >= 2;
  for (std::size_t i = 0; i + 1 < report.median_diffs.size(); ++i)
    if (!(report.median_diffs[i + 1] < report.median_diffs[i])) report.monotone = false;

  // fit median_diffs ~ 2^{-kappa n / 2} against the midpoints of the level pairs
  if (report.median_diffs.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(report.median_diffs.size());
    for (int i = 0; i < n; ++i) {
      const double x = 0.5 * (levels[i] + levels[i + 1]);
      const double y = std::log2(report.median_diffs[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    report.rate = -2.0 * slope;
  }

  auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= std::max<std::size_t>(1, v.size() - 1);
    se = std::sqrt(var / static_cast<double>(v.size()));
  };
  mean_se(centered_samples, report.centered_mean, report.centered_se);
  mean_se(gap_samples, report.gap_mean, report.gap_se);
  double wick2_mean = 0.0, wick2_se = 0.0;
  mean_se(wick2_samples, wick2_mean, wick2_se);
  report.wick2_z = wick2_se > 0.0 ? wick2_mean / wick2_se : 0.0;
  return report;
}

}  // namespace hphi4
