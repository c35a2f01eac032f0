#include "hphi4/studies.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hphi4/basis.hpp"
#include "hphi4/besov.hpp"
#include "hphi4/diagrams.hpp"
#include "hphi4/errors.hpp"
#include "hphi4/io.hpp"
#include "hphi4/noise.hpp"
#include "hphi4/solver.hpp"

namespace hphi4 {

namespace {

using nlohmann::ordered_json;

// All CSV cells go through one formatter: scientific, 15 significant digits,
// C locale. Byte-identical reruns depend on never formatting any other way.
std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.14e", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open \"" + path + "\" for writing");
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out << ',';
    out << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      throw IoError("csv row width mismatch in \"" + path + "\"");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << sci(row[i]);
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed for \"" + path + "\"");
}

bool check_op(double value, const std::string& op, double bound) {
  if (op == "<=") return value <= bound;
  if (op == ">=") return value >= bound;
  if (op == "<") return value < bound;
  if (op == ">") return value > bound;
  throw IoError("unknown check operator \"" + op + "\"");
}

void add_check(StudyResult& r, const std::string& name, double value,
               const std::string& op, double bound) {
  r.checks.push_back(CheckRecord{name, value, op, bound, check_op(value, op, bound)});
}

void add_metric(StudyResult& r, const std::string& name, double value) {
  r.metrics.push_back(MetricRecord{name, value});
}

void emit_csv(StudyResult& r, const std::string& out_dir, const std::string& name,
              const CsvTable& table) {
  const std::string path = out_dir + "/" + name;
  write_csv(path, table);
  r.tables.push_back(name);
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  return sxy / sxx;
}

// Uniform draws from the top 53 bits of one mt19937_64 stream. The mapping
// is spelled out here so sampled test points stay identical across library
// implementations; only the engine itself is standard-specified.
struct PointSampler {
  std::mt19937_64 rng;
  explicit PointSampler(std::uint64_t seed) : rng(seed) {}
  double uniform() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int uniform_int(int lo, int hi) {
    const int span = hi - lo + 1;
    return lo + std::min(span - 1, static_cast<int>(uniform() * span));
  }
};

int get_checked_int(const RunConfig& cfg, const std::string& key, std::int64_t lo,
                    std::int64_t hi, std::int64_t fallback) {
  return static_cast<int>(cfg.get_int_in(key, lo, hi, fallback));
}

int require_dimension(const RunConfig& cfg) {
  const std::int64_t dim = cfg.get_int("dimension");
  if (dim < 1 || dim > 3) {
    throw ConfigError("key \"dimension\": value " + std::to_string(dim) +
                      " outside [1, 3]");
  }
  return static_cast<int>(dim);
}

double positive_double(const RunConfig& cfg, const std::string& key, double fallback) {
  const double v = cfg.get_double(key, fallback);
  if (!(v > 0.0)) {
    throw ConfigError("key \"" + key + "\": value must be > 0, got " + sci(v));
  }
  return v;
}

C2Quad quad_from_config(const RunConfig& cfg) {
  C2Quad quad;
  quad.w_order = get_checked_int(cfg, "c2_w_order", 8, 256, quad.w_order);
  quad.s_tol = positive_double(cfg, "c2_s_tol", quad.s_tol);
  quad.sigma_panels = get_checked_int(cfg, "c2_sigma_panels", 1, 64, quad.sigma_panels);
  quad.rho_tol = positive_double(cfg, "c2_rho_tol", quad.rho_tol);
  return quad;
}

std::vector<int> levels_from_config(const RunConfig& cfg,
                                    const std::vector<int>& fallback) {
  const std::vector<int> levels = cfg.get_int_list("levels", fallback);
  for (int n : levels) {
    if (n < 0 || n > 40) {
      throw ConfigError("key \"levels\": level " + std::to_string(n) +
                        " outside [0, 40]");
    }
  }
  return levels;
}

int level_from_config(const RunConfig& cfg, int fallback) {
  return get_checked_int(cfg, "level", 0, 40, fallback);
}

Point point_from_config(const RunConfig& cfg, const std::string& key, int dimension) {
  const std::vector<double> coords = cfg.get_double_list(key, {});
  if (static_cast<int>(coords.size()) > dimension) {
    throw ConfigError("key \"" + key + "\": " + std::to_string(coords.size()) +
                      " coordinates for dimension " + std::to_string(dimension));
  }
  Point x{0.0, 0.0, 0.0};
  for (std::size_t a = 0; a < coords.size(); ++a) x[a] = coords[a];
  return x;
}

Field x0_from_config(const RunConfig& cfg, const BasisPtr& basis) {
  const std::vector<double> coeffs = cfg.get_double_list("x0", {});
  if (static_cast<int>(coeffs.size()) > basis->mode_count()) {
    throw ConfigError("key \"x0\": " + std::to_string(coeffs.size()) +
                      " coefficients exceed the " +
                      std::to_string(basis->mode_count()) + "-mode basis");
  }
  Field x0 = zero_field(basis);
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    x0.coeff[static_cast<int>(k)] = coeffs[k];
  }
  return x0;
}

// Number of steps on the uniform grid; horizon must be a multiple of dt.
int grid_steps(double dt, double horizon) {
  const std::int64_t steps = std::llround(horizon / dt);
  if (steps < 1 ||
      std::abs(static_cast<double>(steps) * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw ConfigError("horizon " + sci(horizon) + " is not a positive multiple of dt " +
                      sci(dt));
  }
  return static_cast<int>(steps);
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] < v[i - 1])) return false;
  }
  return !v.empty();
}

// ---------------------------------------------------------------------------
// renorm-study: counterterm table c1/c2/(3c1 - 9c2) over regularization
// levels at one space-time point, with the log2 growth rate of c1 fitted.

void run_renorm(const RunConfig& cfg, const std::string& out_dir, StudyResult& r,
                ordered_json& resolved) {
  const int dim = require_dimension(cfg);
  const std::vector<int> levels = levels_from_config(cfg, {4, 5, 6, 7, 8, 9, 10, 11, 12});
  const double time = positive_double(cfg, "time", 1.0);
  const Point x = point_from_config(cfg, "point", dim);
  const double c1_tol = positive_double(cfg, "c1_tol", 1e-10);
  const C2Quad quad = quad_from_config(cfg);
  const bool check_slope = cfg.get_bool("check_slope", true);
  const double slope_min = cfg.get_double("slope_min", 0.45);
  const double slope_max = cfg.get_double("slope_max", 0.55);

  resolved["dimension"] = dim;
  resolved["levels"] = levels;
  resolved["time"] = time;
  resolved["point"] = std::vector<double>(x.begin(), x.begin() + dim);
  resolved["c2_w_order"] = quad.w_order;

  CsvTable table;
  table.header = {"level", "c1", "c2", "combined"};
  std::vector<double> xs, log2c1;
  for (int n : levels) {
    const double c1 = compute_c1(dim, n, time, x, c1_tol);
    const double c2 = compute_c2(dim, n, time, x, quad);
    table.rows.push_back({static_cast<double>(n), c1, c2, 3.0 * c1 - 9.0 * c2});
    xs.push_back(static_cast<double>(n));
    log2c1.push_back(std::log2(c1));
  }
  emit_csv(r, out_dir, "renorm-study.csv", table);

  if (levels.size() >= 2) {
    const double slope = fit_slope(xs, log2c1);
    add_metric(r, "c1_log2_slope", slope);
    if (check_slope) {
      add_check(r, "c1_log2_slope_lower", slope, ">=", slope_min);
      add_check(r, "c1_log2_slope_upper", slope, "<=", slope_max);
    }
  }
}

// ---------------------------------------------------------------------------
// covariance-check / wick-moments: Monte Carlo moments of the sampled
// stochastic convolution against the closed-form mode sums. Both studies
// share one ensemble pass; wick additionally forms the pointwise recentered
// powers psi^2 - C and psi^3 - 3 C psi and checks
//   E[w2 w2'] = 2 C12^2,   E[w3 w3'] = 6 C12^3.

struct MomentAccum {
  double sum = 0.0;
  double sq = 0.0;
  void push(double v) {
    sum += v;
    sq += v * v;
  }
  double mean(int n) const { return sum / n; }
  double se(int n) const {
    const double m = mean(n);
    const double var = std::max(0.0, (sq - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

void run_gauss_moments(const RunConfig& cfg, const std::string& out_dir, StudyResult& r,
                       ordered_json& resolved, bool wick) {
  const int dim = require_dimension(cfg);
  const int modes = get_checked_int(cfg, "modes", 1, 4096, 64);
  const int level = level_from_config(cfg, 4);
  const double dt = positive_double(cfg, "dt", 1e-3);
  const double horizon = positive_double(cfg, "horizon", 0.25);
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const int replicas = get_checked_int(cfg, "replicas", 2, 1000000, 20000);
  const int points = get_checked_int(cfg, "points", 1, 1000, 20);
  const double y_radius = positive_double(cfg, "y_radius", 2.0);
  const double z_max = positive_double(cfg, "z_max", wick ? 5.0 : 4.0);
  const int min_pass = get_checked_int(cfg, "min_pass", 0, points, wick ? (points * 18) / 20
                                                                        : (points * 19) / 20);
  const int steps = grid_steps(dt, horizon);
  if (steps < 3) throw ConfigError("horizon/dt leaves fewer than 3 grid steps");

  const BasisPtr basis = build_basis(dim, modes);
  resolved["dimension"] = dim;
  resolved["modes"] = modes;
  resolved["level"] = level;
  resolved["dt"] = dt;
  resolved["horizon"] = static_cast<double>(steps) * dt;
  resolved["seed"] = seed;
  resolved["replicas"] = replicas;
  resolved["points"] = points;
  resolved["z_max"] = z_max;
  resolved["min_pass"] = min_pass;

  // sampled space-time point pairs, at least two grid steps apart in time
  PointSampler sampler(seed ^ 0x706f696e74735ull);
  struct Pair {
    int i1 = 0, i2 = 0;
    Point y1{0, 0, 0}, y2{0, 0, 0};
    double c12 = 0.0, c11 = 0.0, c22 = 0.0;
    MomentAccum cov, m2, m3;
  };
  std::vector<Pair> pairs(points);
  for (Pair& p : pairs) {
    do {
      p.i1 = sampler.uniform_int(1, steps);
      p.i2 = sampler.uniform_int(1, steps);
    } while (std::abs(p.i1 - p.i2) < 2);
    for (int a = 0; a < dim; ++a) {
      p.y1[a] = sampler.uniform(-y_radius, y_radius);
      p.y2[a] = sampler.uniform(-y_radius, y_radius);
    }
    p.c12 = covariance_modesum(*basis, level, p.i1 * dt, p.i2 * dt, p.y1, p.y2);
    if (wick) {
      p.c11 = covariance_modesum(*basis, level, p.i1 * dt, p.i1 * dt, p.y1, p.y1);
      p.c22 = covariance_modesum(*basis, level, p.i2 * dt, p.i2 * dt, p.y2, p.y2);
    }
  }

  // mode values at the sampled points, one row per endpoint
  Eigen::MatrixXd phi(2 * points, modes);
  for (int j = 0; j < points; ++j) {
    for (int k = 0; k < modes; ++k) {
      phi(2 * j, k) = eval_eigenfunction(*basis, k, pairs[j].y1);
      phi(2 * j + 1, k) = eval_eigenfunction(*basis, k, pairs[j].y2);
    }
  }

  NoiseConfig noise{basis, level, seed, dt, static_cast<double>(steps) * dt};
  for (int rep = 0; rep < replicas; ++rep) {
    const StochConvPath path = sample_stoch_conv(noise, static_cast<std::uint32_t>(rep));
    for (int j = 0; j < points; ++j) {
      Pair& p = pairs[j];
      const double v1 = phi.row(2 * j).dot(path.path.coeff[p.i1]);
      const double v2 = phi.row(2 * j + 1).dot(path.path.coeff[p.i2]);
      p.cov.push(v1 * v2);
      if (wick) {
        p.m2.push((v1 * v1 - p.c11) * (v2 * v2 - p.c22));
        p.m3.push((v1 * v1 * v1 - 3.0 * p.c11 * v1) * (v2 * v2 * v2 - 3.0 * p.c22 * v2));
      }
    }
  }

  CsvTable table;
  table.header = {"t1", "t2"};
  const char* axes[3] = {"x", "y", "z"};
  for (int a = 0; a < dim; ++a) table.header.push_back(std::string("y1_") + axes[a]);
  for (int a = 0; a < dim; ++a) table.header.push_back(std::string("y2_") + axes[a]);
  if (wick) {
    for (const char* col : {"c12", "m2_exact", "m2_mean", "m2_se", "z2", "m3_exact",
                            "m3_mean", "m3_se", "z3"}) {
      table.header.push_back(col);
    }
  } else {
    for (const char* col : {"exact", "mc_mean", "mc_se", "z"}) table.header.push_back(col);
  }

  int pass2 = 0, pass3 = 0;
  double max_z2 = 0.0, max_z3 = 0.0;
  for (const Pair& p : pairs) {
    std::vector<double> row = {p.i1 * dt, p.i2 * dt};
    for (int a = 0; a < dim; ++a) row.push_back(p.y1[a]);
    for (int a = 0; a < dim; ++a) row.push_back(p.y2[a]);
    if (wick) {
      const double m2_exact = 2.0 * p.c12 * p.c12;
      const double m3_exact = 6.0 * p.c12 * p.c12 * p.c12;
      const double z2 = (p.m2.mean(replicas) - m2_exact) / p.m2.se(replicas);
      const double z3 = (p.m3.mean(replicas) - m3_exact) / p.m3.se(replicas);
      row.insert(row.end(), {p.c12, m2_exact, p.m2.mean(replicas), p.m2.se(replicas), z2,
                             m3_exact, p.m3.mean(replicas), p.m3.se(replicas), z3});
      if (std::abs(z2) <= z_max) ++pass2;
      if (std::abs(z3) <= z_max) ++pass3;
      max_z2 = std::max(max_z2, std::abs(z2));
      max_z3 = std::max(max_z3, std::abs(z3));
    } else {
      const double z = (p.cov.mean(replicas) - p.c12) / p.cov.se(replicas);
      row.insert(row.end(), {p.c12, p.cov.mean(replicas), p.cov.se(replicas), z});
      if (std::abs(z) <= z_max) ++pass2;
      max_z2 = std::max(max_z2, std::abs(z));
    }
    table.rows.push_back(row);
  }

  if (wick) {
    emit_csv(r, out_dir, "wick-moments.csv", table);
    add_metric(r, "max_abs_z2", max_z2);
    add_metric(r, "max_abs_z3", max_z3);
    add_check(r, "square_moment_pass_count", pass2, ">=", min_pass);
    add_check(r, "cube_moment_pass_count", pass3, ">=", min_pass);
  } else {
    emit_csv(r, out_dir, "covariance-check.csv", table);
    add_metric(r, "max_abs_z", max_z2);
    add_check(r, "covariance_pass_count", pass2, ">=", min_pass);
  }
}

// ---------------------------------------------------------------------------
// driver-study: driver sets across levels on common streams; median norms,
// consecutive common-stream differences, centering diagnostics.

void run_driver_study(const RunConfig& cfg, const std::string& out_dir, StudyResult& r,
                      ordered_json& resolved) {
  const int dim = require_dimension(cfg);
  const int modes = get_checked_int(cfg, "modes", 1, 4096, 16);
  const std::vector<int> levels = levels_from_config(cfg, {4, 6, 8});
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const int replicas = get_checked_int(cfg, "replicas", 1, 100000, 4);
  const double dt = positive_double(cfg, "dt", 0.05);
  const double horizon = positive_double(cfg, "horizon", 0.3);
  const C2Quad quad = quad_from_config(cfg);
  DriverOptions opts;
  opts.eps_exponent = positive_double(cfg, "eps", 0.05);
  opts.zero_cube = cfg.get_bool("zero_cube", false);
  grid_steps(dt, horizon);

  const BasisPtr basis = build_basis(dim, modes);
  resolved["dimension"] = dim;
  resolved["modes"] = modes;
  resolved["levels"] = levels;
  resolved["seed"] = seed;
  resolved["replicas"] = replicas;
  resolved["dt"] = dt;
  resolved["horizon"] = horizon;
  resolved["eps"] = opts.eps_exponent;

  const DriverStudyReport report =
      driver_convergence_study(basis, levels, seed, replicas, dt, horizon, quad, opts);

  CsvTable norms;
  norms.header = {"level"};
  for (const auto& [key, unused] : report.median_norms.front()) norms.header.push_back(key);
  for (std::size_t i = 0; i < report.levels.size(); ++i) {
    std::vector<double> row = {static_cast<double>(report.levels[i])};
    for (const auto& [key, value] : report.median_norms[i]) row.push_back(value);
    norms.rows.push_back(row);
  }
  emit_csv(r, out_dir, "driver-study_norms.csv", norms);

  CsvTable diffs;
  diffs.header = {"level_lo", "level_hi", "median_diff"};
  for (std::size_t i = 0; i + 1 < report.levels.size(); ++i) {
    diffs.rows.push_back({static_cast<double>(report.levels[i]),
                          static_cast<double>(report.levels[i + 1]),
                          report.median_diffs[i]});
  }
  emit_csv(r, out_dir, "driver-study_diffs.csv", diffs);

  add_metric(r, "rate", report.rate);
  add_metric(r, "centered_mean", report.centered_mean);
  add_metric(r, "centered_se", report.centered_se);
  add_metric(r, "gap_mean", report.gap_mean);
  add_metric(r, "gap_se", report.gap_se);
  add_metric(r, "wick2_z", report.wick2_z);
  // a trend claim needs at least two consecutive differences
  if (report.median_diffs.size() >= 2) {
    add_check(r, "median_diffs_decreasing", report.monotone ? 1.0 : 0.0, ">=", 1.0);
  }
}

// ---------------------------------------------------------------------------
// solve: one run of the direct scheme, the auxiliary system, or both on
// shared streams; emits the norm time series and, on request, binary paths.

void run_solve(const RunConfig& cfg, const std::string& out_dir, StudyResult& r,
               ordered_json& resolved) {
  const int dim = require_dimension(cfg);
  const int modes = get_checked_int(cfg, "modes", 1, 4096, 16);
  const int level = level_from_config(cfg, 4);
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const std::uint32_t replica = static_cast<std::uint32_t>(cfg.get_int_in("replica", 0, 1u << 30, 0));
  const double dt = positive_double(cfg, "dt", 1e-2);
  const double horizon = positive_double(cfg, "horizon", 1.0);
  const std::string mode_name = cfg.get_string("mode", "both");
  const C2Quad quad = quad_from_config(cfg);
  const int steps = grid_steps(dt, horizon);

  SolveMode mode;
  if (mode_name == "direct") {
    mode = SolveMode::Direct;
  } else if (mode_name == "auxiliary") {
    mode = SolveMode::Auxiliary;
  } else if (mode_name == "both") {
    mode = SolveMode::Both;
  } else {
    throw ConfigError("key \"mode\": expected direct, auxiliary, or both, got \"" +
                      mode_name + "\"");
  }

  const BasisPtr basis = build_basis(dim, modes);
  SolveConfig sc;
  sc.x0 = x0_from_config(cfg, basis);
  sc.level = level;
  sc.dt = dt;
  sc.horizon = static_cast<double>(steps) * dt;
  sc.picard_iters = get_checked_int(cfg, "picard_iters", 1, 500, sc.picard_iters);
  sc.picard_tol = positive_double(cfg, "picard_tol", sc.picard_tol);
  sc.blowup_threshold = positive_double(cfg, "blowup_threshold", sc.blowup_threshold);
  sc.mode = mode;
  sc.with_cubic = cfg.get_bool("with_cubic", true);
  sc.with_renorm = cfg.get_bool("with_renorm", true);
  sc.eps_exponent = positive_double(cfg, "eps", sc.eps_exponent);
  sc.n_young = get_checked_int(cfg, "n_young", 1, 16, sc.n_young);

  resolved["dimension"] = dim;
  resolved["modes"] = modes;
  resolved["level"] = level;
  resolved["seed"] = seed;
  resolved["replica"] = replica;
  resolved["dt"] = dt;
  resolved["horizon"] = sc.horizon;
  resolved["mode"] = mode_name;
  resolved["eps"] = sc.eps_exponent;
  resolved["n_young"] = sc.n_young;

  const NoiseConfig noise{basis, level, seed, dt, sc.horizon};
  const StochConvPath psi = sample_stoch_conv(noise, replica);

  // the direct scheme without the counterterm forcing never reads the table,
  // so skip the quadrature work in that one case
  RenormTable table;
  const bool need_table = mode != SolveMode::Direct || sc.with_renorm;
  if (need_table) {
    table = driver_renorm_table(basis, level, psi.path.times, quad);
  } else {
    const auto& pair_nodes = basis->grid(GridKind::Pair).nodes;
    const auto& cube_nodes = basis->grid(GridKind::Cube).nodes;
    table.level = level;
    table.dimension = dim;
    table.times = psi.path.times;
    table.points = pair_nodes;
    table.points.insert(table.points.end(), cube_nodes.begin(), cube_nodes.end());
    const auto nt = static_cast<Eigen::Index>(table.times.size());
    const auto np = static_cast<Eigen::Index>(table.points.size());
    table.c1 = Eigen::MatrixXd::Zero(nt, np);
    table.c2 = Eigen::MatrixXd::Zero(nt, np);
    table.combined = Eigen::MatrixXd::Zero(nt, np);
  }

  SolutionBundle bundle;
  if (mode == SolveMode::Direct) {
    bundle = solve_direct(sc, psi, table);
  } else {
    DriverOptions opts;
    opts.eps_exponent = sc.eps_exponent;
    opts.zero_cube = cfg.get_bool("zero_cube", false);
    const DriverSet z = build_driver_set(psi, table, opts);
    if (mode == SolveMode::Auxiliary) {
      bundle = solve_auxiliary(sc.x0, zero_field(basis), z, sc);
    } else {
      bundle = solve_both(sc, z, table);
    }
  }

  // time series of block norms at the common display exponent -1/2 - eps
  const NormSpec display =
      norm_spec(*basis, -0.5 - sc.eps_exponent, kInfExponent, kInfExponent);
  const QuadratureGrid& cube = basis->grid(GridKind::Cube);
  CsvTable series;
  std::size_t rows = 0;
  const bool have_x = !bundle.x.times.empty();
  const bool have_v = !bundle.v.times.empty();
  if (mode == SolveMode::Direct) {
    series.header = {"t", "x_norm", "x_proxy"};
    rows = bundle.x.times.size();
  } else if (mode == SolveMode::Auxiliary) {
    series.header = {"t", "v_norm", "w_norm"};
    rows = bundle.v.times.size();
  } else {
    series.header = {"t", "x_norm", "x_proxy", "v_norm", "w_norm", "residual"};
    rows = bundle.residual_norms.size();
  }
  for (std::size_t m = 0; m < rows; ++m) {
    std::vector<double> row;
    if (have_x && m < bundle.x.times.size()) {
      row.push_back(bundle.x.times[m]);
    } else {
      row.push_back(bundle.v.times[m]);
    }
    if (have_x) {
      row.push_back(besov_norm(bundle.x.at(m), display));
      row.push_back((cube.phi * bundle.x.coeff[m]).cwiseAbs().maxCoeff());
    }
    if (have_v) {
      row.push_back(besov_norm(bundle.v.at(m), display));
      row.push_back(besov_norm(bundle.w.at(m), display));
    }
    if (mode == SolveMode::Both) row.push_back(bundle.residual_norms[m]);
    series.rows.push_back(row);
  }
  emit_csv(r, out_dir, "solve.csv", series);

  resolved["stop_reason"] = bundle.stop_reason == StopReason::Blowup ? "blowup" : "horizon";
  add_metric(r, "t_stop", bundle.t_stop);
  add_metric(r, "steps_taken", bundle.steps_taken);
  if (mode != SolveMode::Direct) {
    add_metric(r, "sweeps", bundle.sweeps);
    add_metric(r, "young_gap", bundle.young_gap);
    add_metric(r, "young_cauchy", bundle.young_cauchy);
    if (!bundle.sweep_diffs.empty()) {
      add_metric(r, "last_sweep_diff", bundle.sweep_diffs.back());
    }
  }
  if (mode == SolveMode::Both) {
    const ResidualReport res = reconstruct_and_compare(bundle);
    add_metric(r, "max_residual", res.max_residual);
    add_metric(r, "t0_residual", res.t0_residual);
    if (cfg.has("residual_max")) {
      add_check(r, "reconstruction_residual", res.max_residual, "<=",
                cfg.get_double("residual_max"));
    }
  }
  if (cfg.get_bool("expect_horizon", false)) {
    add_check(r, "reached_horizon",
              bundle.stop_reason == StopReason::Horizon ? 1.0 : 0.0, ">=", 1.0);
  }

  if (cfg.get_bool("save_paths", false)) {
    PathHeader header;
    header.dimension = dim;
    header.modes = modes;
    header.level = level;
    header.seed = seed;
    header.replica = replica;
    header.dt = dt;
    const std::pair<const char*, const FieldPath*> named[] = {
        {"x", &bundle.x},
        {"v", &bundle.v},
        {"w", &bundle.w},
        {"reconstructed", &bundle.reconstructed}};
    for (const auto& [name, path] : named) {
      if (path->times.empty()) continue;
      header.kind = name;
      save_field_path(out_dir + "/solve_" + name + ".bin", header, *path);
    }
  }
}

// ---------------------------------------------------------------------------
// reconcile: reconstruction residual of the two formulations under
// dt-halving, with the fitted order.

void run_reconcile(const RunConfig& cfg, const std::string& out_dir, StudyResult& r,
                   ordered_json& resolved) {
  const int dim = require_dimension(cfg);
  const int modes = get_checked_int(cfg, "modes", 1, 4096, 24);
  const int level = level_from_config(cfg, 4);
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const std::uint32_t replica = static_cast<std::uint32_t>(cfg.get_int_in("replica", 0, 1u << 30, 0));
  const double dt = positive_double(cfg, "dt", 0.05);
  const int halvings = get_checked_int(cfg, "halvings", 2, 8, 3);
  const double horizon = positive_double(cfg, "horizon", 0.2);
  const double order_min = cfg.get_double("order_min", 0.8);
  const C2Quad quad = quad_from_config(cfg);
  DriverOptions opts;
  opts.eps_exponent = positive_double(cfg, "eps", 0.05);
  grid_steps(dt, horizon);

  const BasisPtr basis = build_basis(dim, modes);
  const std::vector<double> fallback_x0 = {0.2};
  Field x0 = zero_field(basis);
  {
    const std::vector<double> coeffs = cfg.get_double_list("x0", fallback_x0);
    if (static_cast<int>(coeffs.size()) > basis->mode_count()) {
      throw ConfigError("key \"x0\": more coefficients than basis modes");
    }
    for (std::size_t k = 0; k < coeffs.size(); ++k) x0.coeff[static_cast<int>(k)] = coeffs[k];
  }

  resolved["dimension"] = dim;
  resolved["modes"] = modes;
  resolved["level"] = level;
  resolved["seed"] = seed;
  resolved["replica"] = replica;
  resolved["dt"] = dt;
  resolved["halvings"] = halvings;
  resolved["horizon"] = horizon;

  const ReconcileReport report = reconciliation_order_study(
      basis, level, seed, replica, x0, dt, halvings, horizon, quad, opts);

  CsvTable table;
  table.header = {"dt", "max_residual"};
  for (std::size_t i = 0; i < report.dts.size(); ++i) {
    table.rows.push_back({report.dts[i], report.max_residuals[i]});
  }
  emit_csv(r, out_dir, "reconcile.csv", table);

  add_metric(r, "order", report.order);
  add_check(r, "residuals_decreasing", strictly_decreasing(report.max_residuals) ? 1.0 : 0.0,
            ">=", 1.0);
  add_check(r, "order_min", report.order, ">=", order_min);
}

// ---------------------------------------------------------------------------
// converge: direct-scheme Cauchy trend across regularization levels plus the
// regularity-gain diagnostic of the remainder X - psi + big_psi.

void run_converge(const RunConfig& cfg, const std::string& out_dir, StudyResult& r,
                  ordered_json& resolved) {
  const int dim = require_dimension(cfg);
  const int modes = get_checked_int(cfg, "modes", 1, 4096, 12);
  const std::vector<int> levels = levels_from_config(cfg, {3, 5, 7});
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const int replicas = get_checked_int(cfg, "replicas", 1, 100000, 4);
  const double dt = positive_double(cfg, "dt", 0.05);
  const double horizon = positive_double(cfg, "horizon", 0.3);
  const double eta = positive_double(cfg, "eta", 0.05);
  const C2Quad quad = quad_from_config(cfg);
  grid_steps(dt, horizon);

  const BasisPtr basis = build_basis(dim, modes);
  const Field x0 = x0_from_config(cfg, basis);

  resolved["dimension"] = dim;
  resolved["modes"] = modes;
  resolved["levels"] = levels;
  resolved["seed"] = seed;
  resolved["replicas"] = replicas;
  resolved["dt"] = dt;
  resolved["horizon"] = horizon;
  resolved["eta"] = eta;

  const SolveStudyReport report =
      solution_convergence_study(basis, levels, seed, replicas, x0, dt, horizon, quad, eta);

  CsvTable per_level;
  per_level.header = {"level", "remainder_half", "raw_half", "raw_minus_half"};
  for (std::size_t i = 0; i < report.levels.size(); ++i) {
    per_level.rows.push_back({static_cast<double>(report.levels[i]),
                              report.remainder_half[i], report.raw_half[i],
                              report.raw_minus_half[i]});
  }
  emit_csv(r, out_dir, "converge_levels.csv", per_level);

  CsvTable diffs;
  diffs.header = {"level_lo", "level_hi", "median_diff"};
  for (std::size_t i = 0; i + 1 < report.levels.size(); ++i) {
    diffs.rows.push_back({static_cast<double>(report.levels[i]),
                          static_cast<double>(report.levels[i + 1]),
                          report.median_diffs[i]});
  }
  emit_csv(r, out_dir, "converge_diffs.csv", diffs);

  if (report.median_diffs.size() >= 2) {
    add_check(r, "median_diffs_decreasing", report.monotone ? 1.0 : 0.0, ">=", 1.0);
  }
  if (cfg.has("remainder_max")) {
    const double worst =
        *std::max_element(report.remainder_half.begin(), report.remainder_half.end());
    add_check(r, "remainder_half_bounded", worst, "<=", cfg.get_double("remainder_max"));
  }
}

void write_summary(const std::string& path, const std::string& study,
                   const RunConfig& cfg, const StudyResult& r,
                   const ordered_json& resolved) {
  ordered_json j;
  j["study"] = study;
  j["origin"] = cfg.origin();
  ordered_json echo;
  for (const auto& [key, entry] : cfg.entries()) echo[key] = entry.value;
  j["config"] = echo;
  j["resolved"] = resolved;
  j["tables"] = r.tables;
  ordered_json metrics;
  for (const MetricRecord& m : r.metrics) metrics[m.name] = m.value;
  j["metrics"] = metrics;
  ordered_json checks = ordered_json::array();
  for (const CheckRecord& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"value", c.value},
                      {"op", c.op},
                      {"bound", c.bound},
                      {"pass", c.pass}});
  }
  j["checks"] = checks;
  j["pass"] = r.pass;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open \"" + path + "\" for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for \"" + path + "\"");
}

}  // namespace

const std::vector<std::string>& study_names() {
  static const std::vector<std::string> names = {
      "renorm-study", "covariance-check", "wick-moments", "driver-study",
      "solve",        "reconcile",        "converge"};
  return names;
}

StudyResult run_study(const std::string& study, const RunConfig& config,
                      const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory \"" + out_dir + "\": " + ec.message());
  }

  StudyResult result;
  result.study = study;
  ordered_json resolved;
  if (study == "renorm-study") {
    run_renorm(config, out_dir, result, resolved);
  } else if (study == "covariance-check") {
    run_gauss_moments(config, out_dir, result, resolved, false);
  } else if (study == "wick-moments") {
    run_gauss_moments(config, out_dir, result, resolved, true);
  } else if (study == "driver-study") {
    run_driver_study(config, out_dir, result, resolved);
  } else if (study == "solve") {
    run_solve(config, out_dir, result, resolved);
  } else if (study == "reconcile") {
    run_reconcile(config, out_dir, result, resolved);
  } else if (study == "converge") {
    run_converge(config, out_dir, result, resolved);
  } else {
    std::string known;
    for (const std::string& name : study_names()) {
      if (!known.empty()) known += ", ";
      known += name;
    }
    throw ConfigError("unknown study \"" + study + "\"; expected one of: " + known);
  }

  result.pass = true;
  for (const CheckRecord& c : result.checks) result.pass = result.pass && c.pass;
  result.summary_file = out_dir + "/" + study + "_summary.json";
  write_summary(result.summary_file, study, config, result, resolved);
  return result;
}

void verify_summary(const std::string& summary_file) {
  std::ifstream in(summary_file, std::ios::binary);
  if (!in) throw IoError("cannot open summary \"" + summary_file + "\"");
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("summary \"" + summary_file + "\" is not valid JSON: " + e.what());
  }
  if (!j.contains("checks") || !j["checks"].is_array() || !j.contains("pass")) {
    throw IoError("summary \"" + summary_file + "\" lacks the checks/pass records");
  }
  bool all = true;
  for (const auto& c : j["checks"]) {
    if (!c.contains("name") || !c.contains("value") || !c.contains("op") ||
        !c.contains("bound") || !c.contains("pass")) {
      throw IoError("summary \"" + summary_file + "\" has an incomplete check entry");
    }
    const std::string name = c["name"].get<std::string>();
    const double value = c["value"].get<double>();
    const std::string op = c["op"].get<std::string>();
    const double bound = c["bound"].get<double>();
    const bool recorded = c["pass"].get<bool>();
    const bool now = check_op(value, op, bound);
    if (!now) {
      throw NumericalError("verify: check \"" + name + "\" fails: " + sci(value) + " " +
                           op + " " + sci(bound) + " does not hold");
    }
    if (!recorded) {
      throw NumericalError("verify: check \"" + name +
                           "\" holds but is recorded as failed");
    }
    all = all && now;
  }
  if (j["pass"].get<bool>() != all) {
    throw NumericalError("verify: summary pass flag disagrees with its checks");
  }
}

}  // namespace hphi4
