#include "hphi4/paracalc.hpp"

#include <algorithm>
#include <cmath>

#include "hphi4/errors.hpp"

namespace hphi4 {

namespace {

void check_config(const ParaConfig& cfg) {
  if (cfg.separation < cfg.resonance_width + 1)
    throw UsageError("para config: separation must exceed the resonance width");
}

// node values of every block of u on the grid, blocks[j + 1] <-> delta_j u
std::vector<Eigen::VectorXd> block_values(const Field& u, const DyadicCutoff& cutoff,
                                          const QuadratureGrid& grid, int J) {
  std::vector<Eigen::VectorXd> vals;
  vals.reserve(J + 2);
  for (int j = -1; j <= J; ++j)
    vals.push_back(inverse_transform(apply_block(u, j, cutoff), grid));
  return vals;
}

}  // namespace

std::vector<Field> block_decomposition(const Field& u, const DyadicCutoff& cutoff) {
  const int J = blocks_needed(*u.basis);
  std::vector<Field> blocks;
  blocks.reserve(J + 2);
  for (int j = -1; j <= J; ++j) blocks.push_back(apply_block(u, j, cutoff));
  return blocks;
}

Field para_lo(const Field& f, const Field& g, const ParaConfig& cfg) {
  check_config(cfg);
  require_same_basis(f, g);
  const DyadicCutoff cutoff = build_cutoff();
  const auto& grid = f.basis->grid(GridKind::Pair);
  const int J = blocks_needed(*f.basis);
  const auto vf = block_values(f, cutoff, grid, J);
  const auto vg = block_values(g, cutoff, grid, J);
  Eigen::VectorXd low = Eigen::VectorXd::Zero(grid.weights.size());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(grid.weights.size());
  for (int k = -1; k <= J; ++k) {
    const int entering = k - cfg.separation;  // grows S_{k-3} by one block
    if (entering >= -1) low += vf[entering + 1];
    if (entering >= -1) acc += low.cwiseProduct(vg[k + 1]);
  }
  return forward_transform(f.basis, grid, acc);
}

Field para_res(const Field& f, const Field& g, const ParaConfig& cfg) {
  check_config(cfg);
  require_same_basis(f, g);
  const DyadicCutoff cutoff = build_cutoff();
  const auto& grid = f.basis->grid(GridKind::Pair);
  const int J = blocks_needed(*f.basis);
  const auto vf = block_values(f, cutoff, grid, J);
  const auto vg = block_values(g, cutoff, grid, J);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(grid.weights.size());
  for (int j = -1; j <= J; ++j)
    for (int k = std::max(-1, j - cfg.resonance_width);
         k <= std::min(J, j + cfg.resonance_width); ++k)
      acc += vf[j + 1].cwiseProduct(vg[k + 1]);
  return forward_transform(f.basis, grid, acc);
}

Field para_hi(const Field& f, const Field& g, const ParaConfig& cfg) {
  return para_lo(g, f, cfg);
}

Field commutator_block(int k, const Eigen::VectorXd& f_values, const Field& g,
                       const QuadratureGrid& grid) {
  if (f_values.size() != grid.weights.size())
    throw UsageError("commutator_block: value vector does not match the grid");
  const DyadicCutoff cutoff = build_cutoff();
  auto multiply = [&](const Field& h) {
    return forward_transform(g.basis, grid,
                             f_values.cwiseProduct(inverse_transform(h, grid)));
  };
  const Field lhs = apply_block(multiply(g), k, cutoff);
  const Field rhs = multiply(apply_block(g, k, cutoff));
  return lhs - rhs;
}

Field commutator_block(int k, const Field& f, const Field& g) {
  require_same_basis(f, g);
  const auto& grid = f.basis->grid(GridKind::Pair);
  return commutator_block(k, inverse_transform(f, grid), g, grid);
}

Field commutator_para_res(const Field& f, const Field& g, const Field& h,
                          const ParaConfig& cfg) {
  require_same_basis(f, g);
  require_same_basis(g, h);
  return para_res(para_lo(f, g, cfg), h, cfg) - product_pair(f, para_res(g, h, cfg));
}

Field heat_commutator(double t, const Field& f, const Field& g, const ParaConfig& cfg) {
  if (t < 0.0) throw UsageError("heat_commutator: t must be >= 0");
  require_same_basis(f, g);
  return apply_semigroup(para_lo(f, g, cfg), t) - para_lo(f, apply_semigroup(g, t), cfg);
}

Field resonance_operator(const FourVarFunction& F, const ParaConfig& cfg) {
  check_config(cfg);
  if (!F.basis) throw UsageError("resonance_operator: null basis");
  const std::size_t rank = F.y1.size();
  if (F.y2.size() != rank || F.z1.size() != rank || F.z2.size() != rank)
    throw UsageError("resonance_operator: factor lists must have equal length");
  if (rank == 0) return zero_field(F.basis);
  for (std::size_t r = 0; r < rank; ++r) {
    require_same_basis(F.y1[r], F.y2[r]);
    require_same_basis(F.y1[r], F.z1[r]);
    require_same_basis(F.y1[r], F.z2[r]);
    if (F.y1[r].basis != F.basis)
      throw UsageError("resonance_operator: factors not on the declared basis");
  }

  // the projected output is a product of four block images against one test
  // function, so the rule must integrate five Hermite factors exactly
  const auto& basis = *F.basis;
  const int order = (5 * basis.max_degree) / 2 + 2;
  const auto grid = make_custom_grid(basis, order, 2.5);

  const DyadicCutoff cutoff = build_cutoff();
  const int J = blocks_needed(basis);
  const Eigen::Index n = grid->weights.size();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  for (std::size_t r = 0; r < rank; ++r) {
    const auto a = block_values(F.y1[r], cutoff, *grid, J);
    const auto c = block_values(F.z1[r], cutoff, *grid, J);
    const auto b = block_values(F.y2[r], cutoff, *grid, J);
    const auto e = block_values(F.z2[r], cutoff, *grid, J);
    Eigen::VectorXd first = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd second = Eigen::VectorXd::Zero(n);
    for (int i = -1; i <= J; ++i)
      for (int ip = std::max(-1, i - cfg.resonance_width);
           ip <= std::min(J, i + cfg.resonance_width); ++ip) {
        first += a[i + 1].cwiseProduct(c[ip + 1]);
        second += b[i + 1].cwiseProduct(e[ip + 1]);
      }
    acc += first.cwiseProduct(second);
  }
  return forward_transform(F.basis, *grid, acc);
}

Eigen::VectorXd path_value(const FieldPath& path, double t) {
  if (path.times.size() < 2) throw UsageError("path_value: need at least 2 time points");
  const double lo = path.times.front();
  const double hi = path.times.back();
  const double slack = 1e-12 * std::max(1.0, std::abs(hi));
  if (t < lo - slack || t > hi + slack)
    throw UsageError("path_value: time outside the stored range");
  t = std::clamp(t, lo, hi);
  const auto it = std::upper_bound(path.times.begin(), path.times.end(), t);
  std::size_t right = std::min<std::size_t>(it - path.times.begin(),
                                            path.times.size() - 1);
  if (right == 0) right = 1;
  const std::size_t left = right - 1;
  const double span = path.times[right] - path.times[left];
  const double w = span > 0.0 ? (t - path.times[left]) / span : 0.0;
  return (1.0 - w) * path.coeff[left] + w * path.coeff[right];
}

YoungResult young_mild_integral(const FieldPath& u, const FieldPath& f, double s,
                                double t, int levels) {
  if (s >= t) throw UsageError("young_mild_integral: need s < t");
  if (levels < 1) throw UsageError("young_mild_integral: need levels >= 1");
  if (u.basis != f.basis)
    throw UsageError("young_mild_integral: paths must share one basis");

  auto riemann = [&](int n) {
    const std::int64_t pieces = std::int64_t(1) << n;
    const double h = (t - s) / double(pieces);
    Field acc = zero_field(u.basis);
    for (std::int64_t i = 0; i < pieces; ++i) {
      const double ti = s + h * double(i);
      const double ti1 = (i + 1 == pieces) ? t : s + h * double(i + 1);
      const Field ui{u.basis, path_value(u, ti)};
      const Field df{f.basis, path_value(f, ti1) - path_value(f, ti)};
      acc = acc + apply_semigroup(product_pair(ui, df), t - ti);
    }
    return acc;
  };

  const Field fine = riemann(levels);
  const Field coarse = riemann(levels - 1);
  return {fine, (fine.coeff - coarse.coeff).norm()};
}

}  // namespace hphi4
