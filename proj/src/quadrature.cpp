#include "hphi4/quadrature.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hphi4/errors.hpp"

namespace hphi4 {

namespace {

constexpr double kSqrtPi = 1.7724538509055160272981674833411;

// Nodes from the Hermite Jacobi matrix (Golub-Welsch), polished by Newton
// iteration on the degree-N Hermite function, plus the compensated weights
// w_i e^{y_i^2}. The eigensolver's eigenvector components bottom out near
// machine epsilon at the edge nodes, so weights are instead formed through
// the Christoffel identity w_i e^{y_i^2} = 1 / sum_{k<N} phi_k(y_i)^2,
// which only involves O(1) Hermite-function values.
void hermite_nodes_flatweights(int order, std::vector<double>& nodes,
                               std::vector<double>& flat_weights) {
  if (order < 1) throw UsageError("gauss_hermite: order must be >= 1");
  nodes.resize(order);
  flat_weights.resize(order);
  if (order == 1) {
    nodes[0] = 0.0;
    flat_weights[0] = kSqrtPi;
    return;
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order - 1);
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericalError("gauss_hermite: eigensolver failed");
  for (int i = 0; i < order; ++i) nodes[i] = es.eigenvalues()[i];

  constexpr double kPiQuarter = 0.75112554446494248285870300477623;  // pi^{-1/4}
  // phi_0 .. phi_N at y; returns phi_N, phi_{N-1} and sum_{k<N} phi_k^2.
  // For |y| beyond ~38.6 the seed e^{-y^2/2} underflows double range, so the
  // sequence is carried at a power-of-two offset (stored = true * 2^shift)
  // and read out through ldexp, which scales exactly; the contributions still
  // below double range are genuinely negligible against the final sum.
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  auto scan = [&](double y, double& phiN, double& phiNm1, double& sumsq) {
    const double log0 = -0.5 * y * y;
    int shift = 0;
    double a;
    if (log0 < -600.0) {
      shift = static_cast<int>((-600.0 - log0) / kLn2Hi) + 1;
      a = kPiQuarter * std::exp((log0 + shift * kLn2Hi) + shift * kLn2Lo);
    } else {
      a = kPiQuarter * std::exp(log0);
    }
    double b = std::sqrt(2.0) * y * a;
    const double t0 = std::ldexp(a, -shift);
    sumsq = t0 * t0;
    for (int k = 1; k < order; ++k) {
      const double tk = std::ldexp(b, -shift);
      sumsq += tk * tk;
      const double c = std::sqrt(2.0 / (k + 1)) * y * b -
                       std::sqrt(double(k) / (k + 1)) * a;
      a = b;
      b = c;
      if (shift > 0 && std::abs(b) > 1e140) {
        const int down = std::min(shift, 466);  // 2^466 ~ 1.9e140
        a = std::ldexp(a, -down);
        b = std::ldexp(b, -down);
        shift -= down;
      }
    }
    phiNm1 = std::ldexp(a, -shift);
    phiN = std::ldexp(b, -shift);
  };
  for (int i = 0; i < order; ++i) {
    double y = nodes[i];
    for (int it = 0; it < 2; ++it) {  // Newton on phi_N(y) = 0
      double pN, pNm1, s;
      scan(y, pN, pNm1, s);
      const double deriv = std::sqrt(2.0 * order) * pNm1 - y * pN;
      if (deriv != 0.0) y -= pN / deriv;
    }
    nodes[i] = y;
  }
  // Enforce exact symmetry so parity arguments hold to the last bit.
  for (int i = 0, j = order - 1; i < j; ++i, --j) {
    const double x = 0.5 * (nodes[j] - nodes[i]);
    nodes[i] = -x;
    nodes[j] = x;
  }
  if (order % 2 == 1) nodes[order / 2] = 0.0;
  for (int i = 0; i < order; ++i) {
    double pN, pNm1, s;
    scan(nodes[i], pN, pNm1, s);
    flat_weights[i] = 1.0 / s;
  }
  for (int i = 0, j = order - 1; i < j; ++i, --j) {
    const double w = 0.5 * (flat_weights[i] + flat_weights[j]);
    flat_weights[i] = flat_weights[j] = w;
  }
}

}  // namespace

GaussHermite1d gauss_hermite(int order) {
  std::vector<double> x, fw;
  hermite_nodes_flatweights(order, x, fw);
  GaussHermite1d rule;
  rule.nodes = x;
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) rule.weights[i] = fw[i] * std::exp(-x[i] * x[i]);
  return rule;
}

GaussHermite1d gauss_hermite_flattened(int order, double alpha) {
  if (!(alpha > 0.0)) throw UsageError("gauss_hermite_flattened: alpha must be > 0");
  std::vector<double> x, fw;
  hermite_nodes_flatweights(order, x, fw);
  GaussHermite1d rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const double s = 1.0 / std::sqrt(alpha);
  for (int i = 0; i < order; ++i) {
    rule.nodes[i] = x[i] * s;
    rule.weights[i] = fw[i] * s;
  }
  return rule;
}

namespace {

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
constexpr double kXgk[8] = {
    0.9914553711208126392068547, 0.9491079123427585245261897,
    0.8648644233597690727897128, 0.7415311855993944398638648,
    0.5860872354676911302941448, 0.4058451513773971669066064,
    0.2077849550078984676006894, 0.0};
constexpr double kWgk[8] = {
    0.0229353220105292249637320, 0.0630920926299785532907007,
    0.1047900103222501838398763, 0.1406532597155259187451896,
    0.1690047266392679028265834, 0.1903505780647854099132564,
    0.2044329400752988924141620, 0.2094821410847278280129992};
constexpr double kWg[4] = {
    0.1294849661688696932706114, 0.2797053914892766679014678,
    0.3818300505051189449503698, 0.4179591836734693877551020};

struct PanelEval {
  double kronrod;
  double gauss;
};

PanelEval gk15_panel(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double resk = kWgk[7] * fc;
  double resg = kWg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double x = h * kXgk[i];
    const double fsum = f(c - x) + f(c + x);
    resk += kWgk[i] * fsum;
    if (i % 2 == 1) resg += kWg[i / 2] * fsum;
  }
  return {resk * h, resg * h};
}

// Globally adaptive strategy: keep a worst-first queue of panels and bisect
// the one with the largest error until the summed estimate meets the budget.
// This stays linear in the panel count even for endpoint singularities, where
// per-panel tolerance halving can blow up exponentially.
void gk15_adaptive(const std::function<double(double)>& f, double a, double b,
                   double tol, int max_panels, QuadResult& out) {
  struct Panel {
    double a, b, value, error;
  };
  auto worse = [](const Panel& p, const Panel& q) {
    if (p.error != q.error) return p.error < q.error;
    return p.a > q.a;  // deterministic tie-break
  };
  std::vector<Panel> heap;
  auto push = [&](double lo, double hi) {
    const auto e = gk15_panel(f, lo, hi);
    const double perr = std::abs(e.kronrod - e.gauss);
    heap.push_back({lo, hi, e.kronrod, perr});
    std::push_heap(heap.begin(), heap.end(), worse);
    return perr;
  };
  double total_error = push(a, b);
  while (total_error > tol && static_cast<int>(heap.size()) < max_panels) {
    std::pop_heap(heap.begin(), heap.end(), worse);
    const Panel p = heap.back();
    heap.pop_back();
    total_error -= p.error;
    if (p.b - p.a <= std::abs(p.a) * 4e-16 + 1e-300) {
      // cannot refine further in double precision; accept the panel
      heap.push_back({p.a, p.b, p.value, 0.0});
      std::push_heap(heap.begin(), heap.end(), worse);
      continue;
    }
    const double c = 0.5 * (p.a + p.b);
    total_error += push(p.a, c);
    total_error += push(c, p.b);
  }
  double value = 0.0, err = 0.0;
  for (const auto& q : heap) {
    value += q.value;
    err += q.error;
  }
  out.value += value;
  out.error_estimate += err;
  out.panels += static_cast<int>(heap.size());
  if (err > tol) out.converged = false;
}

}  // namespace

QuadResult integrate_gk15(const std::function<double(double)>& f, double a, double b,
                          double abs_tol, int max_panels) {
  QuadResult out;
  if (a == b) return out;
  gk15_adaptive(f, a, b, abs_tol, max_panels, out);
  return out;
}

QuadResult integrate_gk15_split(const std::function<double(double)>& f, double a, double b,
                                const std::vector<double>& splits, double abs_tol,
                                int max_panels) {
  std::vector<double> pts;
  pts.push_back(a);
  for (double s : splits)
    if (s > a && s < b) pts.push_back(s);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  QuadResult out;
  const double tol_share = abs_tol / double(pts.size() - 1);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    QuadResult piece;
    gk15_adaptive(f, pts[i], pts[i + 1], tol_share, max_panels, piece);
    out.value += piece.value;
    out.error_estimate += piece.error_estimate;
    out.panels += piece.panels;
    out.converged = out.converged && piece.converged;
  }
  return out;
}

std::vector<double> geometric_breakpoints(double a, double b, double first_step) {
  std::vector<double> pts;
  if (!(first_step > 0.0)) throw UsageError("geometric_breakpoints: step must be > 0");
  double step = first_step;
  double x = a + step;
  while (x < b) {
    pts.push_back(x);
    step *= 2.0;
    x = a + step;
  }
  return pts;
}

FixedRule composite_gk15(const std::vector<double>& breakpoints, int panels_per_interval) {
  if (breakpoints.size() < 2) throw UsageError("composite_gk15: need >= 2 breakpoints");
  if (panels_per_interval < 1) throw UsageError("composite_gk15: need >= 1 panel");
  FixedRule rule;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double lo = breakpoints[i];
    const double hi = breakpoints[i + 1];
    const double ph = (hi - lo) / double(panels_per_interval);
    for (int p = 0; p < panels_per_interval; ++p) {
      const double a = lo + p * ph;
      const double c = a + 0.5 * ph;
      const double h = 0.5 * ph;
      rule.nodes.push_back(c);
      rule.weights.push_back(h * kWgk[7]);
      for (int k = 0; k < 7; ++k) {
        rule.nodes.push_back(c - h * kXgk[k]);
        rule.weights.push_back(h * kWgk[k]);
        rule.nodes.push_back(c + h * kXgk[k]);
        rule.weights.push_back(h * kWgk[k]);
      }
    }
  }
  return rule;
}

}  // namespace hphi4
