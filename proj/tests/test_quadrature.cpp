#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hphi4/errors.hpp"
#include "hphi4/quadrature.hpp"

using namespace hphi4;

namespace {
constexpr double kSqrtPi = 1.7724538509055160272981674833411;
}

TEST_CASE("gauss-hermite integrates Gaussian moments exactly") {
  const auto rule = gauss_hermite(5);
  REQUIRE(rule.nodes.size() == 5);
  double w0 = 0, w2 = 0, w8 = 0;
  for (int i = 0; i < 5; ++i) {
    w0 += rule.weights[i];
    w2 += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
    w8 += rule.weights[i] * std::pow(rule.nodes[i], 8.0);
  }
  // int x^{2n} e^{-x^2} = (2n-1)!!/2^n sqrt(pi); degree 8 <= 2*5-1
  CHECK(w0 == doctest::Approx(kSqrtPi).epsilon(1e-14));
  CHECK(w2 == doctest::Approx(0.5 * kSqrtPi).epsilon(1e-14));
  CHECK(w8 == doctest::Approx(105.0 / 16.0 * kSqrtPi).epsilon(1e-13));
  // degree 10 exceeds the exactness range and must show an error
  double w10 = 0;
  for (int i = 0; i < 5; ++i) w10 += rule.weights[i] * std::pow(rule.nodes[i], 10.0);
  CHECK(std::abs(w10 - 945.0 / 32.0 * kSqrtPi) > 1e-3);
}

TEST_CASE("gauss-hermite nodes are symmetric") {
  for (int order : {4, 9, 48}) {
    const auto rule = gauss_hermite(order);
    for (int i = 0, j = order - 1; i < j; ++i, --j) {
      CHECK(rule.nodes[i] == -rule.nodes[j]);
      CHECK(rule.weights[i] == rule.weights[j]);
    }
    if (order % 2 == 1) CHECK(rule.nodes[order / 2] == 0.0);
  }
}

TEST_CASE("flattened rule handles Gaussian-class integrands without scaling loss") {
  // int e^{-alpha x^2} dx = sqrt(pi/alpha)
  for (double alpha : {1.0, 1.5, 2.0}) {
    const auto rule = gauss_hermite_flattened(6, alpha);
    double total = 0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      total += rule.weights[i] * std::exp(-alpha * rule.nodes[i] * rule.nodes[i]);
    CHECK(total == doctest::Approx(std::sqrt(M_PI / alpha)).epsilon(1e-13));
  }
  // int x^2 e^{-1.5 x^2} dx = sqrt(pi)/ (2 * 1.5^{3/2})
  const auto rule = gauss_hermite_flattened(4, 1.5);
  double total = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    total += rule.weights[i] * rule.nodes[i] * rule.nodes[i] *
             std::exp(-1.5 * rule.nodes[i] * rule.nodes[i]);
  CHECK(total == doctest::Approx(kSqrtPi / (2.0 * std::pow(1.5, 1.5))).epsilon(1e-13));
}

TEST_CASE("flattened rule stays finite at large order") {
  // Normalization of a degree-299 Hermite function: the compensated weights
  // must not underflow even though the raw Gaussian weights do.
  const int order = 300;
  const auto rule = gauss_hermite_flattened(order, 1.0);
  std::vector<double> p0(order), p1(order);
  double s = 0;
  for (int i = 0; i < order; ++i) {
    const double y = rule.nodes[i];
    CHECK(std::isfinite(rule.weights[i]));
    CHECK(rule.weights[i] > 0.0);
    double a = std::pow(M_PI, -0.25) * std::exp(-0.5 * y * y);
    double b = std::sqrt(2.0) * y * a;
    for (int k = 1; k < 299; ++k) {
      const double c = std::sqrt(2.0 / (k + 1)) * y * b - std::sqrt(double(k) / (k + 1)) * a;
      a = b;
      b = c;
    }
    s += rule.weights[i] * b * b;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("gk15 is exact through degree 22 on a single panel") {
  for (int deg : {8, 16, 22}) {
    auto f = [deg](double x) { return std::pow(x, double(deg)); };
    const auto r = integrate_gk15(f, -1.0, 1.0, 1.0, 0);  // force single panel
    CHECK(r.value == doctest::Approx(2.0 / (deg + 1)).epsilon(1e-14));
  }
}

TEST_CASE("adaptive gk15 handles smooth and endpoint-singular integrands") {
  const auto r1 = integrate_gk15([](double x) { return std::exp(x); }, 0.0, 1.0, 1e-12);
  CHECK(r1.value == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
  CHECK(r1.converged);

  const auto r2 =
      integrate_gk15([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, 1e-10);
  CHECK(r2.value == doctest::Approx(2.0).epsilon(1e-9));

  // pre-splitting at the singular scale reaches a certified error estimate
  const auto splits = geometric_breakpoints(0.0, 1.0, 1e-8);
  const auto r3 = integrate_gk15_split([](double x) { return 1.0 / std::sqrt(x); }, 0.0,
                                       1.0, splits, 1e-10);
  CHECK(r3.value == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(r3.converged);
  CHECK(r3.error_estimate <= 1e-10);
}

TEST_CASE("geometric breakpoints double away from the left endpoint") {
  const auto pts = geometric_breakpoints(2.0, 3.0, 0.125);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0] == doctest::Approx(2.125));
  CHECK(pts[1] == doctest::Approx(2.25));
  CHECK(pts[2] == doctest::Approx(2.5));
}

TEST_CASE("fixed composite rule matches the adaptive result") {
  auto f = [](double x) { return std::cos(3.0 * x) * std::exp(-x); };
  const auto ref = integrate_gk15(f, 0.0, 4.0, 1e-13);
  const FixedRule rule = composite_gk15({0.0, 0.5, 1.0, 2.0, 4.0}, 2);
  double v = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) v += rule.weights[i] * f(rule.nodes[i]);
  CHECK(v == doctest::Approx(ref.value).epsilon(1e-12));
}

TEST_CASE("quadrature rejects invalid arguments") {
  CHECK_THROWS_AS(gauss_hermite(0), UsageError);
  CHECK_THROWS_AS(gauss_hermite_flattened(4, 0.0), UsageError);
  CHECK_THROWS_AS(composite_gk15({1.0}, 1), UsageError);
  CHECK_THROWS_AS(geometric_breakpoints(0.0, 1.0, 0.0), UsageError);
}
