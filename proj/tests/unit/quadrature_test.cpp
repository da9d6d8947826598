#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "mest/numeric.hpp"
#include "mest/quadrature.hpp"

namespace mest {
namespace {

TEST(GaussHermiteRule, WeightsPositiveAndNormalized) {
  for (int n : {21, 51, 101, 151}) {
    const GaussHermiteRule r = GaussHermiteRule::make(n);
    ASSERT_EQ(r.size(), static_cast<std::size_t>(n));
    for (double w : r.weights) EXPECT_GT(w, 0.0);
    EXPECT_NEAR(std::accumulate(r.weights.begin(), r.weights.end(), 0.0), 1.0, 1e-12) << n;
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LT(r.nodes[i - 1], r.nodes[i]);
  }
}

TEST(GaussHermiteRule, IntegratesGaussianMomentsExactly) {
  const GaussHermiteRule r = GaussHermiteRule::make(51);
  double double_factorial = 1.0;  // (k-1)!!
  for (int k = 0; k <= 20; k += 2) {
    if (k > 0) double_factorial *= (k - 1);
    double sum = 0.0, odd = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      sum += r.weights[i] * std::pow(r.nodes[i], k);
      odd += r.weights[i] * std::pow(r.nodes[i], k + 1);
    }
    EXPECT_NEAR(sum / double_factorial, 1.0, 1e-11) << "moment " << k;
    EXPECT_NEAR(odd, 0.0, 1e-9 * double_factorial) << "moment " << k + 1;
  }
}

TEST(QuadratureGrid, RejectsTooFewNodes) {
  EXPECT_THROW(QuadratureGrid(20), InvalidArgument);
  EXPECT_NO_THROW(QuadratureGrid(21));
  QuadratureSettings s;
  s.poisson_tail_tol = 0.0;
  EXPECT_THROW(QuadratureGrid{s}, InvalidArgument);
}

TEST(ExpectGU, Examples) {
  const QuadratureGrid grid(101);
  EXPECT_NEAR(expect_gu([](double, double) { return 1.0; }, grid), 1.0, 1e-12);
  EXPECT_NEAR(expect_gu([](double g, double u) { return (g + 2.0 * u) * (g + 2.0 * u); }, grid), 5.0, 1e-10);
  EXPECT_NEAR(expect_gu([](double g, double) { return g > 0.0 ? g * g : 0.0; }, grid), 0.5, 1e-10);
}

TEST(ExpectGU, ReportsNonFiniteIntegrand) {
  const QuadratureGrid grid(21);
  EXPECT_THROW(expect_gu([](double g, double) { return g > 1.0 ? std::nan("") : 0.0; }, grid),
               NonFiniteIntegrand);
}

TEST(ExpectYGivenU, Examples) {
  const auto y = [](Response v) { return static_cast<double>(v); };
  EXPECT_NEAR(expect_y_given_u(ModelSpec::poisson(0.0), 0.7, y).value, 1.0, 1e-10);
  EXPECT_NEAR(expect_y_given_u(ModelSpec::binomial(6, 0.0), -1.3, y).value, 3.0, 1e-12);
  const auto one = [](Response) { return 1.0; };
  for (const auto& m : {ModelSpec::logistic(2.0), ModelSpec::binomial(5, 1.0), ModelSpec::poisson(1.0)})
    for (double u : {-3.0, 0.0, 2.0}) {
      const ConditionalExpectation e = expect_y_given_u(m, u, one);
      EXPECT_NEAR(e.value + e.tail_mass, 1.0, 1e-12);
    }
}

TEST(ExpectGUY, Examples) {
  const QuadratureGrid grid(101);
  const ModelSpec pois = ModelSpec::poisson(0.0);
  EXPECT_NEAR(expect_guy(pois, [](double g, double, Response) { return g * g; }, grid), 1.0, 1e-10);
  EXPECT_NEAR(expect_guy(pois,
                         [&](double, double, Response y) {
                           return classify_loss(pois, y) == EventClass::Increasing ? 1.0 : 0.0;
                         },
                         grid),
              std::exp(-1.0), 1e-9);
  EXPECT_NEAR(expect_guy(ModelSpec::logistic(1.0), [](double g, double u, Response) { return u * g; }, grid),
              0.0, 1e-12);
}

TEST(ExpectGUY, EqualsExpectGUWhenIndependentOfY) {
  const QuadratureGrid grid(51);
  const auto f = [](double g, double u) { return std::cos(g) * std::exp(0.3 * u) + g * g * u * u; };
  const double ref = expect_gu(f, grid);
  for (const auto& m : {ModelSpec::logistic(1.0), ModelSpec::binomial(3, 0.5), ModelSpec::poisson(0.5)})
    EXPECT_NEAR(expect_guy(m, [&](double g, double u, Response) { return f(g, u); }, grid), ref, 1e-12);
}

TEST(ExpectGUY, AgreesWithMonteCarloWithinFourStandardErrors) {
  const QuadratureGrid grid(101);
  const ModelSpec m = ModelSpec::poisson(0.5);
  const auto f = [](double g, double u, Response y) {
    const double z = g + 0.8 * u;
    return y == 0 ? (z > 0.0 ? z * z : 0.0) : z * z;
  };
  const double quad = expect_guy(m, f, grid);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  const int draws = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double u = normal(rng), g = normal(rng);
    const double v = f(g, u, sample_response(m, u, rng));
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  EXPECT_NEAR(quad, mean, 4.0 * se);
}

TEST(IntegrateAdaptive, SmoothAndKinkedIntegrands) {
  const auto r = integrate_adaptive<2>(
      [](double x, std::array<double, 2>& out) {
        out[0] = std::exp(x);
        out[1] = std::abs(x - 0.3);
      },
      -1.0, 2.0);
  EXPECT_NEAR(r[0], std::exp(2.0) - std::exp(-1.0), 1e-12);
  EXPECT_NEAR(r[1], 0.5 * 1.3 * 1.3 + 0.5 * 1.7 * 1.7, 1e-10);
}

TEST(ExpectUSmooth, AgreesWithGaussHermiteOnPolynomials) {
  const QuadratureGrid adaptive(51);
  QuadratureSettings s{51, 51};
  s.adaptive_u = false;
  const QuadratureGrid fixed(s);
  const auto f = [](double u) { return 1.0 + u * u + 0.25 * u * u * u * u; };
  EXPECT_NEAR(expect_u_smooth(f, adaptive), 2.75, 1e-12);
  EXPECT_NEAR(expect_u_smooth(f, fixed), 2.75, 1e-12);
}

TEST(ExpectUSmooth, ResolvesSigmoidIntegrandsBetterThanFewNodes) {
  const QuadratureGrid adaptive(21);
  const auto f = [](double u) { return u * u * numeric::sigmoid(4.0 * u); };
  // E[U^2 sigmoid(4U)] = 1/2 by the symmetry sigmoid(x) + sigmoid(-x) = 1.
  EXPECT_NEAR(expect_u_smooth(f, adaptive), 0.5, 1e-13);
}

}  // namespace
}  // namespace mest
