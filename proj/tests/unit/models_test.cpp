#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mest/assumptions.hpp"
#include "mest/models.hpp"
#include "support/oracles.hpp"

namespace mest {
namespace {

std::vector<ModelSpec> all_models() {
  return {ModelSpec::logistic(0.0), ModelSpec::logistic(1.3), ModelSpec::binomial(1, 0.7),
          ModelSpec::binomial(4, 1.0),  ModelSpec::poisson(0.0),  ModelSpec::poisson(0.8)};
}

std::vector<Response> support_sample(const ModelSpec& m) {
  switch (m.family) {
    case Family::Logistic: return {-1, 1};
    case Family::Binomial: {
      std::vector<Response> ys;
      for (int k = 0; k <= m.q; ++k) ys.push_back(k);
      return ys;
    }
    case Family::Poisson: return {0, 1, 2, 5, 17};
  }
  return {};
}

TEST(ClassifyLoss, MatchesFamilyRules) {
  EXPECT_EQ(classify_loss(ModelSpec::logistic(0.0), -1), EventClass::Increasing);
  EXPECT_EQ(classify_loss(ModelSpec::logistic(0.0), 1), EventClass::Decreasing);
  EXPECT_EQ(classify_loss(ModelSpec::binomial(4, 0.0), 2), EventClass::Coercive);
  EXPECT_EQ(classify_loss(ModelSpec::binomial(4, 0.0), 0), EventClass::Increasing);
  EXPECT_EQ(classify_loss(ModelSpec::binomial(4, 0.0), 4), EventClass::Decreasing);
  EXPECT_EQ(classify_loss(ModelSpec::poisson(0.0), 0), EventClass::Increasing);
  EXPECT_EQ(classify_loss(ModelSpec::poisson(0.0), 3), EventClass::Coercive);
}

TEST(ClassifyLoss, RejectsResponsesOutsideSupport) {
  EXPECT_THROW(classify_loss(ModelSpec::logistic(0.0), 0), UnsupportedResponse);
  EXPECT_THROW(classify_loss(ModelSpec::binomial(3, 0.0), 4), UnsupportedResponse);
  EXPECT_THROW(classify_loss(ModelSpec::binomial(3, 0.0), -1), UnsupportedResponse);
  EXPECT_THROW(classify_loss(ModelSpec::poisson(0.0), -2), UnsupportedResponse);
  EXPECT_THROW(loss_value(ModelSpec::poisson(0.0), -1, 0.0), UnsupportedResponse);
}

TEST(ModelSpec, ValidatesParameters) {
  EXPECT_THROW(ModelSpec::logistic(-0.1).validate(), InvalidArgument);
  EXPECT_THROW(ModelSpec::binomial(0, 1.0).validate(), InvalidArgument);
  EXPECT_THROW(ModelSpec::poisson(std::nan("")).validate(), InvalidArgument);
  EXPECT_NO_THROW(ModelSpec::binomial(1, 0.0).validate());
  EXPECT_EQ(parse_family("poisson"), Family::Poisson);
  EXPECT_EQ(family_name(Family::Binomial), "binomial");
  EXPECT_THROW(parse_family("gamma"), InvalidArgument);
}

TEST(LossValue, KnownValuesAtZero) {
  EXPECT_NEAR(loss_value(ModelSpec::logistic(0.0), 1, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_value(ModelSpec::poisson(0.0), 3, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(loss_deriv(ModelSpec::poisson(0.0), Response{3}, 0.0), -2.0, 1e-15);
  EXPECT_NEAR(loss_value(ModelSpec::binomial(2, 0.0), 1, 0.0), 2.0 * std::log(2.0), 1e-15);
}

TEST(LossValue, StableForLargeArguments) {
  for (const auto& m : {ModelSpec::logistic(0.0), ModelSpec::binomial(3, 0.0)})
    for (Response y : support_sample(m))
      for (double t : {-700.0, -300.0, 300.0, 700.0}) {
        EXPECT_TRUE(std::isfinite(loss_value(m, y, t))) << describe(m) << " y=" << y << " t=" << t;
        EXPECT_TRUE(std::isfinite(loss_deriv(m, y, t)));
      }
  EXPECT_NEAR(loss_value(ModelSpec::logistic(0.0), 1, -700.0), 700.0, 1e-9);
  EXPECT_NEAR(loss_value(ModelSpec::logistic(0.0), 1, 700.0), 0.0, 1e-300);
}

TEST(LossDeriv, MatchesIndependentFormulaAndFiniteDifference) {
  for (const auto& m : all_models())
    for (Response y : support_sample(m))
      for (double t = -6.0; t <= 6.0; t += 0.37) {
        const double d = loss_deriv(m, y, t);
        EXPECT_NEAR(d, oracle::loss_slope(m, static_cast<double>(y), t), 1e-12 * (1.0 + std::abs(d)));
        const double h = 1e-5;
        const double fd = (loss_value(m, y, t + h) - loss_value(m, y, t - h)) / (2.0 * h);
        EXPECT_NEAR(d, fd, 1e-6 * (1.0 + std::abs(d)));
      }
}

TEST(LossDeriv, StrictlyIncreasing) {
  for (const auto& m : all_models())
    for (Response y : support_sample(m)) {
      double prev = loss_deriv(m, y, -30.0);
      for (double t = -29.5; t <= 30.0; t += 0.5) {
        const double d = loss_deriv(m, y, t);
        EXPECT_GT(d, prev) << describe(m) << " y=" << y << " t=" << t;
        prev = d;
      }
    }
}

TEST(ClassifyLoss, AgreesWithLossShape) {
  for (const auto& m : all_models())
    for (Response y : support_sample(m)) {
      switch (classify_loss(m, y)) {
        case EventClass::Coercive: {
          double lowest = loss_value(m, y, -40.0);
          for (double t = -40.0; t <= 40.0; t += 0.05) lowest = std::min(lowest, loss_value(m, y, t));
          EXPECT_GT(loss_value(m, y, -40.0), lowest + 1.0);
          EXPECT_GT(loss_value(m, y, 40.0), lowest + 1.0);
          break;
        }
        case EventClass::Increasing:
          for (double t = -30.0; t <= 30.0; t += 0.25) EXPECT_GT(loss_deriv(m, y, t), 0.0);
          break;
        case EventClass::Decreasing:
          for (double t = -30.0; t <= 30.0; t += 0.25) EXPECT_LT(loss_deriv(m, y, t), 0.0);
          break;
      }
    }
}

TEST(ClassProbs, NullExamples) {
  const ClassProbs l = class_probs_given_u(ModelSpec::logistic(0.0), 1.7);
  EXPECT_DOUBLE_EQ(l.coercive, 0.0);
  EXPECT_DOUBLE_EQ(l.increasing, 0.5);
  EXPECT_DOUBLE_EQ(l.decreasing, 0.5);
  for (double u : {-3.0, 0.0, 2.5}) {
    const ClassProbs p = class_probs_given_u(ModelSpec::poisson(0.0), u);
    EXPECT_NEAR(p.coercive, 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(p.increasing, std::exp(-1.0), 1e-15);
    EXPECT_DOUBLE_EQ(p.decreasing, 0.0);
    const ClassProbs b = class_probs_given_u(ModelSpec::binomial(1, 0.0), u);
    EXPECT_NEAR(b.coercive, 0.0, 1e-15);
    EXPECT_NEAR(b.increasing, 0.5, 1e-15);
    EXPECT_NEAR(b.decreasing, 0.5, 1e-15);
  }
}

TEST(ClassProbs, FormAProbabilityVector) {
  for (const auto& m : all_models())
    for (double u = -12.0; u <= 12.0; u += 0.3) {
      const ClassProbs p = class_probs_given_u(m, u);
      EXPECT_NEAR(p.coercive + p.increasing + p.decreasing, 1.0, 1e-12);
      for (double v : {p.coercive, p.increasing, p.decreasing}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
}

TEST(ClassProbs, SingleTrialBinomialMatchesLogistic) {
  for (double kappa : {0.0, 0.5, 2.0})
    for (double u = -8.0; u <= 8.0; u += 0.25) {
      const ClassProbs b = class_probs_given_u(ModelSpec::binomial(1, kappa), u);
      const ClassProbs l = class_probs_given_u(ModelSpec::logistic(kappa), u);
      EXPECT_NEAR(b.coercive, l.coercive, 1e-15);
      EXPECT_NEAR(b.increasing, l.increasing, 1e-15);
      EXPECT_NEAR(b.decreasing, l.decreasing, 1e-15);
    }
}

TEST(ClassProbs, AgreeWithConditionalPmf) {
  for (const auto& m : all_models())
    for (double u : {-2.0, -0.4, 0.0, 1.1, 3.0}) {
      const ClassProbs p = class_probs_given_u(m, u);
      const ConditionalPmf pmf = conditional_pmf(m, u);
      ClassProbs q;
      for (const auto& t : pmf.terms) {
        switch (classify_loss(m, t.y)) {
          case EventClass::Coercive: q.coercive += t.mass; break;
          case EventClass::Increasing: q.increasing += t.mass; break;
          case EventClass::Decreasing: q.decreasing += t.mass; break;
        }
      }
      EXPECT_NEAR(p.increasing, q.increasing, 1e-12);
      EXPECT_NEAR(p.decreasing, q.decreasing, 1e-12);
      EXPECT_NEAR(p.coercive, q.coercive + pmf.tail_mass, 1e-12);
    }
}

TEST(ConditionalPmf, PoissonTruncationHonoursTolerance) {
  for (double u : {-4.0, -1.0, 0.0, 2.0})
    for (double kappa : {0.0, 0.5, 1.5}) {
      const ConditionalPmf pmf = conditional_pmf(ModelSpec::poisson(kappa), u, 1e-12);
      double total = 0.0, mean = 0.0;
      for (const auto& t : pmf.terms) {
        total += t.mass;
        mean += t.mass * static_cast<double>(t.y);
      }
      EXPECT_LT(pmf.tail_mass, 1e-12);
      EXPECT_NEAR(total + pmf.tail_mass, 1.0, 1e-13);
      const double lambda = std::exp(-kappa * u);
      EXPECT_NEAR(mean, lambda, 1e-9 * (1.0 + lambda));
    }
}

TEST(SampleResponse, LogisticNullIsFair) {
  std::mt19937_64 rng(11);
  const ModelSpec m = ModelSpec::logistic(0.0);
  int ones = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ones += sample_response(m, 0.3, rng) == 1;
  EXPECT_NEAR(static_cast<double>(ones) / draws, 0.5, 0.01);
}

TEST(SampleResponse, PoissonMeanUsesNegativeExponent) {
  std::mt19937_64 rng(12);
  const ModelSpec m = ModelSpec::poisson(0.5);
  double sum = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) sum += static_cast<double>(sample_response(m, -2.0, rng));
  EXPECT_NEAR(sum / draws, std::exp(1.0), 0.03 * std::exp(1.0));
}

TEST(SampleResponse, BinomialSupportAndMean) {
  std::mt19937_64 rng(13);
  const ModelSpec m = ModelSpec::binomial(8, 0.0);
  double sum = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const Response y = sample_response(m, 1.0, rng);
    ASSERT_GE(y, 0);
    ASSERT_LE(y, 8);
    sum += static_cast<double>(y);
  }
  EXPECT_NEAR(sum / draws, 4.0, 0.08);
}

TEST(SampleResponse, ClassFrequenciesWithinFourStandardErrors) {
  const int draws = 100000;
  for (const auto& m : all_models())
    for (double u : {-1.2, 0.4}) {
      std::mt19937_64 rng(99);
      double counts[3] = {0, 0, 0};
      for (int i = 0; i < draws; ++i) counts[static_cast<int>(classify_loss(m, sample_response(m, u, rng)))] += 1;
      const ClassProbs p = class_probs_given_u(m, u);
      for (EventClass c : {EventClass::Coercive, EventClass::Increasing, EventClass::Decreasing}) {
        const double want = p.of(c);
        const double se = std::sqrt(want * (1.0 - want) / draws);
        EXPECT_NEAR(counts[static_cast<int>(c)] / draws, want, 4.0 * se + 1e-12)
            << describe(m) << " u=" << u << " class=" << to_string(c);
      }
    }
}

TEST(Assumptions, NullExamples) {
  const QuadratureGrid grid(101);
  const AssumptionDiagnostics l = validate_assumptions(ModelSpec::logistic(0.0), grid);
  EXPECT_NEAR(l.coercive_prob, 0.0, 1e-15);
  EXPECT_NEAR(l.growth_neg, 0.5, 1e-12);
  EXPECT_NEAR(l.growth_pos, 0.5, 1e-12);
  const AssumptionDiagnostics p = validate_assumptions(ModelSpec::poisson(0.0), grid);
  EXPECT_NEAR(p.coercive_prob, 1.0 - std::exp(-1.0), 1e-12);
  const AssumptionDiagnostics b = validate_assumptions(ModelSpec::binomial(3, 1.0), grid);
  EXPECT_GT(b.coercive_prob, 0.0);
  EXPECT_LT(b.coercive_prob, 1.0);
}

}  // namespace
}  // namespace mest
