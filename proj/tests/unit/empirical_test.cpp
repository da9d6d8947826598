#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mest/empirical.hpp"
#include "support/oracles.hpp"

namespace mest {
namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double e : v) x(i++, 0) = e;
  return x;
}

struct Instance {
  Eigen::MatrixXd x;
  std::vector<Response> y;
  ModelSpec model;
};

/// Small random designs; responses drawn at independent signal strengths so
/// that both verdicts occur.
std::vector<Instance> random_instances(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> pdim(1, 3);
  std::uniform_real_distribution<double> kappa(0.0, 3.0);
  const ModelSpec families[3] = {ModelSpec::logistic(0.0), ModelSpec::binomial(2, 0.0), ModelSpec::poisson(0.0)};
  std::vector<Instance> out;
  for (int k = 0; k < count; ++k) {
    ModelSpec m = families[k % 3];
    m.kappa = kappa(rng);
    const int p = pdim(rng);
    std::uniform_int_distribution<int> ndim(p + 1, 6);
    const int n = ndim(rng);
    Instance inst{Eigen::MatrixXd(n, p), std::vector<Response>(static_cast<std::size_t>(n)), m};
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) inst.x(i, j) = normal(rng);
      inst.y[static_cast<std::size_t>(i)] = sample_response(m, inst.x(i, 0), rng);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

TEST(GenerateDataset, DeterministicInSeed) {
  const Dataset a = generate_dataset(ModelSpec::poisson(0.5), 200, 7, 42);
  const Dataset b = generate_dataset(ModelSpec::poisson(0.5), 200, 7, 42);
  const Dataset c = generate_dataset(ModelSpec::poisson(0.5), 200, 7, 43);
  EXPECT_TRUE(a.x == b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_FALSE(a.x == c.x);
}

TEST(GenerateDataset, RejectsShapesOutsideTheRegime) {
  EXPECT_THROW(generate_dataset(ModelSpec::logistic(0.0), 5, 5, 1), InvalidShape);
  EXPECT_THROW(generate_dataset(ModelSpec::logistic(0.0), 5, 0, 1), InvalidShape);
  EXPECT_NO_THROW(generate_dataset(ModelSpec::logistic(0.0), 6, 5, 1));
}

TEST(GenerateDataset, MarginalMoments) {
  const Dataset d = generate_dataset(ModelSpec::logistic(0.0), 10000, 2, 3);
  for (Eigen::Index j = 0; j < 2; ++j) EXPECT_NEAR(d.x.col(j).mean(), 0.0, 0.04);
  const Dataset p = generate_dataset(ModelSpec::poisson(0.0), 10000, 2, 4);
  double mean = 0.0;
  for (Response y : p.y) mean += static_cast<double>(y);
  EXPECT_NEAR(mean / 10000.0, 1.0, 0.04);
}

TEST(GenerateDataset, ResponsesFollowFirstCoordinate) {
  // Strong signal: logistic labels agree in sign with x_1 most of the time.
  const Dataset d = generate_dataset(ModelSpec::logistic(8.0), 5000, 3, 9);
  int agree = 0;
  for (Eigen::Index i = 0; i < d.n(); ++i) agree += (d.x(i, 0) > 0.0) == (d.y[static_cast<std::size_t>(i)] == 1);
  EXPECT_GT(agree, 4500);
}

TEST(WriteDatasetCsv, RoundTripsValues) {
  const Dataset d = generate_dataset(ModelSpec::binomial(3, 1.0), 20, 2, 5);
  const std::string path = (std::filesystem::temp_directory_path() / "mest_dataset_test.csv").string();
  write_dataset_csv(d, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "y,x_1,x_2");
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    ASSERT_TRUE(std::getline(in, line));
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    EXPECT_EQ(std::stoll(cell), d.y[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < 2; ++j) {
      std::getline(ss, cell, ',');
      EXPECT_EQ(std::stod(cell), d.x(i, j));
    }
  }
  std::filesystem::remove(path);
  EXPECT_THROW(write_dataset_csv(d, "/nonexistent-dir/x.csv"), IoError);
}

TEST(MleExists, OneDimensionalExamples) {
  const ModelSpec m = ModelSpec::logistic(0.0);
  const ExistenceVerdict a = mle_exists(column({1.0, -0.5}), {1, 1}, m);
  EXPECT_TRUE(a.exists);
  EXPECT_NEAR(a.lp_objective, 0.0, 1e-12);
  EXPECT_FALSE(a.witness.has_value());
  const ExistenceVerdict b = mle_exists(column({1.0, 0.5}), {1, 1}, m);
  EXPECT_FALSE(b.exists);
  EXPECT_NEAR(b.lp_objective, 2.0, 1e-12);
  ASSERT_TRUE(b.witness.has_value());
  EXPECT_GT((*b.witness)[0], 0.0);
}

TEST(MleExists, AllCoerciveRowsAlwaysExist) {
  const Dataset d = generate_dataset(ModelSpec::poisson(0.0), 30, 4, 8);
  std::vector<Response> y(30, 2);
  const ExistenceVerdict v = mle_exists(d.x, y, ModelSpec::poisson(0.0));
  EXPECT_TRUE(v.exists);
  EXPECT_EQ(v.lp_objective, 0.0);
}

TEST(MleExists, RejectsRankDeficientDesigns) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 2, 4, -1, -2, 3, 6;
  EXPECT_THROW(mle_exists(x, {1, -1, 1, 1}, ModelSpec::logistic(0.0)), RankDeficient);
  EXPECT_THROW(mle_exists(x, {1, -1}, ModelSpec::logistic(0.0)), InvalidShape);
}

TEST(MleExists, ObjectiveMatchesBruteForceStrictCount) {
  for (const auto& inst : random_instances(150, 101)) {
    const ExistenceVerdict v = mle_exists(inst.x, inst.y, inst.model);
    const oracle::BruteExistence b = oracle::brute_existence(inst.x, inst.y, inst.model);
    EXPECT_EQ(v.exists, b.exists) << describe(inst.model) << "\n" << inst.x;
    EXPECT_NEAR(v.lp_objective, static_cast<double>(b.max_strict), 1e-6) << describe(inst.model) << "\n" << inst.x;
  }
}

TEST(MleExists, WitnessSatisfiesSignPattern) {
  int witnessed = 0;
  for (const auto& inst : random_instances(150, 202)) {
    const ExistenceVerdict v = mle_exists(inst.x, inst.y, inst.model);
    EXPECT_EQ(v.witness.has_value(), !v.exists);
    if (!v.witness) continue;
    ++witnessed;
    EXPECT_NEAR(v.witness->norm(), 1.0, 1e-12);
    EXPECT_LE(sign_pattern_violation(inst.x, inst.y, inst.model, *v.witness), 1e-9);
  }
  EXPECT_GT(witnessed, 10);
}

TEST(MleExists, VerdictIsScaleInvariant) {
  for (const auto& inst : random_instances(60, 303)) {
    const bool base = mle_exists(inst.x, inst.y, inst.model).exists;
    for (double c : {0.1, 10.0}) EXPECT_EQ(mle_exists(c * inst.x, inst.y, inst.model).exists, base);
  }
}

TEST(MleExists, CoerciveRowsNeverBreakExistence) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (const auto& inst : random_instances(90, 404)) {
    if (inst.model.family == Family::Logistic) continue;
    const bool before = mle_exists(inst.x, inst.y, inst.model).exists;
    Eigen::MatrixXd x(inst.x.rows() + 1, inst.x.cols());
    x.topRows(inst.x.rows()) = inst.x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(inst.x.rows(), j) = normal(rng);
    std::vector<Response> y = inst.y;
    y.push_back(1);  // coercive for binomial(2) and Poisson
    const bool after = mle_exists(x, y, inst.model).exists;
    EXPECT_TRUE(!before || after);
  }
}

TEST(MleExists, DatasetOverloadAndLargerDesigns) {
  // Far below and far above the null logistic threshold p/n = 1/2.
  EXPECT_TRUE(mle_exists(generate_dataset(ModelSpec::logistic(0.0), 400, 40, 1)).exists);
  const ExistenceVerdict v = mle_exists(generate_dataset(ModelSpec::logistic(0.0), 400, 320, 2));
  EXPECT_FALSE(v.exists);
  EXPECT_GE(v.lp_objective, 1.0);
}

TEST(GeneratePhiSample, DeterministicAndShaped) {
  const PhiSample a = generate_phi_sample(ModelSpec::poisson(1.0), 100, 6);
  const PhiSample b = generate_phi_sample(ModelSpec::poisson(1.0), 100, 6);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.g, b.g);
  EXPECT_EQ(a.u.size(), 100u);
}

TEST(Seeds, SplitmixSpreadsNeighbouringSeeds) {
  EXPECT_NE(splitmix64(1), splitmix64(2));
  EXPECT_NE(make_rng(1)(), make_rng(2)());
  EXPECT_EQ(make_rng(9)(), make_rng(9)());
}

}  // namespace
}  // namespace mest
