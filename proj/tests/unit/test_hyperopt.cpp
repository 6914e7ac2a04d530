#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "constsgd/data.hpp"
#include "constsgd/hyperopt.hpp"
#include "oracles.hpp"

using namespace constsgd;

namespace {

Dataset softmax_data(Eigen::Index d, Eigen::Index n, int k, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.task = TaskKind::Softmax;
  spec.num_features = d;
  spec.num_examples = n;
  spec.num_classes = k;
  spec.seed = seed;
  return make_synthetic(spec).dataset;
}

}  // namespace

TEST(LogJoint, OriginValue) {
  const Dataset data = softmax_data(4, 50, 3, 1);
  const double expected = 50.0 * std::log(3.0) + 6.0 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(softmax_log_joint(data, Vector::Zero(12), 1.0), expected, 1e-11);
  EXPECT_THROW(softmax_log_joint(data, Vector::Zero(12), 0.0), std::domain_error);
}

TEST(LogJoint, AgreesWithModelLoss) {
  const Dataset data = softmax_data(3, 40, 4, 2);
  const ModelProblem problem(std::make_shared<const Dataset>(data), 0.8);
  const Vector theta = Vector::LinSpaced(12, -1.0, 1.0);
  EXPECT_NEAR(softmax_log_joint(data, theta, 0.8), 40.0 * full_loss(problem, theta), 1e-10);
}

TEST(LogJoint, LambdaDerivativeMatchesFiniteDifferences) {
  const Dataset data = softmax_data(3, 30, 3, 3);
  const Vector theta = Vector::LinSpaced(9, -0.5, 2.0);
  for (double lambda : {0.1, 1.0, 7.0}) {
    const auto f = [&](const Vector& l) { return softmax_log_joint(data, theta, l(0)); };
    const double fd = oracle::fd_gradient(f, Vector::Constant(1, lambda))(0);
    EXPECT_NEAR(softmax_log_joint_lambda_derivative(theta, lambda), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(LogJoint, LikelihoodInvariantToCommonLogitShift) {
  const Dataset data = softmax_data(3, 30, 3, 4);
  Vector theta = Vector::LinSpaced(9, -1.0, 1.0);
  const Vector shift = Vector::LinSpaced(3, 0.3, -0.2);
  const double before = validation_loss(data, theta);
  for (int c = 0; c < 3; ++c) theta.segment(c * 3, 3) += shift;
  EXPECT_NEAR(validation_loss(data, theta), before, 1e-12);
}

TEST(MStep, ClosedFormHomogeneityAndGrid) {
  EXPECT_DOUBLE_EQ(lambda_m_step(5.0, 5, 2), 2.0);
  EXPECT_DOUBLE_EQ(lambda_m_step(15.0, 5, 2), 2.0 / 3.0);
  EXPECT_THROW(lambda_m_step(0.0, 5, 2), DegenerateError);
  EXPECT_THROW(lambda_m_step(-1.0, 5, 2), DegenerateError);
  const double m = 3.7;
  const auto objective = [&](double l) { return -(-0.5 * l * m + 0.5 * 12.0 * std::log(l)); };
  const auto [best, grid] = oracle::grid_argmin(objective, 1e-2, 1e2, 4001);
  EXPECT_LE(std::abs(std::log(grid[best] / lambda_m_step(m, 4, 3))), std::log(grid[1] / grid[0]));
}

TEST(ValidationLoss, Examples) {
  const Dataset data = softmax_data(2, 10, 4, 5);
  EXPECT_NEAR(validation_loss(data, Vector::Zero(8)), std::log(4.0), 1e-14);

  Dataset sep;
  sep.task = TaskKind::Softmax;
  sep.num_classes = 2;
  sep.features.resize(2, 1);
  sep.features << 1.0, -1.0;
  sep.labels = {2, 1};
  Vector theta(2);
  theta << -20.0, 20.0;
  EXPECT_LT(validation_loss(sep, theta), 1e-15);

  Dataset empty = sep;
  empty.features.resize(0, 1);
  empty.labels.clear();
  EXPECT_THROW(validation_loss(empty, theta), std::invalid_argument);
}

TEST(Vem, DeterministicAndPositive) {
  const Dataset data = softmax_data(3, 400, 3, 6);
  const auto [train, val] = train_val_split(data, 0.75, 1);
  VemConfig config;
  config.sgd.minibatch = 10;
  config.sgd.seed = 4;
  config.max_outer_iters = 50;
  const VemResult a = run_vem(train, &val, config);
  const VemResult b = run_vem(train, &val, config);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.lambda, b.lambda);
  ASSERT_EQ(a.trace.records.size(), 50u);
  for (const VemRecord& r : a.trace.records) {
    EXPECT_GT(r.lambda, 0.0);
    EXPECT_TRUE(std::isfinite(r.lambda));
    EXPECT_TRUE(std::isfinite(r.validation_loss));
  }
  EXPECT_EQ(a.trace.records.back().iteration, 50 * 100);
}

TEST(Vem, ClampedChainIsDegenerate) {
  const Dataset data = softmax_data(3, 200, 3, 7);
  VemConfig config;
  config.sgd.minibatch = 5;
  config.max_outer_iters = 3;
  config.post_step = [](Vector& theta) { theta.setZero(); };
  EXPECT_THROW(run_vem(data, nullptr, config), DegenerateError);
}

TEST(Vem, ConfigValidation) {
  const Dataset data = softmax_data(2, 50, 3, 8);
  VemConfig config;
  config.moment_decay = 1.0;
  EXPECT_THROW(run_vem(data, nullptr, config), std::invalid_argument);
  config.moment_decay = 0.9;
  config.lambda0 = 0.0;
  EXPECT_THROW(run_vem(data, nullptr, config), std::invalid_argument);
}

TEST(Grid, LogGridAndSweep) {
  const std::vector<double> g = log_grid(1e-2, 1e2, 5);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g[0], 1e-2);
  EXPECT_NEAR(g[2], 1.0, 1e-14);
  EXPECT_DOUBLE_EQ(g[4], 1e2);
  const Dataset data = softmax_data(3, 300, 3, 9);
  const auto [train, val] = train_val_split(data, 0.7, 2);
  const auto sweep = lambda_grid_sweep(train, val, g);
  ASSERT_EQ(sweep.size(), 5u);
  for (const GridPoint& p : sweep) EXPECT_TRUE(std::isfinite(p.validation_loss));
  // Very strong shrinkage pushes the weights toward zero and the loss toward log K.
  EXPECT_NEAR(lambda_grid_sweep(train, val, {1e6})[0].validation_loss, std::log(3.0), 1e-3);
}

TEST(Grid, WarmStartedSweepConvergesAtStrongShrinkage) {
  // The last warm start lands within rounding of the optimum, where the loss
  // no longer resolves the Newton decrease.
  const auto [train, val] = train_val_split(softmax_data(3, 1000, 3, 2), 0.8, 2);
  std::vector<GridPoint> sweep;
  ASSERT_NO_THROW(sweep = lambda_grid_sweep(train, val, log_grid(1e-3, 1e3, 20)));
  EXPECT_EQ(sweep.size(), 20u);
}

TEST(Vem, SelectedLambdaStableWhenUpdatePeriodDoubles) {
  const auto [train, val] = train_val_split(softmax_data(8, 2000, 3, 11), 0.8, 3);
  VemConfig config;
  config.sgd.minibatch = 10;
  config.sgd.seed = 5;
  config.max_outer_iters = 400;
  const double base = run_vem(train, &val, config).lambda;
  config.lambda_update_period *= 2;
  config.max_outer_iters /= 2;
  const double doubled = run_vem(train, &val, config).lambda;
  EXPECT_LE(std::abs(doubled / base - 1.0), 0.10);
}
