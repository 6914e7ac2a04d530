#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "constsgd/data.hpp"
#include "constsgd/model.hpp"
#include "oracles.hpp"

using namespace constsgd;

namespace {

std::shared_ptr<const Dataset> synthetic(TaskKind task, Eigen::Index d, Eigen::Index n, std::uint64_t seed,
                                         int k = 3) {
  SyntheticSpec spec;
  spec.task = task;
  spec.num_features = d;
  spec.num_examples = n;
  spec.num_classes = k;
  spec.seed = seed;
  return std::make_shared<const Dataset>(make_synthetic(spec).dataset);
}

Vector random_theta(Eigen::Index p, std::mt19937_64& rng, double scale = 0.7) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(p);
  for (Eigen::Index i = 0; i < p; ++i) v(i) = normal(rng);
  return v;
}

class AllTasks : public ::testing::TestWithParam<TaskKind> {};

}  // namespace

TEST(Loss, LinearAtOrigin) {
  auto data = std::make_shared<Dataset>();
  data->features = RowMatrix::Ones(2, 1);
  data->targets = Vector::Constant(2, 3.0);
  const ModelProblem problem(data, 2.0);
  const double prior = (0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(2.0)) / 2.0;
  EXPECT_NEAR(per_example_loss(problem, Vector::Zero(1), 0), 4.5 + 0.5 * std::log(2.0 * std::numbers::pi) + prior,
              1e-14);
}

TEST(Loss, LogisticAndSoftmaxAtOrigin) {
  auto logistic = synthetic(TaskKind::Logistic, 3, 10, 1);
  const ModelProblem lp(logistic, 1.0);
  const double prior3 = 1.5 * std::log(2.0 * std::numbers::pi) / 10.0;
  EXPECT_NEAR(per_example_loss(lp, Vector::Zero(3), 4), std::log(2.0) + prior3, 1e-14);

  auto softmax = synthetic(TaskKind::Softmax, 2, 10, 2, 4);
  const ModelProblem sp(softmax, 3.0);
  const double p = 8.0;
  const double prior = (-0.5 * p * std::log(3.0) + 0.5 * p * std::log(2.0 * std::numbers::pi)) / 10.0;
  EXPECT_NEAR(per_example_loss(sp, Vector::Zero(8), 7), std::log(4.0) + prior, 1e-14);
}

TEST(Loss, IndexErrors) {
  const ModelProblem problem(synthetic(TaskKind::Linear, 2, 5, 3), 1.0);
  EXPECT_THROW(per_example_loss(problem, Vector::Zero(2), 5), std::out_of_range);
  EXPECT_THROW(per_example_loss(problem, Vector::Zero(2), -1), std::out_of_range);
  const std::vector<std::size_t> empty;
  EXPECT_THROW(minibatch_gradient(problem, Vector::Zero(2), empty), std::invalid_argument);
  EXPECT_THROW(ModelProblem(synthetic(TaskKind::Linear, 2, 5, 3), 0.0), std::invalid_argument);
}

TEST_P(AllTasks, AverageOfExampleLossesIsFullLoss) {
  const ModelProblem problem(synthetic(GetParam(), 3, 40, 4), 0.7);
  std::mt19937_64 rng(5);
  const Vector theta = random_theta(problem.num_params(), rng);
  double total = 0.0;
  for (Eigen::Index n = 0; n < 40; ++n) total += per_example_loss(problem, theta, n);
  EXPECT_NEAR(total / 40.0, full_loss(problem, theta), 1e-12);
}

TEST_P(AllTasks, GradientMatchesFiniteDifferences) {
  const ModelProblem problem(synthetic(GetParam(), 3, 60, 6), 0.5);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector theta = random_theta(problem.num_params(), rng);
    const Vector g = full_gradient(problem, theta);
    const Vector fd = oracle::fd_gradient([&](const Vector& t) { return full_loss(problem, t); }, theta);
    EXPECT_LE((g - fd).norm() / std::max(1e-8, fd.norm()), 1e-5);
    const Vector g3 = per_example_gradient(problem, theta, 3);
    const Vector fd3 = oracle::fd_gradient([&](const Vector& t) { return per_example_loss(problem, t, 3); }, theta);
    EXPECT_LE((g3 - fd3).norm() / std::max(1e-8, fd3.norm()), 1e-5);
  }
}

TEST_P(AllTasks, HessianMatchesFiniteDifferences) {
  const ModelProblem problem(synthetic(GetParam(), 3, 60, 8), 0.5);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector theta = random_theta(problem.num_params(), rng);
    const Matrix h = hessian(problem, theta);
    const Matrix fd = oracle::fd_jacobian([&](const Vector& t) { return full_gradient(problem, t); }, theta);
    EXPECT_LE((h - fd).norm() / fd.norm(), 1e-4);
    EXPECT_TRUE(is_symmetric(h));
  }
}

TEST_P(AllTasks, PerExampleGradientRowsAverageToFullGradient) {
  const ModelProblem problem(synthetic(GetParam(), 2, 30, 10), 1.0);
  std::mt19937_64 rng(11);
  const Vector theta = random_theta(problem.num_params(), rng);
  const Matrix rows = per_example_gradients(problem, theta);
  EXPECT_LE((Vector(rows.colwise().mean().transpose()) - full_gradient(problem, theta)).norm(), 1e-12);
  std::vector<std::size_t> all(30);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_LE((minibatch_gradient(problem, theta, all) - full_gradient(problem, theta)).norm(), 1e-12);
  const std::vector<std::size_t> one{7};
  EXPECT_LE((minibatch_gradient(problem, theta, one) - rows.row(7).transpose()).norm(), 1e-14);
}

TEST_P(AllTasks, NoiseCovarianceIsCenteredSecondMoment) {
  const ModelProblem problem(synthetic(GetParam(), 3, 50, 12), 1.0);
  std::mt19937_64 rng(13);
  const Vector theta = random_theta(problem.num_params(), rng);
  const Matrix rows = per_example_gradients(problem, theta);
  Matrix c = Matrix::Zero(rows.cols(), rows.cols());
  const Vector g = full_gradient(problem, theta);
  for (Eigen::Index n = 0; n < rows.rows(); ++n) {
    const Vector dev = rows.row(n).transpose() - g;
    c += dev * dev.transpose() / 50.0;
  }
  const NoiseCovariance nc = gradient_noise_covariance(problem, theta);
  EXPECT_LE(relative_frobenius_error(nc.cov, c), 1e-12);
  EXPECT_TRUE(is_psd(nc.cov));
  EXPECT_LE(relative_frobenius_error(nc.factor * nc.factor.transpose(), nc.cov), 1e-8);
}

TEST_P(AllTasks, FitMapReachesTolerance) {
  const ModelProblem problem(synthetic(GetParam(), 3, 200, 14), 1.0);
  const Vector theta = fit_map(problem, Vector::Zero(problem.num_params()));
  EXPECT_LE(full_gradient(problem, theta).lpNorm<Eigen::Infinity>(), 1e-8);
}

INSTANTIATE_TEST_SUITE_P(Model, AllTasks, ::testing::Values(TaskKind::Linear, TaskKind::Logistic, TaskKind::Softmax),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Hessian, LinearClosedFormAndLogisticAtOrigin) {
  auto data = synthetic(TaskKind::Linear, 3, 25, 15);
  const ModelProblem lin(data, 2.0);
  Matrix expected = data->features.transpose() * data->features / 25.0;
  expected.diagonal().array() += 2.0 / 25.0;
  EXPECT_LE(relative_frobenius_error(hessian(lin, Vector::Ones(3)), expected), 1e-13);

  auto ldata = synthetic(TaskKind::Logistic, 3, 25, 16);
  const ModelProblem log(ldata, 2.0);
  Matrix lexp = ldata->features.transpose() * ldata->features / (4.0 * 25.0);
  lexp.diagonal().array() += 2.0 / 25.0;
  EXPECT_LE(relative_frobenius_error(hessian(log, Vector::Zero(3)), lexp), 1e-13);
}

TEST(NoiseCovariance, TwoPointAndIdenticalGradients) {
  auto data = std::make_shared<Dataset>();
  data->features = RowMatrix::Ones(2, 1);
  data->targets.resize(2);
  data->targets << 1.0, -1.0;
  // At theta = 0 the per-example likelihood gradients are -y_n x_n = -+1.
  const NoiseCovariance nc = gradient_noise_covariance(ModelProblem(data, 1.0), Vector::Zero(1));
  EXPECT_NEAR(nc.cov(0, 0), 1.0, 1e-15);

  data->targets << 2.0, 2.0;
  EXPECT_EQ(gradient_noise_covariance(ModelProblem(data, 1.0), Vector::Zero(1)).cov.norm(), 0.0);
}

TEST(NoiseCovariance, MonteCarloSingleExampleDraws) {
  const ModelProblem problem(synthetic(TaskKind::Logistic, 2, 300, 17), 1.0);
  const Vector theta = Vector::Constant(2, 0.3);
  const Matrix c = gradient_noise_covariance(problem, theta).cov;
  const Matrix rows = per_example_gradients(problem, theta);
  std::mt19937_64 rng(18);
  std::uniform_int_distribution<Eigen::Index> pick(0, 299);
  const int draws = 100000;
  Vector mean = Vector::Zero(2);
  Matrix second = Matrix::Zero(2, 2);
  for (int i = 0; i < draws; ++i) {
    const Vector g = rows.row(pick(rng)).transpose();
    mean += g;
    second += g * g.transpose();
  }
  mean /= draws;
  const Matrix cov = second / draws - mean * mean.transpose();
  for (int i = 0; i < 2; ++i) {
    // Variance of a sample variance is about 2 sigma^4 / n for near-Gaussian draws;
    // use a generous 5 standard errors for the heavier-tailed gradient distribution.
    EXPECT_NEAR(cov(i, i), c(i, i), 5.0 * c(i, i) * std::sqrt(3.0 / draws));
    EXPECT_NEAR(mean(i), full_gradient(problem, theta)(i), 3.0 * std::sqrt(c(i, i) / draws));
  }
}

TEST(Minibatch, MonteCarloMeanIsFullGradient) {
  const ModelProblem problem(synthetic(TaskKind::Softmax, 2, 100, 19, 3), 1.0);
  std::mt19937_64 rng(20);
  const Vector theta = random_theta(6, rng);
  const Matrix c = gradient_noise_covariance(problem, theta).cov;
  std::uniform_int_distribution<std::size_t> pick(0, 99);
  const int draws = 10000;
  const int s = 5;
  Vector mean = Vector::Zero(6);
  std::vector<std::size_t> batch(s);
  for (int i = 0; i < draws; ++i) {
    for (auto& b : batch) b = pick(rng);
    mean += minibatch_gradient(problem, theta, batch);
  }
  mean /= draws;
  const Vector g = full_gradient(problem, theta);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(mean(i), g(i), 3.5 * std::sqrt(c(i, i) / (s * draws)));
}

TEST(FitMap, MatchesRidgeAndIgnoresOrdering) {
  auto data = synthetic(TaskKind::Linear, 4, 100, 21);
  const ModelProblem problem(data, 1.5);
  const Vector theta = fit_map(problem, Vector::Zero(4));
  Matrix m = data->features.transpose() * data->features;
  m.diagonal().array() += 1.5;
  const Vector ridge = m.ldlt().solve(data->features.transpose() * data->targets);
  EXPECT_LE((theta - ridge).norm(), 1e-6);

  std::vector<std::size_t> reversed(100);
  std::iota(reversed.rbegin(), reversed.rend(), std::size_t{0});
  const ModelProblem flipped(std::make_shared<const Dataset>(data->subset(reversed)), 1.5);
  EXPECT_LE((fit_map(flipped, Vector::Zero(4)) - theta).norm(), 1e-9);
}

TEST(FitMap, SeparableLogisticStaysFinite) {
  auto data = std::make_shared<Dataset>();
  data->task = TaskKind::Logistic;
  data->num_classes = 2;
  data->features.resize(2, 1);
  data->features << 1.0, -1.0;
  data->labels = {2, 1};
  const ModelProblem problem(data, 1.0);
  const Vector theta = fit_map(problem, Vector::Zero(1));
  EXPECT_TRUE(theta.allFinite());
  EXPECT_LE(full_gradient(problem, theta).lpNorm<Eigen::Infinity>(), 1e-8);
  // Long full-gradient descent reaches the same point.
  Vector t = Vector::Zero(1);
  for (int i = 0; i < 20000; ++i) t -= 0.5 * full_gradient(problem, t);
  EXPECT_NEAR(t(0), theta(0), 1e-8);
}

TEST(FitMap, IterationLimitCarriesBestIterate) {
  const ModelProblem problem(synthetic(TaskKind::Softmax, 3, 200, 22), 1e-3);
  FitOptions options;
  options.max_iters = 1;
  options.tol = 1e-14;
  try {
    fit_map(problem, Vector::Zero(problem.num_params()), options);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.best_iterate().size(), problem.num_params());
    EXPECT_GT(e.gradient_norm(), 0.0);
  }
}
