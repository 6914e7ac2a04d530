#include "constsgd/hyperopt.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "constsgd/errors.hpp"
#include "constsgd/stationary.hpp"

namespace constsgd {

namespace {

void require_softmax(const Dataset& dataset, const char* who) {
  if (dataset.task != TaskKind::Softmax) throw std::invalid_argument(std::string(who) + ": softmax dataset required");
}

double likelihood_sum(const Dataset& dataset, const Vector& theta) {
  const Eigen::Index d = dataset.num_features();
  const int k = dataset.num_classes;
  if (theta.size() != d * k) throw ShapeError("softmax: theta must have D*K entries");
  Vector logits(k);
  double total = 0.0;
  for (Eigen::Index n = 0; n < dataset.num_examples(); ++n) {
    const auto x = dataset.features.row(n);
    for (int c = 0; c < k; ++c) logits(c) = x.dot(theta.segment(c * d, d));
    const double zmax = logits.maxCoeff();
    const double lse = zmax + std::log((logits.array() - zmax).exp().sum());
    total += lse - logits(dataset.labels[static_cast<std::size_t>(n)] - 1);
  }
  return total;
}

double tuned_rate(const ModelProblem& problem, const Vector& theta, int minibatch) {
  const Matrix c = gradient_noise_covariance(problem, theta).cov;
  const double eps = optimal_scalar_rate(c, minibatch, static_cast<double>(problem.num_examples()));
  const Matrix identity = Matrix::Identity(problem.num_params(), problem.num_params());
  return guard_step_size(eps, identity, hessian(problem, theta)).epsilon;
}

}  // namespace

double softmax_log_joint(const Dataset& dataset, const Vector& theta, double lambda) {
  if (!(lambda > 0.0)) throw std::domain_error("softmax_log_joint: lambda must be > 0");
  require_softmax(dataset, "softmax_log_joint");
  const double p = static_cast<double>(theta.size());
  return 0.5 * lambda * theta.squaredNorm() - 0.5 * p * std::log(lambda) +
         0.5 * p * std::log(2.0 * std::numbers::pi) + likelihood_sum(dataset, theta);
}

double softmax_log_joint_lambda_derivative(const Vector& theta, double lambda) {
  if (!(lambda > 0.0)) throw std::domain_error("softmax_log_joint_lambda_derivative: lambda must be > 0");
  return 0.5 * theta.squaredNorm() - 0.5 * static_cast<double>(theta.size()) / lambda;
}

double lambda_m_step(double moment, Eigen::Index num_features, int num_classes) {
  if (num_features < 1 || num_classes < 1) throw std::invalid_argument("lambda_m_step: D and K must be >= 1");
  if (!(moment > 0.0)) throw DegenerateError("lambda_m_step: variational second moment is not positive");
  const double lambda = static_cast<double>(num_features) * num_classes / moment;
  if (!std::isfinite(lambda)) throw DegenerateError("lambda_m_step: lambda is not finite");
  return lambda;
}

double validation_loss(const Dataset& dataset, const Vector& theta) {
  if (dataset.num_examples() == 0) throw std::invalid_argument("validation_loss: empty dataset");
  require_softmax(dataset, "validation_loss");
  return likelihood_sum(dataset, theta) / static_cast<double>(dataset.num_examples());
}

void VemConfig::validate() const {
  if (!(lambda0 > 0.0) || !std::isfinite(lambda0)) throw std::invalid_argument("vem: lambda0 must be > 0");
  if (!(moment_decay > 0.0 && moment_decay < 1.0)) throw std::invalid_argument("vem: moment_decay must lie in (0, 1)");
  if (lambda_update_period < 1) throw std::invalid_argument("vem: lambda_update_period must be >= 1");
  if (max_outer_iters < 1) throw std::invalid_argument("vem: max_outer_iters must be >= 1");
  if (sgd.minibatch < 1) throw std::invalid_argument("vem: minibatch must be >= 1");
}

VemResult run_vem(const Dataset& train, const Dataset* validation, const VemConfig& config) {
  config.validate();
  require_softmax(train, "run_vem");
  if (validation) require_softmax(*validation, "run_vem");
  auto data = std::make_shared<const Dataset>(train);
  const Eigen::Index d = train.num_features();
  const int k = train.num_classes;
  if (config.sgd.minibatch > train.num_examples()) throw std::invalid_argument("vem: minibatch must not exceed N");

  double lambda = config.lambda0;
  ModelProblem problem(data, lambda);
  Vector theta;
  try {
    theta = fit_map(problem, Vector::Zero(problem.num_params()), config.fit);
  } catch (const ConvergenceError& e) {
    theta = e.best_iterate();
  }

  const bool tune = !(config.sgd.epsilon > 0.0);
  double eps = tune ? tuned_rate(problem, theta, config.sgd.minibatch) : config.sgd.epsilon;
  double lambda_at_tuning = lambda;

  std::mt19937_64 rng(derive_seed(config.sgd.seed, 0));
  const double decay = config.moment_decay;
  double weighted = 0.0;
  double weight_total = 0.0;

  VemResult result;
  Vector grad(theta.size());
  const long total = config.max_outer_iters * config.lambda_update_period;
  for (long t = 1; t <= total; ++t) {
    ProblemOracle(problem).sample_gradient(theta, config.sgd.minibatch, rng, grad);
    theta.noalias() -= eps * grad;
    if (config.post_step) config.post_step(theta);
    if (!theta.allFinite() || theta.lpNorm<Eigen::Infinity>() > kDivergenceThreshold) {
      throw DivergenceError("run_vem: SGD diverged", t);
    }
    weighted = decay * weighted + (1.0 - decay) * theta.squaredNorm();
    weight_total = decay * weight_total + (1.0 - decay);

    if (t % config.lambda_update_period != 0) continue;
    const double moment = weighted / weight_total;
    lambda = lambda_m_step(moment, d, k);
    problem = problem.with_lambda(lambda);
    if (tune && config.retune_step && (lambda > 2.0 * lambda_at_tuning || lambda < 0.5 * lambda_at_tuning)) {
      eps = tuned_rate(problem, theta, config.sgd.minibatch);
      lambda_at_tuning = lambda;
    }
    VemRecord record;
    record.iteration = t;
    record.lambda = lambda;
    record.moment = moment;
    record.epsilon = eps;
    record.validation_loss =
        validation ? validation_loss(*validation, theta) : std::numeric_limits<double>::quiet_NaN();
    result.trace.records.push_back(record);
  }
  result.theta = std::move(theta);
  result.lambda = lambda;
  return result;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("log_grid: need 0 < lo <= hi");
  if (n < 1) throw std::invalid_argument("log_grid: need n >= 1");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double a = std::log(lo);
  const double step = n > 1 ? (std::log(hi) - a) / (n - 1) : 0.0;
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::exp(a + step * i);
  out.back() = hi;
  out.front() = lo;
  return out;
}

std::vector<GridPoint> lambda_grid_sweep(const Dataset& train, const Dataset& validation,
                                         const std::vector<double>& lambdas, const FitOptions& fit) {
  require_softmax(train, "lambda_grid_sweep");
  auto data = std::make_shared<const Dataset>(train);
  std::vector<GridPoint> out;
  Vector theta = Vector::Zero(train.num_features() * train.num_classes);
  for (double lambda : lambdas) {
    const ModelProblem problem(data, lambda);
    theta = fit_map(problem, theta, fit);
    out.push_back({lambda, validation_loss(validation, theta), theta});
  }
  return out;
}

}  // namespace constsgd
