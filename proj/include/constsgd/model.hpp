#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "constsgd/linalg.hpp"

namespace constsgd {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class TaskKind { Linear, Logistic, Softmax };

std::string_view to_string(TaskKind task);
TaskKind parse_task(std::string_view name);

/// Examples for one of the three regression problems.
///
/// Regression targets live in `targets`. Classification labels live in
/// `labels` and take values 1..num_classes; binary logistic regression uses
/// num_classes == 2 with label 2 as the positive class.
struct Dataset {
  RowMatrix features;  // N x D
  Vector targets;      // length N, linear regression only
  std::vector<int> labels;
  TaskKind task = TaskKind::Linear;
  int num_classes = 1;

  Eigen::Index num_examples() const { return features.rows(); }
  Eigen::Index num_features() const { return features.cols(); }

  /// Throws std::invalid_argument if the dataset breaks its invariants.
  void validate() const;

  /// Copy containing only the given example indices, in order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Average loss L(theta) = (1/N) sum_n l_n(theta) with
/// l_n = -log p(x_n | theta) - (1/N) log p(theta) and a N(0, I / lambda) prior.
///
/// Linear regression uses a unit-variance Gaussian likelihood. Softmax weights
/// are stored class-major: theta[k * D + d] is the weight of feature d for class k.
class ModelProblem {
 public:
  ModelProblem(std::shared_ptr<const Dataset> data, double lambda);

  const Dataset& data() const { return *data_; }
  std::shared_ptr<const Dataset> data_ptr() const { return data_; }
  double lambda() const { return lambda_; }
  TaskKind task() const { return data_->task; }
  Eigen::Index num_examples() const { return data_->num_examples(); }
  Eigen::Index num_features() const { return data_->num_features(); }
  Eigen::Index num_params() const;

  ModelProblem with_lambda(double lambda) const { return ModelProblem(data_, lambda); }

  /// Adds weight * grad(-log p(x_n | theta)) into out; prior term excluded.
  void accumulate_likelihood_gradient(const Vector& theta, Eigen::Index n, double weight, Vector& out) const;

  /// -log p(x_n | theta) (no prior term).
  double example_nll(const Vector& theta, Eigen::Index n) const;

  /// (1/N) * (-log p(theta)).
  double prior_term(const Vector& theta) const;

 private:
  std::shared_ptr<const Dataset> data_;
  double lambda_;
};

/// Quantities measured at the MAP point that drive every stationary prediction.
struct NoiseProfile {
  Vector map_point;
  Matrix hessian;       // A, Hessian of the average loss
  Matrix noise_cov;     // C = B B^T, per-example gradient covariance
  Matrix noise_factor;  // B, lower triangular
  Eigen::Index num_examples = 0;
  double gradient_inf_norm = 0.0;
};

/// l_n(theta). Index n is 0-based; throws std::out_of_range when n >= N.
double per_example_loss(const ModelProblem& problem, const Vector& theta, Eigen::Index n);

/// L(theta), the average of the per-example losses.
double full_loss(const ModelProblem& problem, const Vector& theta);

/// Gradient of l_n.
Vector per_example_gradient(const ModelProblem& problem, const Vector& theta, Eigen::Index n);

/// N x P matrix whose rows are the per-example gradients.
Matrix per_example_gradients(const ModelProblem& problem, const Vector& theta);

Vector full_gradient(const ModelProblem& problem, const Vector& theta);

/// (1/S) sum over batch of grad l_n. Throws std::invalid_argument on an empty batch.
Vector minibatch_gradient(const ModelProblem& problem, const Vector& theta, std::span<const std::size_t> batch);

/// Exact Hessian of L at theta.
Matrix hessian(const ModelProblem& problem, const Vector& theta);

struct NoiseCovariance {
  Matrix cov;     // C
  Matrix factor;  // B with B B^T = C (+ jitter when C is singular)
};

/// C = (1/N) sum_n (g_n - g)(g_n - g)^T. A size-S minibatch drawn with
/// replacement has gradient covariance C / S.
NoiseCovariance gradient_noise_covariance(const ModelProblem& problem, const Vector& theta);

struct FitOptions {
  double tol = 1e-8;
  int max_iters = 200;
};

/// Damped Newton with backtracking. Returns theta with ||grad L||_inf <= tol.
/// Throws ConvergenceError carrying the best iterate when max_iters is exhausted.
Vector fit_map(const ModelProblem& problem, const Vector& theta0, const FitOptions& options = {});

/// fit_map from zero, then Hessian and noise covariance at the optimum.
NoiseProfile profile_noise(const ModelProblem& problem, const FitOptions& options = {});

}  // namespace constsgd
