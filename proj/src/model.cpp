#include "constsgd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace constsgd {

namespace {

double log1p_exp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Class probabilities for example n under softmax weights theta; returns log-sum-exp.
double softmax_probs(const Dataset& data, const Vector& theta, Eigen::Index n, Vector& probs) {
  const Eigen::Index d = data.num_features();
  const int k = data.num_classes;
  probs.resize(k);
  const auto x = data.features.row(n);
  for (int c = 0; c < k; ++c) probs(c) = x.dot(theta.segment(c * d, d));
  const double zmax = probs.maxCoeff();
  probs = (probs.array() - zmax).exp();
  const double total = probs.sum();
  probs /= total;
  return zmax + std::log(total);
}

}  // namespace

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::Linear: return "linear";
    case TaskKind::Logistic: return "logistic";
    case TaskKind::Softmax: return "softmax";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  if (name == "linear") return TaskKind::Linear;
  if (name == "logistic" || name == "binary-logistic") return TaskKind::Logistic;
  if (name == "softmax") return TaskKind::Softmax;
  throw std::invalid_argument("unknown task kind '" + std::string(name) + "'");
}

void Dataset::validate() const {
  const Eigen::Index n = num_examples();
  if (n < 1 || num_features() < 1) throw std::invalid_argument("dataset needs N >= 1 and D >= 1");
  if (!features.allFinite()) throw std::invalid_argument("dataset features must be finite");
  if (task == TaskKind::Linear) {
    if (targets.size() != n) throw std::invalid_argument("dataset: targets length must equal N");
    if (!targets.allFinite()) throw std::invalid_argument("dataset targets must be finite");
    return;
  }
  const int expected_k = task == TaskKind::Logistic ? 2 : num_classes;
  if (task == TaskKind::Logistic && num_classes != 2) throw std::invalid_argument("logistic dataset needs K = 2");
  if (expected_k < 2) throw std::invalid_argument("classification dataset needs K >= 2");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw std::invalid_argument("dataset: labels length must equal N");
  for (int y : labels) {
    if (y < 1 || y > expected_k) {
      throw std::invalid_argument("dataset: label " + std::to_string(y) + " outside 1.." + std::to_string(expected_k));
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), num_features());
  if (task == TaskKind::Linear) out.targets.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(indices[i]);
    if (src >= num_examples()) throw std::out_of_range("Dataset::subset: index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(src);
    if (task == TaskKind::Linear) {
      out.targets(static_cast<Eigen::Index>(i)) = targets(src);
    } else {
      out.labels.push_back(labels[indices[i]]);
    }
  }
  return out;
}

ModelProblem::ModelProblem(std::shared_ptr<const Dataset> data, double lambda)
    : data_(std::move(data)), lambda_(lambda) {
  if (!data_) throw std::invalid_argument("ModelProblem: null dataset");
  if (!(lambda_ > 0.0) || !std::isfinite(lambda_)) throw std::invalid_argument("ModelProblem: lambda must be > 0");
  data_->validate();
}

Eigen::Index ModelProblem::num_params() const {
  return task() == TaskKind::Softmax ? num_features() * data_->num_classes : num_features();
}

void ModelProblem::accumulate_likelihood_gradient(const Vector& theta, Eigen::Index n, double weight,
                                                  Vector& out) const {
  const auto x = data_->features.row(n);
  switch (task()) {
    case TaskKind::Linear: {
      const double r = x.dot(theta) - data_->targets(n);
      out.noalias() += (weight * r) * x.transpose();
      break;
    }
    case TaskKind::Logistic: {
      const double y = data_->labels[static_cast<std::size_t>(n)] == 2 ? 1.0 : 0.0;
      const double p = sigmoid(x.dot(theta));
      out.noalias() += (weight * (p - y)) * x.transpose();
      break;
    }
    case TaskKind::Softmax: {
      const Eigen::Index d = num_features();
      const int k = data_->num_classes;
      const int y = data_->labels[static_cast<std::size_t>(n)] - 1;
      thread_local std::vector<double> logits;
      logits.resize(static_cast<std::size_t>(k));
      double* zs = logits.data();
      double zmax = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        zs[c] = x.dot(theta.segment(c * d, d));
        zmax = std::max(zmax, zs[c]);
      }
      double total = 0.0;
      for (int c = 0; c < k; ++c) {
        zs[c] = std::exp(zs[c] - zmax);
        total += zs[c];
      }
      for (int c = 0; c < k; ++c) {
        const double coeff = zs[c] / total - (c == y ? 1.0 : 0.0);
        out.segment(c * d, d).noalias() += (weight * coeff) * x.transpose();
      }
      break;
    }
  }
}

double ModelProblem::example_nll(const Vector& theta, Eigen::Index n) const {
  const auto x = data_->features.row(n);
  switch (task()) {
    case TaskKind::Linear: {
      const double r = data_->targets(n) - x.dot(theta);
      return 0.5 * r * r + 0.5 * std::log(2.0 * std::numbers::pi);
    }
    case TaskKind::Logistic: {
      const double z = x.dot(theta);
      const double y = data_->labels[static_cast<std::size_t>(n)] == 2 ? 1.0 : 0.0;
      return log1p_exp(z) - y * z;
    }
    case TaskKind::Softmax: {
      Vector probs;
      const double lse = softmax_probs(*data_, theta, n, probs);
      const Eigen::Index d = num_features();
      const int y = data_->labels[static_cast<std::size_t>(n)] - 1;
      return lse - x.dot(theta.segment(y * d, d));
    }
  }
  return 0.0;
}

double ModelProblem::prior_term(const Vector& theta) const {
  const double p = static_cast<double>(num_params());
  const double neg_log_prior =
      0.5 * lambda_ * theta.squaredNorm() - 0.5 * p * std::log(lambda_) + 0.5 * p * std::log(2.0 * std::numbers::pi);
  return neg_log_prior / static_cast<double>(num_examples());
}

double per_example_loss(const ModelProblem& problem, const Vector& theta, Eigen::Index n) {
  if (n < 0 || n >= problem.num_examples()) {
    throw std::out_of_range("per_example_loss: example index " + std::to_string(n) + " out of range");
  }
  if (theta.size() != problem.num_params()) throw ShapeError("per_example_loss: theta has wrong length");
  return problem.example_nll(theta, n) + problem.prior_term(theta);
}

double full_loss(const ModelProblem& problem, const Vector& theta) {
  if (theta.size() != problem.num_params()) throw ShapeError("full_loss: theta has wrong length");
  const Eigen::Index n = problem.num_examples();
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += problem.example_nll(theta, i);
  return s / static_cast<double>(n) + problem.prior_term(theta);
}

Vector per_example_gradient(const ModelProblem& problem, const Vector& theta, Eigen::Index n) {
  if (n < 0 || n >= problem.num_examples()) {
    throw std::out_of_range("per_example_gradient: example index " + std::to_string(n) + " out of range");
  }
  if (theta.size() != problem.num_params()) throw ShapeError("per_example_gradient: theta has wrong length");
  Vector g = (problem.lambda() / static_cast<double>(problem.num_examples())) * theta;
  problem.accumulate_likelihood_gradient(theta, n, 1.0, g);
  return g;
}

Matrix per_example_gradients(const ModelProblem& problem, const Vector& theta) {
  if (theta.size() != problem.num_params()) throw ShapeError("per_example_gradients: theta has wrong length");
  const Eigen::Index n = problem.num_examples();
  const Vector prior = (problem.lambda() / static_cast<double>(n)) * theta;
  Matrix g(n, problem.num_params());
  Vector row(problem.num_params());
  for (Eigen::Index i = 0; i < n; ++i) {
    row = prior;
    problem.accumulate_likelihood_gradient(theta, i, 1.0, row);
    g.row(i) = row.transpose();
  }
  return g;
}

Vector full_gradient(const ModelProblem& problem, const Vector& theta) {
  if (theta.size() != problem.num_params()) throw ShapeError("full_gradient: theta has wrong length");
  const Eigen::Index n = problem.num_examples();
  Vector g = Vector::Zero(problem.num_params());
  for (Eigen::Index i = 0; i < n; ++i) problem.accumulate_likelihood_gradient(theta, i, 1.0, g);
  g /= static_cast<double>(n);
  g += (problem.lambda() / static_cast<double>(n)) * theta;
  if (!g.allFinite()) throw Error("full_gradient: numeric overflow");
  return g;
}

Vector minibatch_gradient(const ModelProblem& problem, const Vector& theta, std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("minibatch_gradient: empty batch");
  if (theta.size() != problem.num_params()) throw ShapeError("minibatch_gradient: theta has wrong length");
  const double w = 1.0 / static_cast<double>(batch.size());
  Vector g = (problem.lambda() / static_cast<double>(problem.num_examples())) * theta;
  for (std::size_t idx : batch) {
    if (static_cast<Eigen::Index>(idx) >= problem.num_examples()) {
      throw std::out_of_range("minibatch_gradient: example index out of range");
    }
    problem.accumulate_likelihood_gradient(theta, static_cast<Eigen::Index>(idx), w, g);
  }
  return g;
}

Matrix hessian(const ModelProblem& problem, const Vector& theta) {
  if (theta.size() != problem.num_params()) throw ShapeError("hessian: theta has wrong length");
  const Dataset& data = problem.data();
  const Eigen::Index n = problem.num_examples();
  const Eigen::Index d = problem.num_features();
  const Eigen::Index p = problem.num_params();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix h(p, p);

  switch (problem.task()) {
    case TaskKind::Linear:
      h = inv_n * (data.features.transpose() * data.features);
      break;
    case TaskKind::Logistic: {
      Vector w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = sigmoid(data.features.row(i).dot(theta));
        w(i) = s * (1.0 - s);
      }
      h = inv_n * (data.features.transpose() * w.asDiagonal() * data.features);
      break;
    }
    case TaskKind::Softmax: {
      const int k = data.num_classes;
      Matrix probs(n, k);
      Vector pr;
      for (Eigen::Index i = 0; i < n; ++i) {
        softmax_probs(data, theta, i, pr);
        probs.row(i) = pr.transpose();
      }
      for (int a = 0; a < k; ++a) {
        for (int b = a; b < k; ++b) {
          Vector w = -probs.col(a).cwiseProduct(probs.col(b));
          if (a == b) w += probs.col(a);
          const Matrix block = inv_n * (data.features.transpose() * w.asDiagonal() * data.features);
          h.block(a * d, b * d, d, d) = block;
          if (a != b) h.block(b * d, a * d, d, d) = block.transpose();
        }
      }
      break;
    }
  }
  h.diagonal().array() += problem.lambda() * inv_n;
  return symmetrize(h);
}

NoiseCovariance gradient_noise_covariance(const ModelProblem& problem, const Vector& theta) {
  const Matrix g = per_example_gradients(problem, theta);
  const Vector mean = g.colwise().mean();
  const Matrix centered = g.rowwise() - mean.transpose();
  NoiseCovariance out;
  out.cov = symmetrize((centered.transpose() * centered) / static_cast<double>(problem.num_examples()));
  out.factor = psd_factor(out.cov);
  return out;
}

Vector fit_map(const ModelProblem& problem, const Vector& theta0, const FitOptions& options) {
  if (theta0.size() != problem.num_params()) throw ShapeError("fit_map: theta0 has wrong length");
  if (!theta0.allFinite()) throw std::invalid_argument("fit_map: theta0 must be finite");

  Vector theta = theta0;
  Vector g = full_gradient(problem, theta);
  double loss = full_loss(problem, theta);
  Vector best = theta;
  double best_norm = g.lpNorm<Eigen::Infinity>();

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm < best_norm) {
      best_norm = gnorm;
      best = theta;
    }
    if (gnorm <= options.tol) return theta;

    Eigen::LLT<Matrix> llt(hessian(problem, theta));
    if (llt.info() != Eigen::Success) throw FactorizationError("fit_map: Hessian is not positive definite");
    const Vector step = -llt.solve(g);
    const double slope = g.dot(step);

    // Below this the loss cannot resolve the predicted decrease and the
    // Armijo test would accept vanishing steps.
    const bool resolvable = -slope > 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss));
    double t = 1.0;
    bool accepted = false;
    Vector trial;
    double trial_loss = loss;
    for (int ls = 0; resolvable && ls < 60; ++ls) {
      trial = theta + t * step;
      trial_loss = full_loss(problem, trial);
      if (std::isfinite(trial_loss) && trial_loss <= loss + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Near the optimum the loss stops resolving the decrease; accept the
      // Newton step if it still shrinks the gradient.
      trial = theta + step;
      const Vector trial_grad = full_gradient(problem, trial);
      if (trial_grad.lpNorm<Eigen::Infinity>() >= gnorm) {
        throw ConvergenceError("fit_map: line search failed", best, best_norm);
      }
      trial_loss = full_loss(problem, trial);
    }
    theta = trial;
    loss = trial_loss;
    g = full_gradient(problem, theta);
  }
  const double gnorm = g.lpNorm<Eigen::Infinity>();
  if (gnorm <= options.tol) return theta;
  if (gnorm < best_norm) {
    best_norm = gnorm;
    best = theta;
  }
  throw ConvergenceError("fit_map: exceeded " + std::to_string(options.max_iters) + " iterations", best, best_norm);
}

NoiseProfile profile_noise(const ModelProblem& problem, const FitOptions& options) {
  NoiseProfile profile;
  profile.map_point = fit_map(problem, Vector::Zero(problem.num_params()), options);
  profile.hessian = hessian(problem, profile.map_point);
  NoiseCovariance nc = gradient_noise_covariance(problem, profile.map_point);
  profile.noise_cov = std::move(nc.cov);
  profile.noise_factor = std::move(nc.factor);
  profile.num_examples = problem.num_examples();
  profile.gradient_inf_norm = full_gradient(problem, profile.map_point).lpNorm<Eigen::Infinity>();
  return profile;
}

}  // namespace constsgd
