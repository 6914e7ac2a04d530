import numpy as np
import pytest

import constsgd


def linear_problem(n=800, seed=1):
    data, _ = constsgd.make_synthetic("linear", num_features=3, num_examples=n, seed=seed)
    return data, constsgd.ModelProblem(data, 1.0)


def test_lyapunov_residual():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(4, 4))
    a = g @ g.T + 4 * np.eye(4)
    q = np.eye(4)
    x = constsgd.solve_lyapunov(a, q)
    assert np.allclose(a @ x + x @ a.T, q, atol=1e-12)


def test_map_matches_conjugate_posterior():
    data, problem = linear_problem()
    profile = constsgd.profile_noise(problem)
    mean, cov = constsgd.conjugate_linear_posterior(data, 1.0)
    assert np.allclose(profile.map_point, mean, atol=1e-8)
    n = data.num_examples
    assert np.allclose(np.linalg.inv(n * profile.hessian), cov, rtol=1e-8)


def test_gradient_matches_finite_differences():
    _, problem = linear_problem(200)
    theta = np.array([0.3, -0.2, 0.5])
    h = 1e-6
    fd = [(problem.loss(theta + h * e) - problem.loss(theta - h * e)) / (2 * h) for e in np.eye(3)]
    assert np.allclose(problem.gradient(theta), fd, atol=1e-7)


def test_full_preconditioner_predicts_zero_kl():
    data, problem = linear_problem()
    profile = constsgd.profile_noise(problem)
    n, s = data.num_examples, 10
    eps = constsgd.optimal_scalar_rate(profile.noise_cov, s, n)
    h = constsgd.optimal_full_preconditioner(profile.noise_cov, eps, s, n)
    sigma = constsgd.predicted_covariance_sgd(profile.hessian, profile.noise_cov, eps, s, h)
    assert abs(constsgd.kl_to_posterior(sigma, profile.hessian, n)) < 1e-10


def test_chain_is_deterministic_and_shaped():
    _, problem = linear_problem()
    theta0 = problem.fit_map()
    a = constsgd.run_constant_sgd(problem, theta0, epsilon=0.01, minibatch=10, n_samples=500, seed=3)
    b = constsgd.run_constant_sgd(problem, theta0, epsilon=0.01, minibatch=10, n_samples=500, seed=3)
    assert a.shape == (500, 3)
    assert np.array_equal(a, b)


def test_kl_table_rows():
    _, problem = linear_problem()
    profile = constsgd.profile_noise(problem)
    rows = constsgd.kl_table(problem, profile, "sgd,sgd-f,sgfs-d", minibatch=10, n_samples=20000, seed=1)
    assert [r["algorithm"] for r in rows] == ["sgd", "sgd-f", "sgfs-d"]
    assert all(r["status"] == "ok" and r["predicted_kl"] >= -1e-8 for r in rows)


def test_vem_returns_positive_lambda():
    data, _ = constsgd.make_synthetic("softmax", num_features=3, num_examples=400, num_classes=3, seed=2)
    train, val = constsgd.train_val_split(data, 0.75, 1)
    out = constsgd.run_vem(train, val, minibatch=10, max_outer_iters=20, seed=4)
    assert out["lambda_"] > 0
    assert len(out["trace_lambda"]) == 20
    assert all(l > 0 for l in out["trace_lambda"])


def test_errors_map_to_python_exceptions():
    with pytest.raises(constsgd.StabilityError):
        constsgd.solve_lyapunov(-np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        constsgd.ModelProblem(linear_problem(50)[0], -1.0)
    assert issubclass(constsgd.DegenerateError, RuntimeError)
