"""
Tests for homoscedastic GP regression.
"""

import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from src.models import gp, kernels
from src.models.schemas import KernelHyperparams, OptimConfig
from src.utils.exceptions import InputError
from src.utils.optim import grad_check


def random_instance(rng, n=None, dim=3):
    n = n or int(rng.integers(2, 21))
    X = rng.normal(size=(n, dim))
    y = rng.normal(size=n)
    hyp = KernelHyperparams(
        log_lengthscales=list(rng.uniform(-0.5, 1.0, size=dim)),
        log_signal_variance=float(rng.uniform(-1.0, 1.0))
    )
    return X, y, hyp, float(rng.uniform(-3.0, 0.0))


def naive_predict(X, y, hyp, log_sn2, xstar):
    A = kernels.gram(X, hyp) + math.exp(log_sn2) * np.eye(len(y))
    k = np.array([kernels.ardse_eval(row, xstar, hyp) for row in X])
    mean = k @ np.linalg.solve(A, y)
    var = kernels.ardse_eval(xstar, xstar, hyp) - k @ np.linalg.solve(A, k)
    return mean, var


def test_nlml_matches_gaussian_log_density(rng):
    for _ in range(5):
        X, y, hyp, log_sn2 = random_instance(rng)
        theta = np.append(hyp.to_vector(), log_sn2)
        value, _ = gp.nlml(theta, X, y)
        cov = kernels.gram(X, hyp) + math.exp(log_sn2) * np.eye(len(y))
        assert value == pytest.approx(-multivariate_normal(np.zeros(len(y)), cov).logpdf(y), rel=1e-9)


def test_nlml_gradient_matches_finite_differences(rng):
    for _ in range(20):
        X, y, hyp, log_sn2 = random_instance(rng)
        theta = np.append(hyp.to_vector(), log_sn2)
        assert grad_check(lambda t: gp.nlml(t, X, y), theta) < 1e-4


def test_nlml_rejects_wrong_parameter_count(rng):
    X, y, hyp, _ = random_instance(rng, n=5)
    with pytest.raises(InputError):
        gp.nlml(hyp.to_vector(), X, y)


def test_predict_matches_dense_solve(rng):
    for _ in range(50):
        X, y, hyp, log_sn2 = random_instance(rng)
        model = gp.GPModel.from_hyperparameters(X, y, hyp, log_sn2)
        xstar = rng.normal(size=3)
        prediction = model.predict(xstar)
        mean, var = naive_predict(X, y, hyp, log_sn2, xstar)
        assert abs(prediction.mean[0] - mean) < 1e-8
        assert abs(prediction.latent_variance[0] - var) < 1e-8
        assert prediction.total_variance[0] == pytest.approx(var + math.exp(log_sn2), abs=1e-8)


def test_cached_factorization(rng):
    X, y, hyp, log_sn2 = random_instance(rng, n=12)
    model = gp.GPModel.from_hyperparameters(X, y, hyp, log_sn2)
    A = kernels.gram(X, hyp) + math.exp(log_sn2) * np.eye(12)
    np.testing.assert_allclose(model.chol_factor @ model.chol_factor.T, A, atol=1e-12)
    residual = np.linalg.norm(A @ model.alpha - y) / np.linalg.norm(y)
    assert residual < 1e-8


def test_far_query_reverts_to_prior(rng):
    X, y, hyp, log_sn2 = random_instance(rng, n=8)
    prediction = gp.GPModel.from_hyperparameters(X, y, hyp, log_sn2).predict(np.full(3, 1e3))
    assert abs(prediction.mean[0]) < 1e-6
    assert prediction.latent_variance[0] == pytest.approx(hyp.signal_variance, abs=1e-6)


def test_single_training_point():
    hyp = KernelHyperparams(log_lengthscales=[0.0], log_signal_variance=0.0)
    model = gp.GPModel.from_hyperparameters([[0.0]], [2.0], hyp, math.log(0.5))
    assert model.predict([0.0]).mean[0] == pytest.approx(2.0 / 1.5)


def test_log_density_uses_total_variance(rng):
    X, y, hyp, log_sn2 = random_instance(rng, n=6)
    model = gp.GPModel.from_hyperparameters(X, y, hyp, log_sn2)
    xstar = rng.normal(size=(4, 3))
    ystar = rng.normal(size=4)
    prediction = model.predict(xstar)
    expected = [
        -0.5 * (math.log(2 * math.pi * v) + (o - m) ** 2 / v)
        for o, m, v in zip(ystar, prediction.mean, prediction.total_variance)
    ]
    np.testing.assert_allclose(model.log_density(xstar, ystar), expected, rtol=1e-12)


def test_fit_needs_two_samples():
    with pytest.raises(InputError):
        gp.fit([[0.0, 0.0, 0.0]], [1.0])
    with pytest.raises(InputError):
        gp.fit(np.zeros((3, 3)), np.zeros(2))


def test_fit_on_two_samples(fast_optim):
    X = np.array([[20.0, 0.2, -0.3], [20.0, 0.8, 0.4]])
    y = np.array([3.1, 3.7])
    model = gp.fit(X, y, fast_optim)
    prediction = model.predict(np.array([[20.0, 0.5, 0.0]]))
    assert np.all(np.isfinite(prediction.mean))
    assert np.all(prediction.total_variance > 0)


def test_fit_on_constant_targets(rng, fast_optim):
    X = rng.uniform(size=(12, 3))
    model = gp.fit(X, np.full(12, 2.5), fast_optim)
    prediction = model.predict(rng.uniform(size=(5, 3)))
    np.testing.assert_allclose(prediction.mean, 2.5)
    assert np.all(np.isfinite(prediction.total_variance))
    assert np.all(prediction.total_variance >= 0)


def test_fit_recovers_noise_level_of_prior_draw():
    rng = np.random.default_rng(7)
    n, sigma = 200, 0.1
    X = np.sort(rng.uniform(0.0, 1.0, size=(n, 1)), axis=0)
    truth = KernelHyperparams(log_lengthscales=[math.log(0.15)], log_signal_variance=0.0)
    K = kernels.gram(X, truth) + 1e-10 * np.eye(n)
    f = np.linalg.cholesky(K) @ rng.normal(size=n)
    y = f + sigma * rng.normal(size=n)

    model, result = gp.fit_with_result(X, y, OptimConfig(num_restarts=2, seed=0))
    assert abs(0.5 * math.log(model.noise_variance) - math.log(sigma)) < 0.3
    assert result.fun <= result.trace[0]
    assert model.objective == result.fun


def test_fit_improves_on_initial_objective(rng, fast_optim):
    X = rng.uniform(size=(40, 3))
    y = np.sin(3 * X[:, 0]) + 0.05 * rng.normal(size=40)
    model, result = gp.fit_with_result(X, y, fast_optim)
    assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
    assert np.mean((model.predict(X).mean - y) ** 2) < np.var(y)


def test_serialized_model_reproduces_predictions(rng, fast_optim):
    X = rng.uniform(size=(25, 3))
    y = X[:, 1] - X[:, 2] + 0.1 * rng.normal(size=25)
    model = gp.fit(X, y, fast_optim)
    restored = gp.GPModel.from_dict(model.to_dict())
    query = rng.uniform(size=(5, 3))
    np.testing.assert_array_equal(model.predict(query).mean, restored.predict(query).mean)
    np.testing.assert_array_equal(model.predict(query).total_variance, restored.predict(query).total_variance)
