"""
Homoscedastic Gaussian process regression.

Training maximizes the marginal likelihood over the ARD-SE hyperparameters and
the noise variance; prediction uses the cached Cholesky factor of K + sn2*I:

    a_*  = k_*^T (K + sn2 I)^-1 y
    c_*^2 = k_** - k_*^T (K + sn2 I)^-1 k_*
    p(y_*) = N(a_*, c_*^2 + sn2)

Fitting happens in standardized space; predictions are reported in original units.
"""

import math
import time
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from src.config.logging import log_fit_completed
from src.models import kernels
from src.models.schemas import KernelHyperparams, OptimConfig
from src.utils.exceptions import InputError
from src.utils.helpers import LOG_2PI, Standardizer, gaussian_log_density
from src.utils.optim import OptimResult, minimize

NOISE_FLOOR_RATIO = 1e-10


@dataclass(frozen=True)
class GPPrediction:
    """Predictive moments in original output units."""
    mean: np.ndarray
    latent_variance: np.ndarray
    noise_variance: np.ndarray
    total_variance: np.ndarray


def nlml(hyp_vector, X, y, noise_floor: float = 0.0) -> Tuple[float, np.ndarray]:
    """
    Negative log marginal likelihood and its gradient.

    Args:
        hyp_vector: [log l_1..log l_D, log sf2, log sn2]
        X: (n, D) inputs
        y: (n,) targets
        noise_floor: added to exp(log sn2)

    Returns:
        (0.5 y^T A^-1 y + 0.5 log|A| + n/2 log 2pi, gradient) with A = K + sn2 I
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    hyp_vector = np.asarray(hyp_vector, dtype=float)
    n, dim = X.shape
    if hyp_vector.size != dim + 2:
        raise InputError(f"expected {dim + 2} hyperparameters, got {hyp_vector.size}")
    if y.size != n:
        raise InputError("X and y have different lengths")

    kern = hyp_vector[:dim + 1]
    raw_noise = math.exp(hyp_vector[-1])
    sn2 = raw_noise + noise_floor
    K = kernels.gram(X, kern)
    A = K + sn2 * np.eye(n)
    L, _ = kernels.robust_cholesky(A, scale=math.exp(kern[-1]) + sn2)

    alpha = cho_solve((L, True), y)
    value = 0.5 * float(y @ alpha) + float(np.sum(np.log(np.diag(L)))) + 0.5 * n * LOG_2PI

    W = cho_solve((L, True), np.eye(n)) - np.outer(alpha, alpha)
    grad = np.empty(dim + 2)
    for i in range(dim + 1):
        grad[i] = 0.5 * np.sum(W * kernels.gram_grad(X, kern, i, K))
    grad[-1] = 0.5 * raw_noise * np.trace(W)
    return value, grad


@dataclass(frozen=True)
class GPModel:
    """Trained GP with cached factorization (standardized space)."""
    kernel_hyp: KernelHyperparams
    log_noise_variance: float
    training_inputs: np.ndarray
    training_targets: np.ndarray
    standardizer: Standardizer
    chol_factor: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    objective: Optional[float] = None

    @classmethod
    def from_hyperparameters(
        cls,
        X,
        y,
        kernel_hyp: KernelHyperparams,
        log_noise_variance: float,
        standardizer: Optional[Standardizer] = None,
        objective: Optional[float] = None
    ) -> "GPModel":
        """Build the prediction caches for fixed hyperparameters."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if standardizer is None:
            standardizer = Standardizer.identity(X.shape[1])
        Xs, ys = standardizer.inputs(X), standardizer.targets(y)

        K = kernels.gram(Xs, kernel_hyp)
        sn2 = math.exp(log_noise_variance)
        L, jitter = kernels.robust_cholesky(K + sn2 * np.eye(len(ys)), scale=kernel_hyp.signal_variance + sn2)
        return cls(
            kernel_hyp=kernel_hyp,
            log_noise_variance=float(log_noise_variance),
            training_inputs=X,
            training_targets=y,
            standardizer=standardizer,
            chol_factor=L,
            alpha=cho_solve((L, True), ys),
            jitter=jitter,
            objective=objective
        )

    @property
    def noise_variance(self) -> float:
        """Noise variance in original output units."""
        return float(self.standardizer.restore_variance(math.exp(self.log_noise_variance)))

    def predict(self, Xstar) -> GPPrediction:
        """Predictive moments at one input (1-D) or many (2-D)."""
        Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
        Xs = self.standardizer.inputs(self.training_inputs)
        Ks = kernels.cross_matrix(Xs, self.standardizer.inputs(Xstar), self.kernel_hyp)

        mean = Ks.T @ self.alpha
        v = solve_triangular(self.chol_factor, Ks, lower=True)
        latent = np.maximum(self.kernel_hyp.signal_variance - np.sum(v * v, axis=0), 0.0)
        noise = np.full_like(latent, math.exp(self.log_noise_variance))

        latent = self.standardizer.restore_variance(latent)
        noise = self.standardizer.restore_variance(noise)
        return GPPrediction(
            mean=self.standardizer.restore_mean(mean),
            latent_variance=latent,
            noise_variance=noise,
            total_variance=latent + noise
        )

    def log_density(self, Xstar, ystar) -> np.ndarray:
        """Gaussian predictive log density of observations in original units."""
        prediction = self.predict(Xstar)
        return gaussian_log_density(ystar, prediction.mean, prediction.total_variance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kernel": self.kernel_hyp.model_dump(),
            "log_noise_variance": self.log_noise_variance,
            "training_inputs": self.training_inputs.tolist(),
            "training_targets": self.training_targets.tolist(),
            "standardizer": self.standardizer.to_dict(),
            "objective": self.objective
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GPModel":
        return cls.from_hyperparameters(
            X=np.asarray(data["training_inputs"], dtype=float),
            y=np.asarray(data["training_targets"], dtype=float),
            kernel_hyp=KernelHyperparams(**data["kernel"]),
            log_noise_variance=float(data["log_noise_variance"]),
            standardizer=Standardizer.from_dict(data["standardizer"]),
            objective=data.get("objective")
        )


def initial_hyperparameters(Xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Scale-aware starting point in standardized space."""
    x_std = Xs.std(axis=0)
    x_std = np.where(x_std > 0, x_std, 1.0)
    y_var = float(ys.var()) if ys.var() > 0 else 1.0
    return np.concatenate([np.log(x_std), [math.log(y_var), math.log(0.01 * y_var)]])


def fit_with_result(X, y, config: Optional[OptimConfig] = None, output: str = "") -> Tuple[GPModel, OptimResult]:
    """Fit a GP and also return the optimizer record."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2 or X.shape[0] != y.size:
        raise InputError("GP fit needs at least two samples with matching targets")
    started = time.time()

    standardizer = Standardizer.fit(X, y)
    Xs, ys = standardizer.inputs(X), standardizer.targets(y)
    y_var = float(ys.var()) if ys.var() > 0 else 1.0
    floor = NOISE_FLOOR_RATIO * y_var

    result = minimize(lambda theta: nlml(theta, Xs, ys, floor), initial_hyperparameters(Xs, ys), config)
    dim = X.shape[1]
    model = GPModel.from_hyperparameters(
        X, y,
        kernel_hyp=KernelHyperparams.from_vector(result.x[:dim + 1]),
        log_noise_variance=math.log(math.exp(result.x[-1]) + floor),
        standardizer=standardizer,
        objective=result.fun
    )
    log_fit_completed(
        model_kind="gp",
        output=output,
        n_samples=int(y.size),
        objective=result.fun,
        iterations=result.iterations,
        converged=result.converged,
        elapsed_ms=int((time.time() - started) * 1000),
        restarts=len(result.restart_values)
    )
    return model, result


def fit(X, y, config: Optional[OptimConfig] = None, output: str = "") -> GPModel:
    """Fit a GP to one output by marginal-likelihood maximization."""
    model, _ = fit_with_result(X, y, config, output)
    return model
