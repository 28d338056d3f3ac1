"""
Variational heteroscedastic Gaussian process.

Two latent processes share the inputs: f(x) for the mean and g(x) = log sn2(x)
for the noise. With v = diag(Lambda) - 1/2 the variational posterior over g at
the training inputs is N(mu, Sigma) with

    mu    = K_g v + mu0
    Sigma = (K_g^-1 + Lambda)^-1

and the bound maximized during training is

    F = log N(y | 0, K_f + R) - tr(Sigma)/4 - KL(N(mu, Sigma) || N(mu0, K_g)),
    R_ii = exp(mu_i - Sigma_ii / 2).

Every quantity is computed through B = I + Lambda^1/2 K_g Lambda^1/2 (eigenvalues
>= 1), so K_g is never inverted. Prediction at x_*:

    a_*  = k_f*^T (K_f + R)^-1 y
    c_*^2 = k_f** - k_f*^T (K_f + R)^-1 k_f*
    b_*  = k_g*^T v + mu0
    d_*^2 = k_g** - k_g*^T (K_g + Lambda^-1)^-1 k_g*
    p(y_*) = N(a_*, c_*^2 + exp(b_* + d_*^2 / 2))

Parameters are stacked as [theta_f, theta_g, mu0, log diag(Lambda)].
"""

import math
import time
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from src.config.logging import get_logger, log_fit_completed
from src.models import gp, kernels
from src.models.schemas import KernelHyperparams, OptimConfig
from src.utils.exceptions import InputError
from src.utils.helpers import LOG_2PI, Standardizer, gaussian_log_density
from src.utils.optim import OptimResult, minimize

logger = get_logger(__name__)

LAMBDA_FLOOR = 1e-12
MAX_LOG_NOISE = 700.0


@dataclass(frozen=True)
class VHGPPrediction:
    """Predictive moments in original output units."""
    mean: np.ndarray
    latent_variance: np.ndarray
    log_noise_mean: np.ndarray
    log_noise_variance: np.ndarray
    noise_variance: np.ndarray
    total_variance: np.ndarray
    overflow: np.ndarray


def split_parameters(params, n: int, dim: int):
    """Unstack [theta_f, theta_g, mu0, rho] and map rho to Lambda."""
    params = np.asarray(params, dtype=float).ravel()
    p = kernels.num_params(dim)
    if params.size != 2 * p + 1 + n:
        raise InputError(f"expected {2 * p + 1 + n} parameters, got {params.size}")
    raw_lambda = np.exp(params[2 * p + 1:])
    return params[:p], params[p:2 * p], float(params[2 * p]), np.maximum(raw_lambda, LAMBDA_FLOOR), raw_lambda


def _g_posterior(Kg: np.ndarray, lam: np.ndarray):
    """Cholesky of B, sqrt(Lambda) and Sigma = K_g - K_g S B^-1 S K_g."""
    s = np.sqrt(lam)
    B = np.eye(lam.size) + s[:, None] * Kg * s[None, :]
    LB, _ = kernels.robust_cholesky(B, scale=1.0)
    V = solve_triangular(LB, s[:, None] * Kg, lower=True)
    return s, LB, Kg - V.T @ V


def _noise_diagonal(mu: np.ndarray, sigma_diag: np.ndarray) -> np.ndarray:
    return np.exp(np.minimum(mu - 0.5 * sigma_diag, MAX_LOG_NOISE))


def bound(params, X, y) -> Tuple[float, np.ndarray]:
    """
    Variational lower bound on the log marginal likelihood and its gradient.

    Args:
        params: [theta_f, theta_g, mu0, log diag(Lambda)]
        X: (n, D) inputs
        y: (n,) targets

    Returns:
        (F, dF/dparams)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, dim = X.shape
    if y.size != n:
        raise InputError("X and y have different lengths")
    th_f, th_g, mu0, lam, raw_lambda = split_parameters(params, n, dim)
    eye = np.eye(n)

    Kf = kernels.gram(X, th_f)
    Kg = kernels.gram(X, th_g)
    v = lam - 0.5
    Kg_v = Kg @ v
    mu = Kg_v + mu0
    s, LB, Sigma = _g_posterior(Kg, lam)
    sigma_diag = np.diag(Sigma).copy()
    r = _noise_diagonal(mu, sigma_diag)

    LA, _ = kernels.robust_cholesky(Kf + np.diag(r), scale=math.exp(th_f[-1]) + float(np.mean(r)))
    alpha = cho_solve((LA, True), y)
    log_lik = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(LA)))) - 0.5 * n * LOG_2PI

    B_inv = cho_solve((LB, True), eye)
    kl = 0.5 * (np.trace(B_inv) + float(v @ Kg_v) - n + 2.0 * float(np.sum(np.log(np.diag(LB)))))
    value = log_lik - 0.25 * float(np.sum(sigma_diag)) - kl

    # dF/dmu_i and dF/dSigma_ii
    W = cho_solve((LA, True), eye) - np.outer(alpha, alpha)
    beta = -0.5 * np.diag(W) * r
    gamma = -0.5 * beta - 0.25

    p = th_f.size
    grad = np.empty(2 * p + 1 + n)
    for i in range(p):
        grad[i] = -0.5 * np.sum(W * kernels.gram_grad(X, th_f, i, Kf))

    M = eye - Sigma * lam[None, :]
    S_g = M.T @ (gamma[:, None] * M)
    S_g -= 0.5 * lam[:, None] * (Sigma - (Sigma * lam[None, :]) @ Sigma) * lam[None, :]
    for i in range(p):
        D = kernels.gram_grad(X, th_g, i, Kg)
        grad[p + i] = float(beta @ D @ v) + np.sum(D * S_g) - 0.5 * float(v @ D @ v)

    grad[2 * p] = float(np.sum(beta))

    dlam = Kg @ (beta - v) - (Sigma ** 2) @ (gamma + 0.5 * lam)
    grad[2 * p + 1:] = dlam * np.where(raw_lambda > LAMBDA_FLOOR, raw_lambda, 0.0)
    return value, grad


@dataclass(frozen=True)
class VHGPModel:
    """Trained VHGP with cached factorizations (standardized space)."""
    kernel_f: KernelHyperparams
    kernel_g: KernelHyperparams
    mu0: float
    lambda_diag: np.ndarray
    training_inputs: np.ndarray
    training_targets: np.ndarray
    standardizer: Standardizer
    chol_f: np.ndarray
    alpha: np.ndarray
    chol_g: np.ndarray
    sqrt_lambda: np.ndarray
    noise_diag: np.ndarray
    objective: Optional[float] = None

    @classmethod
    def from_parameters(
        cls,
        X,
        y,
        kernel_f: KernelHyperparams,
        kernel_g: KernelHyperparams,
        mu0: float,
        lambda_diag,
        standardizer: Optional[Standardizer] = None,
        objective: Optional[float] = None
    ) -> "VHGPModel":
        """Build the prediction caches for fixed parameters."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        lam = np.maximum(np.asarray(lambda_diag, dtype=float).ravel(), LAMBDA_FLOOR)
        if lam.size != y.size:
            raise InputError("lambda_diag must have one entry per training sample")
        if standardizer is None:
            standardizer = Standardizer.identity(X.shape[1])
        Xs, ys = standardizer.inputs(X), standardizer.targets(y)

        Kf = kernels.gram(Xs, kernel_f)
        Kg = kernels.gram(Xs, kernel_g)
        s, LB, Sigma = _g_posterior(Kg, lam)
        r = _noise_diagonal(Kg @ (lam - 0.5) + mu0, np.diag(Sigma))
        LA, _ = kernels.robust_cholesky(Kf + np.diag(r), scale=kernel_f.signal_variance + float(np.mean(r)))
        return cls(
            kernel_f=kernel_f,
            kernel_g=kernel_g,
            mu0=float(mu0),
            lambda_diag=lam,
            training_inputs=X,
            training_targets=y,
            standardizer=standardizer,
            chol_f=LA,
            alpha=cho_solve((LA, True), ys),
            chol_g=LB,
            sqrt_lambda=s,
            noise_diag=r,
            objective=objective
        )

    def predict(self, Xstar) -> VHGPPrediction:
        """Predictive moments at one input (1-D) or many (2-D)."""
        Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
        Xs = self.standardizer.inputs(self.training_inputs)
        Xq = self.standardizer.inputs(Xstar)

        Kf_star = kernels.cross_matrix(Xs, Xq, self.kernel_f)
        mean = Kf_star.T @ self.alpha
        vf = solve_triangular(self.chol_f, Kf_star, lower=True)
        latent = np.maximum(self.kernel_f.signal_variance - np.sum(vf * vf, axis=0), 0.0)

        Kg_star = kernels.cross_matrix(Xs, Xq, self.kernel_g)
        b = Kg_star.T @ (self.lambda_diag - 0.5) + self.mu0
        vg = solve_triangular(self.chol_g, self.sqrt_lambda[:, None] * Kg_star, lower=True)
        d2 = np.maximum(self.kernel_g.signal_variance - np.sum(vg * vg, axis=0), 0.0)

        exponent = b + 0.5 * d2
        overflow = exponent > MAX_LOG_NOISE
        if np.any(overflow):
            logger.warning("Clamped predicted log noise", count=int(np.sum(overflow)))
        noise = np.exp(np.minimum(exponent, MAX_LOG_NOISE))

        scale2 = self.standardizer.y_scale ** 2
        latent = latent * scale2
        noise = noise * scale2
        return VHGPPrediction(
            mean=self.standardizer.restore_mean(mean),
            latent_variance=latent,
            log_noise_mean=b + math.log(scale2),
            log_noise_variance=d2,
            noise_variance=noise,
            total_variance=latent + noise,
            overflow=overflow
        )

    def log_density(self, Xstar, ystar) -> np.ndarray:
        """Gaussian predictive log density of observations in original units."""
        prediction = self.predict(Xstar)
        return gaussian_log_density(ystar, prediction.mean, prediction.total_variance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kernel_f": self.kernel_f.model_dump(),
            "kernel_g": self.kernel_g.model_dump(),
            "mu0": self.mu0,
            "lambda_diag": self.lambda_diag.tolist(),
            "training_inputs": self.training_inputs.tolist(),
            "training_targets": self.training_targets.tolist(),
            "standardizer": self.standardizer.to_dict(),
            "objective": self.objective
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VHGPModel":
        return cls.from_parameters(
            X=np.asarray(data["training_inputs"], dtype=float),
            y=np.asarray(data["training_targets"], dtype=float),
            kernel_f=KernelHyperparams(**data["kernel_f"]),
            kernel_g=KernelHyperparams(**data["kernel_g"]),
            mu0=float(data["mu0"]),
            lambda_diag=np.asarray(data["lambda_diag"], dtype=float),
            standardizer=Standardizer.from_dict(data["standardizer"]),
            objective=data.get("objective")
        )


def predictive_density(model: VHGPModel, xstar, ystar) -> np.ndarray:
    """Log density of ystar under the Gaussian predictive at xstar."""
    return model.log_density(xstar, ystar)


def initial_parameters(gp_model: gp.GPModel, n: int) -> np.ndarray:
    """Start at the homoscedastic solution with a flat log-noise process."""
    theta_f = gp_model.kernel_hyp.to_vector()
    theta_g = np.concatenate([theta_f[:-1] + math.log(2.0), [0.0]])
    return np.concatenate([theta_f, theta_g, [gp_model.log_noise_variance], np.full(n, math.log(0.5))])


def fit_with_result(X, y, config: Optional[OptimConfig] = None, output: str = "") -> Tuple[VHGPModel, OptimResult]:
    """Fit a VHGP and also return the optimizer record."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2 or X.shape[0] != y.size:
        raise InputError("VHGP fit needs at least two samples with matching targets")
    started = time.time()

    warm_start = gp.fit(X, y, config, output=output)
    standardizer = warm_start.standardizer
    Xs, ys = standardizer.inputs(X), standardizer.targets(y)
    n, dim = Xs.shape

    def objective(params):
        value, grad = bound(params, Xs, ys)
        return -value, -grad

    result = minimize(objective, initial_parameters(warm_start, n), config)
    th_f, th_g, mu0, lam, _ = split_parameters(result.x, n, dim)
    model = VHGPModel.from_parameters(
        X, y,
        kernel_f=KernelHyperparams.from_vector(th_f),
        kernel_g=KernelHyperparams.from_vector(th_g),
        mu0=mu0,
        lambda_diag=lam,
        standardizer=standardizer,
        objective=-result.fun
    )
    log_fit_completed(
        model_kind="vhgp",
        output=output,
        n_samples=n,
        objective=-result.fun,
        iterations=result.iterations,
        converged=result.converged,
        elapsed_ms=int((time.time() - started) * 1000),
        restarts=len(result.restart_values)
    )
    return model, result


def fit(X, y, config: Optional[OptimConfig] = None, output: str = "") -> VHGPModel:
    """Fit a VHGP to one output by maximizing the variational bound."""
    model, _ = fit_with_result(X, y, config, output)
    return model
