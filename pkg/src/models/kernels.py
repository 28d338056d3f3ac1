"""
ARD squared-exponential kernel.

    k(x, x') = sf2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / l_d^2)

Hyperparameters live in log space and are stacked as
[log l_1, ..., log l_D, log sf2]; every function accepts either that vector
or a KernelHyperparams instance.
"""

from typing import Tuple, Union

import numpy as np
from scipy.linalg import cholesky, LinAlgError
from scipy.spatial.distance import cdist

from src.config.logging import get_logger
from src.config.settings import settings
from src.models.schemas import KernelHyperparams
from src.utils.exceptions import ConditioningError, InputError

logger = get_logger(__name__)

HyperLike = Union[KernelHyperparams, np.ndarray]


def num_params(input_dim: int) -> int:
    """Number of kernel hyperparameters for a given input dimension."""
    return input_dim + 1


def _unpack(hyp: HyperLike) -> Tuple[np.ndarray, float]:
    vector = hyp.to_vector() if isinstance(hyp, KernelHyperparams) else np.asarray(hyp, dtype=float)
    if vector.ndim != 1 or vector.size < 2:
        raise InputError("kernel hyperparameter vector must hold at least one lengthscale and a variance")
    return np.exp(vector[:-1]), float(np.exp(vector[-1]))


def _as_matrix(X, dim: int, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise InputError(f"{name} has shape {X.shape}, expected (n, {dim})")
    return X


def ardse_eval(x, x2, hyp: HyperLike) -> float:
    """Covariance between two single inputs."""
    lengthscales, sf2 = _unpack(hyp)
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.size != lengthscales.size or x2.size != lengthscales.size:
        raise InputError(
            f"input dimensions {x.size} and {x2.size} do not match {lengthscales.size} lengthscales"
        )
    r2 = np.sum(((x - x2) / lengthscales) ** 2)
    return sf2 * float(np.exp(-0.5 * r2))


def cross_matrix(X, Xstar, hyp: HyperLike) -> np.ndarray:
    """(n, m) covariances between training rows X and query rows Xstar."""
    lengthscales, sf2 = _unpack(hyp)
    X = _as_matrix(X, lengthscales.size, "X")
    Xstar = _as_matrix(Xstar, lengthscales.size, "Xstar")
    r2 = cdist(X / lengthscales, Xstar / lengthscales, "sqeuclidean")
    return sf2 * np.exp(-0.5 * r2)


def gram(X, hyp: HyperLike) -> np.ndarray:
    """Symmetric (n, n) Gram matrix; the diagonal equals sf2."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputError("gram needs at least one input row")
    return cross_matrix(X, X, hyp)


def cross(X, xstar, hyp: HyperLike) -> np.ndarray:
    """Covariances between each training row and a single query input."""
    return cross_matrix(X, np.asarray(xstar, dtype=float).reshape(1, -1), hyp)[:, 0]


def gram_grad(X, hyp: HyperLike, param_index: int, K: np.ndarray = None) -> np.ndarray:
    """
    Derivative of the Gram matrix with respect to one log-hyperparameter.

    Args:
        X: (n, D) inputs
        hyp: kernel hyperparameters
        param_index: 0..D-1 for log lengthscales, D for log sf2
        K: optional precomputed gram(X, hyp)

    Returns:
        (n, n) symmetric matrix dK/dtheta
    """
    lengthscales, _ = _unpack(hyp)
    dim = lengthscales.size
    if not 0 <= param_index <= dim:
        raise InputError(f"param_index {param_index} out of range for {dim + 1} kernel parameters")
    X = _as_matrix(X, dim, "X")
    if K is None:
        K = gram(X, hyp)
    if param_index == dim:
        return K.copy()
    column = X[:, param_index] / lengthscales[param_index]
    return K * np.subtract.outer(column, column) ** 2


def robust_cholesky(A: np.ndarray, scale: float) -> Tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of A, adding diagonal jitter only when needed.

    Jitter starts at jitter_initial * scale and grows tenfold up to
    jitter_max * scale.

    Returns:
        (L, jitter) with L @ L.T == A + jitter * I
    """
    try:
        return cholesky(A, lower=True, check_finite=True), 0.0
    except LinAlgError:
        pass
    except ValueError as e:
        raise ConditioningError(f"matrix contains non-finite entries: {e}") from e

    scale = abs(scale) if scale and np.isfinite(scale) else 1.0
    jitter = settings.jitter_initial * scale
    limit = settings.jitter_max * scale * (1 + 1e-12)
    eye = np.eye(A.shape[0])
    while jitter <= limit:
        try:
            L = cholesky(A + jitter * eye, lower=True)
            logger.warning("Cholesky needed jitter", jitter=jitter, scale=scale, n=A.shape[0])
            return L, jitter
        except LinAlgError:
            jitter *= 10.0
    raise ConditioningError(
        f"Cholesky factorization failed with jitter up to {settings.jitter_max:g} x {scale:g}"
    )
