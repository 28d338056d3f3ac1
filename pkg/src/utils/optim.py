"""
Restarted minimizer used to train the GP and VHGP models.

Each run is scipy's L-BFGS-B on an objective returning (value, gradient).
Accepted iterates satisfy sufficient decrease, so the recorded objective
trace never increases.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize

from src.config.logging import get_logger
from src.models.schemas import OptimConfig
from src.utils.exceptions import InputError, NumericalError, PushVHGPError

logger = get_logger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]

RESTART_STD = 0.5
PENALTY_SCALE = 1e6

# scipy L-BFGS-B status codes
STATUS_CONVERGED = 0
STATUS_LIMIT = 1


@dataclass
class OptimResult:
    """Outcome of one minimization (best over restarts)."""
    x: np.ndarray
    fun: float
    trace: List[float]
    iterations: int
    converged: bool
    warning: bool
    message: str
    restart: int = 0
    restart_values: List[float] = field(default_factory=list)


def _evaluate(objective: Objective, x: np.ndarray) -> Tuple[float, Optional[np.ndarray]]:
    """Evaluate, mapping numerical failures to a non-finite value."""
    try:
        value, grad = objective(x)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError):
        return np.inf, None
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        return np.inf, None
    return value, grad


class _TracedObjective:
    """
    Objective adapter for scipy.

    Failed evaluations return a large finite value with the last good
    gradient, which makes the line search shrink its step. Values are kept
    per point so the iteration callback can record the accepted objective.
    """

    def __init__(self, objective: Objective, f0: float, g0: np.ndarray):
        self.objective = objective
        self.best = f0
        self.last_grad = g0
        self.trace = [f0]
        self.failures = 0
        self._seen: Dict[bytes, float] = {}

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        value, grad = _evaluate(self.objective, x)
        if grad is None:
            self.failures += 1
            return self.best + PENALTY_SCALE * (1.0 + abs(self.best)), self.last_grad
        self._seen[x.tobytes()] = value
        self.best = min(self.best, value)
        self.last_grad = grad
        return value, grad

    def on_iteration(self, xk: np.ndarray) -> None:
        value = self._seen.get(np.asarray(xk, dtype=float).tobytes())
        if value is None:
            value, _ = _evaluate(self.objective, xk)
        self.trace.append(value)
        self._seen.clear()


def _run(objective: Objective, x0: np.ndarray, f0: float, g0: np.ndarray, config: OptimConfig) -> OptimResult:
    traced = _TracedObjective(objective, f0, g0)
    res = optimize.minimize(
        traced,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=traced.on_iteration,
        options={
            "maxiter": config.max_iterations,
            "gtol": config.gradient_tolerance,
            "ftol": config.objective_tolerance,
            "maxcor": config.memory,
        },
    )
    if traced.failures:
        logger.debug("Line search recovered from non-finite objective", failures=traced.failures)

    x = np.asarray(res.x, dtype=float)
    fun = float(res.fun)
    message = res.message if isinstance(res.message, str) else res.message.decode()
    return OptimResult(
        x=x,
        fun=fun,
        trace=traced.trace,
        iterations=int(res.nit),
        converged=res.status == STATUS_CONVERGED,
        warning=res.status not in (STATUS_CONVERGED, STATUS_LIMIT),
        message=message,
    )


def minimize(objective: Objective, x0, config: Optional[OptimConfig] = None) -> OptimResult:
    """
    Minimize a smooth objective returning (value, gradient).

    Restart r > 0 starts from x0 plus Gaussian noise (std 0.5 in log space)
    drawn from default_rng([seed, r]); the best restart is returned.

    Raises:
        InputError: objective is not finite at x0
    """
    config = config or OptimConfig()
    x0 = np.asarray(x0, dtype=float).ravel()
    f0, g0 = _evaluate(objective, x0)
    if g0 is None:
        raise InputError("objective is not finite at the initial point")

    best = _run(objective, x0, f0, g0, config)
    restart_values = [best.fun]

    for restart in range(1, config.num_restarts):
        rng = np.random.default_rng([config.seed, restart])
        start = x0 + rng.normal(0.0, RESTART_STD, size=x0.shape)
        f_start, g_start = _evaluate(objective, start)
        if g_start is None:
            logger.warning("Skipping restart with non-finite start", restart=restart)
            restart_values.append(np.inf)
            continue
        result = _run(objective, start, f_start, g_start, config)
        result.restart = restart
        restart_values.append(result.fun)
        if result.fun < best.fun:
            best = result

    best.restart_values = restart_values
    if best.warning:
        logger.warning("Minimizer stopped early", message=best.message, fun=best.fun, iterations=best.iterations)
    return best


def grad_check(objective: Objective, x, h: float = 1e-5) -> float:
    """
    Largest coordinate error between the analytic gradient and central differences.

    Returns:
        max_i |g_i - fd_i| / max(1, |fd_i|)
    """
    x = np.asarray(x, dtype=float).ravel()
    try:
        _, grad = objective(x)
    except PushVHGPError as e:
        raise NumericalError(f"objective failed at the check point: {e}") from e
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("analytic gradient is not finite")

    worst = 0.0
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        f_plus, _ = objective(x + step)
        f_minus, _ = objective(x - step)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(f"non-finite objective near coordinate {i}")
        fd = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    return worst
