"""
Evaluation metrics: NMSE, NLPD and the Gaussian KL divergence,
plus their aggregation over the three push outputs.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.config.logging import get_logger
from src.config.settings import settings
from src.models.schemas import EvalReport, PredictiveDistribution, PushDataset, RepeatedPushGroup
from src.utils.exceptions import InputError, NumericalError
from src.utils.helpers import gaussian_log_density

logger = get_logger(__name__)

KL_ROUND_OFF = 1e-9


def nmse(predictions, observations, train_mean: float) -> float:
    """
    Squared error normalized by the spread of the observations about the training mean.

    Raises:
        InputError: empty input, length mismatch or zero denominator
    """
    predictions = np.asarray(predictions, dtype=float).ravel()
    observations = np.asarray(observations, dtype=float).ravel()
    if observations.size == 0 or predictions.size != observations.size:
        raise InputError("nmse needs equally long, non-empty predictions and observations")
    denominator = float(np.sum((observations - train_mean) ** 2))
    if denominator == 0.0:
        raise InputError("nmse is undefined: every observation equals the training mean")
    return float(np.sum((observations - predictions) ** 2)) / denominator


def joint_log_density(observations, means, variances) -> np.ndarray:
    """Per-sample log density of independent per-output Gaussians, summed over outputs."""
    return np.sum(gaussian_log_density(observations, means, variances), axis=-1)


def nlpd(log_densities) -> float:
    """
    Negative mean log predictive density.

    Raises:
        InputError: empty input or a non-finite density (the sample index is named)
    """
    log_densities = np.asarray(log_densities, dtype=float).ravel()
    if log_densities.size == 0:
        raise InputError("nlpd needs at least one sample")
    bad = np.flatnonzero(~np.isfinite(log_densities))
    if bad.size:
        raise InputError(f"non-finite log density at sample {int(bad[0])}")
    return -float(np.mean(log_densities))


def clamp_round_off(value, tolerance: float = KL_ROUND_OFF):
    """
    Zero the small negatives round-off leaves near p == q.

    Raises:
        NumericalError: a value below -tolerance
    """
    value = np.asarray(value, dtype=float)
    if np.any(value < -tolerance):
        raise NumericalError(f"negative KL divergence {float(np.min(value)):.3e}")
    return np.maximum(value, 0.0)


def kl_gauss(mu1, var1, mu2, var2):
    """
    KL(N(mu1, var1) || N(mu2, var2)) = 1/2 [log(var2/var1) + (var1 + (mu1 - mu2)^2)/var2 - 1].
    Accepts scalars or arrays.

    Raises:
        InputError: non-positive variance
    """
    mu1, var1, mu2, var2 = (np.asarray(v, dtype=float) for v in (mu1, var1, mu2, var2))
    if np.any(~(var1 > 0)) or np.any(~(var2 > 0)):
        raise InputError("variances must be positive")
    value = clamp_round_off(0.5 * (np.log(var2 / var1) + (var1 + (mu1 - mu2) ** 2) / var2 - 1.0))
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class PushKL:
    """KL of one repeated-push group against a model."""
    total: float
    per_output: Tuple[float, float, float]
    floored: Tuple[bool, bool, bool]


def variance_floors() -> np.ndarray:
    """Squared sensor resolution per output (mm^2, mm^2, rad^2)."""
    return np.array([settings.kl_floor_mm, settings.kl_floor_mm, settings.kl_floor_rad]) ** 2


def kl_push(predicted: PredictiveDistribution, group: RepeatedPushGroup, floors: Optional[Sequence[float]] = None) -> PushKL:
    """
    Sum over outputs of KL(empirical || predicted).
    Empirical variances below the squared sensor resolution are floored and flagged.

    Raises:
        InputError: the group has no empirical std (single repetition)
    """
    if group.empirical_std is None:
        raise InputError("group has a single repetition; its std is undefined")
    floors = variance_floors() if floors is None else np.asarray(floors, dtype=float)
    empirical_var = np.asarray(group.empirical_std, dtype=float) ** 2
    floored = empirical_var < floors
    empirical_var = np.maximum(empirical_var, floors)

    per_output = kl_gauss(
        group.empirical_mean.to_vector(), empirical_var,
        np.asarray(predicted.mean, dtype=float), np.asarray(predicted.variance, dtype=float)
    )
    return PushKL(
        total=float(np.sum(per_output)),
        per_output=tuple(float(v) for v in per_output),
        floored=tuple(bool(f) for f in floored)
    )


def evaluate(model, test: PushDataset, train_means) -> EvalReport:
    """
    Score a model on a test set.

    Args:
        model: object with predict_arrays(inputs, dt) -> (means (m, 3), variances (m, 3) or None)
        test: test samples
        train_means: per-output training-set means used by NMSE
    """
    if len(test) == 0:
        raise InputError("evaluation needs at least one test sample")
    observations = test.outcomes_array()
    means, variances = model.predict_arrays(test.inputs_array(), test.dt_array())
    train_means = np.asarray(train_means, dtype=float)

    per_output = tuple(nmse(means[:, k], observations[:, k], train_means[k]) for k in range(3))
    nlpd_total = None
    if variances is not None:
        nlpd_total = nlpd(joint_log_density(observations, means, variances))
    return EvalReport(
        nmse_per_output=per_output,
        nmse_total=float(sum(per_output)),
        nlpd_total=nlpd_total,
        n_test=len(test)
    )
