"""Common numerical helpers."""

import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Standardizer:
    """Affine map between original units and the zero-mean, unit-scale fitting space."""
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        x_scale = X.std(axis=0)
        x_scale = np.where(x_scale > 0, x_scale, 1.0)
        y_scale = float(y.std())
        return cls(
            x_mean=X.mean(axis=0),
            x_scale=x_scale,
            y_mean=float(y.mean()),
            y_scale=y_scale if y_scale > 0 else 1.0
        )

    @classmethod
    def identity(cls, input_dim: int) -> "Standardizer":
        return cls(x_mean=np.zeros(input_dim), x_scale=np.ones(input_dim), y_mean=0.0, y_scale=1.0)

    def inputs(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale

    def targets(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale

    def restore_mean(self, mean):
        return self.y_mean + self.y_scale * mean

    def restore_variance(self, variance):
        return self.y_scale ** 2 * variance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Standardizer":
        return cls(
            x_mean=np.asarray(data["x_mean"], dtype=float),
            x_scale=np.asarray(data["x_scale"], dtype=float),
            y_mean=float(data["y_mean"]),
            y_scale=float(data["y_scale"])
        )


def gaussian_log_density(y, mean, variance) -> np.ndarray:
    """Elementwise log N(y | mean, variance)."""
    y, mean, variance = np.broadcast_arrays(
        np.asarray(y, dtype=float), np.asarray(mean, dtype=float), np.asarray(variance, dtype=float)
    )
    return -0.5 * (LOG_2PI + np.log(variance) + (y - mean) ** 2 / variance)
