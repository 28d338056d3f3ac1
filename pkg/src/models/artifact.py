"""
Per-output model containers and the JSON model artifact.

A push model is three independent regressors, one for each of dx, dy and
dtheta. Artifacts store hyperparameters and training data; factorizations are
rebuilt on load, which reproduces the saved model's predictions exactly.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.config.logging import get_logger
from src.config.settings import settings
from src.models.gp import GPModel
from src.models.schemas import OUTPUT_NAMES, ObjectParams, PredictiveDistribution, PushInput
from src.models.vhgp import VHGPModel
from src.services.pushmodel import analytical_model
from src.utils.exceptions import DataError, DataFormatError, InputError

logger = get_logger(__name__)

INPUT_NAMES = ("v_p", "c", "beta")
MODEL_CLASSES = {"gp": GPModel, "vhgp": VHGPModel}


@dataclass(frozen=True)
class PushModelSet:
    """Three per-output GP or VHGP models sharing an input layout."""
    kind: str
    models: Tuple[Any, Any, Any]
    input_columns: Tuple[int, ...] = (0, 1, 2)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_CLASSES:
            raise InputError(f"unknown model kind '{self.kind}'")
        if len(self.models) != len(OUTPUT_NAMES):
            raise InputError("a push model needs one model per output")

    def features(self, inputs) -> np.ndarray:
        """Select the model's input columns from (v_p, c, beta) rows."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != len(INPUT_NAMES):
            raise InputError("inputs must have columns (v_p, c, beta)")
        return inputs[:, list(self.input_columns)]

    def predict_arrays(self, inputs, dt=None) -> Tuple[np.ndarray, np.ndarray]:
        """Means and total variances (m, 3) in original units."""
        X = self.features(inputs)
        predictions = [model.predict(X) for model in self.models]
        means = np.column_stack([p.mean for p in predictions])
        variances = np.column_stack([p.total_variance for p in predictions])
        return means, variances

    def predictive(self, push: PushInput) -> PredictiveDistribution:
        means, variances = self.predict_arrays(push.to_vector())
        return PredictiveDistribution(mean=tuple(means[0]), variance=tuple(variances[0]))

    @property
    def objectives(self) -> Tuple[Optional[float], ...]:
        return tuple(model.objective for model in self.models)


@dataclass(frozen=True)
class AnalyticalBaseline:
    """Deterministic analytical model behind the same predict interface (no variances)."""
    obj: ObjectParams
    dt: float = 0.2

    def predict_arrays(self, inputs, dt=None) -> Tuple[np.ndarray, None]:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        windows = self.dt if dt is None else dt
        return analytical_model.push_batch(inputs, self.obj, windows).outcomes, None


def save_artifact(model_set: PushModelSet, path: Union[str, Path]) -> Path:
    """Write a model artifact as JSON."""
    path = Path(path)
    document = {
        "format_version": settings.artifact_format_version,
        "kind": model_set.kind,
        "outputs": list(OUTPUT_NAMES),
        "inputs": [INPUT_NAMES[i] for i in model_set.input_columns],
        "models": [model.to_dict() for model in model_set.models],
        "metadata": model_set.metadata,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f)
    logger.info("Saved model artifact", path=str(path), kind=model_set.kind)
    return path


def load_artifact(path: Union[str, Path]) -> PushModelSet:
    """
    Read a model artifact and rebuild its caches.

    Raises:
        DataError: file missing
        DataFormatError: unreadable document or version mismatch
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model artifact not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise DataFormatError(f"could not parse model artifact {path}: {e}") from e

    version = document.get("format_version")
    if version != settings.artifact_format_version:
        raise DataFormatError(
            f"artifact format version {version!r} is not supported (expected {settings.artifact_format_version!r})"
        )
    kind = document.get("kind")
    if kind not in MODEL_CLASSES:
        raise DataFormatError(f"unknown model kind {kind!r} in artifact")

    try:
        columns = tuple(INPUT_NAMES.index(name) for name in document["inputs"])
        models = tuple(MODEL_CLASSES[kind].from_dict(entry) for entry in document["models"])
    except (KeyError, ValueError, TypeError) as e:
        raise DataFormatError(f"malformed model artifact {path}: {e}") from e

    logger.info("Loaded model artifact", path=str(path), kind=kind)
    return PushModelSet(kind=kind, models=models, input_columns=columns, metadata=document.get("metadata", {}))
