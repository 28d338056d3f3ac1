"""
Pydantic schemas for the pushing domain.
Defines inputs, outcomes, objects, datasets and configuration structures.
Units: mm, rad, mm/s, s.
"""

import math
from dataclasses import dataclass
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config.settings import settings

OUTPUT_NAMES: Tuple[str, str, str] = ("dx", "dy", "dtheta")


# Base schemas
class BaseSchema(BaseModel):
    """Base schema with common configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")


def _require_finite(value: float, name: str) -> float:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite")
    return value


# Push action and outcome
class PushInput(BaseSchema):
    """Push action u = (v_p, c, beta)."""
    v_p: float = Field(..., ge=0, description="Pusher speed (mm/s)")
    c: float = Field(..., ge=0, le=1, description="Normalized contact position along the pushed edge")
    beta: float = Field(..., ge=-math.pi / 2, le=math.pi / 2, description="Push angle from the inward normal (rad)")

    @field_validator("v_p", "c", "beta")
    @classmethod
    def validate_finite(cls, v, info):
        return _require_finite(v, info.field_name)

    def to_vector(self) -> np.ndarray:
        return np.array([self.v_p, self.c, self.beta], dtype=float)


class PushOutcome(BaseSchema):
    """Object displacement in the pusher-aligned frame plus rotation."""
    dx: float = Field(..., description="Displacement along the push direction (mm)")
    dy: float = Field(..., description="Transverse displacement (mm)")
    dtheta: float = Field(..., description="Rotation (rad)")

    @field_validator("dx", "dy", "dtheta")
    @classmethod
    def validate_finite(cls, v, info):
        return _require_finite(v, info.field_name)

    def to_vector(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta], dtype=float)


# Object geometry and friction
class SquareShape(BaseSchema):
    """Square slider; the pushed edge is the one facing the pusher."""
    kind: Literal["square"] = "square"
    side: float = Field(default=90.0, gt=0, description="Side length (mm)")


class CircleShape(BaseSchema):
    """Circular slider; every contact point is equivalent."""
    kind: Literal["circle"] = "circle"
    radius: float = Field(default=52.5, gt=0, description="Radius (mm)")


class EllipseShape(BaseSchema):
    """Elliptical slider with semi-axis a along the push normal and b across it."""
    kind: Literal["ellipse"] = "ellipse"
    a: float = Field(default=65.0, gt=0, description="Semi-axis along the inward normal (mm)")
    b: float = Field(default=52.5, gt=0, description="Semi-axis along the pushed side (mm)")


Shape = Annotated[Union[SquareShape, CircleShape, EllipseShape], Field(discriminator="kind")]


class ObjectParams(BaseSchema):
    """Pushed object: shape, limit-surface ratio and contact friction."""
    shape: Shape = Field(default_factory=SquareShape)
    ls_ratio_c: Optional[float] = Field(
        default=None, gt=0,
        description="Limit-surface ratio tau_max/f_max (mm); derived from uniform pressure when omitted"
    )
    mu_contact: float = Field(default=0.25, ge=0, description="Pusher-object friction coefficient")
    object_id: str = Field(default="square", description="Object identifier")
    surface_id: str = Field(default="plywood", description="Surface identifier")


# Synthetic noise
class NoiseBump(BaseSchema):
    """Gaussian bump in (c, beta) space raising the noise level."""
    c: float = Field(..., description="Bump centre in contact coordinate")
    beta: float = Field(..., description="Bump centre in push angle (rad)")
    width_c: float = Field(..., gt=0)
    width_beta: float = Field(..., gt=0)
    gain: float = Field(..., ge=0, description="Added amplification at the centre")


def _default_bumps() -> List[NoiseBump]:
    return [
        NoiseBump(c=0.5, beta=0.0, width_c=0.15, width_beta=0.35, gain=3.0),
        NoiseBump(c=0.15, beta=-0.9, width_c=0.15, width_beta=0.4, gain=2.0),
        NoiseBump(c=0.85, beta=0.9, width_c=0.15, width_beta=0.4, gain=2.0),
    ]


class NoiseField(BaseSchema):
    """Input-dependent noise: base_std * (1 + sum of bumps), optionally scaled by travel."""
    base_std: Tuple[float, float, float] = Field(
        default=(0.12, 0.08, 0.0025),
        description="Per-output std at the calm region (mm, mm, rad) for the reference travel"
    )
    bumps: List[NoiseBump] = Field(default_factory=_default_bumps)
    scale_with_travel: bool = Field(default=True, description="Scale std with v_p * dt")
    reference_travel_mm: float = Field(default=4.0, gt=0)

    @field_validator("base_std")
    @classmethod
    def validate_base_std(cls, v):
        if any(s < 0 or not math.isfinite(s) for s in v):
            raise ValueError("base_std entries must be finite and non-negative")
        return v


class DynamicsTerm(BaseSchema):
    """Speed-dependent departure from quasi-static behavior above an activation speed."""
    activation_speed: float = Field(default=60.0, gt=0, description="Speed where the term switches on (mm/s)")
    gain: float = Field(default=0.6, ge=0, description="Relative overshoot per activation speed of excess")


class SamplingSpec(BaseSchema):
    """How synthetic inputs are laid out."""
    mode: Literal["grid", "random"] = "random"
    speeds: List[float] = Field(default_factory=lambda: [20.0], min_length=1)
    c_values: List[float] = Field(default_factory=lambda: [round(0.1 * i, 10) for i in range(11)])
    beta_values: List[float] = Field(default_factory=lambda: [round(-1.5 + 0.1 * i, 10) for i in range(31)])
    repetitions: int = Field(default=1, ge=1, description="Repeats per grid input")
    c_range: Tuple[float, float] = (0.0, 1.0)
    beta_range: Tuple[float, float] = (-1.5, 1.5)
    travel_mm: Optional[float] = Field(default=None, gt=0, description="Fixed travel per window; sets dt per sample")


# Dataset schemas
class SampleMeta(BaseSchema):
    """Provenance of one push sample."""
    object_id: str = "square"
    surface_id: str = "plywood"
    rep_id: Optional[int] = None
    source: Literal["real", "synthetic"] = "real"


class PushSample(BaseSchema):
    """One (input, outcome) pair over a window of dt seconds."""
    input: PushInput
    outcome: PushOutcome
    dt: float = Field(..., gt=0, description="Window duration (s)")
    meta: SampleMeta = Field(default_factory=SampleMeta)


class PushDataset(BaseSchema):
    """Collection of push samples sharing unit conventions."""
    samples: List[PushSample] = Field(default_factory=list)
    dt: float = Field(..., gt=0, description="Nominal window duration (s)")
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.samples)

    def inputs_array(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 3))
        return np.array([s.input.to_vector() for s in self.samples])

    def outcomes_array(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 3))
        return np.array([s.outcome.to_vector() for s in self.samples])

    def dt_array(self) -> np.ndarray:
        return np.array([s.dt for s in self.samples], dtype=float)

    def subset(self, indices) -> "PushDataset":
        return PushDataset(
            samples=[self.samples[i] for i in indices],
            dt=self.dt,
            provenance=self.provenance
        )


@dataclass(frozen=True)
class Trajectory:
    """Timestamped planar poses of the pusher (x, y) and the object (x, y, theta)."""
    t: np.ndarray
    pusher_xy: np.ndarray
    object_pose: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        if self.pusher_xy.shape != (n, 2) or self.object_pose.shape != (n, 3):
            raise ValueError("trajectory arrays must have shapes (n,), (n, 2) and (n, 3)")

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0


class RepeatedPushGroup(BaseSchema):
    """Empirical outcome distribution of nominally identical pushes."""
    input: PushInput
    empirical_mean: PushOutcome
    empirical_std: Optional[Tuple[float, float, float]] = Field(
        default=None, description="Unbiased std per output; None when count < 2"
    )
    count: int = Field(..., ge=1)

    @model_validator(mode="after")
    def validate_std(self):
        if self.count >= 2 and self.empirical_std is None:
            raise ValueError("empirical_std is required when count >= 2")
        if self.empirical_std is not None and any(s < 0 for s in self.empirical_std):
            raise ValueError("empirical_std must be non-negative")
        return self


# Model configuration schemas
class KernelHyperparams(BaseSchema):
    """ARD-SE hyperparameters in log space."""
    log_lengthscales: List[float] = Field(..., min_length=1)
    log_signal_variance: float

    @model_validator(mode="after")
    def validate_finite(self):
        if not all(math.isfinite(v) for v in [*self.log_lengthscales, self.log_signal_variance]):
            raise ValueError("kernel hyperparameters must be finite")
        return self

    @property
    def input_dim(self) -> int:
        return len(self.log_lengthscales)

    @property
    def signal_variance(self) -> float:
        return math.exp(self.log_signal_variance)

    def to_vector(self) -> np.ndarray:
        return np.array([*self.log_lengthscales, self.log_signal_variance], dtype=float)

    @classmethod
    def from_vector(cls, vector) -> "KernelHyperparams":
        vector = np.asarray(vector, dtype=float)
        return cls(log_lengthscales=[float(v) for v in vector[:-1]], log_signal_variance=float(vector[-1]))


class OptimConfig(BaseSchema):
    """Settings of the quasi-Newton minimizer."""
    max_iterations: int = Field(default_factory=lambda: settings.optim_max_iterations, ge=1)
    gradient_tolerance: float = Field(default_factory=lambda: settings.optim_gradient_tolerance, gt=0)
    objective_tolerance: float = Field(default_factory=lambda: settings.optim_objective_tolerance, gt=0)
    num_restarts: int = Field(default_factory=lambda: settings.optim_num_restarts, ge=1)
    seed: int = Field(default_factory=lambda: settings.default_seed)
    memory: int = Field(default=10, ge=1, description="Stored curvature pairs")


class GridSpec(BaseSchema):
    """Evaluation grid over (c, beta) at fixed speed and window."""
    c_values: List[float] = Field(default_factory=lambda: [round(0.05 * i, 10) for i in range(21)], min_length=1)
    beta_values: List[float] = Field(default_factory=lambda: [round(-1.5 + 0.1 * i, 10) for i in range(31)], min_length=1)
    v_p: float = Field(default=20.0, ge=0, description="Pusher speed (mm/s)")
    dt: float = Field(default=0.2, gt=0, description="Window (s)")

    @model_validator(mode="after")
    def validate_ranges(self):
        if any(c < 0 or c > 1 for c in self.c_values):
            raise ValueError("c_values must lie in [0, 1]")
        if any(abs(b) > math.pi / 2 for b in self.beta_values):
            raise ValueError("beta_values must lie in [-pi/2, pi/2]")
        return self


class EvalReport(BaseSchema):
    """Test-set metrics of a model."""
    nmse_per_output: Tuple[float, float, float]
    nmse_total: float = Field(..., ge=0)
    nlpd_total: Optional[float] = None
    n_test: int = Field(..., ge=1)


class PredictiveDistribution(BaseSchema):
    """Three independent Gaussians (dx, dy, dtheta) at one input."""
    mean: Tuple[float, float, float]
    variance: Tuple[float, float, float]

    @field_validator("variance")
    @classmethod
    def validate_variance(cls, v):
        if any(not (s > 0) for s in v):
            raise ValueError("predictive variances must be positive")
        return v


# Experiment configuration
class LearningCurveConfig(BaseSchema):
    """Learning-curve protocol."""
    models: List[Literal["analytical", "gp", "vhgp"]] = Field(default_factory=lambda: ["analytical", "gp", "vhgp"])
    sizes: List[int] = Field(default_factory=lambda: [50, 100, 200, 400, 800])
    seeds: int = Field(default=5, ge=1)
    max_test: int = Field(default=1000, ge=1)


class QuasiStaticConfig(BaseSchema):
    """Velocity-bracket study protocol."""
    reference_speed: float = Field(default=10.0, gt=0, description="Speed all data is time-scaled to (mm/s)")
    reference_dt: float = Field(default=0.2, gt=0)
    brackets: List[float] = Field(default_factory=lambda: [10.0 * i for i in range(1, 16)])
    train_fraction: float = Field(default=0.7, gt=0, lt=1)
    max_train: int = Field(default=300, ge=2)
    model: Literal["gp", "vhgp"] = "gp"


class ExperimentConfig(BaseSchema):
    """Contents of a --config JSON file."""
    optim: OptimConfig = Field(default_factory=OptimConfig)
    object: ObjectParams = Field(default_factory=ObjectParams)
    analytical_object: Optional[ObjectParams] = Field(
        default=None, description="Parameters of the analytical baseline; defaults to `object`"
    )
    noise: NoiseField = Field(default_factory=NoiseField)
    dynamics: Optional[DynamicsTerm] = None
    sampling: SamplingSpec = Field(default_factory=SamplingSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    learning_curve: LearningCurveConfig = Field(default_factory=LearningCurveConfig)
    quasistatic: QuasiStaticConfig = Field(default_factory=QuasiStaticConfig)
