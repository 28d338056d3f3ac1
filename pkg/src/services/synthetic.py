"""
Synthetic push data with a known ground truth.
Means come from the analytical model (plus an optional speed-dependent term),
noise is Gaussian with an input-dependent standard deviation.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.config.logging import LoggerMixin
from src.models.schemas import (
    DynamicsTerm, NoiseField, ObjectParams, PushDataset, PushInput, PushOutcome,
    PushSample, SampleMeta, SamplingSpec
)
from src.services.pushmodel import AnalyticalPushModel, analytical_model
from src.utils.exceptions import InputError

# Relative weight of the speed-dependent term on (dx, dy, dtheta)
DYNAMICS_WEIGHTS = np.array([1.0, 0.5, -0.5])


def amplification(noise: NoiseField, c, beta) -> np.ndarray:
    """Multiplicative noise factor 1 + sum of Gaussian bumps in (c, beta)."""
    c = np.asarray(c, dtype=float)
    beta = np.asarray(beta, dtype=float)
    factor = np.ones(np.broadcast(c, beta).shape)
    for bump in noise.bumps:
        factor = factor + bump.gain * np.exp(
            -0.5 * ((c - bump.c) / bump.width_c) ** 2 - 0.5 * ((beta - bump.beta) / bump.width_beta) ** 2
        )
    return factor


def noise_std(noise: NoiseField, inputs: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """Per-sample, per-output noise standard deviation (m, 3)."""
    inputs = np.atleast_2d(inputs)
    factor = amplification(noise, inputs[:, 1], inputs[:, 2])
    if noise.scale_with_travel:
        factor = factor * inputs[:, 0] * dt / noise.reference_travel_mm
    return factor[:, None] * np.asarray(noise.base_std, dtype=float)[None, :]


def dynamics_offset(dynamics: Optional[DynamicsTerm], inputs: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Departure from the quasi-static mean above the activation speed."""
    if dynamics is None:
        return np.zeros_like(means)
    excess = dynamics.gain * np.maximum(inputs[:, 0] - dynamics.activation_speed, 0.0) / dynamics.activation_speed
    return excess[:, None] * DYNAMICS_WEIGHTS[None, :] * means


@dataclass(frozen=True)
class GroundTruth:
    """Noise-free mean and noise std of every generated sample (m, 3)."""
    mean: np.ndarray
    std: np.ndarray


class SyntheticPushGenerator(LoggerMixin):
    """Seeded generator of push datasets."""

    def __init__(self, model: Optional[AnalyticalPushModel] = None):
        self.model = model or analytical_model

    def sample_inputs(
        self,
        sampling: SamplingSpec,
        n: Optional[int],
        rng: np.random.Generator
    ) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Inputs (m, 3) and repetition ids.

        Grid mode repeats each (v_p, c, beta) combination `repetitions` times and
        cycles through the grid until n samples exist (one pass when n is None).
        Random mode draws n inputs; repetition ids are then None.
        """
        if sampling.mode == "grid":
            grid = np.array(list(itertools.product(sampling.speeds, sampling.c_values, sampling.beta_values)), dtype=float)
            inputs = np.repeat(grid, sampling.repetitions, axis=0)
            rep_ids = np.tile(np.arange(sampling.repetitions), len(grid))
            if n is not None:
                index = np.arange(n) % len(inputs)
                inputs, rep_ids = inputs[index], rep_ids[index] + sampling.repetitions * (np.arange(n) // len(inputs))
            return inputs, rep_ids

        if n is None:
            raise InputError("random sampling needs a sample count")
        speeds = rng.choice(np.asarray(sampling.speeds, dtype=float), size=n)
        c = rng.uniform(*sampling.c_range, size=n)
        beta = rng.uniform(*sampling.beta_range, size=n)
        return np.column_stack([speeds, c, beta]), None

    @staticmethod
    def window_lengths(inputs: np.ndarray, sampling: SamplingSpec, dt: float) -> np.ndarray:
        """dt per sample; constant-travel sampling gives each window the same pusher travel."""
        lengths = np.full(len(inputs), float(dt))
        if sampling.travel_mm is not None:
            moving = inputs[:, 0] > 0
            lengths[moving] = sampling.travel_mm / inputs[moving, 0]
        return lengths

    def ground_truth(
        self,
        inputs: np.ndarray,
        obj: ObjectParams,
        noise: NoiseField,
        dt,
        dynamics: Optional[DynamicsTerm] = None
    ) -> GroundTruth:
        """Generating mean and noise std at the given inputs."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        dt = np.broadcast_to(np.asarray(dt, dtype=float), (len(inputs),))
        means = self.model.push_batch(inputs, obj, dt).outcomes
        means = means + dynamics_offset(dynamics, inputs, means)
        return GroundTruth(mean=means, std=noise_std(noise, inputs, dt))

    def synth_generate(
        self,
        obj: ObjectParams,
        noise: NoiseField,
        sampling: SamplingSpec,
        n: Optional[int],
        dt: float,
        seed: int,
        dynamics: Optional[DynamicsTerm] = None
    ) -> Tuple[PushDataset, GroundTruth]:
        """
        Generate a dataset and its ground truth.

        Returns:
            (dataset, ground truth aligned with dataset.samples)
        """
        if n is not None and n < 1:
            raise InputError("n must be at least 1")
        if not dt > 0:
            raise InputError("dt must be positive")

        rng = np.random.default_rng(seed)
        inputs, rep_ids = self.sample_inputs(sampling, n, rng)
        lengths = self.window_lengths(inputs, sampling, dt)
        truth = self.ground_truth(inputs, obj, noise, lengths, dynamics)
        outcomes = truth.mean + truth.std * rng.standard_normal(truth.mean.shape)

        samples = []
        for i in range(len(inputs)):
            samples.append(PushSample(
                input=PushInput(v_p=inputs[i, 0], c=inputs[i, 1], beta=inputs[i, 2]),
                outcome=PushOutcome(dx=outcomes[i, 0], dy=outcomes[i, 1], dtheta=outcomes[i, 2]),
                dt=float(lengths[i]),
                meta=SampleMeta(
                    object_id=obj.object_id,
                    surface_id=obj.surface_id,
                    rep_id=None if rep_ids is None else int(rep_ids[i]),
                    source="synthetic"
                )
            ))

        dataset = PushDataset(
            samples=samples,
            dt=float(dt),
            provenance=f"synthetic seed={seed} mode={sampling.mode} object={obj.object_id}"
        )
        self.logger.info(
            "Generated synthetic dataset",
            n_samples=len(samples),
            mode=sampling.mode,
            seed=seed,
            dynamics=dynamics is not None
        )
        return dataset, truth


# Global generator instance
synthetic_generator = SyntheticPushGenerator()
