"""Shared fixtures for the push-vhgp test suite."""

import numpy as np
import pytest

from src.models.schemas import NoiseField, ObjectParams, OptimConfig, SamplingSpec
from src.services.synthetic import SyntheticPushGenerator


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def square():
    return ObjectParams()


@pytest.fixture
def fast_optim():
    """Single short optimizer run for smoke-level fits."""
    return OptimConfig(num_restarts=1, max_iterations=150, seed=0)


@pytest.fixture
def generator():
    return SyntheticPushGenerator()


@pytest.fixture
def small_dataset(square, generator):
    """80 random pushes on the default square at 20 mm/s."""
    dataset, _ = generator.synth_generate(square, NoiseField(), SamplingSpec(mode="random"), 80, 0.2, seed=3)
    return dataset
