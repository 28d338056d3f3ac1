"""
Experiment service.
Implements the training, grid, learning-curve, KL-validation, velocity-bracket
and synthesis workflows behind the command line, and writes their outputs with
a JSON sidecar recording the configuration and seed.
"""

import asyncio
import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.__version__ import __version__
from src.config.logging import LoggerMixin
from src.models import gp, vhgp
from src.models.artifact import AnalyticalBaseline, PushModelSet, load_artifact, save_artifact
from src.models.schemas import (
    OUTPUT_NAMES, ExperimentConfig, GridSpec, OptimConfig, PredictiveDistribution, PushDataset,
    PushInput, PushOutcome, PushSample, SampleMeta
)
from src.services import metrics
from src.services.dataset_service import DatasetService, dataset_service
from src.services.runner import Cell, ExperimentRunner
from src.services.synthetic import SyntheticPushGenerator, synthetic_generator
from src.utils.exceptions import InputError

FIT_FUNCTIONS = {"gp": gp.fit, "vhgp": vhgp.fit}
FULL_INPUTS = (0, 1, 2)
VELOCITY_FREE_INPUTS = (1, 2)


def sidecar_path(out: Union[str, Path]) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".meta.json")


def write_sidecar(out: Union[str, Path], command: str, config: ExperimentConfig, seed: int, summary: Dict[str, Any]) -> Path:
    """Record how an output file was produced."""
    path = sidecar_path(out)
    document = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config.model_dump(mode="json"),
        "summary": summary,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f, indent=2, default=float)
    return path


def write_table(frame: pd.DataFrame, out: Union[str, Path]) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator="\n")
    return out


def fit_outputs(
    dataset: PushDataset,
    kind: str,
    optim: OptimConfig,
    input_columns: Sequence[int] = FULL_INPUTS
) -> PushModelSet:
    """Fit the three per-output models one after the other."""
    if kind not in FIT_FUNCTIONS:
        raise InputError(f"unknown model kind '{kind}' (expected gp or vhgp)")
    X = dataset.inputs_array()[:, list(input_columns)]
    Y = dataset.outcomes_array()
    models = tuple(FIT_FUNCTIONS[kind](X, Y[:, k], optim, output=name) for k, name in enumerate(OUTPUT_NAMES))
    return PushModelSet(kind=kind, models=models, input_columns=tuple(input_columns))


def time_scale(dataset: PushDataset, reference_speed: float, reference_dt: float) -> Tuple[PushDataset, np.ndarray]:
    """
    Map every sample to the reference speed and window.

    A window at speed v lasting dt becomes a window at the reference speed
    lasting dt * v / v_ref; outcomes are rescaled to the reference travel
    v_ref * dt_ref by (v_ref * dt_ref) / (v * dt). Stationary samples are dropped.

    Returns:
        (scaled dataset, original speed of every kept sample)
    """
    reference_travel = reference_speed * reference_dt
    samples, speeds = [], []
    for sample in dataset.samples:
        v = sample.input.v_p
        if v <= 0:
            continue
        factor = reference_travel / (v * sample.dt)
        samples.append(PushSample(
            input=PushInput(v_p=reference_speed, c=sample.input.c, beta=sample.input.beta),
            outcome=PushOutcome(
                dx=sample.outcome.dx * factor,
                dy=sample.outcome.dy * factor,
                dtheta=sample.outcome.dtheta * factor
            ),
            dt=reference_dt,
            meta=sample.meta
        ))
        speeds.append(v)
    scaled = PushDataset(samples=samples, dt=reference_dt, provenance=f"{dataset.provenance} (time-scaled)")
    return scaled, np.asarray(speeds, dtype=float)


def mirror_asymmetry(frame: pd.DataFrame) -> Dict[str, Optional[float]]:
    """
    Relative antisymmetry error of grid means under (c, beta) -> (1 - c, -beta):
    sum |m(c, b) + m(1 - c, -b)| / sum 2|m(c, b)| for dy and dtheta, over mirrored pairs present in the grid.
    """
    keyed = frame.set_index([frame["c"].round(9), frame["beta"].round(9)])
    result: Dict[str, Optional[float]] = {}
    for output in ("dy", "dtheta"):
        column = keyed[f"mean_{output}"]
        numerator, denominator = 0.0, 0.0
        for (c, beta), value in column.items():
            mirror = (round(1.0 - c, 9), round(-beta, 9) + 0.0)
            if mirror in column.index:
                numerator += abs(value + column.loc[mirror])
                denominator += 2.0 * abs(value)
        result[output] = numerator / denominator if denominator > 0 else None
    return result


class ExperimentService(LoggerMixin):
    """Runs the experiment workflows."""

    def __init__(
        self,
        runner: Optional[ExperimentRunner] = None,
        data: Optional[DatasetService] = None,
        generator: Optional[SyntheticPushGenerator] = None
    ):
        self.runner = runner or ExperimentRunner()
        self.data = data or dataset_service
        self.generator = generator or synthetic_generator

    # Training
    async def fit_model_set_async(
        self,
        dataset: PushDataset,
        kind: str,
        optim: OptimConfig,
        input_columns: Sequence[int] = FULL_INPUTS
    ) -> PushModelSet:
        """Fit the three per-output models concurrently."""
        if kind not in FIT_FUNCTIONS:
            raise InputError(f"unknown model kind '{kind}' (expected gp or vhgp)")
        if len(dataset) < 2:
            raise InputError("training needs at least two samples")
        X = dataset.inputs_array()[:, list(input_columns)]
        Y = dataset.outcomes_array()
        cells = [
            Cell(name=f"{kind}:{name}", func=FIT_FUNCTIONS[kind], args=(X, Y[:, k], optim), kwargs={"output": name})
            for k, name in enumerate(OUTPUT_NAMES)
        ]
        models = await self.runner.run_cells("train", cells)
        return PushModelSet(kind=kind, models=tuple(models), input_columns=tuple(input_columns))

    def fit_model_set(self, dataset: PushDataset, kind: str, optim: OptimConfig) -> PushModelSet:
        return asyncio.run(self.fit_model_set_async(dataset, kind, optim))

    def train(self, dataset_path: Union[str, Path], kind: str, config: ExperimentConfig, out: Union[str, Path]) -> PushModelSet:
        """Fit three per-output models and write the artifact."""
        dataset = self.data.load(dataset_path)
        model_set = self.fit_model_set(dataset, kind, config.optim)
        model_set = PushModelSet(
            kind=model_set.kind,
            models=model_set.models,
            input_columns=model_set.input_columns,
            metadata={
                "dataset": str(dataset_path),
                "provenance": dataset.provenance,
                "n_train": len(dataset),
                "dt": dataset.dt,
                "seed": config.optim.seed,
                "objectives": dict(zip(OUTPUT_NAMES, model_set.objectives)),
                "config": config.model_dump(mode="json"),
            }
        )
        save_artifact(model_set, out)
        return model_set

    # Prediction
    def predict(self, artifact_path: Union[str, Path], push: PushInput) -> PredictiveDistribution:
        return load_artifact(artifact_path).predictive(push)

    def grid(self, model, grid: GridSpec) -> pd.DataFrame:
        """Predicted means and total stds over a (c, beta) grid, c varying slowest."""
        c, beta = np.meshgrid(np.asarray(grid.c_values), np.asarray(grid.beta_values), indexing="ij")
        inputs = np.column_stack([np.full(c.size, grid.v_p), c.ravel(), beta.ravel()])
        means, variances = model.predict_arrays(inputs, np.full(c.size, grid.dt))
        if variances is None:
            variances = np.full_like(means, np.nan)
        frame = pd.DataFrame({"c": inputs[:, 1], "beta": inputs[:, 2]})
        for k, name in enumerate(OUTPUT_NAMES):
            frame[f"mean_{name}"] = means[:, k]
        for k, name in enumerate(OUTPUT_NAMES):
            frame[f"std_{name}"] = np.sqrt(variances[:, k])
        return frame

    # Learning curves
    def _learning_curve_cell(
        self,
        dataset: PushDataset,
        model_name: str,
        train_index: np.ndarray,
        test_index: np.ndarray,
        config: ExperimentConfig,
        seed: int
    ) -> Dict[str, Any]:
        train, test = dataset.subset(train_index), dataset.subset(test_index)
        train_means = train.outcomes_array().mean(axis=0)
        if model_name == "analytical":
            model = AnalyticalBaseline(obj=config.analytical_object or config.object, dt=dataset.dt)
        else:
            optim = config.optim.model_copy(update={"seed": seed})
            model = fit_outputs(train, model_name, optim)
        report = metrics.evaluate(model, test, train_means)
        return {
            "model": model_name,
            "n_train": len(train),
            "seed": seed,
            "nmse_total": report.nmse_total,
            "nlpd_total": report.nlpd_total,
            **{f"nmse_{name}": v for name, v in zip(OUTPUT_NAMES, report.nmse_per_output)},
        }

    async def learning_curve_async(self, dataset: PushDataset, config: ExperimentConfig) -> pd.DataFrame:
        """
        One row per (model, n_train, seed). For every seed the samples are shuffled
        once; training sets are prefixes of the shuffle and the test set is a fixed
        block after the largest training set.
        """
        settings_lc = config.learning_curve
        sizes = sorted(set(settings_lc.sizes))
        if not sizes or sizes[0] < 2:
            raise InputError("learning-curve sizes must be at least 2")
        if sizes[-1] >= len(dataset):
            raise InputError(f"largest training size {sizes[-1]} must be below the dataset size {len(dataset)}")

        cells = []
        for seed in range(config.optim.seed, config.optim.seed + settings_lc.seeds):
            order = np.random.default_rng(seed).permutation(len(dataset))
            test_index = order[sizes[-1]:sizes[-1] + settings_lc.max_test]
            for model_name in settings_lc.models:
                for size in sizes:
                    cells.append(Cell(
                        name=f"{model_name}:n={size}:seed={seed}",
                        func=self._learning_curve_cell,
                        args=(dataset, model_name, order[:size], test_index, config, seed)
                    ))
        rows = await self.runner.run_cells("learning-curve", cells)
        return pd.DataFrame(rows)

    def learning_curve(self, dataset: PushDataset, config: ExperimentConfig) -> pd.DataFrame:
        return asyncio.run(self.learning_curve_async(dataset, config))

    # KL validation
    def validate_kl(self, model, dataset: PushDataset) -> Tuple[pd.DataFrame, Dict[str, Any]]:
        """
        Per-group KL(empirical || predicted) and summary statistics.
        Single-repetition groups are listed but excluded from the summary.
        """
        groups = self.data.group_repeats(dataset)
        if not groups:
            raise InputError("dataset holds no repeated-push groups")
        inputs = np.array([g.input.to_vector() for g in groups])
        means, variances = model.predict_arrays(inputs)
        if variances is None:
            raise InputError("KL validation needs a probabilistic model")

        rows = []
        for g, mean, variance in zip(groups, means, variances):
            row = {"v_p": g.input.v_p, "c": g.input.c, "beta": g.input.beta, "count": g.count}
            if g.empirical_std is None:
                row.update({"kl_total": np.nan, **{f"kl_{n}": np.nan for n in OUTPUT_NAMES},
                            "floored": "", "excluded": True})
            else:
                result = metrics.kl_push(PredictiveDistribution(mean=tuple(mean), variance=tuple(variance)), g)
                row.update({
                    "kl_total": result.total,
                    **{f"kl_{n}": v for n, v in zip(OUTPUT_NAMES, result.per_output)},
                    "floored": ";".join(n for n, f in zip(OUTPUT_NAMES, result.floored) if f),
                    "excluded": False,
                })
            rows.append(row)
        frame = pd.DataFrame(rows)

        included = frame[~frame["excluded"]]
        if included.empty:
            raise InputError("every repeated-push group has a single repetition")
        summary = {
            "n_groups": int(len(frame)),
            "n_excluded": int(frame["excluded"].sum()),
            "n_floored": int((included["floored"] != "").sum()),
            "average_kl": float(included["kl_total"].mean()),
            "median_kl": float(included["kl_total"].median()),
            "per_output": {
                n: {"average": float(included[f"kl_{n}"].mean()), "median": float(included[f"kl_{n}"].median())}
                for n in OUTPUT_NAMES
            },
        }
        if summary["n_excluded"]:
            self.logger.warning("Excluded single-repetition groups from the KL summary", count=summary["n_excluded"])
        if summary["n_floored"]:
            self.logger.warning("Floored empirical variances in KL validation", groups=summary["n_floored"])
        return frame, summary

    # Velocity brackets
    def _bracket_cell(
        self,
        scaled: PushDataset,
        speeds: np.ndarray,
        bracket: float,
        config: ExperimentConfig,
        seed: int
    ) -> Dict[str, Any]:
        qs = config.quasistatic
        index = np.flatnonzero(speeds <= bracket + 1e-9)
        subset = scaled.subset(index)
        order = np.random.default_rng(seed).permutation(len(subset))
        n_train = min(int(math.floor(qs.train_fraction * len(subset))), qs.max_train)
        n_test = min(len(subset) - n_train, config.learning_curve.max_test)
        if n_train < 2 or n_test < 1:
            raise InputError(f"bracket {bracket} mm/s holds too few samples ({len(subset)})")
        train, test = subset.subset(order[:n_train]), subset.subset(order[n_train:n_train + n_test])

        model = fit_outputs(train, qs.model, config.optim.model_copy(update={"seed": seed}), VELOCITY_FREE_INPUTS)
        report = metrics.evaluate(model, test, train.outcomes_array().mean(axis=0))
        return {
            "max_speed_included": bracket,
            "n_train": n_train,
            "n_test": n_test,
            "nmse": report.nmse_total,
            **{f"nmse_{name}": v for name, v in zip(OUTPUT_NAMES, report.nmse_per_output)},
        }

    async def quasistatic_async(self, dataset: PushDataset, config: ExperimentConfig) -> pd.DataFrame:
        """NMSE of a velocity-free model trained on time-scaled data, per cumulative speed bracket."""
        qs = config.quasistatic
        scaled, speeds = time_scale(dataset, qs.reference_speed, qs.reference_dt)
        if len(np.unique(speeds)) < 2:
            self.logger.warning("Velocity study on a single speed", speed=float(speeds[0]) if len(speeds) else None)
        brackets = sorted(b for b in qs.brackets if np.any(speeds <= b + 1e-9))
        if not brackets:
            raise InputError("no bracket contains any sample")
        cells = [
            Cell(name=f"bracket<={b:g}", func=self._bracket_cell, args=(scaled, speeds, b, config, config.optim.seed))
            for b in brackets
        ]
        rows = await self.runner.run_cells("quasistatic", cells)
        return pd.DataFrame(rows)

    def quasistatic(self, dataset: PushDataset, config: ExperimentConfig) -> pd.DataFrame:
        return asyncio.run(self.quasistatic_async(dataset, config))

    # Synthesis
    def synth(self, config: ExperimentConfig, n: Optional[int], dt: float, seed: int) -> PushDataset:
        dataset, _ = self.generator.synth_generate(
            config.object, config.noise, config.sampling, n, dt, seed, config.dynamics
        )
        return dataset

    def sample_from_model(self, model: PushModelSet, inputs, repetitions: int, seed: int, dt: float = 0.2) -> PushDataset:
        """Repeated draws from a model's predictive distributions, tagged with repetition ids."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        means, variances = model.predict_arrays(inputs)
        rng = np.random.default_rng(seed)
        samples = []
        for i, push in enumerate(inputs):
            draws = means[i] + np.sqrt(variances[i]) * rng.standard_normal((repetitions, 3))
            for rep, draw in enumerate(draws):
                samples.append(PushSample(
                    input=PushInput(v_p=push[0], c=push[1], beta=push[2]),
                    outcome=PushOutcome(dx=draw[0], dy=draw[1], dtheta=draw[2]),
                    dt=dt,
                    meta=SampleMeta(rep_id=rep, source="synthetic")
                ))
        return PushDataset(samples=samples, dt=dt, provenance=f"draws from {model.kind} seed={seed}")


# Global service instance
experiment_service = ExperimentService()
