"""
Dataset service: canonical CSV/JSON exchange, trajectory windowing,
repeated-push grouping and train/test splitting.

Canonical CSV header (UTF-8, LF newlines, units in the column names):

    object,surface,v_p_mm_s,c,beta_rad,dt_s,dx_mm,dy_mm,dtheta_rad,rep_id

An optional trailing `source` column holds `real` or `synthetic`. Rows are
numbered from 1 for the first line after the header. JSON files hold the same
columns as a list of records under "samples", plus "dt" and "provenance".
"""

import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.config.logging import LoggerMixin, log_dataset_event
from src.config.settings import settings
from src.models.schemas import (
    OUTPUT_NAMES, ObjectParams, PushDataset, PushInput, PushOutcome, PushSample,
    RepeatedPushGroup, SampleMeta, Trajectory
)
from src.services.pushmodel import geometry_for, pusher_frame
from src.utils.exceptions import DataError, DataFormatError, DataParseError, InputError

CANONICAL_COLUMNS = [
    "object", "surface", "v_p_mm_s", "c", "beta_rad", "dt_s", "dx_mm", "dy_mm", "dtheta_rad", "rep_id"
]
OPTIONAL_COLUMNS = ["source"]
INPUT_COLUMNS = ["v_p_mm_s", "c", "beta_rad"]
OUTCOME_COLUMNS = ["dx_mm", "dy_mm", "dtheta_rad"]
NUMERIC_COLUMNS = INPUT_COLUMNS + ["dt_s"] + OUTCOME_COLUMNS
DEFAULT_DT = 0.2

FORMAT_ALIASES = {
    "csv": "csv",
    "canonical-csv": "csv",
    "json": "json",
    "canonical-json": "json",
}


def resolve_format(path: Union[str, Path], format: Optional[str] = None) -> str:
    """Normalize a format name, inferring it from the file suffix when omitted."""
    name = format or Path(path).suffix.lstrip(".").lower()
    if name not in FORMAT_ALIASES:
        raise DataFormatError(f"unknown dataset format '{name}' (expected canonical-csv or canonical-json)")
    return FORMAT_ALIASES[name]


def _to_float(value) -> float:
    """Correctly rounded float of a cell; NaN when it does not parse."""
    try:
        return float(value)
    except (TypeError, ValueError):
        return math.nan


def _check_range(frame: pd.DataFrame, column: str, valid: pd.Series, message: str) -> None:
    bad = np.flatnonzero(~valid.to_numpy())
    if bad.size:
        row = int(bad[0])
        raise DataParseError(f"{message} (got {frame[column].iloc[row]})", row=row + 1, column=column)


class DatasetService(LoggerMixin):
    """Service for reading, writing and reshaping push datasets."""

    # Frame conversion
    def to_frame(self, dataset: PushDataset) -> pd.DataFrame:
        """Canonical table of a dataset, one row per sample."""
        records = []
        for sample in dataset.samples:
            records.append({
                "object": sample.meta.object_id,
                "surface": sample.meta.surface_id,
                "v_p_mm_s": sample.input.v_p,
                "c": sample.input.c,
                "beta_rad": sample.input.beta,
                "dt_s": sample.dt,
                "dx_mm": sample.outcome.dx,
                "dy_mm": sample.outcome.dy,
                "dtheta_rad": sample.outcome.dtheta,
                "rep_id": sample.meta.rep_id,
                "source": sample.meta.source,
            })
        frame = pd.DataFrame.from_records(records, columns=CANONICAL_COLUMNS + OPTIONAL_COLUMNS)
        frame["rep_id"] = frame["rep_id"].astype("Int64")
        return frame

    def from_frame(self, frame: pd.DataFrame, dt: Optional[float] = None, provenance: str = "") -> PushDataset:
        """
        Validate a canonical table and build the dataset.

        Raises:
            DataFormatError: missing or unexpected columns
            DataParseError: a value is malformed or out of range (row-indexed)
        """
        columns = list(frame.columns)
        missing = [c for c in CANONICAL_COLUMNS if c not in columns]
        unexpected = [c for c in columns if c not in CANONICAL_COLUMNS + OPTIONAL_COLUMNS]
        if missing or unexpected:
            raise DataFormatError(
                f"header mismatch: missing {missing or 'none'}, unexpected {unexpected or 'none'}; "
                f"expected {','.join(CANONICAL_COLUMNS)}"
            )

        values: Dict[str, np.ndarray] = {}
        for column in NUMERIC_COLUMNS:
            parsed = frame[column].map(_to_float).astype(float)
            _check_range(frame, column, pd.Series(np.isfinite(parsed.to_numpy())), "not a finite number")
            values[column] = parsed.to_numpy()

        _check_range(frame, "v_p_mm_s", pd.Series(values["v_p_mm_s"] >= 0), "speed must be non-negative")
        _check_range(frame, "c", pd.Series((values["c"] >= 0) & (values["c"] <= 1)), "c out of range [0, 1]")
        _check_range(
            frame, "beta_rad", pd.Series(np.abs(values["beta_rad"]) <= math.pi / 2), "beta out of range [-pi/2, pi/2]"
        )
        _check_range(frame, "dt_s", pd.Series(values["dt_s"] > 0), "dt must be positive")
        travel = np.hypot(values["dx_mm"], values["dy_mm"])
        limit = settings.max_travel_ratio * values["v_p_mm_s"] * values["dt_s"] + settings.travel_slack_mm
        _check_range(
            frame, "dx_mm", pd.Series(travel <= limit),
            f"displacement exceeds {settings.max_travel_ratio:g} * v_p * dt + {settings.travel_slack_mm:g} mm"
        )

        rep_raw = frame["rep_id"].astype(object).where(frame["rep_id"].notna(), None)
        rep_ids: List[Optional[int]] = []
        for i, value in enumerate(rep_raw):
            if value is None or (isinstance(value, str) and value.strip() == ""):
                rep_ids.append(None)
                continue
            try:
                number = float(value)
            except (TypeError, ValueError):
                raise DataParseError(f"repetition id is not an integer (got {value})", row=i + 1, column="rep_id")
            if not number.is_integer():
                raise DataParseError(f"repetition id is not an integer (got {value})", row=i + 1, column="rep_id")
            rep_ids.append(int(number))

        sources = frame["source"] if "source" in frame.columns else pd.Series(["real"] * len(frame))
        sources = sources.fillna("real").astype(str).replace("", "real")
        _check_range(frame.assign(source=sources), "source", sources.isin(["real", "synthetic"]),
                     "source must be real or synthetic")

        samples = []
        for i in range(len(frame)):
            samples.append(PushSample(
                input=PushInput(v_p=values["v_p_mm_s"][i], c=values["c"][i], beta=values["beta_rad"][i]),
                outcome=PushOutcome(dx=values["dx_mm"][i], dy=values["dy_mm"][i], dtheta=values["dtheta_rad"][i]),
                dt=values["dt_s"][i],
                meta=SampleMeta(
                    object_id=str(frame["object"].iloc[i]),
                    surface_id=str(frame["surface"].iloc[i]),
                    rep_id=rep_ids[i],
                    source=sources.iloc[i]
                )
            ))

        if dt is None:
            dt = float(pd.Series(values["dt_s"]).mode().iloc[0]) if len(frame) else DEFAULT_DT
        return PushDataset(samples=samples, dt=dt, provenance=provenance)

    # Persistence
    def load(self, path: Union[str, Path], format: Optional[str] = None) -> PushDataset:
        """Read a canonical CSV or JSON dataset."""
        path = Path(path)
        kind = resolve_format(path, format)
        if not path.is_file():
            raise DataError(f"dataset file not found: {path}")

        try:
            if kind == "csv":
                frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
                dataset = self.from_frame(frame, provenance=str(path))
            else:
                with open(path, "r", encoding="utf-8") as f:
                    document = json.load(f)
                if not isinstance(document, dict) or "samples" not in document:
                    raise DataFormatError("JSON dataset must be an object with a 'samples' list")
                frame = pd.DataFrame.from_records(document["samples"], columns=None)
                if frame.empty:
                    frame = pd.DataFrame(columns=CANONICAL_COLUMNS)
                dataset = self.from_frame(
                    frame, dt=document.get("dt"), provenance=document.get("provenance") or str(path)
                )
        except DataError as e:
            log_dataset_event(action="load", path=str(path), n_samples=0, error=str(e))
            raise
        except (pd.errors.EmptyDataError, pd.errors.ParserError, json.JSONDecodeError, UnicodeDecodeError) as e:
            log_dataset_event(action="load", path=str(path), n_samples=0, error=str(e))
            raise DataFormatError(f"could not parse {path}: {e}") from e

        log_dataset_event(action="load", path=str(path), n_samples=len(dataset), format=kind)
        return dataset

    def save(self, dataset: PushDataset, path: Union[str, Path], format: Optional[str] = None) -> Path:
        """Write a dataset in a canonical format; floats keep full precision."""
        path = Path(path)
        kind = resolve_format(path, format)
        frame = self.to_frame(dataset)
        path.parent.mkdir(parents=True, exist_ok=True)

        if kind == "csv":
            frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
        else:
            records = json.loads(frame.to_json(orient="records", double_precision=15))
            for record, sample in zip(records, dataset.samples):
                # to_json rounds; keep the exact values
                record.update({
                    "v_p_mm_s": sample.input.v_p, "c": sample.input.c, "beta_rad": sample.input.beta,
                    "dt_s": sample.dt, "dx_mm": sample.outcome.dx, "dy_mm": sample.outcome.dy,
                    "dtheta_rad": sample.outcome.dtheta,
                })
            document = {"dt": dataset.dt, "provenance": dataset.provenance, "samples": records}
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                json.dump(document, f, indent=1)

        log_dataset_event(action="save", path=str(path), n_samples=len(dataset), format=kind)
        return path

    # Windowing
    def window(
        self,
        trajectory: Trajectory,
        dt: float,
        obj: ObjectParams,
        overlap: bool = False,
        meta: Optional[SampleMeta] = None
    ) -> List[PushSample]:
        """
        Cut a trajectory into windows of dt seconds.

        Each window's input comes from the pusher state at its start (speed by
        forward difference, c and beta from the contact geometry); the outcome is
        the object pose change with the displacement in the pusher frame.
        Windows start every dt (every dt/2 with overlap). Windows with a time gap
        above dt/2, a stationary pusher or a pusher moving away are skipped.
        """
        t = np.asarray(trajectory.t, dtype=float)
        if not dt > 0:
            raise InputError("dt must be positive")
        if len(t) < 2 or np.any(np.diff(t) <= 0):
            raise InputError("trajectory timestamps must be strictly increasing")
        tolerance = 1e-6 * dt
        if t[-1] - t[0] < dt - tolerance:
            raise InputError(f"trajectory covers {t[-1] - t[0]:.6g} s, shorter than the window {dt} s")

        geometry = geometry_for(obj.shape)
        meta = meta or SampleMeta(object_id=obj.object_id, surface_id=obj.surface_id)
        stride = dt / 2.0 if overlap else dt
        pusher, pose = trajectory.pusher_xy, trajectory.object_pose

        samples: List[PushSample] = []
        skipped = {"gap": 0, "stationary": 0, "receding": 0}
        k = 0
        while t[0] + k * stride + dt <= t[-1] + tolerance:
            start = t[0] + k * stride
            k += 1
            i = int(np.searchsorted(t, start - tolerance))
            j = int(np.searchsorted(t, start + dt - tolerance))
            if j >= len(t) or j <= i:
                skipped["gap"] += 1
                continue
            # Window ends must land near recorded samples too
            if t[i] - start > dt / 2.0 or t[j] - (start + dt) > dt / 2.0 or np.max(np.diff(t[i:j + 1])) > dt / 2.0:
                skipped["gap"] += 1
                continue

            velocity = (pusher[i + 1] - pusher[i]) / (t[i + 1] - t[i])
            speed = float(np.linalg.norm(velocity))
            if speed == 0.0:
                skipped["stationary"] += 1
                continue

            theta = pose[i, 2]
            cos, sin = math.cos(theta), math.sin(theta)
            to_object = np.array([[cos, sin], [-sin, cos]])
            contact = to_object @ (pusher[i] - pose[i, :2])
            c, beta = geometry.locate(contact, to_object @ velocity)
            if abs(beta) > math.pi / 2:
                skipped["receding"] += 1
                continue

            dx, dy = pusher_frame(pose[j, :2] - pose[i, :2], velocity)
            samples.append(PushSample(
                input=PushInput(v_p=speed, c=c, beta=beta),
                outcome=PushOutcome(dx=dx, dy=dy, dtheta=float(pose[j, 2] - pose[i, 2])),
                dt=float(t[j] - t[i]),
                meta=meta
            ))

        if any(skipped.values()):
            self.logger.warning("Skipped trajectory windows", **skipped, kept=len(samples))
        return samples

    # Repeated pushes
    def group_repeats(self, dataset: PushDataset) -> List[RepeatedPushGroup]:
        """
        One group per distinct (v_p, c, beta) with mean and unbiased std of the outcomes.
        Groups of a single repetition carry no std.
        """
        if any(s.meta.rep_id is None for s in dataset.samples):
            raise InputError("grouping repeated pushes needs repetition ids on every sample")
        if not dataset.samples:
            return []

        frame = pd.DataFrame(
            np.column_stack([dataset.inputs_array(), dataset.outcomes_array()]),
            columns=["v_p", "c", "beta", *OUTPUT_NAMES]
        )
        # Sorting fixes the summation order so the result ignores sample order
        frame = frame.sort_values(list(frame.columns), kind="mergesort")
        grouped = frame.groupby(["v_p", "c", "beta"], sort=True)[list(OUTPUT_NAMES)]
        means, stds, counts = grouped.mean(), grouped.std(ddof=1), grouped.size()

        groups = []
        singletons = 0
        for key in means.index:
            v_p, c, beta = key
            count = int(counts.loc[key])
            mean = means.loc[key]
            std = None
            if count >= 2:
                std = tuple(float(s) for s in stds.loc[key])
            else:
                singletons += 1
            groups.append(RepeatedPushGroup(
                input=PushInput(v_p=v_p, c=c, beta=beta),
                empirical_mean=PushOutcome(dx=mean["dx"], dy=mean["dy"], dtheta=mean["dtheta"]),
                empirical_std=std,
                count=count
            ))

        if singletons:
            self.logger.warning("Repeated-push groups with a single repetition", count=singletons)
        return groups

    def outcome_histograms(self, dataset: PushDataset, bins: int = 20) -> pd.DataFrame:
        """
        Normalized outcome histograms per repeated-push group, as long-form rows
        (v_p, c, beta, output, bin_left, bin_right, density).
        """
        if bins < 1:
            raise InputError("bins must be positive")
        frame = pd.DataFrame(
            np.column_stack([dataset.inputs_array(), dataset.outcomes_array()]),
            columns=["v_p", "c", "beta", *OUTPUT_NAMES]
        )
        rows = []
        for (v_p, c, beta), group in frame.groupby(["v_p", "c", "beta"], sort=True):
            for output in OUTPUT_NAMES:
                density, edges = np.histogram(group[output].to_numpy(), bins=bins, density=True)
                for left, right, value in zip(edges[:-1], edges[1:], density):
                    rows.append((v_p, c, beta, output, left, right, value))
        return pd.DataFrame(rows, columns=["v_p", "c", "beta", "output", "bin_left", "bin_right", "density"])

    # Splitting
    def split(self, dataset: PushDataset, n_train: int, seed: int) -> Tuple[PushDataset, PushDataset]:
        """Seeded shuffle into disjoint train and test parts."""
        if n_train < 0 or n_train >= len(dataset):
            raise InputError(f"n_train must be in [0, {len(dataset)}), got {n_train}")
        order = np.random.default_rng(seed).permutation(len(dataset))
        return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


# Global service instance
dataset_service = DatasetService()
