"""
Tests for dataset exchange, windowing, grouping and splitting.
"""

import json
import math

import numpy as np
import pytest

from src.models.schemas import (
    DynamicsTerm, NoiseField, PushDataset, PushInput, PushOutcome, PushSample, SampleMeta, SamplingSpec,
    Trajectory
)
from src.services.dataset_service import CANONICAL_COLUMNS, dataset_service, resolve_format
from src.services.pushmodel import analytical_model
from src.utils.exceptions import DataError, DataFormatError, DataParseError, InputError

HEADER = ",".join(CANONICAL_COLUMNS)
ROW = "square,plywood,20.0,0.5,0.1,0.2,3.9,0.1,0.01,"


def write_csv(path, *rows, header=HEADER):
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


def sample(outcome, v_p=20.0, c=0.5, beta=0.0, rep_id=0):
    return PushSample(
        input=PushInput(v_p=v_p, c=c, beta=beta),
        outcome=PushOutcome(dx=outcome[0], dy=outcome[1], dtheta=outcome[2]),
        dt=0.2,
        meta=SampleMeta(rep_id=rep_id)
    )


# load / save
def test_empty_file_with_header(tmp_path):
    dataset = dataset_service.load(write_csv(tmp_path / "empty.csv"))
    assert len(dataset) == 0
    assert dataset.inputs_array().shape == (0, 3)


def test_csv_round_trip_is_exact(tmp_path, small_dataset):
    path = dataset_service.save(small_dataset, tmp_path / "data.csv")
    loaded = dataset_service.load(path)
    assert len(loaded) == len(small_dataset)
    np.testing.assert_array_equal(loaded.inputs_array(), small_dataset.inputs_array())
    np.testing.assert_array_equal(loaded.outcomes_array(), small_dataset.outcomes_array())
    np.testing.assert_array_equal(loaded.dt_array(), small_dataset.dt_array())
    assert all(s.meta.source == "synthetic" for s in loaded.samples)
    assert b"\r\n" not in path.read_bytes()


def test_json_round_trip_is_exact(tmp_path, generator, square):
    sampling = SamplingSpec(mode="grid", c_values=[0.2, 0.7], beta_values=[-0.3, 0.4], repetitions=2)
    dataset, _ = generator.synth_generate(square, NoiseField(), sampling, None, 0.2, seed=5)
    path = dataset_service.save(dataset, tmp_path / "data.json", "canonical-json")
    loaded = dataset_service.load(path, "canonical-json")
    np.testing.assert_array_equal(loaded.outcomes_array(), dataset.outcomes_array())
    assert [s.meta.rep_id for s in loaded.samples] == [s.meta.rep_id for s in dataset.samples]
    assert loaded.dt == dataset.dt
    assert loaded.provenance == dataset.provenance


def test_rep_ids_survive_csv(tmp_path):
    dataset = PushDataset(samples=[sample((1.0, 0.0, 0.0), rep_id=3), sample((1.0, 0.0, 0.0), rep_id=None)], dt=0.2)
    loaded = dataset_service.load(dataset_service.save(dataset, tmp_path / "reps.csv"))
    assert [s.meta.rep_id for s in loaded.samples] == [3, None]


def test_out_of_range_contact_is_rejected(tmp_path):
    path = write_csv(tmp_path / "bad.csv", ROW, "square,plywood,20.0,1.5,0.1,0.2,3.9,0.1,0.01,")
    with pytest.raises(DataParseError) as info:
        dataset_service.load(path)
    assert info.value.row == 2
    assert info.value.column == "c"


@pytest.mark.parametrize("row, column", [
    ("square,plywood,fast,0.5,0.1,0.2,3.9,0.1,0.01,", "v_p_mm_s"),
    ("square,plywood,20.0,0.5,0.1,0.2,nan,0.1,0.01,", "dx_mm"),
    ("square,plywood,20.0,0.5,2.0,0.2,3.9,0.1,0.01,", "beta_rad"),
    ("square,plywood,-1.0,0.5,0.1,0.2,3.9,0.1,0.01,", "v_p_mm_s"),
    ("square,plywood,20.0,0.5,0.1,0.0,3.9,0.1,0.01,", "dt_s"),
    ("square,plywood,20.0,0.5,0.1,0.2,3.9,0.1,0.01,1.5", "rep_id"),
])
def test_malformed_rows_name_row_and_column(tmp_path, row, column):
    with pytest.raises(DataParseError) as info:
        dataset_service.load(write_csv(tmp_path / "bad.csv", row))
    assert info.value.row == 1
    assert info.value.column == column


def test_unknown_source_is_rejected(tmp_path):
    path = write_csv(tmp_path / "bad.csv", ROW + ",simulated", header=HEADER + ",source")
    with pytest.raises(DataParseError):
        dataset_service.load(path)


def test_header_mismatch(tmp_path):
    path = write_csv(tmp_path / "bad.csv", ROW, header=HEADER.replace("dx_mm", "dx_m"))
    with pytest.raises(DataFormatError):
        dataset_service.load(path)


def test_missing_file_and_unknown_format(tmp_path):
    with pytest.raises(DataError):
        dataset_service.load(tmp_path / "missing.csv")
    with pytest.raises(DataFormatError):
        resolve_format(tmp_path / "data.parquet")


def test_zero_byte_csv_is_a_format_error(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_bytes(b"")
    with pytest.raises(DataFormatError):
        dataset_service.load(path)


def test_displacement_beyond_pusher_travel_is_rejected(tmp_path):
    path = write_csv(tmp_path / "bad.csv", ROW, "square,plywood,20.0,0.5,0.1,0.2,500.0,0.1,0.01,")
    with pytest.raises(DataParseError) as info:
        dataset_service.load(path)
    assert info.value.row == 2
    assert info.value.column == "dx_mm"


def test_transverse_displacement_counts_toward_travel(tmp_path):
    with pytest.raises(DataParseError):
        dataset_service.load(write_csv(tmp_path / "bad.csv", "square,plywood,20.0,0.5,0.1,0.2,3.9,40.0,0.01,"))


def test_fast_noisy_synthetic_pushes_are_admitted(tmp_path, generator, square):
    sampling = SamplingSpec(mode="random", speeds=[150.0])
    dataset, _ = generator.synth_generate(square, NoiseField(), sampling, 300, 0.2, seed=9, dynamics=DynamicsTerm())
    loaded = dataset_service.load(dataset_service.save(dataset, tmp_path / "fast.csv"))
    assert len(loaded) == 300


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(DataFormatError):
        dataset_service.load(path)
    path.write_text(json.dumps([1, 2, 3]), encoding="utf-8")
    with pytest.raises(DataFormatError):
        dataset_service.load(path)


def test_nominal_dt_is_most_common_window(tmp_path):
    rows = [ROW.replace(",0.2,", ",0.1,", 1), ROW, ROW]
    assert dataset_service.load(write_csv(tmp_path / "dt.csv", *rows)).dt == 0.2


# window
def straight_trajectory(duration, rate=100.0, v_p=20.0):
    t = np.arange(int(round(duration * rate)) + 1) / rate
    pusher = np.column_stack([-45.0 + v_p * t, np.zeros_like(t)])
    pose = np.column_stack([v_p * t, np.zeros_like(t), np.zeros_like(t)])
    return Trajectory(t=t, pusher_xy=pusher, object_pose=pose)


def test_window_of_straight_push(square):
    samples = dataset_service.window(straight_trajectory(0.2), 0.2, square)
    assert len(samples) == 1
    s = samples[0]
    assert (s.input.v_p, s.input.c, s.input.beta) == pytest.approx((20.0, 0.5, 0.0))
    assert s.outcome.dx == pytest.approx(4.0)
    assert s.outcome.dy == pytest.approx(0.0, abs=1e-12)
    assert s.dt == pytest.approx(0.2)


def test_window_count(square):
    assert len(dataset_service.window(straight_trajectory(1.0), 0.2, square)) == 5
    assert len(dataset_service.window(straight_trajectory(1.0), 0.2, square, overlap=True)) == 9


def test_window_skips_gaps(square):
    full = straight_trajectory(0.8)
    keep = (full.t <= 0.2 + 1e-9) | (full.t >= 0.55 - 1e-9)
    gapped = Trajectory(t=full.t[keep], pusher_xy=full.pusher_xy[keep], object_pose=full.object_pose[keep])
    samples = dataset_service.window(gapped, 0.2, square)
    assert len(samples) == 2


def test_window_skips_stationary_pusher(square):
    t = np.linspace(0.0, 0.4, 41)
    trajectory = Trajectory(t=t, pusher_xy=np.tile([-45.0, 0.0], (41, 1)), object_pose=np.zeros((41, 3)))
    assert dataset_service.window(trajectory, 0.2, square) == []


def test_window_rejects_bad_trajectories(square):
    with pytest.raises(InputError):
        dataset_service.window(straight_trajectory(0.1), 0.2, square)
    traj = straight_trajectory(0.4)
    reversed_time = Trajectory(t=traj.t[::-1].copy(), pusher_xy=traj.pusher_xy, object_pose=traj.object_pose)
    with pytest.raises(InputError):
        dataset_service.window(reversed_time, 0.2, square)


def test_windowed_simulation_matches_analytical_push(square):
    push = PushInput(v_p=20.0, c=0.4, beta=0.1)
    trajectory = analytical_model.simulate_trajectory(push, square, duration=1.0, sample_rate=1000.0)
    samples = dataset_service.window(trajectory, 0.2, square)
    assert len(samples) == 5
    for s in samples:
        expected = analytical_model.analytical_push(s.input, square, s.dt).outcome
        assert abs(s.outcome.dx - expected.dx) < 1e-3
        assert abs(s.outcome.dy - expected.dy) < 1e-3
        assert abs(s.outcome.dtheta - expected.dtheta) < 1e-5


# group_repeats
def test_identical_repetitions_have_zero_std():
    dataset = PushDataset(samples=[sample((3.0, 0.5, 0.02), rep_id=i) for i in range(100)], dt=0.2)
    groups = dataset_service.group_repeats(dataset)
    assert len(groups) == 1
    assert groups[0].count == 100
    assert groups[0].empirical_std == pytest.approx((0.0, 0.0, 0.0), abs=1e-15)


def test_two_repetition_formula():
    o, delta = np.array([3.0, -1.0, 0.05]), np.array([0.2, 0.1, -0.01])
    dataset = PushDataset(samples=[sample(o, rep_id=0), sample(o + 2 * delta, rep_id=1)], dt=0.2)
    group = dataset_service.group_repeats(dataset)[0]
    np.testing.assert_allclose(group.empirical_mean.to_vector(), o + delta, atol=1e-12)
    np.testing.assert_allclose(group.empirical_std, np.abs(delta) * math.sqrt(2.0), atol=1e-12)


def test_validation_grid_groups(generator, square):
    dataset, _ = generator.synth_generate(
        square, NoiseField(), SamplingSpec(mode="grid", repetitions=2), None, 0.2, seed=0
    )
    assert len(dataset_service.group_repeats(dataset)) == 31 * 11


def test_grouping_ignores_sample_order(generator, square, rng):
    sampling = SamplingSpec(mode="grid", c_values=[0.1, 0.5], beta_values=[-0.2, 0.3], repetitions=5)
    dataset, _ = generator.synth_generate(square, NoiseField(), sampling, None, 0.2, seed=1)
    shuffled = dataset.subset(rng.permutation(len(dataset)))
    assert dataset_service.group_repeats(dataset) == dataset_service.group_repeats(shuffled)


def test_singleton_group_has_no_std():
    group = dataset_service.group_repeats(PushDataset(samples=[sample((1.0, 0.0, 0.0))], dt=0.2))[0]
    assert group.count == 1
    assert group.empirical_std is None


def test_grouping_needs_rep_ids(small_dataset):
    with pytest.raises(InputError):
        dataset_service.group_repeats(small_dataset)


def test_outcome_histograms(generator, square):
    sampling = SamplingSpec(mode="grid", c_values=[0.5], beta_values=[0.0, 0.5], repetitions=50)
    dataset, _ = generator.synth_generate(square, NoiseField(), sampling, None, 0.2, seed=2)
    frame = dataset_service.outcome_histograms(dataset, bins=10)
    assert len(frame) == 2 * 3 * 10
    for _, part in frame.groupby(["beta", "output"]):
        area = np.sum((part["bin_right"] - part["bin_left"]) * part["density"])
        assert area == pytest.approx(1.0)


# split
def test_split_properties(small_dataset):
    train, test = dataset_service.split(small_dataset, 30, seed=4)
    again, _ = dataset_service.split(small_dataset, 30, seed=4)
    assert len(train) + len(test) == len(small_dataset)
    assert train == again
    combined = np.vstack([train.inputs_array(), test.inputs_array()])
    assert sorted(map(tuple, combined)) == sorted(map(tuple, small_dataset.inputs_array()))


def test_split_with_empty_train(small_dataset):
    train, test = dataset_service.split(small_dataset, 0, seed=0)
    assert len(train) == 0
    assert len(test) == len(small_dataset)


def test_split_rejects_oversized_train(small_dataset):
    with pytest.raises(InputError):
        dataset_service.split(small_dataset, len(small_dataset), seed=0)
