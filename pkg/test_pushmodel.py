"""
Tests for the analytical quasi-static pushing model and its frames.
"""

import math

import numpy as np
import pytest

from src.models.schemas import CircleShape, EllipseShape, GridSpec, ObjectParams, PushInput, SquareShape
from src.services.pushmodel import (
    AnalyticalPushModel,
    CircleGeometry,
    ContactMode,
    EllipseGeometry,
    SquareGeometry,
    analytical_model,
    geometry_for,
    ls_ratio,
    pusher_frame,
)
from src.utils.exceptions import InputError

DT = 0.2


def grid_inputs(v_p=20.0, grid=None):
    grid = grid or GridSpec()
    c, beta = np.meshgrid(grid.c_values, grid.beta_values, indexing="ij")
    return np.column_stack([np.full(c.size, v_p), c.ravel(), beta.ravel()])


# pusher_frame
def test_pusher_frame_parallel_displacement():
    assert pusher_frame([2.0, 2.0], [1.0, 1.0]) == pytest.approx((2.0 * math.sqrt(2.0), 0.0))


def test_pusher_frame_perpendicular_displacement_is_left_positive():
    assert pusher_frame([0.0, 5.0], [1.0, 0.0]) == pytest.approx((0.0, 5.0))
    assert pusher_frame([0.0, -5.0], [1.0, 0.0]) == pytest.approx((0.0, -5.0))


def test_pusher_frame_identity():
    assert pusher_frame([3.0, 4.0], [1.0, 0.0]) == (3.0, 4.0)


def test_pusher_frame_zero_direction():
    with pytest.raises(InputError):
        pusher_frame([1.0, 0.0], [0.0, 0.0])


# Geometry
def test_default_ls_ratios():
    assert ls_ratio(ObjectParams()) == pytest.approx(90.0 * (math.sqrt(2.0) + math.log(1.0 + math.sqrt(2.0))) / 6.0)
    assert ls_ratio(ObjectParams(shape=CircleShape(radius=30.0))) == pytest.approx(20.0)
    assert EllipseGeometry(30.0, 30.0).default_ls_ratio() == pytest.approx(20.0)
    assert ls_ratio(ObjectParams(ls_ratio_c=12.5)) == 12.5


def test_geometry_for_shapes():
    assert isinstance(geometry_for(SquareShape()), SquareGeometry)
    assert isinstance(geometry_for(CircleShape()), CircleGeometry)
    assert isinstance(geometry_for(EllipseShape()), EllipseGeometry)


def test_square_locate_on_pushed_and_opposite_sides():
    geometry = SquareGeometry(90.0)
    assert geometry.locate(np.array([-45.0, 9.0]), np.array([1.0, 0.0])) == pytest.approx((0.6, 0.0))
    c, beta = geometry.locate(np.array([45.0, 0.0]), np.array([-1.0, 0.0]))
    assert c == pytest.approx(0.5)
    assert beta == pytest.approx(0.0, abs=1e-12)


def test_ellipse_frame_and_locate_are_consistent():
    geometry = EllipseGeometry(65.0, 52.5)
    for c in [0.1, 0.5, 0.9]:
        state = geometry.contact_state(np.array([c]))
        point, normal, _, _ = geometry.frame(state)
        found_c, found_beta = geometry.locate(point[0], normal[0])
        assert found_c == pytest.approx(c, abs=1e-6)
        assert found_beta == pytest.approx(0.0, abs=1e-9)


def test_ellipse_contact_coordinate_runs_bottom_to_top():
    geometry = EllipseGeometry(65.0, 52.5)
    points, _, _, _ = geometry.frame(geometry.contact_state(np.array([0.0, 0.5, 1.0])))
    np.testing.assert_allclose(points[:, 1], [-52.5, 0.0, 52.5], atol=1e-6)
    np.testing.assert_allclose(points[1], [-65.0, 0.0], atol=1e-6)


# Motion cone
def test_center_normal_push_sticks():
    for mu in [0.01, 0.25, 2.0]:
        mode = analytical_model.motion_cone_mode(PushInput(v_p=20, c=0.5, beta=0.0), ObjectParams(mu_contact=mu))
        assert mode == ContactMode.STICK


def test_frictionless_contact_never_sticks():
    obj = ObjectParams(mu_contact=0.0)
    for c in np.linspace(0.0, 1.0, 11):
        for beta in [-1.2, -0.4, 0.3, 1.0]:
            assert analytical_model.motion_cone_mode(PushInput(v_p=20, c=c, beta=beta), obj) != ContactMode.STICK


def test_very_high_friction_sticks():
    # |beta| <= 1 keeps the sticking force compressive over the whole side
    obj = ObjectParams(mu_contact=1e9)
    for c in np.linspace(0.0, 1.0, 11):
        for beta in np.linspace(-1.0, 1.0, 21):
            mode = analytical_model.motion_cone_mode(PushInput(v_p=20, c=c, beta=beta), obj)
            assert mode == ContactMode.STICK


def test_slide_direction_follows_push_angle():
    obj = ObjectParams(mu_contact=0.1)
    assert analytical_model.motion_cone_mode(PushInput(v_p=20, c=0.5, beta=1.0), obj) == ContactMode.SLIDE_UP
    assert analytical_model.motion_cone_mode(PushInput(v_p=20, c=0.5, beta=-1.0), obj) == ContactMode.SLIDE_DOWN


# analytical_push
def test_zero_speed_gives_zero_outcome(square):
    result = analytical_model.analytical_push(PushInput(v_p=0.0, c=0.3, beta=0.4), square, DT)
    assert result.outcome.to_vector().tolist() == [0.0, 0.0, 0.0]


def test_center_normal_push_translates(square):
    outcome = analytical_model.analytical_push(PushInput(v_p=20.0, c=0.5, beta=0.0), square, DT).outcome
    assert outcome.dx == pytest.approx(20.0 * DT)
    assert outcome.dy == pytest.approx(0.0, abs=1e-12)
    assert outcome.dtheta == pytest.approx(0.0, abs=1e-12)


def test_ellipse_center_push_is_symmetric():
    obj = ObjectParams(shape=EllipseShape())
    outcome = analytical_model.analytical_push(PushInput(v_p=20.0, c=0.5, beta=0.0), obj, DT).outcome
    assert outcome.dx > 0
    assert abs(outcome.dy) < 1e-9
    assert abs(outcome.dtheta) < 1e-9


def test_tangential_push_separates(square):
    for beta in [-math.pi / 2, math.pi / 2]:
        result = analytical_model.analytical_push(PushInput(v_p=20.0, c=0.4, beta=beta), square, DT)
        assert result.separated
        assert result.initial_mode == ContactMode.SEPARATE
        assert result.outcome.to_vector().tolist() == [0.0, 0.0, 0.0]


def test_invalid_window_and_inputs(square):
    with pytest.raises(InputError):
        analytical_model.analytical_push(PushInput(v_p=20.0, c=0.5, beta=0.0), square, 0.0)
    with pytest.raises(InputError):
        analytical_model.push_batch(np.array([[20.0, 1.5, 0.0]]), square, DT)
    with pytest.raises(InputError):
        analytical_model.push_batch(np.array([[20.0, 0.5]]), square, DT)


def test_batch_matches_single_pushes(square):
    inputs = np.array([[20.0, 0.2, 0.5], [35.0, 0.8, -0.3], [10.0, 0.5, 1.1]])
    batch = analytical_model.push_batch(inputs, square, DT)
    for row, expected in zip(inputs, batch.outcomes):
        single = analytical_model.analytical_push(PushInput(v_p=row[0], c=row[1], beta=row[2]), square, DT)
        np.testing.assert_allclose(single.outcome.to_vector(), expected, atol=1e-12)


def test_mirror_symmetry_of_square(square):
    inputs = grid_inputs()
    mirrored = inputs.copy()
    mirrored[:, 1] = 1.0 - inputs[:, 1]
    mirrored[:, 2] = -inputs[:, 2]
    a = analytical_model.push_batch(inputs, square, DT).outcomes
    b = analytical_model.push_batch(mirrored, square, DT).outcomes
    np.testing.assert_allclose(b, a * np.array([1.0, -1.0, -1.0]), atol=1e-9)


def test_quasi_static_speed_bound_on_grid(square):
    for v_p in [5.0, 20.0, 100.0]:
        outcomes = analytical_model.push_batch(grid_inputs(v_p), square, DT).outcomes
        assert len(outcomes) == 651
        travel = np.hypot(outcomes[:, 0], outcomes[:, 1])
        assert np.all(travel <= v_p * DT * (1 + 1e-6))


def test_extreme_locations_on_grid(square):
    inputs = grid_inputs()
    outcomes = analytical_model.push_batch(inputs, square, DT).outcomes

    c_best, beta_best = inputs[np.argmax(np.abs(outcomes[:, 0])), 1:]
    assert (c_best, beta_best) == pytest.approx((0.5, 0.0), abs=1e-9)

    straight = np.isclose(inputs[:, 2], 0.0)
    row = inputs[straight]
    assert row[np.argmax(np.abs(outcomes[straight, 2])), 1] in (0.0, 1.0)


def test_circle_outcome_is_independent_of_contact_point():
    obj = ObjectParams(shape=CircleShape())
    for beta in [-0.8, 0.0, 0.5]:
        inputs = np.column_stack([np.full(11, 20.0), np.linspace(0, 1, 11), np.full(11, beta)])
        outcomes = analytical_model.push_batch(inputs, obj, DT).outcomes
        np.testing.assert_allclose(outcomes, np.tile(outcomes[0], (11, 1)), atol=1e-9)


def test_per_sample_windows(square):
    inputs = np.array([[20.0, 0.5, 0.0], [20.0, 0.5, 0.0]])
    outcomes = analytical_model.push_batch(inputs, square, np.array([0.1, 0.3])).outcomes
    assert outcomes[:, 0] == pytest.approx([2.0, 6.0])


def test_substep_refinement(square):
    coarse = AnalyticalPushModel(substep=1e-3)
    fine = AnalyticalPushModel(substep=5e-4)
    inputs = np.array([
        [v, c, b] for v in (20.0, 100.0) for c in (0.3, 0.5, 0.7) for b in (-0.3, 0.0, 0.3)
    ])
    a = coarse.push_batch(inputs, square, DT).outcomes
    b = fine.push_batch(inputs, square, DT).outcomes
    assert np.max(np.abs(a[:, :2] - b[:, :2])) < 1e-4
    assert np.max(np.abs(a[:, 2] - b[:, 2])) < 1e-6


def test_contact_sliding_off_the_edge_is_flagged(square):
    result = analytical_model.push_batch(np.array([[100.0, 0.98, 1.4]]), ObjectParams(mu_contact=0.05), 2.0)
    assert result.lost_contact[0]
    assert np.all(np.isfinite(result.outcomes))


def test_simulated_trajectory_layout(square):
    push = PushInput(v_p=20.0, c=0.3, beta=0.2)
    trajectory = analytical_model.simulate_trajectory(push, square, duration=1.0, sample_rate=100.0)
    assert trajectory.t.shape == (101,)
    assert trajectory.duration == pytest.approx(1.0)
    np.testing.assert_allclose(trajectory.pusher_xy[0], [-45.0, -18.0])
    travel = np.linalg.norm(trajectory.pusher_xy[-1] - trajectory.pusher_xy[0])
    assert travel == pytest.approx(20.0)
    np.testing.assert_array_equal(trajectory.object_pose[0], [0.0, 0.0, 0.0])


def test_simulated_trajectory_matches_single_window(square):
    push = PushInput(v_p=20.0, c=0.3, beta=0.2)
    trajectory = analytical_model.simulate_trajectory(push, square, duration=DT, sample_rate=1000.0)
    outcome = analytical_model.analytical_push(push, square, DT).outcome
    direction = trajectory.pusher_xy[-1] - trajectory.pusher_xy[0]
    dx, dy = pusher_frame(trajectory.object_pose[-1, :2], direction)
    assert (dx, dy, trajectory.object_pose[-1, 2]) == pytest.approx(tuple(outcome.to_vector()), abs=1e-9)
