"""
Analytical quasi-static pushing model.

A point pusher moves at constant world velocity against a flat slider with a
uniform pressure distribution and an ellipsoidal limit surface. At every
integration sub-step the contact mode is resolved through the motion cone and
the pusher velocity is mapped to the object twist:

    sticking:  v = (c^2 u + p (p . u)) / (c^2 + |p|^2),  w = (p x v) / c^2
    sliding:   v = k f,  w = k (p x f) / c^2,  f on the friction-cone edge,
               k chosen so the contact keeps the pusher's normal velocity

Frames: the object frame has its origin at the centre of mass. The pushed side
faces -x, its inward normal at c = 0.5 is +x, and positive beta rotates the push
direction counterclockwise from the inward normal. The contact coordinate c runs
from the bottom vertex (c = 0) to the top vertex (c = 1) of the pushed side.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import ellipe

from src.config.logging import LoggerMixin
from src.config.settings import settings
from src.models.schemas import (
    CircleShape, EllipseShape, ObjectParams, PushInput, PushOutcome, SquareShape, Trajectory
)
from src.utils.exceptions import InputError

NORMAL_SPEED_EPS = 1e-12


class ContactMode(str, Enum):
    STICK = "stick"
    SLIDE_UP = "slide_up"
    SLIDE_DOWN = "slide_down"
    SEPARATE = "separate"


_MODE_CODES = (ContactMode.STICK, ContactMode.SLIDE_UP, ContactMode.SLIDE_DOWN, ContactMode.SEPARATE)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _perp(a: np.ndarray) -> np.ndarray:
    return np.stack([-a[..., 1], a[..., 0]], axis=-1)


def _rotate(a: np.ndarray, angle) -> np.ndarray:
    cos, sin = np.cos(angle), np.sin(angle)
    return np.stack([cos * a[..., 0] - sin * a[..., 1], sin * a[..., 0] + cos * a[..., 1]], axis=-1)


def _signed_angle(frm: np.ndarray, to: np.ndarray) -> np.ndarray:
    return np.arctan2(_cross(frm, to), _dot(frm, to))


# Contact geometry
class ShapeGeometry(ABC):
    """Boundary of the pushed side, parametrized by a scalar contact state."""

    #: Allowed range of the contact state; None when the boundary is closed.
    limits: Optional[Tuple[float, float]] = None

    @abstractmethod
    def contact_state(self, c: np.ndarray) -> np.ndarray:
        """Contact state for normalized contact coordinates."""

    @abstractmethod
    def frame(self, state: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Contact frame at the given states.

        Returns:
            (point, inward normal, tangent toward increasing c, d state / d arc length)
        """

    @abstractmethod
    def default_ls_ratio(self) -> float:
        """Limit-surface ratio for a uniform pressure distribution (mm)."""

    @abstractmethod
    def locate(self, point: np.ndarray, direction: np.ndarray) -> Tuple[float, float]:
        """
        Recover (c, beta) for a contact point and push direction given in the object frame.
        Points on any side are mapped to the canonical pushed side through the shape's symmetry.
        """


class SquareGeometry(ShapeGeometry):
    """Square of side a; the state is the contact height on the pushed side."""

    def __init__(self, side: float):
        self.side = side
        self.limits = (-side / 2.0, side / 2.0)

    def contact_state(self, c):
        return (np.asarray(c, dtype=float) - 0.5) * self.side

    def frame(self, state):
        state = np.asarray(state, dtype=float)
        point = np.stack([np.full_like(state, -self.side / 2.0), state], axis=-1)
        normal = np.broadcast_to(np.array([1.0, 0.0]), point.shape)
        tangent = np.broadcast_to(np.array([0.0, 1.0]), point.shape)
        return point, normal, tangent, np.ones_like(state)

    def default_ls_ratio(self) -> float:
        return self.side * (math.sqrt(2.0) + math.log(1.0 + math.sqrt(2.0))) / 6.0

    def locate(self, point, direction):
        point = np.asarray(point, dtype=float)
        direction = np.asarray(direction, dtype=float)
        # Quarter turn that brings the touched side to -x
        turns = [k * math.pi / 2.0 for k in range(4)]
        rotated = [_rotate(point, angle) for angle in turns]
        k = int(np.argmin([r[0] for r in rotated]))
        local_point = rotated[k]
        local_dir = _rotate(direction, turns[k])
        c = float(np.clip(local_point[1] / self.side + 0.5, 0.0, 1.0))
        return c, float(_signed_angle(np.array([1.0, 0.0]), local_dir))


class EllipseGeometry(ShapeGeometry):
    """
    Ellipse with semi-axis a along x and b along y; the state is the polar
    parameter phi of p = (a cos phi, b sin phi). The pushed half runs from
    phi = 3pi/2 (c = 0) to phi = pi/2 (c = 1), with c proportional to arc length.
    """

    TABLE_SIZE = 4001

    def __init__(self, a: float, b: float):
        self.a = a
        self.b = b
        phi = np.linspace(1.5 * math.pi, 0.5 * math.pi, self.TABLE_SIZE)
        speed = np.hypot(a * np.sin(phi), b * np.cos(phi))
        arc = cumulative_trapezoid(speed, -phi, initial=0.0)
        self._phi_table = phi
        self._c_table = arc / arc[-1]

    def contact_state(self, c):
        return np.interp(np.asarray(c, dtype=float), self._c_table, self._phi_table)

    def frame(self, state):
        phi = np.asarray(state, dtype=float)
        cos, sin = np.cos(phi), np.sin(phi)
        point = np.stack([self.a * cos, self.b * sin], axis=-1)
        speed = np.hypot(self.a * sin, self.b * cos)
        tangent = np.stack([self.a * sin, -self.b * cos], axis=-1) / speed[..., None]
        normal_norm = np.hypot(self.b * cos, self.a * sin)
        normal = -np.stack([self.b * cos, self.a * sin], axis=-1) / normal_norm[..., None]
        return point, normal, tangent, -1.0 / speed

    def default_ls_ratio(self) -> float:
        major, minor = max(self.a, self.b), min(self.a, self.b)
        perimeter = 4.0 * major * ellipe(1.0 - (minor / major) ** 2)
        return float(perimeter / (3.0 * math.pi))

    def locate(self, point, direction):
        point = np.asarray(point, dtype=float)
        direction = np.asarray(direction, dtype=float)
        phi = math.atan2(point[1] / self.b, point[0] / self.a) % (2.0 * math.pi)
        if not (0.5 * math.pi <= phi <= 1.5 * math.pi):
            # Half turn symmetry maps the far half onto the pushed one
            phi = (phi + math.pi) % (2.0 * math.pi)
            direction = -direction
        c = float(np.interp(phi, self._phi_table[::-1], self._c_table[::-1]))
        _, normal, _, _ = self.frame(np.array(phi))
        return c, float(_signed_angle(normal, direction))


class CircleGeometry(EllipseGeometry):
    """Circle of radius r; every contact point is equivalent so c is not used."""

    def __init__(self, radius: float):
        super().__init__(radius, radius)
        self.radius = radius

    def contact_state(self, c):
        return np.full(np.shape(c), math.pi)

    def default_ls_ratio(self) -> float:
        return 2.0 * self.radius / 3.0

    def locate(self, point, direction):
        point = np.asarray(point, dtype=float)
        normal = -point / np.linalg.norm(point)
        return 0.5, float(_signed_angle(normal, np.asarray(direction, dtype=float)))


def geometry_for(shape: Union[SquareShape, CircleShape, EllipseShape]) -> ShapeGeometry:
    """Contact geometry of a configured shape."""
    if isinstance(shape, SquareShape):
        return SquareGeometry(shape.side)
    if isinstance(shape, CircleShape):
        return CircleGeometry(shape.radius)
    if isinstance(shape, EllipseShape):
        return EllipseGeometry(shape.a, shape.b)
    raise InputError(f"unsupported shape: {shape!r}")


def ls_ratio(obj: ObjectParams) -> float:
    """Configured limit-surface ratio, or the uniform-pressure value for the shape."""
    if obj.ls_ratio_c is not None:
        return obj.ls_ratio_c
    return geometry_for(obj.shape).default_ls_ratio()


def pusher_frame(world_displacement, push_direction) -> Tuple[float, float]:
    """
    Express a world displacement in the frame whose x-axis is the push direction.
    The y-axis points to the left of the push direction.

    Raises:
        InputError: zero-length push direction
    """
    d = np.asarray(world_displacement, dtype=float)
    e = np.asarray(push_direction, dtype=float)
    norm = float(np.linalg.norm(e))
    if not norm > 0 or not math.isfinite(norm):
        raise InputError("push direction must have non-zero finite length")
    e = e / norm
    return float(_dot(d, e)), float(_cross(e, d))


@dataclass(frozen=True)
class PushResult:
    """Outcome of one analytical push plus how the contact behaved."""
    outcome: PushOutcome
    initial_mode: ContactMode
    separated: bool
    lost_contact: bool


@dataclass(frozen=True)
class BatchPushResult:
    """Vectorized outcomes (n, 3) with per-push flags."""
    outcomes: np.ndarray
    initial_modes: np.ndarray
    separated: np.ndarray
    lost_contact: np.ndarray


class AnalyticalPushModel(LoggerMixin):
    """Quasi-static point-push model with an ellipsoidal limit surface."""

    def __init__(self, substep: Optional[float] = None):
        self.substep = substep or settings.integration_substep_s
        if not self.substep > 0:
            raise InputError("integration sub-step must be positive")

    # Contact mechanics
    def _contact_twist(self, geometry: ShapeGeometry, c2: float, mu: float, state, u):
        """
        Object twist (object frame) for pusher velocity u at contact states.

        Returns:
            (v (n, 2), omega (n,), d state / dt (n,), mode codes (n,))
        """
        point, normal, tangent, dstate_ds = geometry.frame(state)

        un = _dot(u, normal)
        pushing = un > NORMAL_SPEED_EPS * np.maximum(np.linalg.norm(u, axis=-1), 1e-300)

        den = c2 + _dot(point, point)
        v_stick = (c2 * u + point * _dot(point, u)[..., None]) / den[..., None]
        vn = _dot(v_stick, normal)
        vt = _dot(v_stick, tangent)
        stick = pushing & (vn > 0) & (np.abs(vt) <= mu * vn)

        sign = np.where(vt >= 0, 1.0, -1.0)
        if math.isfinite(mu):
            force = normal + (sign * mu)[..., None] * tangent
            omega_f = _cross(point, force) / c2
            contact_vel = force + omega_f[..., None] * _perp(point)
            wn = _dot(contact_vel, normal)
            slide = pushing & ~stick & (wn > 0)
            kappa = np.where(slide, un / np.where(wn > 0, wn, 1.0), 0.0)
            v_slide = kappa[..., None] * force
            omega_slide = kappa * omega_f
        else:
            slide = np.zeros_like(stick)
            v_slide = np.zeros_like(u)
            omega_slide = np.zeros_like(un)

        v = np.where(stick[..., None], v_stick, v_slide)
        omega = np.where(stick, _cross(point, v_stick) / c2, omega_slide)

        material_vel = v + omega[..., None] * _perp(point)
        dstate = np.where(slide, _dot(u - material_vel, tangent) * dstate_ds, 0.0)

        modes = np.where(stick, 0, np.where(slide, np.where(sign > 0, 1, 2), 3))
        return v, omega, dstate, modes

    def _rates(self, geometry, c2, mu, y, pusher_velocity):
        """Time derivative of (x, y, theta, contact state) with pusher velocity fixed in the world."""
        theta = y[:, 2]
        u = _rotate(pusher_velocity, -theta)
        v, omega, dstate, _ = self._contact_twist(geometry, c2, mu, y[:, 3], u)
        v_world = _rotate(v, theta)
        return np.column_stack([v_world, omega, dstate])

    def _integrate(
        self,
        geometry,
        obj,
        state0,
        pusher_velocity,
        dt,
        steps: Optional[int] = None,
        record_every: Optional[int] = None
    ):
        """
        Fixed-step RK4 over a batch. Every push takes the same number of steps,
        with h_i = dt_i / steps <= substep unless steps is given.
        """
        c2 = ls_ratio(obj) ** 2
        mu = obj.mu_contact
        n = state0.shape[0]
        dt = np.broadcast_to(np.asarray(dt, dtype=float), (n,))
        if steps is None:
            steps = max(1, int(math.ceil(float(np.max(dt)) / self.substep - 1e-9)))
        h = (dt / steps)[:, None]

        y = np.zeros((n, 4))
        y[:, 3] = state0
        lost = np.zeros(n, dtype=bool)
        active = np.ones(n, dtype=bool)
        records = [y.copy()] if record_every else None

        for step in range(steps):
            k1 = self._rates(geometry, c2, mu, y, pusher_velocity)
            k2 = self._rates(geometry, c2, mu, y + 0.5 * h * k1, pusher_velocity)
            k3 = self._rates(geometry, c2, mu, y + 0.5 * h * k2, pusher_velocity)
            k4 = self._rates(geometry, c2, mu, y + h * k3, pusher_velocity)
            y_new = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            y = np.where(active[:, None], y_new, y)

            if geometry.limits is not None:
                lo, hi = geometry.limits
                off = active & ((y[:, 3] < lo) | (y[:, 3] > hi))
                y[:, 3] = np.clip(y[:, 3], lo, hi)
                lost |= off
                active &= ~off

            if record_every and (step + 1) % record_every == 0:
                records.append(y.copy())

        return y, lost, records

    # Public operations
    def motion_cone_mode(self, push: PushInput, obj: ObjectParams) -> ContactMode:
        """Contact mode at the start of a push; independent of the pusher speed."""
        geometry = geometry_for(obj.shape)
        state = geometry.contact_state(np.array([push.c]))
        _, normal, _, _ = geometry.frame(state)
        direction = _rotate(normal, push.beta)
        _, _, _, modes = self._contact_twist(geometry, ls_ratio(obj) ** 2, obj.mu_contact, state, direction)
        return _MODE_CODES[int(modes[0])]

    def push_batch(self, inputs, obj: ObjectParams, dt) -> BatchPushResult:
        """
        Analytical outcomes for many inputs at once.

        Args:
            inputs: (n, 3) array of (v_p, c, beta)
            obj: pushed object
            dt: window (s), scalar or per input
        """
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != 3:
            raise InputError("inputs must have columns (v_p, c, beta)")
        dt = np.broadcast_to(np.asarray(dt, dtype=float), (inputs.shape[0],))
        if np.any(~(dt > 0)):
            raise InputError("dt must be positive")
        v_p, c, beta = inputs[:, 0], inputs[:, 1], inputs[:, 2]
        if np.any(v_p < 0) or np.any((c < 0) | (c > 1)) or np.any(np.abs(beta) > math.pi / 2):
            raise InputError("inputs outside v_p >= 0, c in [0, 1], |beta| <= pi/2")

        geometry = geometry_for(obj.shape)
        state0 = geometry.contact_state(c)
        _, normal, _, _ = geometry.frame(state0)
        direction = _rotate(normal, beta)
        _, _, _, modes = self._contact_twist(geometry, ls_ratio(obj) ** 2, obj.mu_contact, state0, direction)
        separated = modes == 3

        y, lost, _ = self._integrate(geometry, obj, state0, v_p[:, None] * direction, dt)

        # Object frame equals the world frame at the start of the window
        dx = _dot(y[:, :2], direction)
        dy = _cross(direction, y[:, :2])
        outcomes = np.column_stack([dx, dy, y[:, 2]])
        outcomes[separated | (v_p == 0)] = 0.0

        if np.any(separated):
            self.logger.debug("Pushes separated at contact", count=int(np.sum(separated)))
        if np.any(lost):
            self.logger.debug("Pushes slid off the pushed side", count=int(np.sum(lost)))
        return BatchPushResult(
            outcomes=outcomes,
            initial_modes=np.array([_MODE_CODES[m].value for m in modes]),
            separated=separated,
            lost_contact=lost
        )

    def analytical_push(self, push: PushInput, obj: ObjectParams, dt: float) -> PushResult:
        """Outcome of pushing for dt seconds; separation gives a zero outcome with the flag set."""
        if not dt > 0:
            raise InputError("dt must be positive")
        batch = self.push_batch(push.to_vector()[None, :], obj, dt)
        dx, dy, dtheta = batch.outcomes[0]
        return PushResult(
            outcome=PushOutcome(dx=float(dx), dy=float(dy), dtheta=float(dtheta)),
            initial_mode=ContactMode(batch.initial_modes[0]),
            separated=bool(batch.separated[0]),
            lost_contact=bool(batch.lost_contact[0])
        )

    def simulate_trajectory(
        self,
        push: PushInput,
        obj: ObjectParams,
        duration: float,
        sample_rate: float = 1000.0
    ) -> Trajectory:
        """
        Integrate a continuous push and record pusher position and object pose.
        The world frame is the object frame at t = 0.
        """
        if not duration > 0 or not sample_rate > 0:
            raise InputError("duration and sample_rate must be positive")
        samples = int(round(duration * sample_rate))
        period = 1.0 / sample_rate
        per_sample = max(1, int(math.ceil(period / self.substep - 1e-9)))

        geometry = geometry_for(obj.shape)
        state0 = geometry.contact_state(np.array([push.c]))
        point0, normal, _, _ = geometry.frame(state0)
        velocity = push.v_p * _rotate(normal, push.beta)

        if self.motion_cone_mode(push, obj) == ContactMode.SEPARATE:
            poses = np.zeros((samples + 1, 3))
        else:
            _, _, records = self._integrate(
                geometry, obj, state0, velocity, samples * period,
                steps=samples * per_sample, record_every=per_sample
            )
            poses = np.array([r[0, :3] for r in records])

        t = np.arange(samples + 1) * period
        pusher = point0[0] + t[:, None] * velocity[0]
        return Trajectory(t=t, pusher_xy=pusher, object_pose=poses)


# Global model instance
analytical_model = AnalyticalPushModel()
