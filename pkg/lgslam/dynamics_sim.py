"""
Ground truth for the simulations: rigid body trajectories, the static
landmark map and noisy IMU and landmark measurements.

The body kinematics are

.. code::

    dR/dt = R [omega]x      dp/dt = v      dv/dt = g + R a

with the angular velocity ``omega`` and the specific force ``a`` measured
in the body frame. Attitude is integrated with a fourth order Magnus step,
position and velocity with RK4.
"""

from __future__ import annotations

import abc
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .lie_core import GroupElement, Rotation, Vec3, exp_so3, orthonormalize

logger = logging.getLogger(__name__)

TRUTH_STEP = 2.5e-4
"""Spacing of the cached truth grid in seconds."""

Trajectory = str
"""``circle`` (the analytic circle) or ``twist`` (integrated twist inputs)."""

TRAJECTORIES = ("circle", "twist")


class InvalidSimConfigError(ValueError):
    """A simulation parameter violates its invariant."""


# Types ########################################################################


@dataclass(frozen=True)
class TrueState:
    r: Rotation
    p: Vec3
    v: Vec3
    landmarks: NDArray[np.float64]
    """Shape ``(n, 3)``, one landmark per row."""
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.landmarks.shape[0]


@dataclass(frozen=True)
class MeasurementFrame:
    """One time-stamped sample of the IMU and all landmark measurements."""

    t: float
    omega: Vec3
    accel: Vec3
    y: NDArray[np.float64]
    """Shape ``(n, 3)``, ``y[i] = R^T (p - p_i)`` plus noise."""


@dataclass(frozen=True)
class NoiseSpec:
    var_omega: float = 0.01
    var_accel: float = 0.2
    var_landmark: float = 0.1
    seed: int = 1

    def __post_init__(self) -> None:
        for name in ("var_omega", "var_accel", "var_landmark"):
            if getattr(self, name) < 0:
                raise InvalidSimConfigError(
                    "The noise variance “{}” must not be negative.".format(name)
                )

    @property
    def silent(self) -> bool:
        return self.var_omega == 0 and self.var_accel == 0 and self.var_landmark == 0

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseSpec":
        return cls(var_omega=0.0, var_accel=0.0, var_landmark=0.0, seed=seed)


def _vector(values: ArrayLike) -> Tuple[float, ...]:
    return tuple(float(x) for x in np.asarray(values, dtype=float).ravel())


@dataclass(frozen=True)
class SimConfig:
    """The parameters of one simulated experiment.

    Vectors are stored as tuples so the configuration stays hashable and
    picklable.
    """

    n: int = 15
    duration: float = 60.0
    dt: float = 0.001
    gravity: Tuple[float, ...] = (0.0, 0.0, -9.81)
    trajectory: Trajectory = "circle"
    landmark_box: Tuple[Tuple[float, float], ...] = (
        (-10.0, 10.0),
        (-10.0, 10.0),
        (0.0, 5.0),
    )
    landmark_seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    decimation: int = 1
    """Landmark measurements are taken every ``decimation`` steps and held
    in between."""
    twist_omega: Tuple[float, ...] = (0.0, 0.0, 0.5)
    twist_accel: Tuple[float, ...] = (0.0, 0.0, 9.81)
    initial_position: Tuple[float, ...] = (0.0, 0.0, 0.0)
    initial_velocity: Tuple[float, ...] = (1.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise InvalidSimConfigError(
                "The step size dt must be positive (got {}).".format(self.dt)
            )
        if self.duration < self.dt:
            raise InvalidSimConfigError(
                "The duration {} is shorter than one step {}.".format(
                    self.duration, self.dt
                )
            )
        if self.n < 1:
            raise InvalidSimConfigError(
                "At least one landmark is required (got n={}).".format(self.n)
            )
        if self.trajectory not in TRAJECTORIES:
            raise InvalidSimConfigError(
                "Unknown trajectory “{}” (choose from {}).".format(
                    self.trajectory, ", ".join(TRAJECTORIES)
                )
            )
        if self.decimation < 1:
            raise InvalidSimConfigError("The decimation factor must be at least 1.")
        for name in (
            "gravity",
            "twist_omega",
            "twist_accel",
            "initial_position",
            "initial_velocity",
        ):
            value = _vector(getattr(self, name))
            if len(value) != 3:
                raise InvalidSimConfigError(
                    "“{}” needs three components (got {}).".format(name, len(value))
                )
            object.__setattr__(self, name, value)
        box = tuple(tuple(float(x) for x in row) for row in self.landmark_box)
        object.__setattr__(self, "landmark_box", box)
        _check_box(np.asarray(box))

    @property
    def g(self) -> Vec3:
        return np.asarray(self.gravity, dtype=float)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))


def _check_box(box: NDArray[np.float64]) -> None:
    if box.shape != (3, 2) or not np.all(box[:, 1] > box[:, 0]):
        raise InvalidSimConfigError(
            "The landmark box must hold three (low, high) pairs with "
            "low < high (got {}).".format(box.tolist())
        )


def truth_group_element(state: TrueState, g: ArrayLike) -> GroupElement:
    """``X = M(R, p, v, g, p_L)``."""
    return GroupElement(
        r=state.r,
        x1=state.p,
        x2=state.v,
        x3=np.asarray(g, dtype=float),
        xl=state.landmarks.T.copy(),
    )


# Integration ##################################################################


def magnus_step(
    omega_start: ArrayLike, omega_mid: ArrayLike, omega_end: ArrayLike, dt: float
) -> Rotation:
    """Fourth order attitude increment ``Phi`` with ``R(t + dt) = R(t) Phi``
    from the body angular velocity at the start, the middle and the end of
    the step."""
    w1 = np.asarray(omega_start, dtype=float)
    w2 = np.asarray(omega_mid, dtype=float)
    w3 = np.asarray(omega_end, dtype=float)
    theta = dt / 6.0 * (w1 + 4.0 * w2 + w3) + dt * dt / 12.0 * np.cross(w1, w3)
    return exp_so3(theta)


def _magnus_increments(omega: NDArray[np.float64], dt: float) -> NDArray[np.float64]:
    """Vectorized :func:`magnus_step` over rows of ``(N, 3, 3)`` samples."""
    w1, w2, w3 = omega[:, 0], omega[:, 1], omega[:, 2]
    theta = dt / 6.0 * (w1 + 4.0 * w2 + w3) + dt * dt / 12.0 * np.cross(w1, w3)
    return exp_so3(theta)


def stage_samples(values: ArrayLike) -> NDArray[np.float64]:
    """Expand an input to start, middle and end samples of one step.

    A single vector is held over the step.
    """
    values = np.asarray(values, dtype=float)
    if values.shape == (3,):
        return np.tile(values, (3, 1))
    if values.shape != (3, 3):
        raise ValueError(
            "Expected one vector or three stage samples (got shape {}).".format(
                values.shape
            )
        )
    return values


def attitude_increments(
    omega: ArrayLike, dt: float
) -> Tuple[Rotation, Rotation]:
    """The attitude increments to the middle and to the end of one step.

    The increment to the middle is a Magnus step over the first half with
    the angular velocity at the quarter point interpolated quadratically.

    :param omega: One vector (held) or three stage samples.
    """
    w = stage_samples(omega)
    quarter = 0.375 * w[0] + 0.75 * w[1] - 0.125 * w[2]
    mid = magnus_step(w[0], quarter, w[1], 0.5 * dt)
    end = magnus_step(w[0], w[1], w[2], dt)
    return mid, end


def propagate_truth(
    state: TrueState,
    omega: ArrayLike,
    accel: ArrayLike,
    dt: float,
    g: ArrayLike,
) -> TrueState:
    """Advance the rigid body by one step.

    :param omega: The angular velocity, either one vector held over the step
      or a ``(3, 3)`` array of samples at the start, the middle and the end.
    :param accel: The specific force, in the same form.
    """
    if dt <= 0:
        raise ValueError("The step size must be positive (got {}).".format(dt))
    g = np.asarray(g, dtype=float)
    a = stage_samples(accel)
    mid, end = attitude_increments(omega, dt)
    rotations = (state.r, state.r @ mid, state.r @ end)

    def rate(v: Vec3, stage: int) -> Tuple[Vec3, Vec3]:
        return v, g + rotations[stage] @ a[stage]

    p0, v0 = state.p, state.v
    k1p, k1v = rate(v0, 0)
    k2p, k2v = rate(v0 + 0.5 * dt * k1v, 1)
    k3p, k3v = rate(v0 + 0.5 * dt * k2v, 1)
    k4p, k4v = rate(v0 + dt * k3v, 2)
    p = p0 + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    v = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return TrueState(
        r=orthonormalize(rotations[2]),
        p=p,
        v=v,
        landmarks=state.landmarks,
        t=state.t + dt,
    )


# Trajectories #################################################################


class TrajectoryBase(metaclass=abc.ABCMeta):
    """A truth trajectory with random access in time.

    Subclasses integrate on a grid with spacing :data:`TRUTH_STEP`, which
    is extended on demand. A query between two grid points integrates the
    remainder from the preceding grid point.
    """

    step: float
    landmarks: NDArray[np.float64]
    g: Vec3

    @abc.abstractmethod
    def omega(self, t: float) -> Vec3:
        raise NotImplementedError("A trajectory must provide `omega`.")

    @abc.abstractmethod
    def sample(self, t: float) -> Tuple[TrueState, Vec3, Vec3]:
        """:return: The true state, the angular velocity and the specific
        force at the time ``t``."""
        raise NotImplementedError("A trajectory must provide `sample`.")

    def _grid_index(self, t: float) -> Tuple[int, float]:
        if t < 0:
            raise ValueError("The trajectory starts at t=0 (got {}).".format(t))
        k = int(np.floor(t / self.step + 1e-9))
        rest = t - k * self.step
        if abs(rest) < 1e-12:
            rest = 0.0
        return k, rest


class AttitudeGrid:
    """The attitude of the analytic circle, ``dR/dt = R [omega(t)]x`` with
    ``omega(t) = [-cos 2t, 1, sin 2t]`` and ``R(0) = I``, cached on a
    uniform grid."""

    def __init__(self, step: float = TRUTH_STEP):
        self.step = step
        self._r = np.eye(3)[np.newaxis].copy()

    @staticmethod
    def omega(t: ArrayLike) -> NDArray[np.float64]:
        t = np.asarray(t, dtype=float)
        return np.stack([-np.cos(2.0 * t), np.ones_like(t), np.sin(2.0 * t)], axis=-1)

    def increment(self, t: float, h: float) -> Rotation:
        return magnus_step(
            self.omega(t), self.omega(t + 0.5 * h), self.omega(t + h), h
        )

    def _extend(self, k: int) -> None:
        size = len(self._r)
        if k < size:
            return
        target = max(k + 1, 2 * size, 1024)
        times = np.arange(size - 1, target - 1) * self.step
        omega = np.stack(
            [
                self.omega(times),
                self.omega(times + 0.5 * self.step),
                self.omega(times + self.step),
            ],
            axis=1,
        )
        increments = _magnus_increments(omega, self.step)
        grown = np.empty((target, 3, 3))
        grown[:size] = self._r
        current = self._r[-1]
        for j, phi in enumerate(increments, start=size):
            current = current @ phi
            grown[j] = current
        self._r = grown
        logger.debug("Extended the attitude grid to %d nodes", target)

    def at(self, k: int) -> Rotation:
        self._extend(k)
        return self._r[k]


@lru_cache(maxsize=4)
def _attitude_grid(step: float) -> AttitudeGrid:
    return AttitudeGrid(step)


class AnalyticCircle(TrajectoryBase):
    """``p(t) = 3 [cos t, sin t, 1]`` with the attitude of
    :class:`AttitudeGrid`. The specific force is ``R^T (p'' - g)``."""

    def __init__(
        self, landmarks: ArrayLike, g: ArrayLike, step: float = TRUTH_STEP
    ):
        self.landmarks = np.asarray(landmarks, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.step = step
        self._grid = _attitude_grid(step)

    def omega(self, t: float) -> Vec3:
        return self._grid.omega(t)

    @staticmethod
    def position(t: float) -> Vec3:
        return 3.0 * np.array([np.cos(t), np.sin(t), 1.0])

    @staticmethod
    def velocity(t: float) -> Vec3:
        return 3.0 * np.array([-np.sin(t), np.cos(t), 0.0])

    @staticmethod
    def acceleration(t: float) -> Vec3:
        return -3.0 * np.array([np.cos(t), np.sin(t), 0.0])

    def attitude(self, t: float) -> Rotation:
        k, rest = self._grid_index(t)
        r = self._grid.at(k)
        if rest:
            r = r @ self._grid.increment(k * self.step, rest)
        return orthonormalize(r)

    def sample(self, t: float) -> Tuple[TrueState, Vec3, Vec3]:
        r = self.attitude(t)
        state = TrueState(
            r=r,
            p=self.position(t),
            v=self.velocity(t),
            landmarks=self.landmarks,
            t=t,
        )
        accel = r.T @ (self.acceleration(t) - self.g)
        return state, self.omega(t), accel


TwistInput = Callable[[float], Vec3]


class TwistTrajectory(TrajectoryBase):
    """A trajectory driven by angular velocity and specific force inputs,
    integrated with :func:`propagate_truth` from an initial state."""

    def __init__(
        self,
        initial: TrueState,
        omega: TwistInput,
        accel: TwistInput,
        g: ArrayLike,
        step: float = TRUTH_STEP,
    ):
        self.landmarks = initial.landmarks
        self.g = np.asarray(g, dtype=float)
        self.step = step
        self._omega = omega
        self._accel = accel
        self._nodes = [initial]

    @classmethod
    def constant(
        cls,
        initial: TrueState,
        omega: ArrayLike,
        accel: ArrayLike,
        g: ArrayLike,
        step: float = TRUTH_STEP,
    ) -> "TwistTrajectory":
        w = np.asarray(omega, dtype=float)
        a = np.asarray(accel, dtype=float)
        return cls(initial, lambda t: w, lambda t: a, g, step)

    def omega(self, t: float) -> Vec3:
        return np.asarray(self._omega(t), dtype=float)

    def accel(self, t: float) -> Vec3:
        return np.asarray(self._accel(t), dtype=float)

    def _advance(self, state: TrueState, h: float) -> TrueState:
        t = state.t
        times = (t, t + 0.5 * h, t + h)
        omega = np.stack([self.omega(s) for s in times])
        accel = np.stack([self.accel(s) for s in times])
        return replace(propagate_truth(state, omega, accel, h, self.g), t=t + h)

    def sample(self, t: float) -> Tuple[TrueState, Vec3, Vec3]:
        k, rest = self._grid_index(t)
        while len(self._nodes) <= k:
            previous = self._nodes[-1]
            node = self._advance(previous, self.step)
            self._nodes.append(replace(node, t=len(self._nodes) * self.step))
        state = self._nodes[k]
        if rest:
            state = self._advance(state, rest)
        return replace(state, t=t), self.omega(t), self.accel(t)


# Landmarks and measurements ###################################################


def sample_landmarks(
    n: int, box: ArrayLike, seed: int
) -> NDArray[np.float64]:
    """``n`` landmarks drawn uniformly from an axis-aligned box.

    :param box: Three ``(low, high)`` pairs.

    :return: An ``(n, 3)`` array.
    """
    box = np.asarray(box, dtype=float)
    _check_box(box)
    rng = np.random.default_rng(seed)
    return rng.uniform(box[:, 0], box[:, 1], size=(n, 3))


def make_trajectory(
    cfg: SimConfig, landmarks: Optional[NDArray[np.float64]] = None
) -> TrajectoryBase:
    """The trajectory selected by ``cfg.trajectory``."""
    if landmarks is None:
        landmarks = sample_landmarks(cfg.n, cfg.landmark_box, cfg.landmark_seed)
    if cfg.trajectory == "circle":
        return AnalyticCircle(landmarks, cfg.g)
    initial = TrueState(
        r=np.eye(3),
        p=np.asarray(cfg.initial_position),
        v=np.asarray(cfg.initial_velocity),
        landmarks=landmarks,
        t=0.0,
    )
    return TwistTrajectory.constant(initial, cfg.twist_omega, cfg.twist_accel, cfg.g)


def analytic_truth(t: float, cfg: SimConfig) -> Tuple[TrueState, Vec3, Vec3]:
    """The analytic circle at time ``t``.

    :return: The true state, the exact angular velocity and the exact
      specific force.
    """
    if cfg.trajectory != "circle":
        raise InvalidSimConfigError(
            "analytic_truth needs the “circle” trajectory (got “{}”).".format(
                cfg.trajectory
            )
        )
    return make_trajectory(cfg).sample(t)


def synthesize_measurements(
    state: TrueState,
    omega_true: ArrayLike,
    accel_true: ArrayLike,
    noise: NoiseSpec,
    frame_index: int = 0,
) -> MeasurementFrame:
    """Measure the IMU and the relative landmark positions
    ``y_i = R^T (p - p_i)``, each corrupted by zero-mean Gaussian noise.

    The noise of a frame is drawn from a generator seeded with
    ``(noise.seed, frame_index)``.
    """
    omega = np.asarray(omega_true, dtype=float)
    accel = np.asarray(accel_true, dtype=float)
    y = (state.p - state.landmarks) @ state.r
    if not noise.silent:
        rng = np.random.default_rng([noise.seed, frame_index])
        omega = omega + rng.normal(0.0, np.sqrt(noise.var_omega), 3)
        accel = accel + rng.normal(0.0, np.sqrt(noise.var_accel), 3)
        y = y + rng.normal(0.0, np.sqrt(noise.var_landmark), y.shape)
    return MeasurementFrame(t=state.t, omega=omega, accel=accel, y=y)


def hold_landmarks(frame: MeasurementFrame, y: NDArray[np.float64]) -> MeasurementFrame:
    """Replace the landmark measurements of a frame by held values."""
    return MeasurementFrame(t=frame.t, omega=frame.omega, accel=frame.accel, y=y)
