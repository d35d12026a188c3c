"""
The SLAM observer on SE_{3+n}(3), written in explicit form:

.. code::

    dR/dt   = R (omega + R^T sigma)x
    dp/dt   = sigma x p   + v + sum_j kp_j z_j
    dv/dt   = sigma x v   + g + R a + sum_j kv_j z_j
    dg/dt   = sigma x g                + sum_j kg_j z_j
    dp_i/dt = sigma x p_i              + sum_j gamma_ij z_j

with the innovation ``z_j = R y_j - p + p_j`` and ``sigma = k_R (g_hat x g)``
(hats dropped on the estimates).
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse
from numpy.typing import ArrayLike, NDArray

from .dynamics_sim import (
    MeasurementFrame,
    TrueState,
    attitude_increments,
    truth_group_element,
)
from .lie_core import (
    GroupElement,
    Rotation,
    TangentElement,
    Vec3,
    compose,
    exp_so3,
    hat,
    inverse,
    left_jacobian_inverse,
    orthonormalize,
    rotation_from_angle_axis,
)

logger = logging.getLogger(__name__)

GAIN_CONSISTENCY_TOLERANCE = 1e-10

SPARSE_MIN_LANDMARKS = 50
"""From this size on, a gain matrix with few nonzeros is applied as a
sparse matrix."""


class DivergenceError(ArithmeticError):
    """The observer state or its inputs are no longer finite."""

    def __init__(self, msg: str, t: float = float("nan")):
        super().__init__(msg)
        self.t = t


class MeasurementDimensionError(ValueError):
    """A frame does not hold one measurement per estimated landmark."""


class GainConsistencyError(ValueError):
    """The decomposed gains do not reproduce the designed matrix ``L``."""


# Types ########################################################################


@dataclass(frozen=True)
class ObserverState:
    r_hat: Rotation
    p_hat: Vec3
    v_hat: Vec3
    g_hat: Vec3
    landmarks_hat: NDArray[np.float64]
    """Shape ``(n, 3)``."""
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.landmarks_hat.shape[0]

    def stacked(self) -> NDArray[np.float64]:
        """The translational states as rows ``[p, v, g, p_1 .. p_n]``."""
        return np.vstack([self.p_hat, self.v_hat, self.g_hat, self.landmarks_hat])

    @classmethod
    def from_stacked(
        cls, r_hat: Rotation, rows: NDArray[np.float64], t: float
    ) -> "ObserverState":
        return cls(
            r_hat=r_hat,
            p_hat=rows[0].copy(),
            v_hat=rows[1].copy(),
            g_hat=rows[2].copy(),
            landmarks_hat=rows[3:].copy(),
            t=t,
        )

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.r_hat)) and np.all(np.isfinite(self.stacked()))
        )


@dataclass(frozen=True)
class ObserverGains:
    """The constant observer gains.

    ``l`` is the designed ``(n+2) x n`` output injection gain the other
    gains were derived from. Its first ``n`` rows must equal
    ``1 kp^T - gamma``.
    """

    k_r: float
    k_p: NDArray[np.float64]
    k_v: NDArray[np.float64]
    k_g: NDArray[np.float64]
    gamma: NDArray[np.float64]
    l: NDArray[np.float64]
    injection: Union[NDArray[np.float64], scipy.sparse.csr_matrix] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if not self.k_r > 0:
            raise ValueError("k_R must be positive (got {}).".format(self.k_r))
        n = len(self.k_p)
        for name, shape in (
            ("k_v", (n,)),
            ("k_g", (n,)),
            ("gamma", (n, n)),
            ("l", (n + 2, n)),
        ):
            if np.shape(getattr(self, name)) != shape:
                raise ValueError(
                    "The gain “{}” must have the shape {} (got {}).".format(
                        name, shape, np.shape(getattr(self, name))
                    )
                )
        deviation = np.max(
            np.abs(np.outer(np.ones(n), self.k_p) - self.gamma - self.l[:n]),
            initial=0.0,
        )
        if deviation > GAIN_CONSISTENCY_TOLERANCE:
            raise GainConsistencyError(
                "The gains do not reproduce L (max deviation {:.3e}).".format(
                    deviation
                )
            )
        injection = np.vstack([self.k_p, self.k_v, self.k_g, self.gamma])
        if n >= SPARSE_MIN_LANDMARKS and np.count_nonzero(self.gamma) <= 4 * n:
            injection = scipy.sparse.csr_matrix(injection)
        object.__setattr__(self, "injection", injection)

    @property
    def n(self) -> int:
        return len(self.k_p)

    @property
    def digest(self) -> str:
        """A short hash of ``l``, ``k_R`` and ``k_p``."""
        data = hashlib.sha1(np.ascontiguousarray(self.l, dtype=float).tobytes())
        data.update(np.array([self.k_r], dtype=float).tobytes())
        data.update(np.ascontiguousarray(self.k_p, dtype=float).tobytes())
        return data.hexdigest()[:12]


@dataclass(frozen=True)
class Innovation:
    z: NDArray[np.float64]
    """Shape ``(n, 3)``, ``z[j] = R_hat y_j - p_hat + p_hat_j``."""
    sigma: Vec3


@dataclass(frozen=True)
class ObserverDerivative:
    r_dot: NDArray[np.float64]
    p_dot: Vec3
    v_dot: Vec3
    g_dot: Vec3
    landmarks_dot: NDArray[np.float64]


# Construction #################################################################


def initial_state_from_config(
    n: int, attitude_angle: float, attitude_axis: ArrayLike, t: float = 0.0
) -> ObserverState:
    """A rotated attitude estimate with every translational state at zero.

    :param attitude_angle: The angle in radians.
    :param attitude_axis: The axis, normalized here.
    """
    axis = np.asarray(attitude_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return ObserverState(
        r_hat=rotation_from_angle_axis(attitude_angle, axis),
        p_hat=np.zeros(3),
        v_hat=np.zeros(3),
        g_hat=np.zeros(3),
        landmarks_hat=np.zeros((n, 3)),
        t=t,
    )


def group_element(state: ObserverState) -> GroupElement:
    """``X_hat = M(R_hat, p_hat, v_hat, g_hat, p_hat_L)``."""
    return GroupElement(
        r=state.r_hat,
        x1=state.p_hat,
        x2=state.v_hat,
        x3=state.g_hat,
        xl=state.landmarks_hat.T.copy(),
    )


def state_from_group(element: GroupElement, t: float = 0.0) -> ObserverState:
    return ObserverState(
        r_hat=element.r,
        p_hat=element.x1,
        v_hat=element.x2,
        g_hat=element.x3,
        landmarks_hat=element.xl.T.copy(),
        t=t,
    )


def state_from_error(
    truth: TrueState, g: ArrayLike, error: GroupElement
) -> ObserverState:
    """The estimate ``X_hat = E^-1 X`` that has the error ``E`` against the
    true state ``X``."""
    return state_from_group(
        compose(inverse(error), truth_group_element(truth, g)), t=truth.t
    )


# Observer equations ###########################################################


def _check_frame(state: ObserverState, frame: MeasurementFrame) -> None:
    if frame.y.shape != state.landmarks_hat.shape:
        raise MeasurementDimensionError(
            "The frame holds {} landmark measurements, the observer "
            "estimates {} landmarks.".format(len(frame.y), state.n)
        )


def innovation(
    state: ObserverState,
    frame: MeasurementFrame,
    gains: ObserverGains,
    g_known: ArrayLike,
) -> Innovation:
    """:raises MeasurementDimensionError: If the landmark counts differ."""
    _check_frame(state, frame)
    z = frame.y @ state.r_hat.T - state.p_hat + state.landmarks_hat
    sigma = gains.k_r * np.cross(state.g_hat, np.asarray(g_known, dtype=float))
    return Innovation(z=z, sigma=sigma)


def observer_derivative(
    state: ObserverState,
    frame: MeasurementFrame,
    gains: ObserverGains,
    g_known: ArrayLike,
) -> ObserverDerivative:
    inno = innovation(state, frame, gains, g_known)
    sigma = inno.sigma
    correction = gains.injection @ inno.z
    return ObserverDerivative(
        r_dot=state.r_hat @ hat(frame.omega + state.r_hat.T @ sigma),
        p_dot=np.cross(sigma, state.p_hat) + state.v_hat + correction[0],
        v_dot=np.cross(sigma, state.v_hat)
        + state.g_hat
        + state.r_hat @ frame.accel
        + correction[1],
        g_dot=np.cross(sigma, state.g_hat) + correction[2],
        landmarks_dot=np.cross(sigma, state.landmarks_hat) + correction[3:],
    )


def innovation_term(
    state: ObserverState,
    frame: MeasurementFrame,
    gains: ObserverGains,
    g_known: ArrayLike,
) -> TangentElement:
    """The correction ``Delta`` of the group form
    ``dX/dt = [X, H] + X V + Delta X``."""
    inno = innovation(state, frame, gains, g_known)
    z = inno.z.T
    return TangentElement(
        w=inno.sigma,
        xi1=z @ gains.k_p,
        xi2=z @ gains.k_v,
        xi3=z @ gains.k_g,
        xil=z @ gains.gamma.T,
    )


# Time discretization ##########################################################


def _require_finite(values: Tuple[NDArray[np.float64], ...], what: str, t: float):
    for value in values:
        if not np.all(np.isfinite(value)):
            raise DivergenceError(
                "Non-finite {} at t={:.6f} s.".format(what, t), t=t
            )


def step(
    state: ObserverState,
    frame: MeasurementFrame,
    gains: ObserverGains,
    g_known: ArrayLike,
    dt: float,
    frame_mid: Optional[MeasurementFrame] = None,
    frame_end: Optional[MeasurementFrame] = None,
) -> ObserverState:
    """Advance the observer by ``dt``.

    The estimate is split as ``R_hat = Q R_bar`` with the rotation ``Q``
    driven by ``sigma`` (``dQ/dt = [sigma]x Q``, ``Q(0) = I``) and
    ``R_bar`` driven by the measured angular velocity. In the rotated
    coordinates ``bar = Q^T state`` the translational equations lose their
    ``sigma x`` terms and are linear. RK4 integrates them jointly with
    ``q = log(Q)``; the result is rotated back with ``Q``.

    :param frame: The measurements at the start of the step.
    :param frame_mid: The measurements at ``t + dt / 2``. Missing frames
      repeat the previous one.
    :param frame_end: The measurements at ``t + dt``.

    :raises DivergenceError: If the inputs or the result are not finite.
    """
    if dt <= 0:
        raise ValueError("The step size must be positive (got {}).".format(dt))
    mid = frame_mid if frame_mid is not None else frame
    end = frame_end if frame_end is not None else mid
    frames = (frame, mid, mid, end)
    for f in (frame, mid, end):
        _check_frame(state, f)
        _require_finite((f.omega, f.accel, f.y), "measurements", f.t)
    _require_finite((state.r_hat, state.stacked()), "observer state", state.t)

    g = np.asarray(g_known, dtype=float)
    increment_mid, increment_end = attitude_increments(
        np.stack([frame.omega, mid.omega, end.omega]), dt
    )
    r_mid = state.r_hat @ increment_mid
    r_end = state.r_hat @ increment_end
    r_bar = (state.r_hat, r_mid, r_mid, r_end)

    def rates(
        q: Vec3, bar: NDArray[np.float64], stage: int
    ) -> Tuple[Vec3, NDArray[np.float64]]:
        f = frames[stage]
        z = f.y @ r_bar[stage].T - bar[0] + bar[3:]
        d = np.asarray(gains.injection @ z)
        d[0] += bar[1]
        d[1] += bar[2] + r_bar[stage] @ f.accel
        sigma = gains.k_r * np.cross(exp_so3(q) @ bar[2], g)
        return left_jacobian_inverse(q, sigma), d

    h = dt
    q0 = np.zeros(3)
    bar0 = state.stacked()
    k1q, k1b = rates(q0, bar0, 0)
    k2q, k2b = rates(q0 + 0.5 * h * k1q, bar0 + 0.5 * h * k1b, 1)
    k3q, k3b = rates(q0 + 0.5 * h * k2q, bar0 + 0.5 * h * k2b, 2)
    k4q, k4b = rates(q0 + h * k3q, bar0 + h * k3b, 3)
    q1 = q0 + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    bar1 = bar0 + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)

    rotation = exp_so3(q1)
    r_hat = orthonormalize(rotation @ r_end)
    rows = bar1 @ rotation.T
    t = state.t + dt
    _require_finite((r_hat, rows), "observer state", t)
    return ObserverState.from_stacked(r_hat, rows, t)
