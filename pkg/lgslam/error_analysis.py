"""
Estimation errors and the quantities used to verify the stability of the
observer.

The left-invariant error ``E = X X_hat^-1`` has the components

.. code::

    R~ = R R_hat^T     p~ = p - R~ p_hat     v~ = v - R~ v_hat
    g~ = g - R~ g_hat  p~_i = p_i - R~ p_hat_i

The ego-centric errors ``eps_i = p~ - p~_i`` together with ``v~`` and ``g~``
form the vector ``x`` that evolves linearly. The attitude is judged by the
reduced error ``g_breve = R~^T g`` which lives on the sphere of radius
``|g|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .dynamics_sim import TrueState, truth_group_element
from .gain_synthesis import LtiSystem, closed_loop_matrix
from .lie_core import (
    GroupElement,
    Rotation,
    Vec3,
    compose,
    exp_so3,
    hat,
    inverse,
    project_to_so3,
    rotation_angle,
)
from .observer_core import ObserverState, group_element

logger = logging.getLogger(__name__)

TRANSLATION_ZERO_TOLERANCE = 1e-9


class NoisyRunError(ValueError):
    """The linear reference only holds for noiseless runs."""


class NonZeroTranslationError(ValueError):
    """The Lyapunov rate check needs the translation error to vanish."""


class EmptyWindowError(ValueError):
    """The alignment window holds no sample."""


# Types ########################################################################


@dataclass(frozen=True)
class ErrorVector:
    eps: NDArray[np.float64]
    """Shape ``(n, 3)``, ``eps[i] = p~ - p~_i``."""
    v_tilde: Vec3
    g_tilde: Vec3
    p_tilde: Vec3

    @property
    def x(self) -> NDArray[np.float64]:
        """``[eps_1, .., eps_n, v~, g~]`` flattened to ``3 (n + 2)``
        components."""
        return np.concatenate([self.eps.ravel(), self.v_tilde, self.g_tilde])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.x))


@dataclass(frozen=True)
class AttitudeError:
    r_tilde: Rotation
    g_breve: Vec3


@dataclass(frozen=True)
class AlignmentTransform:
    """The constant transformation relating the observer frame to the
    inertial frame."""

    r_star: Rotation
    p_star: Vec3

    @classmethod
    def identity(cls) -> "AlignmentTransform":
        return cls(r_star=np.eye(3), p_star=np.zeros(3))

    def position(self, p_hat: ArrayLike) -> NDArray[np.float64]:
        """Aligned positions; works row-wise on ``(n, 3)`` arrays."""
        return np.asarray(p_hat) @ self.r_star.T + self.p_star

    def vector(self, v_hat: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(v_hat) @ self.r_star.T

    def rotation(self, r_hat: Rotation) -> Rotation:
        return self.r_star @ r_hat


@dataclass(frozen=True)
class MetricRecord:
    t: float
    err_rot_deg: float
    err_pos_m: float
    err_vel_mps: float
    err_grav_mps2: float
    landmark_rmse_m: float
    lyap1: float
    norm_x: float


METRIC_COLUMNS = (
    "t",
    "err_rot_deg",
    "err_pos_m",
    "err_vel_mps",
    "err_grav_mps2",
    "landmark_rmse_m",
    "lyap1",
    "norm_x",
)


@dataclass(frozen=True)
class LyapunovRateReport:
    max_deviation: float
    tolerance: float
    monotone: bool

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance and self.monotone


@dataclass(frozen=True)
class LinearizationReport:
    jacobian: NDArray[np.float64]
    expected: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    """Sorted in descending order."""
    relative_deviation: float


# Errors #######################################################################


def error_group(
    truth: TrueState, g: ArrayLike, est: ObserverState
) -> GroupElement:
    """``E = X X_hat^-1``."""
    if truth.n != est.n:
        raise ValueError(
            "The truth holds {} landmarks, the estimate {}.".format(truth.n, est.n)
        )
    return compose(truth_group_element(truth, g), inverse(group_element(est)))


def _components(
    truth: TrueState, g: ArrayLike, est: ObserverState
) -> Tuple[Rotation, Vec3, Vec3, Vec3, NDArray[np.float64]]:
    g = np.asarray(g, dtype=float)
    r_tilde = truth.r @ est.r_hat.T
    p_tilde = truth.p - r_tilde @ est.p_hat
    v_tilde = truth.v - r_tilde @ est.v_hat
    g_tilde = g - r_tilde @ est.g_hat
    landmarks_tilde = truth.landmarks - est.landmarks_hat @ r_tilde.T
    return r_tilde, p_tilde, v_tilde, g_tilde, landmarks_tilde


def error_vector(truth: TrueState, g: ArrayLike, est: ObserverState) -> ErrorVector:
    _, p_tilde, v_tilde, g_tilde, landmarks_tilde = _components(truth, g, est)
    return ErrorVector(
        eps=p_tilde - landmarks_tilde,
        v_tilde=v_tilde,
        g_tilde=g_tilde,
        p_tilde=p_tilde,
    )


def reduced_error(
    truth: TrueState, g: ArrayLike, est: ObserverState
) -> Tuple[Rotation, ErrorVector]:
    """The ego-centric error ``E_r = M_r(R~, v~, g~, 1 p~ - p~_L)`` as its
    rotation and its translational columns."""
    r_tilde, *_ = _components(truth, g, est)
    return r_tilde, error_vector(truth, g, est)


def attitude_error(
    truth: TrueState, est: ObserverState, g: ArrayLike
) -> AttitudeError:
    r_tilde = truth.r @ est.r_hat.T
    return AttitudeError(r_tilde=r_tilde, g_breve=r_tilde.T @ np.asarray(g, float))


def lyapunov_values(att: AttitudeError, g: ArrayLike) -> Tuple[float, float]:
    """``L1 = |g - g_breve|^2 / 2`` and ``L2 = |g + g_breve|^2 / 2``."""
    g = np.asarray(g, dtype=float)
    return (
        0.5 * float(np.sum((g - att.g_breve) ** 2)),
        0.5 * float(np.sum((g + att.g_breve) ** 2)),
    )


def lyapunov1_rate(g_breve: ArrayLike, g: ArrayLike, k_r: float) -> float:
    """``dL1/dt = -k_R |g x g_breve|^2`` for a vanishing translation
    error."""
    return -k_r * float(np.sum(np.cross(g, g_breve) ** 2))


def lyapunov2_rate(g_breve: ArrayLike, g: ArrayLike, k_r: float) -> float:
    """``dL2/dt = +k_R |g x g_breve|^2``. The antipodal equilibrium
    repels."""
    return -lyapunov1_rate(g_breve, g, k_r)


# Reduced attitude dynamics ####################################################


def pi_coupling(
    r_tilde: Rotation, g_tilde: ArrayLike, g: ArrayLike, k_r: float
) -> Vec3:
    """The translation error feeding into ``sigma``,
    ``Pi x = k_R g x (R~^T g~)``."""
    return k_r * np.cross(np.asarray(g, dtype=float), r_tilde.T @ np.asarray(g_tilde))


def pi_frobenius_norm(g: ArrayLike, k_r: float) -> float:
    """``|Pi|_F = sqrt(2) k_R |g|``."""
    return float(np.sqrt(2.0) * k_r * np.linalg.norm(g))


def pi_coupling_bound(
    g_breve: ArrayLike, g_tilde: ArrayLike, g: ArrayLike, k_r: float
) -> float:
    """Upper bound of ``|g_breve x Pi x|``, the part of the attitude rate
    driven by the translation error."""
    return (
        float(np.linalg.norm(g_breve))
        * pi_frobenius_norm(g, k_r)
        * float(np.linalg.norm(g_tilde))
    )


def reduced_attitude_rhs(
    g_breve: ArrayLike,
    g: ArrayLike,
    k_r: float,
    pi_x: Optional[ArrayLike] = None,
) -> Vec3:
    """``d g_breve / dt = k_R (g_breve x g) x g_breve - g_breve x Pi x``."""
    g_breve = np.asarray(g_breve, dtype=float)
    g = np.asarray(g, dtype=float)
    rate = k_r * np.cross(np.cross(g_breve, g), g_breve)
    if pi_x is not None:
        rate = rate - np.cross(g_breve, np.asarray(pi_x, dtype=float))
    return rate


def integrate_reduced_attitude(
    g_breve0: ArrayLike, g: ArrayLike, k_r: float, dt: float, duration: float
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """RK4 on the reduced attitude with ``x = 0``. Every step is rescaled
    onto the sphere of radius ``|g|``.

    :return: The times and the ``(N, 3)`` trajectory.
    """
    g = np.asarray(g, dtype=float)
    radius = float(np.linalg.norm(g))
    steps = int(round(duration / dt))
    out = np.empty((steps + 1, 3))
    out[0] = np.asarray(g_breve0, dtype=float)
    current = out[0]
    for k in range(steps):
        k1 = reduced_attitude_rhs(current, g, k_r)
        k2 = reduced_attitude_rhs(current + 0.5 * dt * k1, g, k_r)
        k3 = reduced_attitude_rhs(current + 0.5 * dt * k2, g, k_r)
        k4 = reduced_attitude_rhs(current + dt * k3, g, k_r)
        current = current + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        current = current * (radius / np.linalg.norm(current))
        out[k + 1] = current
    return np.arange(steps + 1) * dt, out


@dataclass(frozen=True)
class CascadeResult:
    times: NDArray[np.float64]
    r_tilde: Rotation
    """The final rotation error."""
    x: NDArray[np.float64]
    """The final stacked translation error."""
    tilt_deg: NDArray[np.float64]
    """The angle between ``g_breve`` and ``g`` at every step."""
    norm_x: NDArray[np.float64]


def simulate_error_cascade(
    r_tilde0: Rotation,
    x0: ArrayLike,
    sys: LtiSystem,
    l: ArrayLike,
    g: ArrayLike,
    k_r: float,
    dt: float,
    duration: float,
) -> CascadeResult:
    """Integrate the error dynamics directly: ``x`` advances with the exact
    transition matrix and the rotation error with
    ``R~ <- R~ exp(-dt [sigma])``, ``sigma`` held over the step."""
    g = np.asarray(g, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    transition = scipy.linalg.expm(closed_loop_matrix(sys, l) * dt)
    steps = int(round(duration / dt))
    r_tilde = np.asarray(r_tilde0, dtype=float)
    tilt = np.empty(steps + 1)
    norms = np.empty(steps + 1)
    for k in range(steps + 1):
        g_breve = r_tilde.T @ g
        tilt[k] = np.degrees(vector_angle(g_breve, g))
        norms[k] = np.linalg.norm(x)
        if k == steps:
            break
        g_tilde = x[-3:]
        g_hat = r_tilde.T @ (g - g_tilde)
        sigma = k_r * np.cross(g_hat, g)
        r_tilde = r_tilde @ exp_so3(-dt * sigma)
        x = transition @ x
    return CascadeResult(
        times=np.arange(steps + 1) * dt,
        r_tilde=r_tilde,
        x=x,
        tilt_deg=tilt,
        norm_x=norms,
    )


def vector_angle(a: ArrayLike, b: ArrayLike) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cosine = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))


# Verification #################################################################


def lti_reference(
    times: ArrayLike, x0: ArrayLike, sys: LtiSystem, l: ArrayLike
) -> NDArray[np.float64]:
    """``expm(((A - L C) kron I_3) t_k) x(0)`` for every time (relative to
    the first one)."""
    times = np.asarray(times, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    matrix = closed_loop_matrix(sys, l)
    return np.array(
        [scipy.linalg.expm(matrix * (t - times[0])) @ x0 for t in times]
    )


def lti_residual(
    times: ArrayLike,
    xs: ArrayLike,
    sys: LtiSystem,
    l: ArrayLike,
    noiseless: bool = True,
) -> float:
    """The largest deviation of logged errors from the linear flow,
    relative to ``max(1, |x(0)|)``.

    :raises NoisyRunError: If the run was noisy.
    """
    if not noiseless:
        raise NoisyRunError(
            "The linear reference only applies to noiseless runs."
        )
    xs = np.asarray(xs, dtype=float)
    reference = lti_reference(times, xs[0], sys, l)
    scale = max(1.0, float(np.linalg.norm(xs[0])))
    return float(np.max(np.linalg.norm(xs - reference, axis=1)) / scale)


def lyapunov_rate_tolerance(dt: float, g: ArrayLike, k_r: float) -> float:
    """``max(1e-6, C dt^2)`` with ``C = k_R^3 |g|^8``, the third derivative
    bound of ``L1``."""
    gg = float(np.dot(g, g))
    return max(1e-6, k_r**3 * gg**4 * dt * dt)


def lyapunov_rate_check(
    times: ArrayLike,
    g_breve: ArrayLike,
    g: ArrayLike,
    k_r: float,
    x_norms: Optional[ArrayLike] = None,
) -> LyapunovRateReport:
    """Compare central differences of ``L1`` with ``-k_R |g x g_breve|^2``.

    :param times: Uniformly spaced sample times.
    :param g_breve: The ``(N, 3)`` reduced attitude error.
    :param x_norms: The norm of the translation error per sample.

    :raises NonZeroTranslationError: If any ``|x|`` exceeds 1e-9.
    """
    times = np.asarray(times, dtype=float)
    g_breve = np.asarray(g_breve, dtype=float)
    g = np.asarray(g, dtype=float)
    if x_norms is not None:
        largest = float(np.max(np.asarray(x_norms, dtype=float)))
        if largest > TRANSLATION_ZERO_TOLERANCE:
            raise NonZeroTranslationError(
                "The translation error reaches {:.3e}; the rate identity "
                "needs x = 0.".format(largest)
            )
    lyap = 0.5 * np.sum((g - g_breve) ** 2, axis=1)
    dt = float(np.median(np.diff(times)))
    numeric = (lyap[2:] - lyap[:-2]) / (times[2:] - times[:-2])
    analytic = -k_r * np.sum(np.cross(g, g_breve[1:-1]) ** 2, axis=1)
    deviation = float(np.max(np.abs(numeric - analytic), initial=0.0))
    slack = 1e-9 * max(1.0, float(np.max(lyap)))
    monotone = bool(np.all(np.diff(lyap) <= slack))
    return LyapunovRateReport(
        max_deviation=deviation,
        tolerance=lyapunov_rate_tolerance(dt, g, k_r),
        monotone=monotone,
    )


def linearization_check(
    g: ArrayLike, k_r: float, delta: Optional[float] = None
) -> LinearizationReport:
    """Central difference Jacobian of the reduced attitude dynamics at the
    antipodal point ``g_breve = -g``, compared with
    ``k_R (|g|^2 I - g g^T)``.

    The differences are taken along two tangent directions ``hat(zeta) g``
    of the sphere and along its normal ``g``.
    """
    g = np.asarray(g, dtype=float)
    if delta is None:
        delta = 1e-3 * float(np.linalg.norm(g))
    origin = -g
    normal = g / np.linalg.norm(g)
    tangent = max(
        (tangent_perturbation(axis, g) for axis in np.eye(3)), key=np.linalg.norm
    )
    tangent = tangent / np.linalg.norm(tangent)
    basis = np.column_stack([tangent, np.cross(normal, tangent), normal])
    rates = np.empty((3, 3))
    for j, direction in enumerate(basis.T):
        forward = reduced_attitude_rhs(origin + delta * direction, g, k_r)
        backward = reduced_attitude_rhs(origin - delta * direction, g, k_r)
        rates[:, j] = (forward - backward) / (2.0 * delta)
    jacobian = rates @ basis.T
    expected = k_r * (np.dot(g, g) * np.eye(3) - np.outer(g, g))
    deviation = float(np.linalg.norm(jacobian - expected) / np.linalg.norm(expected))
    eigenvalues = np.sort(np.real(np.linalg.eigvals(jacobian)))[::-1]
    return LinearizationReport(
        jacobian=jacobian,
        expected=expected,
        eigenvalues=eigenvalues,
        relative_deviation=deviation,
    )


def tangent_perturbation(zeta: ArrayLike, g: ArrayLike) -> Vec3:
    """A perturbation ``hat(zeta) g`` tangent to the sphere at ``-g``."""
    return hat(zeta) @ np.asarray(g, dtype=float)


# Alignment and metrics ########################################################


def alignment_from_errors(
    r_tildes: Sequence[Rotation], p_tildes: Sequence[Vec3], window: float = 0.1
) -> AlignmentTransform:
    """Average the final ``window`` fraction of the rotation and position
    errors. The rotations are averaged by their chordal mean."""
    count = len(r_tildes)
    size = int(np.ceil(window * count)) if window > 0 else 0
    if count == 0 or size < 1:
        raise EmptyWindowError(
            "No sample falls into the final {:.0%} of a run with {} samples.".format(
                window, count
            )
        )
    r_mean = np.mean(np.asarray(r_tildes)[-size:], axis=0)
    p_mean = np.mean(np.asarray(p_tildes)[-size:], axis=0)
    return AlignmentTransform(r_star=project_to_so3(r_mean), p_star=p_mean)


def alignment_transform(
    truths: Sequence[TrueState],
    estimates: Sequence[ObserverState],
    g: ArrayLike,
    window: float = 0.1,
) -> AlignmentTransform:
    """``(R*, p*)`` estimated from paired logs of truth and estimate."""
    r_tildes: List[Rotation] = []
    p_tildes: List[Vec3] = []
    for truth, est in zip(truths, estimates):
        r_tilde, p_tilde, *_ = _components(truth, g, est)
        r_tildes.append(r_tilde)
        p_tildes.append(p_tilde)
    return alignment_from_errors(r_tildes, p_tildes, window)


def metrics(
    truth: TrueState,
    est: ObserverState,
    align: AlignmentTransform,
    g: ArrayLike,
) -> MetricRecord:
    """Aligned errors of one sample, plus ``L1`` and ``|x|`` which need no
    alignment."""
    g = np.asarray(g, dtype=float)
    r_aligned = align.rotation(est.r_hat)
    landmark_errors = truth.landmarks - align.position(est.landmarks_hat)
    lyap1, _ = lyapunov_values(attitude_error(truth, est, g), g)
    return MetricRecord(
        t=truth.t,
        err_rot_deg=float(np.degrees(rotation_angle(truth.r @ r_aligned.T))),
        err_pos_m=float(np.linalg.norm(truth.p - align.position(est.p_hat))),
        err_vel_mps=float(np.linalg.norm(truth.v - align.vector(est.v_hat))),
        err_grav_mps2=float(np.linalg.norm(g - align.vector(est.g_hat))),
        landmark_rmse_m=float(np.sqrt(np.mean(np.sum(landmark_errors**2, axis=1)))),
        lyap1=lyap1,
        norm_x=error_vector(truth, g, est).norm,
    )


def iss_statistic(values: ArrayLike, settle_fraction: float = 0.5) -> float:
    """Root mean square of the final ``settle_fraction`` of a signal, the
    steady-state size of a noisy error."""
    values = np.asarray(values, dtype=float)
    size = int(np.ceil(settle_fraction * len(values)))
    if size < 1:
        raise EmptyWindowError("The settled part of the signal is empty.")
    return float(np.sqrt(np.mean(values[-size:] ** 2)))
