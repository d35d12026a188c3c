"""
Rotations, the matrix Lie group SE_{3+n}(3) and its Lie algebra.

A group element bundles one rotation with 3 + n translation-like columns
(position, velocity, gravity and n landmarks):

.. code::

    M(R, x1, x2, x3, xL) = [ R          | x1 x2 x3 xL ]
                           [ 0_(3+n)x3  | I_(3+n)     ]

Elements are stored structurally (the rotation plus its columns), so
:func:`compose` and :func:`inverse` cost O(n). The dense
``(6+n) x (6+n)`` matrices returned by :func:`embedding` and
:func:`algebra_embedding` exist for checking results.

Landmark indices are 0-based in code and 1-based in user facing text.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

Vec3 = NDArray[np.float64]
"""A vector with three real components, shape ``(3,)``."""

Rotation = NDArray[np.float64]
"""A ``3 x 3`` rotation matrix."""

Matrix = NDArray[np.float64]

ORTHOGONALITY_TOLERANCE = 1e-9
SKEW_TOLERANCE = 1e-9
UNIT_TOLERANCE = 1e-9


class GroupDimensionError(ValueError):
    """Two operands do not share the same landmark count or size."""


class NotSkewSymmetricError(ValueError):
    """A matrix passed to :func:`vee` is not skew-symmetric."""


class NotUnitAxisError(ValueError):
    """A rotation axis is not a unit vector."""


class LandmarkIndexError(IndexError):
    """A landmark index is outside of ``0 .. n-1``."""


# SO(3) #######################################################################


def hat(w: ArrayLike) -> Matrix:
    """Map a vector to the skew-symmetric matrix of the cross product,
    ``hat(w) @ y == np.cross(w, y)``.

    Works on stacks of vectors too: an input of shape ``(..., 3)`` gives an
    output of shape ``(..., 3, 3)``.

    :param w: A vector (or a stack of vectors).
    """
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee(s: ArrayLike) -> Vec3:
    """Inverse of :func:`hat`.

    :raises NotSkewSymmetricError: If ``s + s.T`` exceeds the tolerance.
    """
    s = np.asarray(s, dtype=float)
    asymmetry = np.max(np.abs(s + s.T))
    if asymmetry > SKEW_TOLERANCE:
        raise NotSkewSymmetricError(
            "The matrix is not skew-symmetric (max |s + s^T| = {:.3e}).".format(
                asymmetry
            )
        )
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def rotation_from_angle_axis(theta: float, v: ArrayLike) -> Rotation:
    """The angle-axis parameterization
    ``R = I + sin(theta) [v]x + (1 - cos(theta)) [v]x^2``.

    :param theta: The rotation angle in radians.
    :param v: The rotation axis, a unit vector. Normalize it before calling.

    :raises NotUnitAxisError: If ``|v| != 1``.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise NotUnitAxisError(
            "The rotation axis {} is not a unit vector (norm {}).".format(
                v.tolist(), norm
            )
        )
    k = hat(v)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def exp_so3(w: ArrayLike) -> Rotation:
    """Exponential map of ``hat(w)`` (Rodrigues' formula).

    Accepts a stack of rotation vectors ``(..., 3)`` as well.
    """
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    b = np.where(
        small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(safe)) / (safe * safe)
    )
    k = hat(w)
    return (
        np.eye(3)
        + a[..., np.newaxis, np.newaxis] * k
        + b[..., np.newaxis, np.newaxis] * (k @ k)
    )


def left_jacobian_inverse(q: ArrayLike, w: ArrayLike) -> Vec3:
    """Apply the inverse left Jacobian of SO(3) at ``q`` to ``w``.

    If ``Q = exp_so3(q)`` obeys ``dQ/dt = hat(w) Q``, then
    ``dq/dt = left_jacobian_inverse(q, w)``.
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(q))
    if theta < 1e-4:
        c = 1.0 / 12.0 + theta * theta / 720.0
    else:
        half = 0.5 * theta
        c = (1.0 - half / np.tan(half)) / (theta * theta)
    qxw = np.cross(q, w)
    return w - 0.5 * qxw + c * np.cross(q, qxw)


def orthogonality_defect(r: ArrayLike) -> float:
    """Frobenius norm of ``R^T R - I``."""
    r = np.asarray(r, dtype=float)
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


def project_to_so3(m: ArrayLike) -> Rotation:
    """The rotation nearest to ``m`` in the Frobenius norm (polar
    projection through the SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def orthonormalize(r: ArrayLike) -> Rotation:
    """Re-project ``r`` onto SO(3) once its orthogonality defect exceeds
    1e-9, otherwise return it unchanged."""
    r = np.asarray(r, dtype=float)
    if orthogonality_defect(r) > ORTHOGONALITY_TOLERANCE:
        return project_to_so3(r)
    return r


def is_rotation(r: ArrayLike, tolerance: float = ORTHOGONALITY_TOLERANCE) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return (
        orthogonality_defect(r) <= tolerance
        and abs(np.linalg.det(r) - 1.0) <= tolerance
    )


def rotation_angle(r: ArrayLike) -> float:
    """The rotation angle in radians, ``arccos((tr(R) - 1) / 2)``."""
    cosine = (np.trace(np.asarray(r, dtype=float)) - 1.0) / 2.0
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))


def half_turn(axis: ArrayLike) -> Rotation:
    """Rotation by pi about a unit axis, ``2 u u^T - I``.

    Evaluated without trigonometric functions, so coordinate axes give an
    exactly representable matrix.
    """
    u = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOLERANCE:
        raise NotUnitAxisError(
            "The rotation axis {} is not a unit vector.".format(u.tolist())
        )
    return 2.0 * np.outer(u, u) - np.eye(3)


def lie_bracket(a: ArrayLike, b: ArrayLike) -> Matrix:
    """The matrix commutator ``[a, b] = a b - b a``.

    :raises GroupDimensionError: If the two matrices differ in shape or are
      not square.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise GroupDimensionError(
            "The Lie bracket needs two square matrices of the same size "
            "(got {} and {}).".format(a.shape, b.shape)
        )
    return a @ b - b @ a


# SE_{3+n}(3) ##################################################################


@dataclass(frozen=True)
class GroupElement:
    """An element ``M(r, x1, x2, x3, xl)`` of SE_{3+n}(3).

    For the state of the vehicle, ``x1`` is the position, ``x2`` the
    velocity, ``x3`` the gravity vector and the columns of ``xl`` are the
    landmark positions.
    """

    r: Rotation
    x1: Vec3
    x2: Vec3
    x3: Vec3
    xl: Matrix
    """A ``3 x n`` matrix, one column per landmark."""

    @property
    def n(self) -> int:
        return self.xl.shape[1]

    @property
    def columns(self) -> Matrix:
        """The upper right ``3 x (3+n)`` block ``[x1 x2 x3 xl]``."""
        return np.column_stack([self.x1, self.x2, self.x3, self.xl])

    @classmethod
    def from_columns(cls, r: Rotation, columns: Matrix) -> "GroupElement":
        return cls(
            r=r,
            x1=columns[:, 0].copy(),
            x2=columns[:, 1].copy(),
            x3=columns[:, 2].copy(),
            xl=columns[:, 3:].copy(),
        )


def identity(n: int) -> GroupElement:
    """The identity of SE_{3+n}(3)."""
    return GroupElement(
        r=np.eye(3),
        x1=np.zeros(3),
        x2=np.zeros(3),
        x3=np.zeros(3),
        xl=np.zeros((3, n)),
    )


def embedding(element: GroupElement) -> Matrix:
    """The dense ``(6+n) x (6+n)`` matrix of a group element."""
    size = 6 + element.n
    out = np.eye(size)
    out[:3, :3] = element.r
    out[:3, 3:] = element.columns
    return out


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    """The group product ``a b``.

    :raises GroupDimensionError: If the landmark counts differ.
    """
    if a.n != b.n:
        raise GroupDimensionError(
            "Cannot compose elements with n={} and n={}.".format(a.n, b.n)
        )
    return GroupElement.from_columns(a.r @ b.r, a.r @ b.columns + a.columns)


def inverse(a: GroupElement) -> GroupElement:
    """``M(R^T, -R^T x1, -R^T x2, -R^T x3, -R^T xl)``."""
    rt = a.r.T
    return GroupElement.from_columns(rt.copy(), -(rt @ a.columns))


def group_action_measure(x_inv: GroupElement, i: int) -> NDArray[np.float64]:
    """The measurement ``X^-1 r_i`` of landmark ``i``.

    The first three components equal ``R^T (p - p_i)``, the remaining
    ``3 + n`` ones equal ``r_i``.

    :param x_inv: The inverse ``X^-1`` of the state.
    :param i: The 0-based landmark index.

    :raises LandmarkIndexError: If ``i`` is not in ``0 .. n-1``.
    """
    n = x_inv.n
    if not 0 <= i < n:
        raise LandmarkIndexError(
            "Landmark {} does not exist (the map holds {} landmarks).".format(
                i + 1, n
            )
        )
    tail = _reference_tail(n, i)
    top = x_inv.columns @ tail
    return np.concatenate([top, tail])


def _reference_tail(n: int, i: int) -> NDArray[np.float64]:
    """``[-1 0 0 e_i]`` in R^{3+n}."""
    tail = np.zeros(3 + n)
    tail[0] = -1.0
    tail[3 + i] = 1.0
    return tail


# Lie algebra ##################################################################


@dataclass(frozen=True)
class TangentElement:
    """An element ``V(hat(w), xi1, xi2, xi3, xil)`` of se_{3+n}(3)."""

    w: Vec3
    xi1: Vec3
    xi2: Vec3
    xi3: Vec3
    xil: Matrix

    @property
    def n(self) -> int:
        return self.xil.shape[1]


def algebra_embedding(element: TangentElement) -> Matrix:
    """The dense ``(6+n) x (6+n)`` matrix of a Lie algebra element."""
    size = 6 + element.n
    out = np.zeros((size, size))
    out[:3, :3] = hat(element.w)
    out[:3, 3:] = np.column_stack([element.xi1, element.xi2, element.xi3, element.xil])
    return out


def group_velocity(omega: ArrayLike, accel: ArrayLike, n: int) -> TangentElement:
    """The IMU driven velocity ``V(hat(omega), 0, accel, 0, 0)``."""
    return TangentElement(
        w=np.asarray(omega, dtype=float),
        xi1=np.zeros(3),
        xi2=np.asarray(accel, dtype=float),
        xi3=np.zeros(3),
        xil=np.zeros((3, n)),
    )


# Structural matrices ##########################################################


@dataclass(frozen=True)
class StructMatrices:
    h: Matrix
    s: Matrix
    h_r: Matrix
    s_r: Matrix
    q: Matrix
    r_vectors: Matrix
    """One column ``r_i`` in R^{6+n} per landmark."""


def struct_matrices(n: int) -> StructMatrices:
    """Build ``H``, ``S``, ``H_r``, ``S_r``, ``Q`` and the ``r_i`` for ``n``
    landmarks."""
    s = np.zeros((3 + n, 3 + n))
    s[1, 0] = 1.0
    s[2, 1] = 1.0
    h = np.zeros((6 + n, 6 + n))
    h[3:, 3:] = s

    s_r = np.zeros((2 + n, 2 + n))
    s_r[0, 2:] = 1.0
    s_r[1, 0] = 1.0
    h_r = np.zeros((5 + n, 5 + n))
    h_r[3:, 3:] = s_r

    q = np.zeros((3, 6 + n))
    q[:, :3] = np.eye(3)

    r_vectors = np.zeros((6 + n, n))
    for i in range(n):
        r_vectors[3:, i] = _reference_tail(n, i)
    return StructMatrices(h=h, s=s, h_r=h_r, s_r=s_r, q=q, r_vectors=r_vectors)


def reduced_embedding(
    r: Rotation, x1: Vec3, x2: Vec3, xl: Matrix
) -> Matrix:
    """The dense matrix ``M_r(R, x1, x2, xl)`` of the ego-centric group
    SE_{2+n}(3)."""
    n = xl.shape[1]
    out = np.eye(5 + n)
    out[:3, :3] = r
    out[:3, 3:] = np.column_stack([x1, x2, xl])
    return out


def reduced_algebra_embedding(
    w: Vec3, xi1: Vec3, xi2: Vec3, xil: Matrix
) -> Matrix:
    """The dense matrix ``V_r(hat(w), xi1, xi2, xil)``."""
    n = xil.shape[1]
    out = np.zeros((5 + n, 5 + n))
    out[:3, :3] = hat(w)
    out[:3, 3:] = np.column_stack([xi1, xi2, xil])
    return out


def split_rotation_vector(w: ArrayLike) -> Tuple[float, Vec3]:
    """Angle and unit axis of a rotation vector. A zero vector gives the
    x axis."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta == 0.0:
        return 0.0, np.array([1.0, 0.0, 0.0])
    return theta, w / theta
