"""
Gain design for the observer.

The ego-centric translation errors ``x = [eps_1 .. eps_n, v, g]`` of the
observer obey the linear time invariant system

.. code::

    dx/dt = ((A - L C) kron I_3) x

    A = [[0_nxn, B_n], [0_2xn, D]]    B_n = [1 | 0]    D = [[0, 1], [0, 0]]
    C = [I_n | 0_nx2]

The pair ``(A, C)`` is observable for every ``n >= 1``, so the spectrum of
``A - L C`` can be placed freely. The rows of ``L`` determine the observer
gains ``K_v``, ``K_g`` and, up to the choice of ``K_p``, the landmark gain
``Gamma``.
"""

from __future__ import annotations

import hashlib
import logging
import os
from collections import Counter
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment

from .observer_core import ObserverGains

logger = logging.getLogger(__name__)

Eigenvalues = NDArray[np.complex128]

KpMode = Literal["zeros", "ones", "custom"]

CONDITION_LIMIT = 1e8
MAX_RETRIES = 20
MATCH_TOLERANCE = 1e-6


class LtiDimensionError(ValueError):
    """The landmark count must be at least one."""


class EigenvalueRequestError(ValueError):
    """The requested eigenvalues cannot be assigned."""


class PolePlacementError(ArithmeticError):
    """No well conditioned eigenvector basis was found."""


class GainFileError(ValueError):
    """A gain file cannot be read."""


@dataclass(frozen=True)
class LtiSystem:
    n: int
    a: NDArray[np.float64]
    c: NDArray[np.float64]
    b_n: NDArray[np.float64]
    d: NDArray[np.float64]

    @property
    def order(self) -> int:
        return self.n + 2


@dataclass(frozen=True)
class GainDesign:
    l: NDArray[np.float64]
    """The ``(n+2) x n`` output injection gain."""
    requested_eigs: Eigenvalues
    achieved_eigs: Eigenvalues
    seed: int = 0
    condition: float = float("nan")
    """Condition number of the eigenvector basis used for the design."""

    @property
    def n(self) -> int:
        return self.l.shape[1]

    @property
    def digest(self) -> str:
        """A short fingerprint of ``L``, logged with every run."""
        return hashlib.sha1(np.ascontiguousarray(self.l).tobytes()).hexdigest()[:12]


def build_lti(n: int) -> LtiSystem:
    """The pair ``(A, C)`` of the translation error dynamics."""
    if n < 1:
        raise LtiDimensionError(
            "The LTI system needs at least one landmark (got n={}).".format(n)
        )
    b_n = np.zeros((n, 2))
    b_n[:, 0] = 1.0
    d = np.array([[0.0, 1.0], [0.0, 0.0]])
    a = np.zeros((n + 2, n + 2))
    a[:n, n:] = b_n
    a[n:, n:] = d
    c = np.zeros((n, n + 2))
    c[:, :n] = np.eye(n)
    return LtiSystem(n=n, a=a, c=c, b_n=b_n, d=d)


def observability_matrix(sys: LtiSystem) -> NDArray[np.float64]:
    """``O = [C; C A; ...; C A^(n+1)]``."""
    blocks = []
    block = sys.c
    for _ in range(sys.order):
        blocks.append(block)
        block = block @ sys.a
    return np.vstack(blocks)


def observability_rank(sys: LtiSystem) -> int:
    return int(np.linalg.matrix_rank(observability_matrix(sys)))


def default_eigenvalues(n: int) -> Eigenvalues:
    """``-1, -2, -3, -4`` repeated to ``n + 2`` values."""
    pattern = [-1.0, -2.0, -3.0, -4.0]
    return np.array([pattern[i % 4] for i in range(n + 2)], dtype=complex)


def closed_loop_matrix(sys: LtiSystem, l: ArrayLike) -> NDArray[np.float64]:
    """``(A - L C) kron I_3``, the system matrix of the stacked error."""
    return np.kron(sys.a - np.asarray(l) @ sys.c, np.eye(3))


def characteristic_polynomial(sys: LtiSystem, l: ArrayLike) -> NDArray[np.float64]:
    """Coefficients of ``det(s I - (A - L C))``, highest power first."""
    return np.real(np.poly(sys.a - np.asarray(l) @ sys.c))


def eigenvalue_match_distance(a: ArrayLike, b: ArrayLike) -> float:
    """The largest distance of an optimal pairing of two equally sized
    multisets of complex numbers."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(
            "Cannot match {} against {} eigenvalues.".format(len(a), len(b))
        )
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, np.newaxis] - b[np.newaxis, :])
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def _check_request(sys: LtiSystem, eigs: Eigenvalues) -> None:
    if len(eigs) != sys.order:
        raise EigenvalueRequestError(
            "Expected n+2 = {} eigenvalues, got {}.".format(sys.order, len(eigs))
        )
    if np.any(eigs.real >= 0):
        raise EigenvalueRequestError(
            "Every eigenvalue needs a negative real part (got {}).".format(
                ", ".join(str(e) for e in eigs[eigs.real >= 0])
            )
        )
    counts = Counter(np.round(eigs, 12))
    for value, count in counts.items():
        if count > sys.n:
            raise EigenvalueRequestError(
                "The eigenvalue {} is requested {} times, at most n = {} "
                "repetitions can be assigned.".format(value, count, sys.n)
            )
        if value.imag != 0 and counts.get(np.conj(value), 0) != count:
            raise EigenvalueRequestError(
                "The complex eigenvalue {} has no conjugate partner.".format(value)
            )


def _parameter_matrix(
    rng: np.random.Generator, n: int, eigs: Eigenvalues
) -> NDArray[np.complex128]:
    """A random parameter matrix whose columns for conjugate eigenvalues are
    conjugate as well, so the resulting gain is real."""
    g = rng.standard_normal((n, len(eigs))).astype(complex)
    paired = set()
    for j, value in enumerate(eigs):
        if value.imag == 0 or j in paired:
            continue
        g[:, j] += 1j * rng.standard_normal(n)
        for k in range(j + 1, len(eigs)):
            if k not in paired and np.isclose(eigs[k], np.conj(value)):
                g[:, k] = np.conj(g[:, j])
                paired.update((j, k))
                break
    return g


def place_poles(
    sys: LtiSystem,
    eigs: ArrayLike,
    seed: int = 0,
    max_retries: int = MAX_RETRIES,
    condition_limit: float = CONDITION_LIMIT,
) -> GainDesign:
    """Find ``L`` such that ``A - L C`` has the requested spectrum.

    The construction works on the dual pair: for a parameter matrix ``G``
    every eigenvector ``x_j`` of ``A^T - C^T K`` solves
    ``(A^T - lambda_j I) x_j = C^T g_j`` with ``K = G T^-1`` and
    ``T = [x_1 .. x_(n+2)]``. Then ``L = K^T``. A new ``G`` is drawn while
    ``T`` is ill conditioned.

    :param eigs: ``n + 2`` values with negative real parts. An eigenvalue
      may repeat at most ``n`` times.
    :param seed: Seeds the generator of the parameter matrices.

    :raises EigenvalueRequestError: If the request is malformed.
    :raises PolePlacementError: If every retry gives an ill conditioned basis.
    """
    eigs = np.asarray(eigs, dtype=complex).ravel()
    _check_request(sys, eigs)
    at = sys.a.T
    ct = sys.c.T
    identity = np.eye(sys.order)
    rng = np.random.default_rng(seed)
    condition = float("inf")
    for attempt in range(max_retries):
        g = _parameter_matrix(rng, sys.n, eigs)
        t = np.column_stack(
            [
                np.linalg.solve(at - value * identity, ct @ g[:, j])
                for j, value in enumerate(eigs)
            ]
        )
        condition = float(np.linalg.cond(t))
        if not np.isfinite(condition) or condition > condition_limit:
            logger.debug(
                "Attempt %d: eigenvector basis ill conditioned (%.3e)",
                attempt,
                condition,
            )
            continue
        k = np.linalg.solve(t.T, g.T).T
        l = np.real(k).T.copy()
        achieved = np.linalg.eigvals(sys.a - l @ sys.c)
        distance = eigenvalue_match_distance(achieved, eigs)
        if distance > MATCH_TOLERANCE:
            logger.debug(
                "Attempt %d: spectrum off by %.3e", attempt, distance
            )
            continue
        logger.info(
            "Placed %d eigenvalues (condition %.3e, match %.3e)",
            len(eigs),
            condition,
            distance,
        )
        return GainDesign(
            l=l,
            requested_eigs=eigs,
            achieved_eigs=achieved,
            seed=seed,
            condition=condition,
        )
    raise PolePlacementError(
        "Pole placement failed after {} attempts (last condition number "
        "{:.3e}, limit {:.1e}).".format(max_retries, condition, condition_limit)
    )


def decompose_gains(
    design: GainDesign,
    k_p_mode: KpMode = "ones",
    k_p: Optional[Sequence[float]] = None,
    k_r: float = 1.0,
) -> ObserverGains:
    """Split ``L`` into the observer gains.

    ``K_v`` and ``K_g`` are the last two rows of ``L``. ``K_p`` is free and
    ``Gamma = 1 K_p^T - L[:n]``.

    :param k_p_mode: ``zeros``, ``ones`` or ``custom`` (then ``k_p`` is
      required).
    """
    n = design.n
    if k_p_mode == "zeros":
        kp = np.zeros(n)
    elif k_p_mode == "ones":
        kp = np.ones(n)
    elif k_p_mode == "custom":
        if k_p is None or len(k_p) != n:
            raise ValueError(
                "A custom K_p needs {} entries (got {}).".format(
                    n, None if k_p is None else len(k_p)
                )
            )
        kp = np.asarray(k_p, dtype=float)
    else:
        raise ValueError("Unknown K_p mode “{}”.".format(k_p_mode))
    l = design.l
    return ObserverGains(
        k_r=k_r,
        k_p=kp,
        k_v=l[n].copy(),
        k_g=l[n + 1].copy(),
        gamma=np.outer(np.ones(n), kp) - l[:n],
        l=l,
    )


# Gain file ####################################################################


def save_gain_design(design: GainDesign, path: str) -> None:
    """Write ``L`` row by row. The header line holds ``n rows cols seed``."""
    rows, cols = design.l.shape
    with open(path, "w") as gain_file:
        gain_file.write("{} {} {} {}\n".format(design.n, rows, cols, design.seed))
        for row in design.l:
            gain_file.write(" ".join(repr(float(value)) for value in row) + "\n")


def load_gain_design(path: str) -> GainDesign:
    """Read a file written by :func:`save_gain_design`.

    The requested spectrum of a loaded design is its achieved spectrum.

    :raises GainFileError: If the file is missing or malformed.
    """
    if not os.path.exists(path):
        raise GainFileError("The gain file “{}” does not exist.".format(path))
    with open(path) as gain_file:
        lines = [line.split() for line in gain_file if line.strip()]
    try:
        n, rows, cols, seed = (int(value) for value in lines[0])
        l = np.array([[float(value) for value in line] for line in lines[1:]])
    except (IndexError, ValueError) as error:
        raise GainFileError(
            "The gain file “{}” is malformed: {}".format(path, error)
        ) from error
    if rows != n + 2 or cols != n or l.shape != (rows, cols):
        raise GainFileError(
            "The gain file “{}” announces a {}x{} matrix for n={} but holds "
            "{}.".format(path, rows, cols, n, "x".join(str(s) for s in l.shape))
        )
    achieved = np.linalg.eigvals(build_lti(n).a - l @ build_lti(n).c)
    return GainDesign(l=l, requested_eigs=achieved, achieved_eigs=achieved, seed=seed)


def save_observer_gains(gains: ObserverGains, path: str) -> None:
    """Write ``k_R``, ``K_p``, ``K_v``, ``K_g`` and ``Gamma`` in labelled
    blocks."""
    with open(path, "w") as gain_file:
        gain_file.write("# k_R\n{!r}\n".format(float(gains.k_r)))
        for label, values in (
            ("K_p", gains.k_p),
            ("K_v", gains.k_v),
            ("K_g", gains.k_g),
        ):
            gain_file.write("# {}\n".format(label))
            gain_file.write(" ".join(repr(float(v)) for v in values) + "\n")
        gain_file.write("# Gamma\n")
        for row in gains.gamma:
            gain_file.write(" ".join(repr(float(v)) for v in row) + "\n")
