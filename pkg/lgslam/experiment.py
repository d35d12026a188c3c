"""
Run the observer against simulated truth: single runs, their evaluation
and Monte Carlo studies of the region of attraction.

A run integrates with the step ``dt`` and samples the measurements every
``dt / 2``; step ``k`` consumes the frames ``2k``, ``2k+1`` and ``2k+2``.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation as ScipyRotation

from .config_reader import ExperimentConfig, MonteCarloSpec
from .dynamics_sim import (
    MeasurementFrame,
    NoiseSpec,
    TrajectoryBase,
    TrueState,
    hold_landmarks,
    make_trajectory,
    sample_landmarks,
    synthesize_measurements,
)
from .error_analysis import (
    METRIC_COLUMNS,
    AlignmentTransform,
    ErrorVector,
    MetricRecord,
    alignment_from_errors,
    attitude_error,
    error_vector,
    metrics,
    simulate_error_cascade,
    vector_angle,
)
from .gain_synthesis import (
    GainDesign,
    build_lti,
    decompose_gains,
    default_eigenvalues,
    load_gain_design,
    place_poles,
)
from .lie_core import GroupElement, half_turn
from .observer_core import (
    DivergenceError,
    ObserverGains,
    ObserverState,
    initial_state_from_config,
    state_from_error,
    step,
)

logger = logging.getLogger(__name__)


# Scenario #####################################################################


def design_from_config(cfg: ExperimentConfig) -> GainDesign:
    """The gain matrix ``L``: loaded from ``gains.file`` or placed."""
    if cfg.gains.file:
        design = load_gain_design(cfg.gains.file)
        if design.n != cfg.sim.n:
            raise ValueError(
                "The gain file “{}” is designed for n={}, the simulation "
                "uses n={}.".format(cfg.gains.file, design.n, cfg.sim.n)
            )
        logger.info("Loaded the gain matrix from %s", cfg.gains.file)
        return design
    eigs = cfg.gains.eigenvalues
    if eigs is None:
        eigs = tuple(default_eigenvalues(cfg.sim.n))
    return place_poles(build_lti(cfg.sim.n), eigs, seed=cfg.gains.seed)


def gains_from_config(
    cfg: ExperimentConfig, design: Optional[GainDesign] = None
) -> ObserverGains:
    if design is None:
        design = design_from_config(cfg)
    return decompose_gains(
        design,
        k_p_mode=cfg.gains.k_p_mode,  # type: ignore
        k_p=cfg.gains.k_p,
        k_r=cfg.gains.k_r,
    )


def landmarks_from_config(cfg: ExperimentConfig) -> NDArray[np.float64]:
    return sample_landmarks(cfg.sim.n, cfg.sim.landmark_box, cfg.sim.landmark_seed)


def initial_estimate(cfg: ExperimentConfig) -> ObserverState:
    return initial_state_from_config(
        cfg.sim.n, cfg.observer.attitude_angle, cfg.observer.attitude_axis
    )


# Run log ######################################################################


@dataclass
class RunLog:
    """Truth and estimate at every logged step."""

    n: int
    gravity: NDArray[np.float64]
    landmarks: NDArray[np.float64]
    noiseless: bool
    metadata: Dict[str, Any] = field(default_factory=dict)
    truths: List[TrueState] = field(default_factory=list)
    estimates: List[ObserverState] = field(default_factory=list)

    def append(self, truth: TrueState, estimate: ObserverState) -> None:
        if self.truths and truth.t <= self.truths[-1].t:
            raise ValueError(
                "Log times must increase ({} after {}).".format(
                    truth.t, self.truths[-1].t
                )
            )
        self.truths.append(truth)
        self.estimates.append(estimate)

    def __len__(self) -> int:
        return len(self.truths)

    @property
    def times(self) -> NDArray[np.float64]:
        return np.array([truth.t for truth in self.truths])

    def errors(self) -> List[ErrorVector]:
        return [
            error_vector(truth, self.gravity, est)
            for truth, est in zip(self.truths, self.estimates)
        ]

    def error_matrix(self) -> NDArray[np.float64]:
        """The stacked errors ``x`` as rows."""
        return np.array([error.x for error in self.errors()])

    def g_breve(self) -> NDArray[np.float64]:
        return np.array(
            [
                attitude_error(truth, est, self.gravity).g_breve
                for truth, est in zip(self.truths, self.estimates)
            ]
        )

    def alignment(self, window: float) -> AlignmentTransform:
        r_tildes = [t.r @ e.r_hat.T for t, e in zip(self.truths, self.estimates)]
        p_tildes = [
            t.p - r @ e.p_hat for t, e, r in zip(self.truths, self.estimates, r_tildes)
        ]
        return alignment_from_errors(r_tildes, p_tildes, window)

    def metric_records(self, align: AlignmentTransform) -> List[MetricRecord]:
        return [
            metrics(truth, est, align, self.gravity)
            for truth, est in zip(self.truths, self.estimates)
        ]


# Simulation ###################################################################


class FrameSource:
    """Measurement frames on the half-step grid of a run, with landmark
    measurements held between decimated samples."""

    def __init__(
        self,
        trajectory: TrajectoryBase,
        noise: NoiseSpec,
        half_step: float,
        decimation: int = 1,
    ):
        self.trajectory = trajectory
        self.noise = noise
        self.half_step = half_step
        self.period = 2 * decimation
        self._held: Optional[NDArray[np.float64]] = None

    def frame(self, index: int) -> Tuple[TrueState, MeasurementFrame]:
        """The true state and the measurement frame number ``index``.
        Frames have to be requested in increasing order."""
        truth, omega, accel = self.trajectory.sample(index * self.half_step)
        frame = synthesize_measurements(truth, omega, accel, self.noise, index)
        if self.period > 2 and self._held is not None and index % self.period != 0:
            frame = hold_landmarks(frame, self._held)
        else:
            self._held = frame.y
        return truth, frame


def run_simulation(
    cfg: ExperimentConfig,
    gains: ObserverGains,
    estimate: Optional[ObserverState] = None,
    trajectory: Optional[TrajectoryBase] = None,
    noiseless: Optional[bool] = None,
    duration: Optional[float] = None,
    dt: Optional[float] = None,
    log_every: Optional[int] = None,
) -> RunLog:
    """Run the observer in lockstep with the truth.

    :param estimate: The initial estimate, by default from the
      ``observer`` section.
    :param noiseless: Override the ``noise`` section.

    :raises DivergenceError: If the observer leaves the finite range. The
      partial log is attached as ``error.run_log``.
    """
    sim = cfg.sim
    if noiseless is None:
        noiseless = sim.noise.silent
    noise = NoiseSpec.noiseless(sim.noise.seed) if noiseless else sim.noise
    dt = sim.dt if dt is None else dt
    duration = sim.duration if duration is None else duration
    log_every = cfg.log_every if log_every is None else log_every
    steps = int(round(duration / dt))
    g = sim.g
    if trajectory is None:
        trajectory = make_trajectory(sim, landmarks_from_config(cfg))
    if estimate is None:
        estimate = initial_estimate(cfg)

    source = FrameSource(trajectory, noise, 0.5 * dt, sim.decimation)
    run_log = RunLog(
        n=sim.n,
        gravity=g,
        landmarks=trajectory.landmarks,
        noiseless=noiseless,
        metadata={
            "steps": steps,
            "dt": dt,
            "noise_seed": noise.seed,
            "gains_digest": gains.digest,
        },
    )
    truth, frame = source.frame(0)
    state = replace(estimate, t=0.0)
    run_log.append(truth, state)
    logger.info(
        "Simulating %d steps of %.4g s with n=%d (%s)",
        steps,
        dt,
        sim.n,
        "noiseless" if noiseless else "noisy",
    )
    for k in range(steps):
        _, frame_mid = source.frame(2 * k + 1)
        truth, frame_end = source.frame(2 * k + 2)
        try:
            state = step(state, frame, gains, g, dt, frame_mid, frame_end)
        except DivergenceError as error:
            logger.error("The observer diverged at step %d: %s", k + 1, error)
            error.run_log = run_log  # type: ignore
            raise
        frame = frame_end
        if (k + 1) % log_every == 0 or k + 1 == steps:
            t = (k + 1) * dt
            run_log.append(replace(truth, t=t), replace(state, t=t))
    return run_log


# Output #######################################################################


def _format(value: float) -> str:
    return repr(float(value))


def write_metrics_csv(records: Sequence[MetricRecord], path: str) -> None:
    with open(path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(METRIC_COLUMNS)
        for record in records:
            writer.writerow([_format(getattr(record, c)) for c in METRIC_COLUMNS])


def run_columns(n: int) -> List[str]:
    columns = ["t"]
    for prefix in ("p", "v", "p_hat", "v_hat", "g_hat", "rot", "rot_hat"):
        columns.extend("{}_{}".format(prefix, axis) for axis in "xyz")
    for i in range(1, n + 1):
        columns.extend("lm{}_hat_{}".format(i, axis) for axis in "xyz")
    return columns


def write_run_csv(run_log: RunLog, align: AlignmentTransform, path: str) -> None:
    """Truth and aligned estimates. Attitudes are written as rotation
    vectors."""
    with open(path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(run_columns(run_log.n))
        for truth, est in zip(run_log.truths, run_log.estimates):
            row = [truth.t]
            row.extend(truth.p)
            row.extend(truth.v)
            row.extend(align.position(est.p_hat))
            row.extend(align.vector(est.v_hat))
            row.extend(align.vector(est.g_hat))
            row.extend(ScipyRotation.from_matrix(truth.r).as_rotvec())
            row.extend(
                ScipyRotation.from_matrix(align.rotation(est.r_hat)).as_rotvec()
            )
            row.extend(align.position(est.landmarks_hat).ravel())
            writer.writerow([_format(value) for value in row])


def write_landmarks_csv(landmarks: NDArray[np.float64], path: str) -> None:
    with open(path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(["landmark", "x", "y", "z"])
        for i, point in enumerate(landmarks, start=1):
            writer.writerow([i] + [_format(value) for value in point])


# Monte Carlo ##################################################################


@dataclass(frozen=True)
class McResult:
    run: int
    converged: bool
    diverged: bool
    err_rot_deg: float
    err_pos_m: float
    err_vel_mps: float
    err_grav_mps2: float
    landmark_rmse_m: float


MC_COLUMNS = (
    "run",
    "converged",
    "diverged",
    "err_rot_deg",
    "err_pos_m",
    "err_vel_mps",
    "err_grav_mps2",
    "landmark_rmse_m",
)


def _antipodal_axis(g: NDArray[np.float64]) -> NDArray[np.float64]:
    """A unit vector perpendicular to ``g``; a coordinate axis whenever
    ``g`` lies on one."""
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(g)))] = 1.0
    axis = axis - np.dot(axis, g) / np.dot(g, g) * g
    return axis / np.linalg.norm(axis)


def sample_initial_error(
    rng: np.random.Generator, n: int, g: NDArray[np.float64], mc: MonteCarloSpec
) -> GroupElement:
    """A random error ``E(0)``: a uniformly distributed rotation outside of
    the cap around ``g_breve = -g`` and Gaussian translations.

    With ``mc.antipodal`` the rotation is a half turn with ``g_breve = -g``
    and the translations vanish.
    """
    if mc.antipodal:
        return GroupElement(
            r=half_turn(_antipodal_axis(g)),
            x1=np.zeros(3),
            x2=np.zeros(3),
            x3=np.zeros(3),
            xl=np.zeros((3, n)),
        )
    while True:
        r_tilde = ScipyRotation.random(random_state=rng).as_matrix()
        if vector_angle(r_tilde.T @ g, -g) > mc.cap:
            break
    translation = rng.normal(0.0, mc.dispersion, size=(3, 3 + n))
    return GroupElement.from_columns(r_tilde, translation)


def _run_full(
    index: int,
    cfg: ExperimentConfig,
    gains: ObserverGains,
    error0: GroupElement,
) -> McResult:
    mc = cfg.mc
    dt = mc.dt if mc.dt is not None else cfg.sim.dt
    trajectory = make_trajectory(cfg.sim, landmarks_from_config(cfg))
    truth0, _, _ = trajectory.sample(0.0)
    estimate = state_from_error(truth0, cfg.sim.g, error0)
    try:
        run_log = run_simulation(
            cfg,
            gains,
            estimate=estimate,
            trajectory=trajectory,
            noiseless=mc.noiseless,
            duration=mc.duration,
            dt=dt,
        )
    except DivergenceError:
        nan = float("nan")
        return McResult(index, False, True, nan, nan, nan, nan, nan)
    align = run_log.alignment(cfg.align_window)
    final = metrics(run_log.truths[-1], run_log.estimates[-1], align, cfg.sim.g)
    return _result(
        index,
        mc,
        final.err_rot_deg,
        final.err_pos_m,
        final.err_vel_mps,
        final.err_grav_mps2,
        final.landmark_rmse_m,
    )


def _run_reduced(
    index: int,
    cfg: ExperimentConfig,
    gains: ObserverGains,
    error0: GroupElement,
) -> McResult:
    mc = cfg.mc
    dt = mc.dt if mc.dt is not None else cfg.sim.dt
    n = cfg.sim.n
    eps = (error0.x1[:, np.newaxis] - error0.xl).T
    x0 = np.concatenate([eps.ravel(), error0.x2, error0.x3])
    result = simulate_error_cascade(
        error0.r,
        x0,
        build_lti(n),
        gains.l,
        cfg.sim.g,
        gains.k_r,
        dt,
        mc.duration,
    )
    x = result.x
    eps_final = x[: 3 * n].reshape(n, 3)
    return _result(
        index,
        mc,
        float(result.tilt_deg[-1]),
        float(np.max(np.linalg.norm(eps_final, axis=1))),
        float(np.linalg.norm(x[3 * n : 3 * n + 3])),
        float(np.linalg.norm(x[3 * n + 3 :])),
        float(np.sqrt(np.mean(np.sum(eps_final**2, axis=1)))),
    )


def _result(
    index: int,
    mc: MonteCarloSpec,
    rot: float,
    pos: float,
    vel: float,
    grav: float,
    rmse: float,
) -> McResult:
    finite = all(np.isfinite(value) for value in (rot, pos, vel, grav, rmse))
    converged = (
        finite
        and rot < mc.rot_threshold_deg
        and pos < mc.pos_threshold_m
        and rmse < mc.pos_threshold_m
    )
    return McResult(index, bool(converged), not finite, rot, pos, vel, grav, rmse)


def monte_carlo_task(
    task: Tuple[int, np.random.SeedSequence, ExperimentConfig, ObserverGains]
) -> McResult:
    """One Monte Carlo run; a top level function so worker processes can
    pickle it."""
    index, seed_sequence, cfg, gains = task
    rng = np.random.default_rng(seed_sequence)
    error0 = sample_initial_error(rng, cfg.sim.n, cfg.sim.g, cfg.mc)
    if cfg.mc.model == "reduced" or cfg.mc.antipodal:
        return _run_reduced(index, cfg, gains, error0)
    return _run_full(index, cfg, gains, error0)


def monte_carlo(cfg: ExperimentConfig, gains: ObserverGains) -> List[McResult]:
    """Run ``mc.runs`` independent simulations. The results are ordered by
    run index, independent of the completion order. Antipodal starts always
    use the reduced error model."""
    mc = cfg.mc
    children = np.random.SeedSequence(mc.seed).spawn(mc.runs)
    tasks = [(i, child, cfg, gains) for i, child in enumerate(children)]
    workers = mc.workers if mc.workers > 0 else (os.cpu_count() or 1)
    if mc.antipodal and mc.model == "full":
        # Round-off in the innovation leaves the unstable equilibrium at
        # about k_R |g|^2 per second; only the cascade keeps it exactly.
        logger.info("Antipodal starts run on the reduced error model")
    logger.info(
        "Monte Carlo: %d runs (%s model) on %d worker(s)",
        mc.runs,
        mc.model,
        workers,
    )
    if workers == 1:
        results = [monte_carlo_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(monte_carlo_task, tasks))
    return sorted(results, key=lambda result: result.run)


def write_mc_csv(results: Sequence[McResult], path: str) -> None:
    with open(path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(MC_COLUMNS)
        for result in results:
            writer.writerow(
                [
                    result.run,
                    int(result.converged),
                    int(result.diverged),
                ]
                + [_format(getattr(result, c)) for c in MC_COLUMNS[3:]]
            )


def summarize_mc(results: Sequence[McResult]) -> Dict[str, Any]:
    """Convergence fraction and error quantiles."""
    summary: Dict[str, Any] = {
        "runs": len(results),
        "converged": sum(result.converged for result in results),
        "diverged": sum(result.diverged for result in results),
    }
    summary["converged_fraction"] = summary["converged"] / max(1, len(results))
    for column in MC_COLUMNS[3:]:
        values = np.array([getattr(result, column) for result in results])
        values = values[np.isfinite(values)]
        for q in (50, 90, 99):
            summary["{}_q{}".format(column, q)] = (
                float(np.percentile(values, q)) if values.size else float("nan")
            )
        summary["{}_max".format(column)] = (
            float(np.max(values)) if values.size else float("nan")
        )
    return summary
