import time
import unittest
from dataclasses import replace

import numpy as np
import scipy.sparse
from numpy.testing import assert_allclose

from lgslam.dynamics_sim import (
    AnalyticCircle,
    MeasurementFrame,
    NoiseSpec,
    synthesize_measurements,
)
from lgslam.error_analysis import error_group, error_vector
from lgslam.gain_synthesis import (
    build_lti,
    decompose_gains,
    default_eigenvalues,
    place_poles,
)
from lgslam.lie_core import (
    GroupElement,
    algebra_embedding,
    embedding,
    exp_so3,
    group_velocity,
    identity,
    lie_bracket,
    rotation_angle,
    struct_matrices,
)
from lgslam.observer_core import (
    DivergenceError,
    GainConsistencyError,
    MeasurementDimensionError,
    ObserverGains,
    ObserverState,
    group_element,
    initial_state_from_config,
    innovation,
    innovation_term,
    observer_derivative,
    state_from_error,
    state_from_group,
    step,
)

G = np.array([0.0, 0.0, -9.81])
RNG = np.random.default_rng(11)


def make_gains(n: int, k_r: float = 1.0) -> ObserverGains:
    design = place_poles(build_lti(n), default_eigenvalues(n))
    return decompose_gains(design, "ones", k_r=k_r)


def diagonal_gains(n: int) -> ObserverGains:
    gamma = np.diag(np.linspace(1.0, 2.0, n))
    k_v = np.full(n, 0.1)
    k_g = np.full(n, 0.01)
    return ObserverGains(
        k_r=1.0,
        k_p=np.zeros(n),
        k_v=k_v,
        k_g=k_g,
        gamma=gamma,
        l=np.vstack([-gamma, k_v, k_g]),
    )


def random_state(n: int) -> ObserverState:
    return ObserverState(
        r_hat=exp_so3(RNG.normal(size=3)),
        p_hat=RNG.normal(size=3),
        v_hat=RNG.normal(size=3),
        g_hat=G + RNG.normal(size=3),
        landmarks_hat=RNG.normal(size=(n, 3)),
    )


def random_frame(n: int, t: float = 0.0) -> MeasurementFrame:
    return MeasurementFrame(
        t=t,
        omega=RNG.normal(size=3),
        accel=RNG.normal(size=3),
        y=RNG.normal(size=(n, 3)),
    )


class TestClassObserverState(unittest.TestCase):
    def test_stacked(self):
        state = random_state(4)
        rows = state.stacked()
        self.assertEqual(rows.shape, (7, 3))
        rebuilt = ObserverState.from_stacked(state.r_hat, rows, 1.5)
        assert_allclose(rebuilt.landmarks_hat, state.landmarks_hat)
        assert_allclose(rebuilt.g_hat, state.g_hat)
        self.assertEqual(rebuilt.t, 1.5)

    def test_is_finite(self):
        state = random_state(2)
        self.assertTrue(state.is_finite())
        self.assertFalse(replace(state, v_hat=np.array([np.inf, 0, 0])).is_finite())


class TestClassObserverGains(unittest.TestCase):
    def test_shape_check(self):
        gains = make_gains(3)
        with self.assertRaises(ValueError) as context:
            ObserverGains(
                k_r=1.0,
                k_p=gains.k_p,
                k_v=gains.k_v[:2],
                k_g=gains.k_g,
                gamma=gains.gamma,
                l=gains.l,
            )
        self.assertIn("k_v", str(context.exception))

    def test_positive_k_r(self):
        gains = make_gains(2)
        with self.assertRaises(ValueError):
            replace(gains, k_r=0.0)

    def test_consistency(self):
        gains = make_gains(2)
        with self.assertRaises(GainConsistencyError):
            replace(gains, k_p=gains.k_p + 1.0)

    def test_dense_injection(self):
        self.assertIsInstance(make_gains(3).injection, np.ndarray)

    def test_sparse_injection(self):
        gains = diagonal_gains(60)
        self.assertTrue(scipy.sparse.issparse(gains.injection))
        self.assertEqual(gains.injection.shape, (63, 60))
        self.assertEqual(gains.n, 60)


class TestConstruction(unittest.TestCase):
    def test_initial_state_from_config(self):
        state = initial_state_from_config(5, np.pi / 2, [1.0, 1.0, 1.0])
        self.assertAlmostEqual(rotation_angle(state.r_hat), np.pi / 2)
        assert_allclose(state.r_hat @ np.ones(3), np.ones(3))
        assert_allclose(state.stacked(), np.zeros((8, 3)))

    def test_group_round_trip(self):
        state = random_state(3)
        rebuilt = state_from_group(group_element(state))
        assert_allclose(rebuilt.stacked(), state.stacked())
        assert_allclose(rebuilt.r_hat, state.r_hat)

    def test_state_from_error(self):
        circle = AnalyticCircle(RNG.normal(size=(3, 3)), G)
        truth, _, _ = circle.sample(0.7)
        error = GroupElement.from_columns(
            exp_so3([0.3, -0.2, 1.0]), RNG.normal(size=(3, 6))
        )
        estimate = state_from_error(truth, G, error)
        self.assertEqual(estimate.t, truth.t)
        assert_allclose(
            embedding(error_group(truth, G, estimate)), embedding(error), atol=1e-12
        )


class TestObserverEquations(unittest.TestCase):
    def setUp(self):
        self.n = 3
        self.gains = make_gains(self.n, k_r=0.7)
        self.state = random_state(self.n)
        self.frame = random_frame(self.n)

    def test_innovation_at_truth(self):
        circle = AnalyticCircle(RNG.normal(size=(3, 3)), G)
        truth, omega, accel = circle.sample(1.0)
        frame = synthesize_measurements(truth, omega, accel, NoiseSpec.noiseless())
        estimate = state_from_error(truth, G, identity(3))
        inno = innovation(estimate, frame, self.gains, G)
        assert_allclose(inno.z, 0.0, atol=1e-12)
        assert_allclose(inno.sigma, 0.0, atol=1e-12)

    def test_innovation_definition(self):
        inno = innovation(self.state, self.frame, self.gains, G)
        j = 1
        assert_allclose(
            inno.z[j],
            self.state.r_hat @ self.frame.y[j]
            - self.state.p_hat
            + self.state.landmarks_hat[j],
        )
        assert_allclose(inno.sigma, 0.7 * np.cross(self.state.g_hat, G))

    def test_dimension_mismatch(self):
        with self.assertRaises(MeasurementDimensionError) as context:
            innovation(self.state, random_frame(2), self.gains, G)
        self.assertEqual(
            str(context.exception),
            "The frame holds 2 landmark measurements, the observer estimates "
            "3 landmarks.",
        )

    def test_matches_group_form(self):
        # dX/dt = [X, H] + X V + Delta X
        x = embedding(group_element(self.state))
        h = struct_matrices(self.n).h
        v = algebra_embedding(
            group_velocity(self.frame.omega, self.frame.accel, self.n)
        )
        delta = algebra_embedding(
            innovation_term(self.state, self.frame, self.gains, G)
        )
        dense = lie_bracket(x, h) + x @ v + delta @ x
        derivative = observer_derivative(self.state, self.frame, self.gains, G)
        assert_allclose(dense[:3, :3], derivative.r_dot, atol=1e-12)
        assert_allclose(dense[:3, 3], derivative.p_dot, atol=1e-12)
        assert_allclose(dense[:3, 4], derivative.v_dot, atol=1e-12)
        assert_allclose(dense[:3, 5], derivative.g_dot, atol=1e-12)
        assert_allclose(dense[:3, 6:].T, derivative.landmarks_dot, atol=1e-12)
        assert_allclose(dense[3:], 0.0)


class TestFunctionStep(unittest.TestCase):
    def assert_first_order(self, n: int, gains: ObserverGains):
        state = random_state(n)
        frame = random_frame(n)
        dt = 1e-7
        advanced = step(state, frame, gains, G, dt)
        derivative = observer_derivative(state, frame, gains, G)
        r_rate = (advanced.r_hat - state.r_hat) / dt
        assert_allclose(r_rate, derivative.r_dot, atol=1e-3)
        rows = (advanced.stacked() - state.stacked()) / dt
        assert_allclose(rows[0], derivative.p_dot, atol=1e-3)
        assert_allclose(rows[1], derivative.v_dot, atol=1e-3)
        assert_allclose(rows[2], derivative.g_dot, atol=1e-3)
        assert_allclose(rows[3:], derivative.landmarks_dot, atol=1e-3)
        self.assertEqual(advanced.t, dt)

    def test_consistent_with_equations(self):
        self.assert_first_order(3, make_gains(3, k_r=0.5))

    def test_consistent_with_equations_sparse(self):
        self.assert_first_order(60, diagonal_gains(60))

    def test_tracks_truth(self):
        circle = AnalyticCircle(RNG.normal(size=(4, 3)) * 5.0, G)
        gains = make_gains(4)
        noise = NoiseSpec.noiseless()
        dt = 0.01
        truth, omega, accel = circle.sample(0.0)
        estimate = state_from_error(truth, G, identity(4))
        frame = synthesize_measurements(truth, omega, accel, noise)
        for k in range(20):
            frames = []
            for s in (k * dt + 0.5 * dt, (k + 1) * dt):
                truth, omega, accel = circle.sample(s)
                frames.append(synthesize_measurements(truth, omega, accel, noise))
            estimate = step(estimate, frame, gains, G, dt, *frames)
            frame = frames[1]
        self.assertLess(error_vector(truth, G, estimate).norm, 1e-8)
        assert_allclose(estimate.r_hat, truth.r, atol=1e-9)

    def test_rotation_stays_orthonormal(self):
        state = random_state(3)
        gains = make_gains(3)
        for _ in range(50):
            state = step(state, random_frame(3), gains, G, 0.01)
        assert_allclose(state.r_hat.T @ state.r_hat, np.eye(3), atol=1e-9)

    def test_non_finite_measurement(self):
        frame = random_frame(2, t=0.5)
        frame = replace(frame, omega=np.array([np.nan, 0.0, 0.0]))
        with self.assertRaises(DivergenceError) as context:
            step(random_state(2), frame, make_gains(2), G, 0.01)
        self.assertEqual(context.exception.t, 0.5)
        self.assertIsInstance(context.exception, ArithmeticError)

    def test_overflow(self):
        state = replace(random_state(2), p_hat=np.array([1e308, 1e308, 0.0]))
        with self.assertRaises(DivergenceError), np.errstate(all="ignore"):
            for _ in range(5):
                state = step(state, random_frame(2), make_gains(2), G, 1.0)

    def test_invalid_step(self):
        with self.assertRaises(ValueError):
            step(random_state(2), random_frame(2), make_gains(2), G, -0.1)

    def test_step_time_scales_linearly(self):
        def step_time(n: int) -> float:
            state = random_state(n)
            frame = random_frame(n)
            gains = diagonal_gains(n)
            timings = []
            for _ in range(7):
                start = time.perf_counter()
                for _ in range(5):
                    step(state, frame, gains, G, 1e-3)
                timings.append(time.perf_counter() - start)
            return min(timings)

        step_time(10)
        small, large = step_time(100), step_time(1000)
        self.assertLess(large / small, 15.0)
