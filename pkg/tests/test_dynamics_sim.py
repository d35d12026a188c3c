import unittest
from dataclasses import replace

import numpy as np
from numpy.testing import assert_allclose

from lgslam.dynamics_sim import (
    TRUTH_STEP,
    AnalyticCircle,
    AttitudeGrid,
    InvalidSimConfigError,
    NoiseSpec,
    SimConfig,
    TrueState,
    TwistTrajectory,
    analytic_truth,
    attitude_increments,
    hold_landmarks,
    magnus_step,
    make_trajectory,
    propagate_truth,
    sample_landmarks,
    stage_samples,
    synthesize_measurements,
    truth_group_element,
)
from lgslam.lie_core import exp_so3, hat, is_rotation

G = np.array([0.0, 0.0, -9.81])
LANDMARKS = np.array([[1.0, 2.0, 3.0], [-4.0, 0.5, 2.0]])


def state_at_rest() -> TrueState:
    return TrueState(
        r=np.eye(3),
        p=np.zeros(3),
        v=np.array([1.0, 0.0, 0.0]),
        landmarks=LANDMARKS,
    )


class TestClassSimConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = SimConfig()
        self.assertEqual(cfg.n, 15)
        self.assertEqual(cfg.steps, 60000)
        assert_allclose(cfg.g, G)

    def test_vectors_become_tuples(self):
        cfg = SimConfig(gravity=np.array([0.0, 0.0, -9.8]))
        self.assertEqual(cfg.gravity, (0.0, 0.0, -9.8))
        hash(cfg)

    def test_invalid_dt(self):
        with self.assertRaises(InvalidSimConfigError) as context:
            SimConfig(dt=0.0)
        self.assertEqual(
            str(context.exception), "The step size dt must be positive (got 0.0)."
        )

    def test_duration_shorter_than_step(self):
        with self.assertRaises(InvalidSimConfigError):
            SimConfig(duration=1e-4, dt=1e-3)

    def test_no_landmarks(self):
        with self.assertRaises(InvalidSimConfigError):
            SimConfig(n=0)

    def test_unknown_trajectory(self):
        with self.assertRaises(InvalidSimConfigError) as context:
            SimConfig(trajectory="figure8")
        self.assertIn("figure8", str(context.exception))

    def test_gravity_components(self):
        with self.assertRaises(InvalidSimConfigError):
            SimConfig(gravity=(0.0, -9.81))

    def test_box(self):
        with self.assertRaises(InvalidSimConfigError):
            SimConfig(landmark_box=((0.0, 1.0), (1.0, 0.0), (0.0, 1.0)))


class TestClassNoiseSpec(unittest.TestCase):
    def test_silent(self):
        self.assertFalse(NoiseSpec().silent)
        self.assertTrue(NoiseSpec.noiseless().silent)

    def test_negative_variance(self):
        with self.assertRaises(InvalidSimConfigError) as context:
            NoiseSpec(var_accel=-1.0)
        self.assertIn("var_accel", str(context.exception))


# Integration ##################################################################


class TestFunctionMagnusStep(unittest.TestCase):
    def test_constant_rate_is_exact(self):
        w = np.array([0.3, -0.2, 0.9])
        assert_allclose(magnus_step(w, w, w, 0.1), exp_so3(0.1 * w), atol=1e-15)

    def test_fourth_order(self):
        grid = AttitudeGrid(step=1e-4)
        reference = grid.at(5000)

        def integrate(h: float) -> np.ndarray:
            r = np.eye(3)
            for k in range(int(round(0.5 / h))):
                r = r @ grid.increment(k * h, h)
            return r

        coarse = np.linalg.norm(integrate(0.05) - reference)
        fine = np.linalg.norm(integrate(0.025) - reference)
        self.assertGreater(coarse / fine, 10.0)

    def test_attitude_increments_mid_and_end(self):
        w = np.array([0.0, 0.0, 2.0])
        mid, end = attitude_increments(w, 0.2)
        assert_allclose(mid, exp_so3(0.1 * w), atol=1e-15)
        assert_allclose(end, exp_so3(0.2 * w), atol=1e-15)

    def test_stage_samples(self):
        self.assertEqual(stage_samples([1.0, 2.0, 3.0]).shape, (3, 3))
        with self.assertRaises(ValueError):
            stage_samples(np.zeros((2, 3)))


class TestFunctionPropagateTruth(unittest.TestCase):
    def test_free_fall_is_exact(self):
        state = state_at_rest()
        accel = np.array([0.0, 1.0, 0.0])
        for _ in range(10):
            state = propagate_truth(state, np.zeros(3), accel, 0.1, G)
        assert_allclose(state.v, [1.0, 1.0, -9.81])
        assert_allclose(state.p, [1.0, 0.5, -0.5 * 9.81], atol=1e-12)
        self.assertAlmostEqual(state.t, 1.0)

    def test_landmarks_static(self):
        state = propagate_truth(state_at_rest(), [0.1, 0.2, 0.3], G, 0.01, G)
        self.assertIs(state.landmarks, LANDMARKS)

    def test_rotation_stays_orthonormal(self):
        state = state_at_rest()
        for _ in range(200):
            state = propagate_truth(state, [0.5, -1.0, 2.0], [0.0, 0.0, 9.81], 0.05, G)
        self.assertTrue(is_rotation(state.r))

    def test_invalid_step(self):
        with self.assertRaises(ValueError):
            propagate_truth(state_at_rest(), np.zeros(3), np.zeros(3), 0.0, G)

    def test_fourth_order_on_circle(self):
        circle = AnalyticCircle(LANDMARKS, G)

        def integrate(h: float) -> np.ndarray:
            state, _, _ = circle.sample(0.0)
            for k in range(int(round(1.0 / h))):
                t = k * h
                samples = [circle.sample(s) for s in (t, t + 0.5 * h, t + h)]
                omega = np.stack([sample[1] for sample in samples])
                accel = np.stack([sample[2] for sample in samples])
                state = propagate_truth(state, omega, accel, h, G)
            return state.p

        exact = AnalyticCircle.position(1.0)
        coarse = np.linalg.norm(integrate(0.05) - exact)
        fine = np.linalg.norm(integrate(0.025) - exact)
        self.assertLess(fine, 1e-4)
        self.assertGreater(coarse / fine, 10.0)


# Trajectories #################################################################


class TestClassAnalyticCircle(unittest.TestCase):
    def setUp(self):
        self.circle = AnalyticCircle(LANDMARKS, G)

    def test_initial_state(self):
        state, omega, accel = self.circle.sample(0.0)
        assert_allclose(state.r, np.eye(3))
        assert_allclose(state.p, [3.0, 0.0, 3.0])
        assert_allclose(state.v, [0.0, 3.0, 0.0])
        assert_allclose(omega, [-1.0, 1.0, 0.0])
        assert_allclose(accel, [-3.0, 0.0, 9.81])

    def test_specific_force_reproduces_acceleration(self):
        state, _, accel = self.circle.sample(1.3)
        assert_allclose(G + state.r @ accel, AnalyticCircle.acceleration(1.3))

    def test_off_grid_sample(self):
        t = 17 * TRUTH_STEP + 1e-4
        r_off = self.circle.attitude(t)
        self.assertTrue(is_rotation(r_off))
        r_grid = self.circle.attitude(18 * TRUTH_STEP)
        self.assertLess(np.linalg.norm(r_off - r_grid), 1e-3)

    def test_attitude_derivative(self):
        t, h = 2.0, 1e-5
        derivative = (self.circle.attitude(t + h) - self.circle.attitude(t - h)) / (
            2 * h
        )
        r = self.circle.attitude(t)
        omega = self.circle.omega(t)
        assert_allclose(r.T @ derivative, hat(omega), atol=1e-6)

    def test_negative_time(self):
        with self.assertRaises(ValueError):
            self.circle.sample(-1.0)

    def test_analytic_truth(self):
        cfg = SimConfig(n=2)
        state, _, _ = analytic_truth(0.5, cfg)
        assert_allclose(state.p, AnalyticCircle.position(0.5))

    def test_analytic_truth_needs_circle(self):
        with self.assertRaises(InvalidSimConfigError):
            analytic_truth(0.5, SimConfig(trajectory="twist"))


class TestClassTwistTrajectory(unittest.TestCase):
    def test_constant_inputs_match_stepping(self):
        twist = TwistTrajectory.constant(
            state_at_rest(), [0.0, 0.0, 0.5], [0.0, 0.0, 9.81], G, step=0.01
        )
        state, omega, accel = twist.sample(0.5)
        assert_allclose(omega, [0.0, 0.0, 0.5])
        manual = state_at_rest()
        for _ in range(50):
            manual = propagate_truth(manual, omega, accel, 0.01, G)
        assert_allclose(state.p, manual.p, atol=1e-12)
        assert_allclose(state.r, manual.r, atol=1e-12)
        self.assertEqual(state.t, 0.5)

    def test_yaw_with_hover_thrust(self):
        # a yaw rate with a specific force cancelling gravity
        twist = TwistTrajectory.constant(
            state_at_rest(), [0.0, 0.0, 0.5], [0.0, 0.0, 9.81], G
        )
        state, _, _ = twist.sample(2.0)
        self.assertAlmostEqual(state.p[2], 0.0)
        self.assertAlmostEqual(np.linalg.norm(state.v), 1.0)

    def test_make_trajectory(self):
        cfg = SimConfig(n=3, trajectory="twist")
        twist = make_trajectory(cfg)
        self.assertIsInstance(twist, TwistTrajectory)
        self.assertEqual(twist.landmarks.shape, (3, 3))
        self.assertIsInstance(make_trajectory(SimConfig(n=3)), AnalyticCircle)


# Landmarks and measurements ###################################################


class TestFunctionSampleLandmarks(unittest.TestCase):
    def test_box(self):
        box = ((-1.0, 1.0), (2.0, 3.0), (0.0, 0.5))
        landmarks = sample_landmarks(100, box, seed=3)
        self.assertEqual(landmarks.shape, (100, 3))
        self.assertTrue(np.all(landmarks >= np.array(box)[:, 0]))
        self.assertTrue(np.all(landmarks <= np.array(box)[:, 1]))

    def test_reproducible(self):
        box = SimConfig().landmark_box
        assert_allclose(sample_landmarks(5, box, 7), sample_landmarks(5, box, 7))


class TestFunctionSynthesizeMeasurements(unittest.TestCase):
    def setUp(self):
        self.state = TrueState(
            r=exp_so3([0.1, 0.2, 0.3]),
            p=np.array([1.0, 2.0, 3.0]),
            v=np.zeros(3),
            landmarks=LANDMARKS,
            t=0.25,
        )

    def test_noiseless(self):
        frame = synthesize_measurements(
            self.state, [0.0, 0.0, 1.0], [0.0, 0.0, 9.81], NoiseSpec.noiseless()
        )
        self.assertEqual(frame.t, 0.25)
        for i, landmark in enumerate(LANDMARKS):
            assert_allclose(frame.y[i], self.state.r.T @ (self.state.p - landmark))
        assert_allclose(frame.omega, [0.0, 0.0, 1.0])

    def test_noise_is_reproducible_per_frame(self):
        noise = NoiseSpec(seed=5)
        a = synthesize_measurements(self.state, np.zeros(3), np.zeros(3), noise, 4)
        b = synthesize_measurements(self.state, np.zeros(3), np.zeros(3), noise, 4)
        c = synthesize_measurements(self.state, np.zeros(3), np.zeros(3), noise, 5)
        assert_allclose(a.y, b.y)
        self.assertFalse(np.allclose(a.y, c.y))

    def test_noise_variance(self):
        noise = NoiseSpec(var_omega=0.04, var_accel=0.0, var_landmark=0.0)
        samples = np.array(
            [
                synthesize_measurements(
                    self.state, np.zeros(3), np.zeros(3), noise, k
                ).omega
                for k in range(4000)
            ]
        )
        self.assertAlmostEqual(float(np.var(samples)), 0.04, delta=0.004)
        assert_allclose(np.mean(samples, axis=0), 0.0, atol=0.02)

    def test_hold_landmarks(self):
        frame = synthesize_measurements(
            self.state, np.zeros(3), np.zeros(3), NoiseSpec.noiseless()
        )
        held = hold_landmarks(frame, np.zeros((2, 3)))
        assert_allclose(held.y, 0.0)
        self.assertEqual(held.t, frame.t)

    def test_truth_group_element(self):
        element = truth_group_element(replace(self.state), G)
        assert_allclose(element.xl, LANDMARKS.T)
        assert_allclose(element.x3, G)
