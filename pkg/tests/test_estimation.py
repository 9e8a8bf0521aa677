import numpy as np
import pytest

from racestack.errors import ConfigurationError
from racestack.estimation import (
    ATT,
    STATE_DIM,
    VEL,
    YAW,
    EstimatorState,
    FailoverState,
    GnssMeasurement,
    ImuMeasurement,
    WheelOdometry,
    eskf_predict,
    eskf_update,
    failover_step,
    gnss_failover,
    imq_weight,
    jerk_metrics,
    process_noise,
    soft_thresholds,
    transition_matrix,
    wheel_odometry_body_velocity,
    wheel_odometry_update,
)
from racestack.vehicle import VehicleParams

STATIC_IMU = ImuMeasurement(np.array([0.0, 0.0, 9.81]), np.zeros(3), 0.0)


def fresh_state(cov_scale=1.0):
    return EstimatorState(np.zeros(STATE_DIM), np.eye(STATE_DIM) * cov_scale)


def random_spd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    return a @ a.T * scale / n + np.eye(n) * 1e-3


class TestImqWeight:
    def test_zero_residual_is_one(self):
        assert imq_weight(np.zeros(3), 1.5) == 1.0

    def test_residual_equal_c(self):
        assert imq_weight(np.array([2.0, 0.0]), 2.0) == pytest.approx(
            1.0 / np.sqrt(2.0), abs=1e-12)

    def test_monotone_decreasing(self):
        mags = np.linspace(0.0, 20.0, 100)
        ws = [imq_weight(np.array([m]), 2.0) for m in mags]
        assert all(a > b for a, b in zip(ws, ws[1:]))
        assert imq_weight(np.array([20.0]), 2.0) < 0.1

    def test_invalid_c(self):
        with pytest.raises(ConfigurationError):
            imq_weight(np.zeros(2), 0.0)


class TestSoftThresholds:
    def test_position_lower_clamp(self):
        assert soft_thresholds(0.0, 1.0, 0.05)[0] == 0.75

    def test_position_upper_clamp(self):
        assert soft_thresholds(200.0, 1.0, 0.05)[0] == 3.0

    def test_orientation_clamps(self):
        c_lo = soft_thresholds(10.0, 0.0, 0.05)[1]
        c_hi = soft_thresholds(10.0, 100.0, 0.05)[1]
        assert c_lo == pytest.approx(np.pi / 36)
        assert c_hi == pytest.approx(np.pi / 18)

    def test_inside_band_linear(self):
        assert soft_thresholds(20.0, 0.0, 0.05)[0] == pytest.approx(1.0)


class TestEskfPredict:
    def test_static_equilibrium(self):
        est = fresh_state()
        q = np.full(STATE_DIM, 1e-6)
        out = eskf_predict(est, STATIC_IMU, 0.01, q)
        assert np.allclose(out.x[0:3], 0.0, atol=1e-12)
        assert np.allclose(out.x[3:6], 0.0, atol=1e-12)

    def test_constant_acceleration_kinematics(self):
        est = fresh_state()
        q = np.full(STATE_DIM, 1e-9)
        imu = ImuMeasurement(np.array([1.0, 0.0, 9.81]), np.zeros(3), 0.0)
        for _ in range(100):
            est = eskf_predict(est, imu, 0.01, q)
        assert est.x[3] == pytest.approx(1.0, abs=1e-6)
        assert est.x[0] == pytest.approx(0.5, abs=1e-6)

    def test_trace_grows_with_process_noise(self):
        est = fresh_state()
        q = np.full(STATE_DIM, 1e-3)
        out = eskf_predict(est, STATIC_IMU, 0.01, q)
        assert np.trace(out.cov) > np.trace(est.cov)


def textbook_kf_update(x, p, z, h, r):
    """Plain gain-form Kalman update (oracle for the information form)."""
    s = h @ p @ h.T + r
    k = p @ h.T @ np.linalg.inv(s)
    x_new = x + k @ (z - h @ x)
    p_new = (np.eye(len(x)) - k @ h) @ p
    return x_new, p_new


class TestEskfUpdate:
    def test_unit_weight_equals_textbook_kf(self, rng):
        est = fresh_state(0.5)
        x_ref, p_ref = est.x.copy(), est.cov.copy()
        for _ in range(200):
            h = np.zeros((3, STATE_DIM))
            h[:, 0:3] = np.eye(3)
            h[0, 3] = 0.2
            z = rng.normal(scale=0.1, size=3)
            r = np.eye(3) * 0.04
            est = eskf_update(est, z, h, r, c=None)
            x_ref, p_ref = textbook_kf_update(x_ref, p_ref, z, h, r)
            f = transition_matrix(0.01)
            q = process_noise(0.01, np.full(STATE_DIM, 1e-4))
            est = EstimatorState(f @ est.x, f @ est.cov @ f.T + q, est.t)
            x_ref = f @ x_ref
            p_ref = f @ p_ref @ f.T + q
        assert np.max(np.abs(est.x - x_ref)) < 1e-9
        assert np.max(np.abs(est.cov - p_ref)) < 1e-9

    def test_large_residual_barely_moves_state(self):
        h = np.zeros((3, STATE_DIM))
        h[:, 0:3] = np.eye(3)
        r = np.eye(3) * 0.01
        c = 1.0
        z = np.array([100.0, 0.0, 0.0])  # ||r|| = 100 c
        est0 = fresh_state()
        weighted = eskf_update(est0, z, h, r, c=c)
        unweighted = eskf_update(est0, z, h, r, c=None)
        moved_w = np.linalg.norm(weighted.x - est0.x)
        moved_u = np.linalg.norm(unweighted.x - est0.x)
        assert moved_w < 0.01 * moved_u

    def test_posterior_spd_on_random_inputs(self, rng):
        h = np.zeros((3, STATE_DIM))
        h[:, 0:3] = np.eye(3)
        for _ in range(10_000):
            est = EstimatorState(rng.normal(size=STATE_DIM),
                                 random_spd(rng, STATE_DIM))
            r = random_spd(rng, 3, scale=0.1)
            z = rng.normal(size=3)
            out = eskf_update(est, z, h, r, c=1.0)
            assert np.allclose(out.cov, out.cov.T, atol=1e-9)
            assert np.linalg.eigvalsh(out.cov)[0] > 0


class TestWheelOdometry:
    def test_straight_rolling_measurement(self):
        params = VehicleParams()
        v = 24.0
        odo = WheelOdometry(np.full(4, v / params.wheel_radius), 0.0, 0.0)
        z = wheel_odometry_body_velocity(odo, params)
        assert np.allclose(z, [v, 0.0, 0.0])

    def test_lateral_pseudo_velocity_formula(self):
        params = VehicleParams()
        v, delta = 20.0, 0.06
        odo = WheelOdometry(np.full(4, v / params.wheel_radius), delta, 0.0)
        z = wheel_odometry_body_velocity(odo, params)
        expected = v * np.tan(delta) * params.l_r / params.wheelbase
        assert z[1] == pytest.approx(expected)

    def test_update_pulls_velocity_toward_wheels(self):
        params = VehicleParams()
        est = fresh_state()
        est.x[VEL] = [10.0, 0.0, 0.0]
        odo = WheelOdometry(np.full(4, 12.0 / params.wheel_radius), 0.0, 0.0)
        out = wheel_odometry_update(est, odo, params, np.eye(3) * 0.01, c=None)
        assert 10.0 < out.x[3] < 12.0 + 1e-9
        assert out.x[3] > 11.0  # strong measurement should dominate


class TestGnssFailover:
    def make_histories(self, top_gaps=(), t_end=5.0, rate=20.0):
        base = np.arange(0.0, t_end, 1.0 / rate)
        top = base
        for g0, g1 in top_gaps:
            top = top[(top < g0) | (top > g1)]
        return {"top": top, "side": base, "vectornav": base}

    def test_nominal_top_active(self):
        h = self.make_histories()
        active, dead = gnss_failover(h, 4.0)
        assert active == "top"
        assert not dead

    def test_gap_over_half_second_switches_to_side(self):
        h = self.make_histories(top_gaps=[(2.0, 2.6)])
        active, _ = gnss_failover(h, 2.58)
        assert active == "side"

    def test_short_gap_keeps_top(self):
        h = self.make_histories(top_gaps=[(2.0, 2.3)])
        active, _ = gnss_failover(h, 2.29)
        assert active == "top"

    def test_returns_to_top_after_rehab_dwell(self):
        h = self.make_histories(top_gaps=[(2.0, 2.6)])
        active, _ = gnss_failover(h, 2.9)
        assert active == "side"  # healthy again but still inside dwell
        active, _ = gnss_failover(h, 3.8)
        assert active == "top"

    def test_all_silent_flags_dead_reckoning(self):
        h = {"top": np.array([0.0]), "side": np.array([0.0]),
             "vectornav": np.array([0.0])}
        active, dead = gnss_failover(h, 3.0)
        assert active is None
        assert dead

    def test_incremental_machine_matches_pure_replay(self):
        h = self.make_histories(top_gaps=[(1.0, 1.7), (3.0, 3.2)])
        state = FailoverState()
        for tk in np.arange(0.0, 4.5, 0.01):
            state = failover_step(state, h, tk)
        replay_active, _ = gnss_failover(h, 4.49)
        assert state.active == replay_active


class TestJerkMetrics:
    def test_constant_velocity_is_zero(self):
        t = np.arange(0.0, 1.0, 0.01)
        xy = np.column_stack([3.0 * t, np.zeros_like(t)])
        psi = np.zeros_like(t)
        m = jerk_metrics(t, xy, psi)
        assert m.position == pytest.approx(0.0, abs=1e-9)
        assert m.heading == pytest.approx(0.0, abs=1e-9)

    def test_cubic_position(self):
        t = np.arange(0.0, 1.0, 0.01)
        xy = np.column_stack([t**3, np.zeros_like(t)])
        m = jerk_metrics(t, xy, np.zeros_like(t))
        assert m.position == pytest.approx(6.0, rel=1e-9)

    def test_noise_increases_metric(self, rng):
        t = np.arange(0.0, 2.0, 0.01)
        xy = np.column_stack([5.0 * t, np.zeros_like(t)])
        psi = 0.1 * t
        clean = jerk_metrics(t, xy, psi)
        noisy = jerk_metrics(t, xy + rng.normal(scale=0.01, size=xy.shape),
                             psi + rng.normal(scale=0.001, size=psi.shape))
        assert noisy.position > clean.position
        assert noisy.heading > clean.heading

    def test_non_uniform_timestamps_rejected(self):
        t = np.array([0.0, 0.01, 0.03, 0.06])
        xy = np.zeros((4, 2))
        with pytest.raises(ConfigurationError):
            jerk_metrics(t, xy, np.zeros(4))

    def test_deg_conversion(self):
        t = np.arange(0.0, 1.0, 0.01)
        xy = np.zeros((len(t), 2))
        m = jerk_metrics(t, xy, t**3)
        assert m.heading_deg == pytest.approx(np.degrees(m.heading))


class TestCovarianceLongRun:
    def test_spd_over_mixed_predict_update_steps(self, rng):
        est = fresh_state(0.1)
        q = np.full(STATE_DIM, 1e-4)
        h = np.zeros((3, STATE_DIM))
        h[:, 0:3] = np.eye(3)
        r = np.eye(3) * 0.05
        imu = ImuMeasurement(np.array([0.1, 0.0, 9.81]),
                             np.array([0.0, 0.0, 0.02]), 0.0)
        for i in range(100_000):
            est = eskf_predict(est, imu, 0.01, q)
            if i % 5 == 0:
                z = est.x[0:3] + rng.normal(scale=0.2, size=3)
                est = eskf_update(est, z, h, r, c=1.0)
            if i % 2000 == 0:
                assert np.linalg.eigvalsh(est.cov)[0] > 0
        assert np.linalg.eigvalsh(est.cov)[0] > 0
        assert np.allclose(est.cov, est.cov.T, atol=1e-9)
