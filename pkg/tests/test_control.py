import numpy as np
import pytest

from racestack.control import (
    AbsController,
    AccelToPedals,
    LateralMpc,
    LongitudinalConfig,
    LongitudinalPid,
    MpcConfig,
    MppiConfig,
    MppiController,
    PurePursuitConfig,
    lateral_error_model,
    mppi_update,
    mppi_weights,
    pure_pursuit,
    solve_qp_active_set,
    target_speed,
)
from racestack.errors import PathLostError
from racestack.track import Raceline
from racestack.vehicle import VehicleParams, VehicleState


def straight_line(length=500.0, step=1.0):
    s = np.arange(0.0, length, step)
    return Raceline(s=s, x=s.copy(), y=np.zeros_like(s),
                    heading=np.zeros_like(s), curvature=np.zeros_like(s),
                    v=np.full_like(s, 30.0), closed=False, length=float(s[-1]))


def circle_line(radius=50.0, n=2000, v=20.0):
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return Raceline(
        s=radius * th,
        x=radius * np.cos(th), y=radius * np.sin(th),
        heading=np.mod(th + np.pi / 2 + np.pi, 2 * np.pi) - np.pi,
        curvature=np.full(n, 1 / radius), v=np.full(n, v),
        closed=True, length=2 * np.pi * radius)


class TestPurePursuit:
    def test_aligned_on_straight_is_zero(self):
        cfg = PurePursuitConfig()
        line = straight_line()
        assert pure_pursuit((100.0, 0.0, 0.0), line, 20.0, cfg) == pytest.approx(0.0, abs=1e-12)

    def test_circle_steady_state_matches_chord_geometry(self):
        radius = 50.0
        wheelbase = 3.0
        cfg = PurePursuitConfig(wheelbase=wheelbase)
        line = circle_line(radius)
        # pose on the circle, tangent heading
        delta = pure_pursuit((radius, 0.0, np.pi / 2), line, 20.0, cfg)
        assert delta == pytest.approx(np.arctan(wheelbase / radius), abs=1e-2)

    def test_lookahead_clamp_at_low_speed(self):
        cfg = PurePursuitConfig()
        line = circle_line(50.0)
        slow = pure_pursuit((50.0, 0.0, np.pi / 2), line, 1.0, cfg)
        slower = pure_pursuit((50.0, 0.0, np.pi / 2), line, 0.2, cfg)
        assert slow == pytest.approx(slower, abs=1e-12)  # clamp active in both

    def test_scale_consistency(self):
        # scaling (wheelbase, radius, lookahead) together leaves delta unchanged
        d1 = pure_pursuit((50.0, 0.0, np.pi / 2), circle_line(50.0), 20.0,
                          PurePursuitConfig(wheelbase=3.0, lookahead_gain=0.5,
                                            lookahead_min=10.0, lookahead_max=10.0))
        d2 = pure_pursuit((100.0, 0.0, np.pi / 2), circle_line(100.0), 20.0,
                          PurePursuitConfig(wheelbase=6.0, lookahead_gain=1.0,
                                            lookahead_min=20.0, lookahead_max=20.0))
        assert d1 == pytest.approx(d2, abs=1e-9)

    def test_path_lost_far_from_line(self):
        cfg = PurePursuitConfig()
        with pytest.raises(PathLostError):
            pure_pursuit((0.0, 500.0, 0.0), straight_line(), 20.0, cfg)


class TestLongitudinalPid:
    def test_positive_error_throttles(self):
        pid = LongitudinalPid()
        throttle, brake = pid.step(20.0, 22.0, 0.01)
        assert throttle > 0 and brake == 0

    def test_deadband_coasts(self):
        pid = LongitudinalPid(LongitudinalConfig(deadband=0.05))
        v_target = 30.0
        throttle, brake = pid.step(v_target * 1.01, v_target, 0.01)
        assert (throttle, brake) == (0.0, 0.0)

    def test_beyond_deadband_brakes(self):
        pid = LongitudinalPid(LongitudinalConfig(deadband=0.05))
        v_target = 30.0
        throttle, brake = pid.step(v_target * 1.10, v_target, 0.01)
        assert throttle == 0.0 and brake > 0.0

    def test_regimes_partition_no_coactivation(self, rng):
        pid = LongitudinalPid()
        for _ in range(500):
            v_car = rng.uniform(0, 60)
            v_target = rng.uniform(0, 60)
            throttle, brake = pid.step(v_car, v_target, 0.01)
            assert not (throttle > 0 and brake > 0)
            assert 0 <= throttle <= 1 and 0 <= brake <= 1

    def test_integrator_resets_on_regime_change(self):
        pid = LongitudinalPid()
        for _ in range(100):
            pid.step(18.0, 20.0, 0.01)
        assert pid.throttle_pid.integral != 0.0
        pid.step(30.0, 20.0, 0.01)
        assert pid.throttle_pid.integral == 0.0


class TestAbs:
    def test_no_slip_passes_request_through(self):
        abs_ctrl = AbsController()
        out = abs_ctrl.step(0.7, np.zeros(4), 0.01)
        assert np.allclose(out, 0.7)

    def test_excess_slip_reduces_pressure(self):
        abs_ctrl = AbsController()
        out = abs_ctrl.step(0.9, np.array([0.3, 0.02, 0.02, 0.02]), 0.01)
        assert out[0] < 0.9
        assert np.allclose(out[1:], 0.9)

    def test_output_never_exceeds_request(self, rng):
        abs_ctrl = AbsController()
        for _ in range(300):
            req = rng.uniform(0, 1)
            lams = rng.uniform(0, 0.6, size=4)
            out = abs_ctrl.step(req, lams, 0.01)
            assert np.all(out <= req + 1e-12)
            assert np.all(out >= 0.0)


class TestLateralMpc:
    def test_zero_error_on_straight_returns_zero(self):
        mpc = LateralMpc(MpcConfig(), VehicleParams())
        line = straight_line()
        delta, diag = mpc.step((100.0, 0.0, 0.0), 25.0, 0.0, 0.0, line, None)
        assert diag["qp_status"] == "ok"
        assert abs(delta) < 1e-6

    def test_horizon_one_unconstrained_matches_least_squares(self):
        params = VehicleParams()
        cfg = MpcConfig(horizon=1, dt=0.05, steer_bound=10.0,
                        steer_rate_bound=10.0)
        mpc = LateralMpc(cfg, params)
        line = straight_line()
        pose = (100.0, 0.8, 0.05)   # offset left, heading error
        v_x, v_y, yaw_rate = 25.0, 0.2, 0.1
        delta, diag = mpc.step(pose, v_x, v_y, yaw_rate, line, None)

        # independent closed-form one-step least squares
        v_q = round(v_x / 0.5) * 0.5
        a_c, b_c, _ = lateral_error_model(v_q, params)
        a_d = np.eye(4) + a_c * cfg.dt
        b_d = b_c * cfg.dt
        fp_d = 0.8
        e0 = np.array([fp_d, v_y + v_x * np.sin(0.05) * np.cos(0.05) / np.cos(0.05),
                       0.05, yaw_rate])
        e0[1] = v_y * np.cos(0.05) + v_x * np.sin(0.05)
        q_mat = np.diag([cfg.q_offset, 0.0, cfg.q_heading, 0.0])
        num = b_d @ q_mat @ (a_d @ e0)
        den = b_d @ q_mat @ b_d + cfg.r_steer + cfg.r_steer_rate
        assert delta == pytest.approx(-num / den, abs=1e-6)

    def test_constraints_respected_exactly(self):
        cfg = MpcConfig(horizon=10, steer_bound=0.1, steer_rate_bound=0.02)
        mpc = LateralMpc(cfg, VehicleParams())
        line = straight_line()
        delta, diag = mpc.step((100.0, 4.0, 0.3), 30.0, 0.0, 0.0, line, None)
        seq = diag["sequence"]
        assert np.all(np.abs(seq) <= cfg.steer_bound + 1e-9)
        steps = np.diff(np.concatenate([[0.0], seq]))
        assert np.all(np.abs(steps) <= cfg.steer_rate_bound + 1e-9)
        assert delta == pytest.approx(seq[0])

    def test_cost_not_worse_than_zero_sequence(self):
        params = VehicleParams()
        cfg = MpcConfig()
        mpc = LateralMpc(cfg, params)
        line = straight_line()
        pose = (100.0, 1.5, -0.1)
        delta, diag = mpc.step(pose, 25.0, 0.0, 0.0, line, None)
        seq = diag["sequence"]

        def rollout_cost(u_seq):
            v_q = round(25.0 / 0.5) * 0.5
            a_c, b_c, _ = lateral_error_model(v_q, params)
            a_d = np.eye(4) + a_c * cfg.dt
            b_d = b_c * cfg.dt
            fp = diag["frenet"]
            e = np.array([fp.d, 0.0 * np.cos(fp.heading_error)
                          + 25.0 * np.sin(fp.heading_error),
                          fp.heading_error, 0.0])
            q_mat = np.diag([cfg.q_offset, 0.0, cfg.q_heading, 0.0])
            cost = 0.0
            prev = 0.0
            for u in u_seq:
                e = a_d @ e + b_d * u
                cost += e @ q_mat @ e + cfg.r_steer * u**2 \
                    + cfg.r_steer_rate * (u - prev) ** 2
                prev = u
            return cost

        assert rollout_cost(seq) <= rollout_cost(np.zeros(cfg.horizon)) + 1e-9


class TestQpSolver:
    def test_matches_projected_solution_on_box(self, rng):
        for _ in range(20):
            n = 6
            m = rng.normal(size=(n, n))
            h_mat = m @ m.T + np.eye(n)
            g_vec = rng.normal(size=n)
            bound = 0.5
            g_ineq = np.vstack([np.eye(n), -np.eye(n)])
            h_ineq = np.full(2 * n, bound)
            u, ok = solve_qp_active_set(h_mat, g_vec, g_ineq, h_ineq,
                                        np.zeros(n))
            assert ok
            # KKT check: projected gradient vanishes
            grad = h_mat @ u + g_vec
            for i in range(n):
                if u[i] >= bound - 1e-9:
                    assert grad[i] <= 1e-6
                elif u[i] <= -bound + 1e-9:
                    assert grad[i] >= -1e-6
                else:
                    assert abs(grad[i]) < 1e-6


def finite_horizon_lqr(a, b, q, r, n):
    """Backward Riccati recursion; returns the first-step feedback gain."""
    p = q.copy()
    for _ in range(n):
        k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
        p = q + a.T @ p @ (a - b @ k)
    return k


class TestMppi:
    def make_controller(self, **kw):
        cfg = MppiConfig(**kw)
        return MppiController(cfg, VehicleParams())

    def rolling(self, v=20.0):
        return VehicleState(x=100.0, y=0.5, yaw=0.02, v_x=v,
                            omega=np.full(4, v / 0.3), gear=3)

    def test_zero_noise_returns_nominal(self):
        ctrl = self.make_controller(noise_std=(0.0, 0.0), rollouts=8)
        nominal = np.column_stack([np.linspace(1.0, 2.0, ctrl.cfg.horizon),
                                   np.full(ctrl.cfg.horizon, 0.03)])
        ctrl.nominal = nominal.copy()
        line = straight_line()
        a_cmd, steer, diag = ctrl.step(self.rolling(), line, None, seed=1, tick=0)
        assert a_cmd == pytest.approx(nominal[0, 0])
        assert steer == pytest.approx(nominal[0, 1])

    def test_weights_sum_to_one_and_permutation_equivariant(self, rng):
        costs = rng.uniform(0, 50, size=64)
        w = mppi_weights(costs, 1.0)
        assert np.sum(w) == pytest.approx(1.0)
        perm = rng.permutation(64)
        assert np.allclose(mppi_weights(costs[perm], 1.0), w[perm])

    def test_matches_lqr_on_linear_quadratic_problem(self):
        dt = 0.1
        a = np.array([[1.0, dt], [0.0, 1.0]])
        b = np.array([[0.0], [dt]])
        q = np.diag([4.0, 1.0])
        r = np.array([[0.5]])
        horizon = 25
        x0 = np.array([2.0, 0.0])

        k_gain = finite_horizon_lqr(a, b, q, r, horizon)
        u_lqr = float((-k_gain @ x0)[0])

        def costs_of(seqs):
            k_n = seqs.shape[0]
            x = np.tile(x0, (k_n, 1))
            total = np.zeros(k_n)
            for k in range(horizon):
                u = seqs[:, k, 0]
                total += np.einsum("ki,ij,kj->k", x, q, x) + r[0, 0] * u**2
                x = x @ a.T + np.outer(u, b[:, 0])
            total += np.einsum("ki,ij,kj->k", x, q, x)
            return total

        rng_gen = np.random.default_rng(7)
        nominal = np.zeros((horizon, 1))
        for _ in range(60):
            noise = rng_gen.normal(scale=0.4, size=(512, horizon, 1))
            costs = costs_of(nominal[None] + noise)
            nominal = mppi_update(nominal, noise, costs, 0.2)
        assert nominal[0, 0] == pytest.approx(u_lqr, rel=0.10)

    def test_parallel_and_serial_rollouts_identical(self):
        line = straight_line()
        outs = []
        for parallel in (True, False):
            ctrl = self.make_controller(parallel=parallel, rollouts=32)
            outs.append(ctrl.step(self.rolling(), line, None, seed=5, tick=3))
        assert outs[0][0] == outs[1][0]
        assert outs[0][1] == outs[1][1]

    def test_replay_deterministic(self):
        line = straight_line()
        results = []
        for _ in range(2):
            ctrl = self.make_controller(rollouts=48)
            seq = []
            for tick in range(10):
                a_cmd, steer, _ = ctrl.step(self.rolling(), line, None,
                                            seed=11, tick=tick)
                seq.append((a_cmd, steer))
            results.append(seq)
        assert results[0] == results[1]


class TestAccelToPedals:
    def test_positive_accel_throttles(self):
        conv = AccelToPedals()
        throttle, brake = conv.step(3.0, 3.0, 0.01)
        assert throttle > 0 and brake == 0

    def test_negative_accel_brakes(self):
        conv = AccelToPedals()
        throttle, brake = conv.step(-5.0, -5.0, 0.01)
        assert brake > 0 and throttle == 0


class TestTargetSpeed:
    def test_cap_min_rule(self):
        assert target_speed(30.0, 40.0) == 30.0

    def test_follow_mode_acc_dominates(self):
        assert target_speed(30.0, 40.0, acc_output=20.0, mode="follow") == 20.0

    def test_literal_max_rule(self):
        assert target_speed(30.0, 40.0, rule="literal_max") == 40.0

    def test_attack_ignores_acc(self):
        assert target_speed(30.0, 40.0, acc_output=20.0, mode="attack") == 30.0
