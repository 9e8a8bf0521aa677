import numpy as np
import pytest

from racestack.perception import OpponentTrack
from racestack.race import (
    ATTACK,
    FOLLOW,
    AccController,
    AccParams,
    RaceCommand,
    acc_desired_velocity,
    behavior_step,
    gap_curvilinear,
)
from racestack.track import FrenetPose


def opponent_track():
    return OpponentTrack(pose=np.array([50.0, 0.0, 0.0]),
                         velocity=np.array([15.0, 0.0]), cov=np.eye(6))


class TestAccDesiredVelocity:
    def test_equilibrium_holds_leader_speed(self):
        p = AccParams(d_0=40.0, tau_des=1.5, k_d=0.5)
        assert acc_desired_velocity(20.0, 20.0, 40.0, p) == pytest.approx(20.0)

    def test_formula_evaluation(self):
        p = AccParams(d_0=40.0, tau_des=1.5, k_d=0.5)
        # 20 + 0.5 * (60 - (40 + 1.5*(25-20))) = 26.25
        assert acc_desired_velocity(20.0, 25.0, 60.0, p) == pytest.approx(26.25)

    def test_time_gap_clamps_at_zero_when_slower(self):
        p = AccParams(d_0=40.0, tau_des=1.5, k_d=0.5)
        v = acc_desired_velocity(20.0, 15.0, 60.0, p)
        assert v == pytest.approx(20.0 + 0.5 * (60.0 - 40.0))

    def test_monotone_in_gap(self):
        p = AccParams()
        gaps = np.linspace(0.0, 120.0, 40)
        vals = [acc_desired_velocity(18.0, 20.0, d, p) for d in gaps]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_clamped_below_at_zero(self):
        p = AccParams(d_0=60.0, k_d=1.0)
        assert acc_desired_velocity(2.0, 2.0, 0.0, p) == 0.0


class TestAccController:
    def test_rate_limit(self):
        ctrl = AccController(AccParams(rate_limit=4.0))
        first = ctrl.step(20.0, 20.0, 20.0, 0.01)
        out = ctrl.step(20.0, 20.0, 90.0, 0.01)
        assert out - first <= 4.0 * 0.01 + 1e-12


class TestBehaviorStep:
    def test_follow_when_attack_not_permitted(self):
        state = behavior_step(opponent_track(), RaceCommand(attack_permitted=False))
        assert state.mode == FOLLOW

    def test_attack_when_permitted_and_tracked(self):
        state = behavior_step(opponent_track(), RaceCommand(attack_permitted=True))
        assert state.mode == ATTACK

    def test_no_opponent_free_run(self):
        state = behavior_step(None, RaceCommand(attack_permitted=True))
        assert state.mode == FOLLOW
        assert state.reason == "free_run"

    def test_emergency_stop_dominates(self):
        state = behavior_step(opponent_track(),
                              RaceCommand(attack_permitted=True,
                                          emergency_stop=True))
        assert state.reason == "emergency_stop"

    def test_attack_never_without_permission(self, rng):
        # fuzzed command stream safety property
        for _ in range(500):
            cmd = RaceCommand(
                v_max_operator=float(rng.uniform(0, 80)),
                attack_permitted=bool(rng.uniform() < 0.5),
                emergency_stop=bool(rng.uniform() < 0.2))
            opp = opponent_track() if rng.uniform() < 0.7 else None
            state = behavior_step(opp, cmd, opponent_ahead=bool(rng.uniform() < 0.8),
                                  gap=float(rng.uniform(0, 300)))
            if state.mode == ATTACK:
                assert cmd.attack_permitted and opp is not None
                assert not cmd.emergency_stop


class TestGapCurvilinear:
    def fp(self, s):
        return FrenetPose(s=s, d=0.0, heading_error=0.0)

    def test_same_s_is_zero(self):
        assert gap_curvilinear(self.fp(10.0), self.fp(10.0), 1000.0) == 0.0

    def test_plain_subtraction(self):
        assert gap_curvilinear(self.fp(10.0), self.fp(60.0), 1000.0) == 50.0

    def test_wraparound(self):
        length = 1000.0
        assert gap_curvilinear(self.fp(length - 10.0), self.fp(20.0), length) == pytest.approx(30.0)
