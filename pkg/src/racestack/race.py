"""Behavioral race logic: Follow/Attack arbitration, the ACC gap law, and
race-control command handling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

FOLLOW = "follow"
ATTACK = "attack"


@dataclass(frozen=True)
class RaceCommand:
    v_max_operator: float = 30.0
    attack_permitted: bool = False
    emergency_stop: bool = False
    timestamp: float = 0.0

    def __post_init__(self):
        if self.v_max_operator < 0:
            raise ConfigurationError("operator speed cap must be non-negative")


@dataclass(frozen=True)
class AccParams:
    d_0: float = 20.0        # target separation, m
    tau_des: float = 1.2     # desired time gap, s
    k_d: float = 0.35        # gain, 1/s
    rate_limit: float = 4.0  # output slew, m/s per s
    range_max: float = 120.0  # engage ACC only inside this gap

    def __post_init__(self):
        if self.d_0 <= 0 or self.tau_des < 0 or self.k_d <= 0:
            raise ConfigurationError("invalid ACC parameters")


@dataclass(frozen=True)
class BehaviorState:
    mode: str                # FOLLOW or ATTACK
    reason: str


def acc_desired_velocity(v_l: float, v_e: float, d: float,
                         p: AccParams) -> float:
    """Preliminary desired speed holding d_0 plus a closing-speed time gap."""
    if d < 0:
        raise ConfigurationError("gap must be non-negative")
    target_gap = p.d_0 + max(0.0, p.tau_des * (v_e - v_l))
    return max(v_l + p.k_d * (d - target_gap), 0.0)


class AccController:
    """Rate-limited wrapper around the gap law."""

    def __init__(self, params: AccParams | None = None):
        self.params = params or AccParams()
        self.output: float | None = None

    def reset(self):
        self.output = None

    def step(self, v_l: float, v_e: float, d: float, dt: float) -> float:
        raw = acc_desired_velocity(v_l, v_e, d, self.params)
        if self.output is None:
            self.output = raw
        else:
            slew = self.params.rate_limit * dt
            self.output = float(np.clip(raw, self.output - slew,
                                        self.output + slew))
        return self.output


def behavior_step(opponent, cmd: RaceCommand, opponent_ahead: bool = True,
                  gap: float | None = None,
                  acc_range: float = 120.0) -> BehaviorState:
    """Mode arbitration: emergency stop dominates, Attack requires both the
    permission and a tracked opponent, everything else is Follow."""
    if cmd.emergency_stop:
        return BehaviorState(mode=FOLLOW, reason="emergency_stop")
    if opponent is None:
        return BehaviorState(mode=FOLLOW, reason="free_run")
    if cmd.attack_permitted:
        return BehaviorState(mode=ATTACK, reason="attack_authorized")
    if opponent_ahead and (gap is None or gap <= acc_range):
        return BehaviorState(mode=FOLLOW, reason="opponent_ahead")
    return BehaviorState(mode=FOLLOW, reason="opponent_out_of_range")


def gap_curvilinear(ego_fp, opp_fp, track_length: float,
                    closed: bool = True) -> float:
    """Forward arc-length gap from ego to opponent, wrapped on closed tracks."""
    raw = opp_fp.s - ego_fp.s
    if closed:
        return float(np.mod(raw, track_length))
    return float(raw)
