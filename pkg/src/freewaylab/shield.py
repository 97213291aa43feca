"""Evaluation-time safety rules: minimum time gap and lane-change vetoes.

The rules see only what the policy sees (measured positions, estimated
speeds).  A proposed longitudinal action is overridden by maximum
deceleration while the time gap to a slower leader violates rho_s =
2(v_e - v_l)/d_max; a lane change is vetoed unless the new-lane leader's
time gap clears rho_s and the new-lane follower is not faster, with KEEP
substituted and re-checked longitudinally on veto.
"""

import math
from dataclasses import dataclass

from .actions import Action, is_lane_change, lane_shift
from .simulation import SensedEnvironment


@dataclass
class SafetyConfig:
    d_max: float = 2.0   # maximum feasible ego deceleration (m/s^2)

    def __post_init__(self):
        if self.d_max <= 0:
            raise ValueError("d_max must be > 0")


def min_time_gap(v_e: float, v_l: float, d_max: float) -> float:
    """rho_s in seconds; 0 when the ego is not faster than the leader."""
    if v_e <= v_l:
        return 0.0
    return 2.0 * (v_e - v_l) / d_max


def _override_action(cfg: SafetyConfig) -> Action:
    # Strongest available deceleration not exceeding d_max (d_max defaults to
    # 2, matching DECEL_2 exactly).
    return Action.DECEL_2 if cfg.d_max >= 2.0 else Action.DECEL_1


def _leader_in_lane(sensed: SensedEnvironment, lane: int):
    leader = None
    for n in sensed.neighbors:
        if n.lane != lane or n.rel_x <= 0:
            continue
        if leader is None or n.rel_x < leader.rel_x:
            leader = n
    return leader


def _follower_in_lane(sensed: SensedEnvironment, lane: int):
    follower = None
    for n in sensed.neighbors:
        if n.lane != lane or n.rel_x > 0:
            continue
        if follower is None or n.rel_x > follower.rel_x:
            follower = n
    return follower


def _time_gap_to(sensed: SensedEnvironment, leader) -> float:
    gap = max(leader.rel_x - sensed.ego_length, 0.0)
    if sensed.ego_v <= 0:
        return math.inf
    return gap / sensed.ego_v


def check_longitudinal(sensed: SensedEnvironment, action: Action,
                       cfg: SafetyConfig) -> Action:
    """Pass the action through unless the leader time gap violates rho_s."""
    leader = _leader_in_lane(sensed, sensed.ego_lane)
    if leader is None:
        return action
    v_l = leader.v if leader.v is not None else 0.0
    rho_s = min_time_gap(sensed.ego_v, v_l, cfg.d_max)
    if rho_s > 0 and _time_gap_to(sensed, leader) <= rho_s:
        return _override_action(cfg)
    return action


def _overlaps_ego(sensed: SensedEnvironment, n) -> bool:
    return n.rel_x < sensed.ego_length and n.rel_x + n.length > 0


def check_lane_change(sensed: SensedEnvironment, action: Action,
                      cfg: SafetyConfig) -> Action:
    """Permit the change only when both new-lane rules hold; otherwise KEEP
    (re-checked longitudinally)."""
    target = sensed.ego_lane + lane_shift(action)
    ok = 0 <= target < sensed.n_lanes
    if ok:
        for n in sensed.neighbors:
            if n.lane == target and _overlaps_ego(sensed, n):
                ok = False
                break
    if ok:
        follower = _follower_in_lane(sensed, target)
        if follower is not None:
            v_f = follower.v if follower.v is not None else 0.0
            if v_f > sensed.ego_v:
                ok = False
    if ok:
        leader = _leader_in_lane(sensed, target)
        if leader is not None:
            v_l = leader.v if leader.v is not None else 0.0
            rho_s = min_time_gap(sensed.ego_v, v_l, cfg.d_max)
            if not _time_gap_to(sensed, leader) > rho_s:
                ok = False
    if ok:
        return action
    return check_longitudinal(sensed, Action.KEEP, cfg)


def shield(sensed: SensedEnvironment, action: Action,
           cfg: SafetyConfig) -> Action:
    """Route lane changes and longitudinal actions to their checks."""
    action = Action(action)
    if is_lane_change(action):
        return check_lane_change(sensed, action, cfg)
    return check_longitudinal(sensed, action, cfg)
