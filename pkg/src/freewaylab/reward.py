"""Scalar reward of the driving policy: weighted sum of penalty terms.

Terms: exponential proximity penalty per same-lane obstacle, quadratic
deviation from the desired speed, a collision indicator, quadratic speed
change, and a lane-change indicator.  The total is always <= 0.
"""

import math
from dataclasses import dataclass


@dataclass
class RewardConfig:
    w1: float = 1.0     # obstacle proximity
    w2: float = 0.5     # desired-speed deviation
    w3: float = 20.0    # collision indicator
    w4: float = 0.01    # acceleration
    w5: float = 0.01    # lane change
    delta_0: float = 10.0   # minimum safe distance (m); f(delta_0) = 1
    v_d: float = 21.0       # ego desired speed (m/s)


@dataclass
class Obstacle:
    """A sensed vehicle, described by its bumper-to-bumper gap to the ego."""

    gap: float   # m, >= 0 (overlaps are clamped to 0 by callers)
    lane: int


@dataclass
class RewardBreakdown:
    obstacle_sum: float
    speed_term: float
    collision_count: int
    accel_term: float
    lane_term: float
    total: float


def obstacle_penalty(gap: float, ego_lane: int, obstacle_lane: int,
                     delta_0: float = 10.0) -> float:
    """exp(-(gap - delta_0)) for same-lane obstacles, 0 otherwise."""
    if ego_lane != obstacle_lane:
        return 0.0
    return math.exp(-(gap - delta_0))


def speed_penalty(v: float, v_d: float) -> float:
    return (v - v_d) ** 2


def accel_penalty(v_t: float, v_prev: float) -> float:
    return (v_t - v_prev) ** 2


def lane_penalty(l_t: int, l_prev: int) -> float:
    return 1.0 if l_t != l_prev else 0.0


def total_reward(obstacles, v_t, v_prev, l_t, l_prev, cfg: RewardConfig) -> RewardBreakdown:
    """Reward of the post-action state.

    ``obstacles`` are the vehicles sensed after the step; ``v_t``/``l_t`` the
    new ego speed and lane, ``v_prev``/``l_prev`` the pre-action ones.
    """
    obstacle_sum = 0.0
    collisions = 0
    for ob in obstacles:
        f = obstacle_penalty(ob.gap, l_t, ob.lane, cfg.delta_0)
        obstacle_sum += f
        if f >= 1.0:
            collisions += 1
    speed = speed_penalty(v_t, cfg.v_d)
    accel = accel_penalty(v_t, v_prev)
    lane = lane_penalty(l_t, l_prev)
    total = -(cfg.w1 * obstacle_sum + cfg.w2 * speed + cfg.w3 * collisions
              + cfg.w4 * accel + cfg.w5 * lane)
    return RewardBreakdown(obstacle_sum, speed, collisions, accel, lane, total)
