"""Discrete action set of the driving policy.

Seven high-level goals, each executed over one 1-second decision interval.
KEEP is deliberately the last member: the safety rules substitute it when a
lane change is vetoed.
"""

from enum import IntEnum


class Action(IntEnum):
    CHANGE_LEFT = 0
    CHANGE_RIGHT = 1
    ACCEL_1 = 2   # +1 m/s^2
    ACCEL_2 = 3   # +2 m/s^2
    DECEL_1 = 4   # -1 m/s^2
    DECEL_2 = 5   # -2 m/s^2
    KEEP = 6


N_ACTIONS = len(Action)

# Longitudinal acceleration applied over the 1 s interval; lane changes and
# KEEP leave speed untouched.
ACCELERATION = {
    Action.CHANGE_LEFT: 0.0,
    Action.CHANGE_RIGHT: 0.0,
    Action.ACCEL_1: 1.0,
    Action.ACCEL_2: 2.0,
    Action.DECEL_1: -1.0,
    Action.DECEL_2: -2.0,
    Action.KEEP: 0.0,
}

# Lane index delta (lane 0 is the leftmost lane).
LANE_SHIFT = {
    Action.CHANGE_LEFT: -1,
    Action.CHANGE_RIGHT: 1,
}


def lane_shift(action: Action) -> int:
    return LANE_SHIFT.get(action, 0)


def is_lane_change(action: Action) -> bool:
    return action in LANE_SHIFT
