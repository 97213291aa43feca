"""Finite-horizon backward induction against constant-speed traffic.

The ego state is (lane, integer speed 0..30, half-meter position offset from
its start); the 7 driving actions map states exactly onto this grid (speeds
stay integer, displacements (v+v')/2 are half-meter multiples).  The stage
cost is the negated driving reward evaluated on the post-step state, with
obstacle penalties computed from exact predicted gaps inside the same
[-60, +100] m window the policy senses.  Lane changes obey the same
masking as the agent; collision states are costed, never pruned.

Value slices are swept backward two at a time; the argmin table for every
step is kept for trajectory extraction.  The brute-force oracle shares the
tabulated stage costs (same objective, same dynamics) and independently
re-implements enumeration, masking, and minimization, so value agreement is
exact in floating point.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .actions import ACCELERATION, Action, is_lane_change, lane_shift
from .reward import RewardConfig
from .simulation import (SENSE_AHEAD, SENSE_BEHIND, SimConfig, SimMode,
                         WorldState, step)

V_MAX = 30          # speed grid 0..30 m/s, 1 m/s steps
POS_STEP = 0.5      # m
ORACLE_MAX_HORIZON = 6


@dataclass
class DpGrid:
    horizon: int = 60
    n_lanes: int = 3
    v_max: int = V_MAX
    pos_step: float = POS_STEP

    @property
    def n_speeds(self) -> int:
        return self.v_max + 1

    @property
    def n_pos(self) -> int:
        # Max displacement per step is v_max m = 2*v_max half-steps.
        return 2 * self.v_max * self.horizon + 1


@dataclass
class DpScenario:
    """Ego start plus deterministic per-step obstacle positions."""

    ego_lane: int
    ego_v: int              # rounded onto the speed grid
    ego_x: float            # absolute rear-bumper position at t=0
    ego_length: float
    obstacles: list         # obstacles[t] = list of (lane, x, v, length), t=0..horizon


@dataclass
class StageTables:
    """Tabulated stage costs and lane-change blocks shared by solver and oracle."""

    grid: DpGrid
    scenario: DpScenario
    reward_cfg: RewardConfig
    stage_pen: np.ndarray         # (horizon, lanes, pos): obstacle cost at t+1
    change_blocked: np.ndarray    # (horizon, lanes, pos) bool: overlap at t


@dataclass
class ValueTable:
    tables: StageTables
    argmin: np.ndarray            # (horizon, lanes, speeds, pos) int8
    v0: np.ndarray                # value slice at t=0
    values: Optional[list] = None   # all slices when keep_values was set

    @property
    def grid(self) -> DpGrid:
        return self.tables.grid

    @property
    def scenario(self) -> DpScenario:
        return self.tables.scenario

    def value_at_start(self) -> float:
        sc = self.scenario
        return float(self.v0[sc.ego_lane, sc.ego_v, 0])


def rollout_obstacles(world: WorldState, horizon: int, config: SimConfig) -> list:
    """Per-step obstacle table for t = 0..horizon from the world at ego entry.

    The ego is replaced by an uncontrolled constant-speed phantom so the
    entry guard resolves exactly as in the real scenario; the phantom itself
    is not reported.
    """
    if config.mode is not SimMode.CONSTANT_SPEED:
        raise ValueError("the DP benchmark requires ConstantSpeed mode")
    w = world.copy()
    ego_id = w.ego_id
    for veh in w.vehicles:
        if veh.id == ego_id:
            veh.controlled = False
    table = []
    for t in range(horizon + 1):
        table.append([(v.lane, v.x, v.v, v.length)
                      for v in w.vehicles if v.id != ego_id])
        if t < horizon:
            step(w, None, config)
    return table


def _obstacle_cost_row(ex: np.ndarray, ego_len: float, obstacles, lane: int,
                       cfg: RewardConfig) -> np.ndarray:
    """w1 * sum f + w3 * #collisions over the ego position grid, one lane."""
    pen = np.zeros_like(ex)
    for (olane, ox, _ov, olen) in obstacles:
        if olane != lane:
            continue
        rel = ox - ex
        in_win = (rel >= -SENSE_BEHIND) & (rel <= SENSE_AHEAD)
        if not in_win.any():
            continue
        gap = np.where(ox >= ex, ox - (ex + ego_len), ex - (ox + olen))
        gap = np.maximum(gap, 0.0)
        f = np.exp(-(gap - cfg.delta_0))
        pen += in_win * (cfg.w1 * f + cfg.w3 * (f >= 1.0))
    return pen


def _overlap_row(ex: np.ndarray, ego_len: float, obstacles, lane: int) -> np.ndarray:
    blocked = np.zeros(ex.shape, dtype=bool)
    for (olane, ox, _ov, olen) in obstacles:
        if olane != lane:
            continue
        blocked |= (ox < ex + ego_len) & (ox + olen > ex)
    return blocked


def _speed_after(v: int, action: Action, v_max: int) -> Optional[int]:
    a = int(ACCELERATION[action])
    v2 = v + a
    if v2 > v_max:
        return None          # accel masked at the grid edge
    return max(v2, 0)


def build_stage_tables(scenario: DpScenario, grid: DpGrid,
                       reward_cfg: RewardConfig) -> StageTables:
    if not 0 <= scenario.ego_lane < grid.n_lanes:
        raise ValueError(f"initial lane {scenario.ego_lane} off the grid")
    if not 0 <= scenario.ego_v <= grid.v_max or \
            scenario.ego_v != int(scenario.ego_v):
        raise ValueError(f"initial speed {scenario.ego_v} off the grid")
    if len(scenario.obstacles) < grid.horizon + 1:
        raise ValueError("obstacle table shorter than the horizon")

    h = grid.horizon
    n_pos = grid.n_pos
    ex = scenario.ego_x + POS_STEP * np.arange(n_pos)
    stage_pen = np.empty((h, grid.n_lanes, n_pos))
    change_blocked = np.empty((h, grid.n_lanes, n_pos), dtype=bool)
    for t in range(h):
        for lane in range(grid.n_lanes):
            stage_pen[t, lane] = _obstacle_cost_row(
                ex, scenario.ego_length, scenario.obstacles[t + 1], lane,
                reward_cfg)
            change_blocked[t, lane] = _overlap_row(
                ex, scenario.ego_length, scenario.obstacles[t], lane)
    return StageTables(grid=grid, scenario=scenario, reward_cfg=reward_cfg,
                       stage_pen=stage_pen, change_blocked=change_blocked)


def solve(scenario: DpScenario, grid: DpGrid, reward_cfg: RewardConfig,
          keep_values: bool = False) -> ValueTable:
    """Backward induction over the full (lane, speed, position) grid."""
    tables = build_stage_tables(scenario, grid, reward_cfg)
    stage_pen = tables.stage_pen
    change_blocked = tables.change_blocked
    h = grid.horizon
    n_pos = grid.n_pos

    v_next = np.zeros((grid.n_lanes, grid.n_speeds, n_pos))
    argmin = np.empty((h, grid.n_lanes, grid.n_speeds, n_pos), dtype=np.int8)
    values = [v_next] if keep_values else None

    for t in range(h - 1, -1, -1):
        cand = np.full((len(Action), grid.n_lanes, grid.n_speeds, n_pos), np.inf)
        for action in Action:
            for lane in range(grid.n_lanes):
                lane2 = lane + lane_shift(action)
                if lane2 < 0 or lane2 >= grid.n_lanes:
                    continue
                lane_cost = reward_cfg.w5 if lane2 != lane else 0.0
                for v in range(grid.n_speeds):
                    v2 = _speed_after(v, action, grid.v_max)
                    if v2 is None:
                        continue
                    const = (reward_cfg.w2 * (v2 - reward_cfg.v_d) ** 2
                             + reward_cfg.w4 * (v2 - v) ** 2 + lane_cost)
                    shift = v + v2          # displacement in half-meter units
                    stop = n_pos - shift
                    # Stage first, value second: the scalar replay in
                    # stage_and_successor must round identically.
                    row = ((stage_pen[t, lane2, shift:] + const)
                           + v_next[lane2, v2, shift:])
                    if is_lane_change(action):
                        row = np.where(change_blocked[t, lane2, :stop],
                                       np.inf, row)
                    cand[action, lane, v, :stop] = row
        argmin[t] = cand.argmin(axis=0)
        v_next = cand.min(axis=0)
        if keep_values:
            values.insert(0, v_next)

    return ValueTable(tables=tables, argmin=argmin, v0=v_next, values=values)


def action_permitted(tables: StageTables, t: int, lane: int, v: int, xi: int,
                     action: Action) -> bool:
    grid = tables.grid
    lane2 = lane + lane_shift(action)
    if lane2 < 0 or lane2 >= grid.n_lanes:
        return False
    if _speed_after(v, action, grid.v_max) is None:
        return False
    if is_lane_change(action) and tables.change_blocked[t, lane2, xi]:
        return False
    return True


def stage_and_successor(tables: StageTables, t: int, lane: int, v: int,
                        xi: int, action: Action):
    """Scalar stage cost and successor state; mirrors the sweep bit-for-bit."""
    grid = tables.grid
    cfg = tables.reward_cfg
    lane2 = lane + lane_shift(action)
    v2 = _speed_after(v, action, grid.v_max)
    const = (cfg.w2 * (v2 - cfg.v_d) ** 2 + cfg.w4 * (v2 - v) ** 2
             + (cfg.w5 if lane2 != lane else 0.0))
    xi2 = xi + v + v2
    cost = float(tables.stage_pen[t, lane2, xi2] + const)
    return cost, (lane2, v2, xi2)


@dataclass
class TrajectoryPoint:
    t: int
    lane: int
    v: int
    x: float            # absolute position
    action: Optional[Action]   # action taken at t (None at the final point)
    stage_cost: float = 0.0


def extract_trajectory(table: ValueTable):
    """Greedy argmin descent; returns (points, total_cost).

    The cost is folded back to front so its rounding matches the Bellman
    recursion exactly.
    """
    grid = table.grid
    sc = table.scenario
    lane, v, xi = sc.ego_lane, sc.ego_v, 0
    points = []
    stages = []
    for t in range(grid.horizon):
        action = Action(int(table.argmin[t, lane, v, xi]))
        cost, (lane2, v2, xi2) = stage_and_successor(
            table.tables, t, lane, v, xi, action)
        points.append(TrajectoryPoint(t=t, lane=lane, v=v,
                                      x=sc.ego_x + POS_STEP * xi,
                                      action=action, stage_cost=cost))
        stages.append(cost)
        lane, v, xi = lane2, v2, xi2
    points.append(TrajectoryPoint(t=grid.horizon, lane=lane, v=v,
                                  x=sc.ego_x + POS_STEP * xi, action=None))
    total = 0.0
    for cost in reversed(stages):
        total = cost + total
    return points, total


def brute_force_oracle(scenario: DpScenario, horizon: int,
                       reward_cfg: RewardConfig):
    """Exhaustive minimum over all permitted action sequences (horizon <= 6).

    Returns (optimal value, action tuple).  Shares the stage-cost tables with
    solve but never consults its value or argmin arrays.
    """
    if horizon > ORACLE_MAX_HORIZON:
        raise ValueError(f"oracle horizon limited to {ORACLE_MAX_HORIZON}, "
                         f"got {horizon}")
    grid = DpGrid(horizon=horizon)
    tables = build_stage_tables(scenario, grid, reward_cfg)

    def best(t, lane, v, xi):
        if t == horizon:
            return 0.0, ()
        best_val = math.inf
        best_seq = None
        for action in Action:
            if not action_permitted(tables, t, lane, v, xi, action):
                continue
            cost, (lane2, v2, xi2) = stage_and_successor(
                tables, t, lane, v, xi, action)
            sub_val, sub_seq = best(t + 1, lane2, v2, xi2)
            total = cost + sub_val
            if total < best_val:
                best_val = total
                best_seq = (action,) + sub_seq
        return best_val, best_seq

    return best(0, scenario.ego_lane, scenario.ego_v, 0)
