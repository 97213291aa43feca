"""Microscopic simulation of a straight 3-lane freeway.

Vehicles enter at x=0 on a periodic schedule with random lane and speed, and
drive in one of two modes:

* ConstantSpeed: manual vehicles keep their entry speed and lane forever
  (the disturbance-free world the DP benchmark assumes).
* CarFollowing: manual vehicles follow a simplified Krauss-style rule with
  a safe-speed bound, driver imperfection sigma, and opportunistic lane
  changes guarded by the same time-gap rules the safety shield uses.

Positions are rear-bumper longitudinal coordinates on an effectively
infinite road; nobody exits during an episode.  All randomness flows through
seeded numpy generators, so identical (config, seed) pairs reproduce
bit-identical worlds.
"""

import copy
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .actions import ACCELERATION, Action, is_lane_change, lane_shift

DT = 1.0                  # decision interval (s)
SENSE_BEHIND = 60.0       # sensing window behind the ego (m)
SENSE_AHEAD = 100.0       # sensing window ahead of the ego (m)


class SimMode(Enum):
    CONSTANT_SPEED = "constant_speed"
    CAR_FOLLOWING = "car_following"


class VehicleKind(Enum):
    MANUAL_SLOW = "manual_slow"
    MANUAL_FAST = "manual_fast"
    TRUCK = "truck"
    BUS = "bus"
    MOTORCYCLE = "motorcycle"
    EGO = "ego"


@dataclass
class KindSpec:
    fraction: float
    length: float
    desired_v: float


# Passenger cars 5 m, trucks/buses 12 m, motorcycles 2 m.
DEFAULT_KIND_MIX = {
    VehicleKind.MANUAL_SLOW: KindSpec(0.5, 5.0, 16.0),
    VehicleKind.MANUAL_FAST: KindSpec(0.5, 5.0, 25.0),
}

# Mix with vehicle types unseen during training (trucks, buses, motorcycles).
MIXED_KIND_MIX = {
    VehicleKind.MANUAL_SLOW: KindSpec(0.40, 5.0, 16.0),
    VehicleKind.MANUAL_FAST: KindSpec(0.40, 5.0, 25.0),
    VehicleKind.TRUCK: KindSpec(0.05, 12.0, 14.0),
    VehicleKind.BUS: KindSpec(0.05, 12.0, 16.0),
    VehicleKind.MOTORCYCLE: KindSpec(0.10, 2.0, 21.0),
}

EGO_LENGTH = 5.0


@dataclass
class Vehicle:
    id: int
    lane: int
    x: float              # rear bumper (m)
    v: float              # m/s, >= 0
    length: float
    desired_v: float
    kind: VehicleKind
    controlled: bool = False

    @property
    def front(self) -> float:
        return self.x + self.length


@dataclass
class SimConfig:
    n_lanes: int = 3
    dt: float = DT
    episode_len: int = 60           # ego decision steps
    entry_period_s: float = 2.0     # one vehicle every N seconds (8/4/2/1)
    entry_speed_range: tuple = (12.0, 17.0)
    ego_entry_index: Optional[int] = 10   # the N-th entrant is the ego
    ego_desired_v: float = 21.0
    sigma: float = 0.0              # driver imperfection in [0, 1]
    noise_pct: float = 0.0          # proportional sensing noise (0/0.05/0.10)
    mode: SimMode = SimMode.CONSTANT_SPEED
    weather_scale: tuple = (1.0, 1.0)   # (speed factor, accel factor)
    kind_mix: dict = field(default_factory=lambda: dict(DEFAULT_KIND_MIX))
    penetration: float = 0.0        # fraction of agent-driven entrants
    entry_min_gap: float = 10.0     # spawn guard: required free gap at entry
    a_max: float = 2.0              # manual max accel/decel (car following)
    b_comfort: float = 2.0          # assumed braking in the safe-speed rule
    tau: float = 1.0                # reaction time in the safe-speed rule

    def __post_init__(self):
        if self.entry_period_s <= 0:
            raise ValueError("entry_period_s must be > 0")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if self.noise_pct < 0:
            raise ValueError("noise_pct must be >= 0")
        if not 0.0 <= self.penetration <= 1.0:
            raise ValueError("penetration must lie in [0, 1]")


@dataclass
class PlannedEntry:
    """One scheduled entrant with all random attributes pre-drawn."""

    entry_time: int        # actual entry step (guard delays already applied)
    vehicle: Vehicle


@dataclass
class CollisionEvent:
    t: int
    ego_id: int
    other_id: int
    gap: float             # bumper-to-bumper, clamped at 0 on overlap
    overlap: bool          # physical interval overlap (severe)
    ego_is_rear: bool      # True when the ego is the rear vehicle


@dataclass
class WorldState:
    t: int
    vehicles: list
    rng: np.random.Generator
    schedule: list                 # list[PlannedEntry], sorted by entry_time
    next_entry: int = 0            # index of the next schedule element
    pending: list = field(default_factory=list)   # guard-delayed entrants
    ego_id: Optional[int] = None
    n_lanes: int = 3

    def vehicle(self, vid: int) -> Vehicle:
        for veh in self.vehicles:
            if veh.id == vid:
                return veh
        raise KeyError(f"no vehicle with id {vid}")

    @property
    def ego(self) -> Optional[Vehicle]:
        if self.ego_id is None:
            return None
        for veh in self.vehicles:
            if veh.id == self.ego_id:
                return veh
        return None

    def controlled_vehicles(self) -> list:
        return [v for v in self.vehicles if v.controlled]

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)


@dataclass
class Neighbor:
    vehicle_id: int
    lane: int
    rel_x: float                  # measured rear-bumper position wrt ego rear
    v: Optional[float]            # measured speed (None if unavailable)
    length: float


@dataclass
class SensedEnvironment:
    t: int
    ego_id: int
    ego_lane: int
    ego_x: float
    ego_v: float
    ego_length: float
    n_lanes: int
    neighbors: list

    @property
    def off_road_left(self) -> bool:
        return self.ego_lane == 0

    @property
    def off_road_right(self) -> bool:
        return self.ego_lane == self.n_lanes - 1


def _draw_kind(cfg: SimConfig, rng: np.random.Generator) -> VehicleKind:
    kinds = list(cfg.kind_mix.keys())
    fractions = np.array([cfg.kind_mix[k].fraction for k in kinds], dtype=float)
    fractions = fractions / fractions.sum()
    u = rng.random()
    acc = 0.0
    for kind, frac in zip(kinds, fractions):
        acc += frac
        if u < acc:
            return kind
    return kinds[-1]


def generate_scenario(config: SimConfig, seed: int) -> WorldState:
    """Build the seeded entry schedule and the world at t=0.

    Entrants are drawn in entry order (lane uniform over lanes, speed uniform
    over entry_speed_range); the ego_entry_index-th entrant is the ego with
    desired speed ego_desired_v.  In ConstantSpeed mode the spawn guard is
    resolved here on nominal constant-speed trajectories, which makes entry
    times independent of how the ego actually drives (the DP benchmark relies
    on that).  In CarFollowing mode entries carry their nominal times and the
    guard runs live inside step().
    """
    rng = np.random.default_rng(seed)
    period = config.entry_period_s
    if config.ego_entry_index is not None:
        last_nominal = (config.ego_entry_index - 1) * period + config.episode_len
    else:
        last_nominal = config.episode_len
    nominal_times = []
    k = 0
    while k * period <= last_nominal:
        nominal_times.append(k * period)
        k += 1

    entries = []
    for i, t_nom in enumerate(nominal_times):
        lane = int(rng.integers(0, config.n_lanes))
        lo, hi = config.entry_speed_range
        v0 = float(rng.uniform(lo, hi))
        is_ego = (config.ego_entry_index is not None
                  and i == config.ego_entry_index - 1)
        if config.penetration > 0.0:
            controlled = bool(rng.random() < config.penetration)
        else:
            controlled = is_ego
        if is_ego or (config.penetration > 0.0 and controlled):
            kind = VehicleKind.EGO
            length = EGO_LENGTH
            desired = config.ego_desired_v
        else:
            kind = _draw_kind(config, rng)
            spec = config.kind_mix[kind]
            length = spec.length
            desired = spec.desired_v
        veh = Vehicle(id=i, lane=lane, x=0.0, v=v0, length=length,
                      desired_v=desired, kind=kind, controlled=controlled)
        entries.append(PlannedEntry(entry_time=int(round(t_nom)), vehicle=veh))

    if config.mode is SimMode.CONSTANT_SPEED:
        entries = _resolve_entries_nominal(entries, config)

    ego_id = None
    if config.ego_entry_index is not None and config.penetration == 0.0:
        ego_id = config.ego_entry_index - 1

    world = WorldState(t=0, vehicles=[], rng=rng, schedule=entries,
                       ego_id=ego_id, n_lanes=config.n_lanes)
    _admit_entries(world, config)
    return world


def _resolve_entries_nominal(entries, config: SimConfig):
    """Fix entry times assuming every vehicle keeps its entry speed.

    Exact for manual vehicles in ConstantSpeed mode; the ego's nominal is its
    entry speed.  A delayed entrant re-tries each following second.
    """
    admitted = []          # (entry_time, vehicle)
    resolved = []
    pending = []
    t = 0
    i = 0
    n = len(entries)
    max_t = entries[-1].entry_time + 3600  # safety stop, never hit in practice
    while (i < n or pending) and t <= max_t:
        while i < n and entries[i].entry_time <= t:
            pending.append(entries[i])
            i += 1
        still = []
        for entry in pending:
            veh = entry.vehicle
            if _nominal_entry_clear(admitted, veh, t, config):
                admitted.append((t, veh))
                resolved.append(PlannedEntry(entry_time=t, vehicle=veh))
            else:
                still.append(entry)
        pending = still
        t += 1
    resolved.sort(key=lambda e: (e.entry_time, e.vehicle.id))
    return resolved


def _nominal_entry_clear(admitted, veh: Vehicle, t: int, config: SimConfig) -> bool:
    for t0, other in admitted:
        if other.lane != veh.lane:
            continue
        x_other = other.v * (t - t0)
        gap = _bumper_gap(0.0, veh.length, x_other, other.length)
        if gap <= config.entry_min_gap:
            return False
    return True


def _bumper_gap(x_a, len_a, x_b, len_b) -> float:
    """Bumper-to-bumper gap between two same-lane vehicles, 0 when overlapping."""
    if x_b >= x_a:
        gap = x_b - (x_a + len_a)
    else:
        gap = x_a - (x_b + len_b)
    return max(gap, 0.0)


def _live_entry_clear(world: WorldState, veh: Vehicle, config: SimConfig) -> bool:
    for other in world.vehicles:
        if other.lane != veh.lane:
            continue
        gap = _bumper_gap(0.0, veh.length, other.x, other.length)
        if gap <= config.entry_min_gap:
            return False
    return True


def _admit_entries(world: WorldState, config: SimConfig):
    sched = world.schedule
    while world.next_entry < len(sched) and sched[world.next_entry].entry_time <= world.t:
        world.pending.append(sched[world.next_entry])
        world.next_entry += 1
    if config.mode is SimMode.CONSTANT_SPEED:
        # Guard already resolved at generation time.
        for entry in world.pending:
            world.vehicles.append(copy.deepcopy(entry.vehicle))
        world.pending = []
    else:
        still = []
        for entry in world.pending:
            if _live_entry_clear(world, entry.vehicle, config):
                world.vehicles.append(copy.deepcopy(entry.vehicle))
            else:
                still.append(entry)
        world.pending = still


def _advance_controlled(veh: Vehicle, action: Action, config: SimConfig):
    a = ACCELERATION[action]
    shift = lane_shift(action)
    new_lane = veh.lane + shift
    if new_lane < 0 or new_lane >= config.n_lanes:
        raise ValueError(
            f"lane change off the road: vehicle {veh.id} lane {veh.lane} "
            f"action {action.name}")
    v_new = max(0.0, veh.v + a * config.dt)
    veh.x += 0.5 * (veh.v + v_new) * config.dt
    veh.v = v_new
    veh.lane = new_lane  # atomic at the step boundary, speed preserved


def _leader_of(world: WorldState, veh: Vehicle):
    leader = None
    for other in world.vehicles:
        if other is veh or other.lane != veh.lane or other.x <= veh.x:
            continue
        if leader is None or other.x < leader.x:
            leader = other
    return leader


def _safe_speed(veh: Vehicle, leader: Optional[Vehicle], config: SimConfig) -> float:
    if leader is None:
        return math.inf
    gap = _bumper_gap(veh.x, veh.length, leader.x, leader.length)
    tau = config.tau
    b = config.b_comfort
    return leader.v + (gap - leader.v * tau) / (veh.v / b + tau)


def _manual_lane_change_ok(world, veh, target_lane, config) -> bool:
    """Shield-style checks for a manual vehicle considering target_lane."""
    if target_lane < 0 or target_lane >= config.n_lanes:
        return False
    leader = None
    follower = None
    for other in world.vehicles:
        if other is veh or other.lane != target_lane:
            continue
        if other.front > veh.x and other.x < veh.front:
            return False  # immediate overlap
        if other.x >= veh.front:
            if leader is None or other.x < leader.x:
                leader = other
        else:
            if follower is None or other.x > follower.x:
                follower = other
    if follower is not None and follower.v > veh.v:
        return False
    if leader is not None and veh.v > leader.v:
        rho_s = 2.0 * (veh.v - leader.v) / config.a_max
        gap = _bumper_gap(veh.x, veh.length, leader.x, leader.length)
        time_gap = gap / veh.v if veh.v > 0 else math.inf
        if time_gap <= rho_s:
            return False
    return True


def _plan_manual(world: WorldState, veh: Vehicle, config: SimConfig):
    """Decide (new_lane, new_speed) for a manual vehicle from the pre-step world."""
    if config.mode is SimMode.CONSTANT_SPEED:
        return veh.lane, veh.v

    new_lane = veh.lane
    leader = _leader_of(world, veh)
    if leader is not None and leader.v < veh.desired_v - 1.0:
        gap = _bumper_gap(veh.x, veh.length, leader.x, leader.length)
        if gap <= SENSE_AHEAD:
            for cand in (veh.lane - 1, veh.lane + 1):
                if _manual_lane_change_ok(world, veh, cand, config):
                    new_lane = cand
                    break

    a_max = config.a_max
    v_safe = _safe_speed(veh, leader, config)
    v_new = min(veh.desired_v, veh.v + a_max * config.dt, v_safe)
    if config.sigma > 0.0:
        u = float(world.rng.random())
        v_new -= config.sigma * a_max * config.dt * u
    return new_lane, max(0.0, v_new)


def step(world: WorldState, ego_action: Optional[Action], config: SimConfig,
         reward_cfg=None, actions: Optional[dict] = None):
    """Advance the world one decision interval in place.

    ``ego_action`` drives world.ego; ``actions`` optionally maps further
    controlled vehicle ids to actions (penetration experiments).  Collision
    events are detected against ``reward_cfg.delta_0`` when a reward config
    is supplied, otherwise the returned event list is empty.

    Returns ``(world, events)``.
    """
    acts = dict(actions or {})
    if ego_action is not None:
        if world.ego is None:
            raise ValueError("ego_action given but no ego in the world")
        acts[world.ego_id] = Action(ego_action)

    for veh in world.controlled_vehicles():
        if veh.id not in acts:
            raise ValueError(f"no action for controlled vehicle {veh.id}")

    # Manual decisions are taken on the pre-step snapshot (synchronous update).
    manual_plans = {}
    for veh in world.vehicles:
        if not veh.controlled:
            manual_plans[veh.id] = _plan_manual(world, veh, config)

    car_following = config.mode is SimMode.CAR_FOLLOWING
    for veh in world.vehicles:
        if veh.controlled:
            _advance_controlled(veh, acts[veh.id], config)
        else:
            new_lane, v_new = manual_plans[veh.id]
            if car_following:
                # Krauss convention: the new speed covers the interval.  This
                # is what makes v_safe actually collision-free in discrete
                # time; the trapezoidal update can overshoot a braking bound.
                veh.x += v_new * config.dt
            else:
                veh.x += 0.5 * (veh.v + v_new) * config.dt
            veh.v = v_new
            veh.lane = new_lane

    world.t += 1
    _admit_entries(world, config)

    events = detect_collisions(world, reward_cfg) if reward_cfg is not None else []
    return world, events


def detect_collisions(world: WorldState, reward_cfg) -> list:
    """Collision events for every controlled vehicle.

    An event fires when a same-lane vehicle sits within bumper gap
    reward_cfg.delta_0 of a controlled vehicle; physical interval overlap is
    flagged severe.  Pairs of controlled vehicles are reported once.
    """
    delta_0 = reward_cfg.delta_0
    events = []
    seen = set()
    for ego in world.controlled_vehicles():
        for other in world.vehicles:
            if other.id == ego.id or other.lane != ego.lane:
                continue
            if other.controlled and (other.id, ego.id) in seen:
                continue
            gap = _bumper_gap(ego.x, ego.length, other.x, other.length)
            overlap = other.front > ego.x and other.x < ego.front
            if gap <= delta_0 or overlap:
                events.append(CollisionEvent(
                    t=world.t, ego_id=ego.id, other_id=other.id, gap=gap,
                    overlap=overlap, ego_is_rear=ego.x < other.x))
                seen.add((ego.id, other.id))
    return events


def sense(world: WorldState, ego_id: int, noise_pct: float,
          rng: Optional[np.random.Generator] = None) -> SensedEnvironment:
    """Ego-relative snapshot of the surrounding traffic.

    Neighbors are limited to the ego's lane and the two adjacent ones, with
    true rear-bumper relative position in [-60, +100] m.  With noise_pct = p,
    each measured relative position is true * (1 + e), e uniform in [-p, p];
    membership is decided on true positions, so noise never adds or removes a
    neighbor.  The ego's own state is noise-free.
    """
    ego = world.vehicle(ego_id)
    if noise_pct > 0 and rng is None:
        raise ValueError("noise_pct > 0 requires an rng")
    neighbors = []
    for other in world.vehicles:
        if other.id == ego_id or abs(other.lane - ego.lane) > 1:
            continue
        rel = other.x - ego.x
        if rel < -SENSE_BEHIND or rel > SENSE_AHEAD:
            continue
        measured = rel
        if noise_pct > 0:
            e = float(rng.uniform(-noise_pct, noise_pct))
            measured = rel * (1.0 + e)
        neighbors.append(Neighbor(vehicle_id=other.id, lane=other.lane,
                                  rel_x=measured, v=other.v,
                                  length=other.length))
    neighbors.sort(key=lambda n: n.vehicle_id)
    return SensedEnvironment(t=world.t, ego_id=ego_id, ego_lane=ego.lane,
                             ego_x=ego.x, ego_v=ego.v, ego_length=ego.length,
                             n_lanes=world.n_lanes, neighbors=neighbors)


def estimate_velocities(prev: Optional[SensedEnvironment],
                        cur: SensedEnvironment, dt: float = DT) -> dict:
    """Per-neighbor speed estimates from two consecutive snapshots.

    v_hat = (rel_t - rel_{t-1} + ego displacement) / dt; neighbors without a
    match at t-1 fall back to their measured speed, or to the ego's speed if
    that is unavailable too.
    """
    prev_rel = {}
    ego_disp = 0.0
    if prev is not None:
        prev_rel = {n.vehicle_id: n.rel_x for n in prev.neighbors}
        ego_disp = cur.ego_x - prev.ego_x
    estimates = {}
    for n in cur.neighbors:
        if n.vehicle_id in prev_rel:
            estimates[n.vehicle_id] = (n.rel_x - prev_rel[n.vehicle_id] + ego_disp) / dt
        elif n.v is not None:
            estimates[n.vehicle_id] = n.v
        else:
            estimates[n.vehicle_id] = cur.ego_v
    return estimates


def apply_weather(config: SimConfig) -> SimConfig:
    """Bake the weather scaling into a new config.

    Non-ego desired speeds are multiplied by the speed factor and manual
    accel/decel magnitudes by the accel factor; the ego is untouched.  The
    returned config carries weather_scale (1, 1), so the operation is
    idempotent.
    """
    speed_f, accel_f = config.weather_scale
    mix = {kind: KindSpec(spec.fraction, spec.length, spec.desired_v * speed_f)
           for kind, spec in config.kind_mix.items()}
    return replace(config, kind_mix=mix, a_max=config.a_max * accel_f,
                   b_comfort=config.b_comfort * accel_f,
                   weather_scale=(1.0, 1.0))


def obstacles_around(world: WorldState, ego_id: int):
    """True-gap obstacle list for the reward engine (post-step sensing window)."""
    from .reward import Obstacle

    ego = world.vehicle(ego_id)
    obstacles = []
    for other in world.vehicles:
        if other.id == ego_id or abs(other.lane - ego.lane) > 1:
            continue
        rel = other.x - ego.x
        if rel < -SENSE_BEHIND or rel > SENSE_AHEAD:
            continue
        gap = _bumper_gap(ego.x, ego.length, other.x, other.length)
        obstacles.append(Obstacle(gap=gap, lane=other.lane))
    return obstacles


def warm_up(world: WorldState, config: SimConfig, max_steps: int = 10_000):
    """Step the world until the designated ego has entered."""
    if world.ego_id is None:
        raise ValueError("world has no designated ego")
    steps = 0
    while world.ego is None:
        step(world, None, config)
        steps += 1
        if steps > max_steps:
            raise RuntimeError("ego never entered the road")
    return world
