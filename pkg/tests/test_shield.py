import math

import numpy as np
import pytest

from freewaylab.actions import Action
from freewaylab.shield import (SafetyConfig, check_lane_change,
                               check_longitudinal, min_time_gap, shield)
from freewaylab.simulation import Neighbor, SensedEnvironment


def scene(ego_lane=1, ego_v=21.0, neighbors=()):
    return SensedEnvironment(t=0, ego_id=0, ego_lane=ego_lane, ego_x=0.0,
                             ego_v=ego_v, ego_length=5.0, n_lanes=3,
                             neighbors=list(neighbors))


def leader(lane, gap, v, ego_length=5.0, length=5.0):
    """Neighbor ahead at the given bumper-to-bumper gap."""
    return Neighbor(vehicle_id=99, lane=lane, rel_x=gap + ego_length, v=v,
                    length=length)


def follower(lane, gap, v, length=5.0):
    return Neighbor(vehicle_id=98, lane=lane, rel_x=-(gap + length), v=v,
                    length=length)


def test_min_time_gap_hand_value():
    assert min_time_gap(21.0, 16.0, 2.0) == pytest.approx(5.0)


def test_min_time_gap_vacuous_when_not_faster():
    assert min_time_gap(16.0, 16.0, 2.0) == 0.0
    assert min_time_gap(10.0, 16.0, 2.0) == 0.0


def test_min_time_gap_halves_with_double_decel():
    assert min_time_gap(21.0, 16.0, 4.0) == pytest.approx(
        min_time_gap(21.0, 16.0, 2.0) / 2)


def test_longitudinal_pass_through_without_leader():
    cfg = SafetyConfig()
    assert check_longitudinal(scene(), Action.ACCEL_2, cfg) == Action.ACCEL_2


def test_longitudinal_override_on_violated_gap():
    cfg = SafetyConfig(d_max=2.0)
    s = scene(ego_v=21.0, neighbors=[leader(1, 80.0, 16.0)])
    # time gap 80/21 = 3.81 s < rho_s = 5 s
    assert check_longitudinal(s, Action.KEEP, cfg) == Action.DECEL_2


def test_longitudinal_pass_through_equal_speeds():
    cfg = SafetyConfig()
    s = scene(ego_v=16.0, neighbors=[leader(1, 12.0, 16.0)])
    assert check_longitudinal(s, Action.ACCEL_1, cfg) == Action.ACCEL_1


def test_longitudinal_pass_when_gap_clears_rho():
    cfg = SafetyConfig()
    s = scene(ego_v=21.0, neighbors=[leader(1, 120.0, 16.0)])
    # time gap 120/21 = 5.71 s > 5 s
    assert check_longitudinal(s, Action.KEEP, cfg) == Action.KEEP


def test_lane_change_passes_into_empty_lane():
    cfg = SafetyConfig()
    assert check_lane_change(scene(), Action.CHANGE_LEFT, cfg) == \
        Action.CHANGE_LEFT


def test_lane_change_vetoed_by_faster_follower_any_gap():
    cfg = SafetyConfig()
    s = scene(ego_v=21.0, neighbors=[follower(0, 55.0, 25.0)])
    assert check_lane_change(s, Action.CHANGE_LEFT, cfg) == Action.KEEP


def test_lane_change_passes_wide_gap_slower_traffic():
    cfg = SafetyConfig()
    s = scene(ego_v=21.0, neighbors=[leader(0, 120.0, 16.0),
                                     follower(0, 30.0, 18.0)])
    assert check_lane_change(s, Action.CHANGE_LEFT, cfg) == Action.CHANGE_LEFT


def test_lane_change_vetoed_by_close_slower_leader():
    cfg = SafetyConfig()
    s = scene(ego_v=21.0, neighbors=[leader(0, 80.0, 16.0)])
    # New-lane leader violates rho_s; substituted KEEP passes longitudinally
    # (own lane is empty).
    assert check_lane_change(s, Action.CHANGE_LEFT, cfg) == Action.KEEP


def test_lane_change_veto_then_longitudinal_override():
    cfg = SafetyConfig()
    s = scene(ego_v=21.0, neighbors=[leader(0, 80.0, 16.0),
                                     leader(1, 70.0, 16.0)])
    # Change vetoed, and the own-lane leader violates rho_s too.
    assert check_lane_change(s, Action.CHANGE_LEFT, cfg) == Action.DECEL_2


def test_lane_change_vetoed_off_road():
    cfg = SafetyConfig()
    s = scene(ego_lane=0)
    assert check_lane_change(s, Action.CHANGE_LEFT, cfg) == Action.KEEP


def test_lane_change_vetoed_on_overlap():
    cfg = SafetyConfig()
    abreast = Neighbor(vehicle_id=97, lane=0, rel_x=2.0, v=21.0, length=5.0)
    s = scene(ego_v=21.0, neighbors=[abreast])
    assert check_lane_change(s, Action.CHANGE_LEFT, cfg) == Action.KEEP


def test_shield_dispatch():
    cfg = SafetyConfig()
    s = scene(ego_v=21.0, neighbors=[leader(1, 80.0, 16.0)])
    assert shield(s, Action.ACCEL_1, cfg) == Action.DECEL_2
    assert shield(s, Action.CHANGE_LEFT, cfg) == Action.CHANGE_LEFT
    empty = scene()
    assert shield(empty, Action.KEEP, cfg) == Action.KEEP


def test_shield_idempotent_on_its_output():
    cfg = SafetyConfig()
    rng = np.random.default_rng(0)
    for _ in range(300):
        neighbors = []
        for i in range(rng.integers(0, 5)):
            lane = int(rng.integers(0, 3))
            rel = float(rng.uniform(-60, 100))
            neighbors.append(Neighbor(vehicle_id=10 + i, lane=lane, rel_x=rel,
                                      v=float(rng.uniform(0, 25)), length=5.0))
        s = scene(ego_lane=int(rng.integers(0, 3)),
                  ego_v=float(rng.uniform(0, 25)), neighbors=neighbors)
        proposed = Action(int(rng.integers(0, 7)))
        first = shield(s, proposed, cfg)
        second = shield(s, first, cfg)
        override = Action.DECEL_2
        assert second == first or (first == override and second == override)


def test_shield_never_outputs_illegal_lane_change():
    cfg = SafetyConfig()
    rng = np.random.default_rng(1)
    for _ in range(300):
        lane = int(rng.integers(0, 3))
        neighbors = [Neighbor(vehicle_id=5, lane=int(rng.integers(0, 3)),
                              rel_x=float(rng.uniform(-8, 8)),
                              v=float(rng.uniform(0, 25)), length=5.0)]
        s = scene(ego_lane=lane, ego_v=float(rng.uniform(0, 25)),
                  neighbors=neighbors)
        proposed = Action(int(rng.integers(0, 7)))
        final = shield(s, proposed, cfg)
        if final == Action.CHANGE_LEFT:
            assert lane > 0
            assert not any(n.lane == lane - 1 and n.rel_x < 5.0
                           and n.rel_x + n.length > 0 for n in neighbors)
        if final == Action.CHANGE_RIGHT:
            assert lane < 2
            assert not any(n.lane == lane + 1 and n.rel_x < 5.0
                           and n.rel_x + n.length > 0 for n in neighbors)


def test_conservativeness_monotone_in_d_max():
    rng = np.random.default_rng(2)
    weak = SafetyConfig(d_max=1.0)
    strong = SafetyConfig(d_max=2.0)
    for _ in range(300):
        neighbors = [Neighbor(vehicle_id=5, lane=int(rng.integers(0, 3)),
                              rel_x=float(rng.uniform(-60, 100)),
                              v=float(rng.uniform(0, 25)), length=5.0)
                     for _ in range(rng.integers(0, 4))]
        s = scene(ego_lane=int(rng.integers(0, 3)),
                  ego_v=float(rng.uniform(0, 25)), neighbors=neighbors)
        proposed = Action(int(rng.integers(0, 7)))
        if shield(s, proposed, weak) == proposed:
            # A pass under the weaker braking capability stays a pass.
            assert shield(s, proposed, strong) == proposed


def test_zero_speed_ego_never_overridden():
    cfg = SafetyConfig()
    s = scene(ego_v=0.0, neighbors=[leader(1, 1.0, 0.0)])
    assert check_longitudinal(s, Action.ACCEL_2, cfg) == Action.ACCEL_2


def test_safety_config_validation():
    with pytest.raises(ValueError):
        SafetyConfig(d_max=0.0)
