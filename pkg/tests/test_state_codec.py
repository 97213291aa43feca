import numpy as np
import pytest

from freewaylab.simulation import Neighbor, SensedEnvironment
from freewaylab.state_codec import (DEFAULT_GRID, GridSpec, decode_debug,
                                    encode, parse_debug)


def scene(ego_lane=1, ego_v=21.0, neighbors=(), ego_length=5.0):
    return SensedEnvironment(t=0, ego_id=0, ego_lane=ego_lane, ego_x=500.0,
                             ego_v=ego_v, ego_length=ego_length, n_lanes=3,
                             neighbors=list(neighbors))


def test_grid_spec_totals():
    spec = GridSpec()
    assert spec.cols == 160
    assert spec.total == 480


def test_ego_alone_middle_lane():
    state = encode(scene())
    assert state.shape == (480,)
    assert np.count_nonzero(state == 21.0) == 5
    assert np.count_nonzero(state == 0.0) == 475
    grid = state.reshape(3, 160)
    assert list(np.flatnonzero(grid[1] == 21.0)) == [60, 61, 62, 63, 64]


def test_leftmost_lane_marks_left_row_off_road():
    state = encode(scene(ego_lane=0))
    grid = state.reshape(3, 160)
    assert np.all(grid[0] == -1.0)
    assert np.all(grid[2] >= 0.0)


def test_rightmost_lane_marks_right_row_off_road():
    state = encode(scene(ego_lane=2))
    grid = state.reshape(3, 160)
    assert np.all(grid[2] == -1.0)
    assert np.all(grid[0] >= 0.0)


def test_output_length_invariant_any_neighbor_count():
    rng = np.random.default_rng(0)
    for _ in range(50):
        neighbors = [Neighbor(i + 1, int(rng.integers(0, 3)),
                              float(rng.uniform(-60, 100)),
                              float(rng.uniform(0, 25)), 5.0)
                     for i in range(rng.integers(0, 12))]
        assert encode(scene(neighbors=neighbors)).shape == (480,)


def test_neighbor_tiles_carry_speed_in_correct_row():
    n = Neighbor(1, 2, 20.0, 15.0, 5.0)   # right-adjacent lane, 20 m ahead
    grid = encode(scene(neighbors=[n])).reshape(3, 160)
    assert list(np.flatnonzero(grid[2] == 15.0)) == [80, 81, 82, 83, 84]
    assert np.all(grid[0] == 0.0)


def test_straddling_neighbor_clipped_to_window():
    n = Neighbor(1, 1, 98.0, 15.0, 5.0)   # occupies [98, 103): only 98, 99 visible
    grid = encode(scene(neighbors=[n])).reshape(3, 160)
    assert list(np.flatnonzero(grid[1] == 15.0)) == [158, 159]


def test_unaligned_neighbor_covers_partial_tiles():
    n = Neighbor(1, 1, 10.3, 15.0, 5.0)   # [10.3, 15.3) touches 6 tiles
    grid = encode(scene(neighbors=[n])).reshape(3, 160)
    assert np.count_nonzero(grid[1] == 15.0) == 6


def test_out_of_window_neighbor_encodes_identically():
    inside = scene(neighbors=[Neighbor(1, 1, 50.0, 15.0, 5.0)])
    with_far = scene(neighbors=[Neighbor(1, 1, 50.0, 15.0, 5.0),
                                Neighbor(2, 1, 140.0, 18.0, 5.0)])
    assert np.array_equal(encode(inside), encode(with_far))


def test_tile_conflict_nearer_vehicle_wins():
    far = Neighbor(1, 1, 40.0, 10.0, 5.0)
    near = Neighbor(2, 1, 38.0, 18.0, 5.0)   # overlapping claims, nearer
    grid = encode(scene(neighbors=[far, near])).reshape(3, 160)
    # Shared tiles [40, 43) go to the nearer vehicle.
    assert grid[1, 100] == 18.0
    assert grid[1, 101] == 18.0
    assert grid[1, 104] == 10.0


def test_ego_wins_own_tiles():
    abreast = Neighbor(1, 1, 1.0, 9.0, 5.0)  # overlapping the ego's span
    grid = encode(scene(neighbors=[abreast])).reshape(3, 160)
    assert np.all(grid[1, 60:65] == 21.0)


def test_dump_roundtrip():
    rng = np.random.default_rng(1)
    neighbors = [Neighbor(1, 0, -12.25, 13.7302, 5.0),
                 Neighbor(2, 1, 33.0, 17.123456789, 12.0)]
    state = encode(scene(ego_lane=0, neighbors=neighbors))
    assert np.array_equal(parse_debug(decode_debug(state)), state)


def test_all_zero_dump_is_empty_road():
    dump = decode_debug(np.zeros(480))
    body = dump.replace("left", "").replace("ego", "").replace("right", "")
    assert set(body.split()) <= {".", "|"}


def test_dump_rejects_bad_length():
    with pytest.raises(ValueError):
        decode_debug(np.zeros(479))
