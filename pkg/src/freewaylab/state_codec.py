"""Occupancy/velocity grid encoding of the sensed surroundings.

The strip from 60 m behind to 100 m ahead of the ego's rear bumper is
discretized into 1 m tiles on three rows ordered (left-adjacent, ego lane,
right-adjacent) in the ego's frame.  Tiles under a vehicle carry its speed,
free road tiles are 0, and rows beyond the road edge are -1.  Row-major
vectorization gives the fixed 480-element state.
"""

import math
from dataclasses import dataclass

import numpy as np

from .simulation import SensedEnvironment

OFF_ROAD = -1.0


@dataclass
class GridSpec:
    behind: int = 60
    ahead: int = 100
    tile_len: float = 1.0
    rows: int = 3

    @property
    def cols(self) -> int:
        return self.behind + self.ahead

    @property
    def total(self) -> int:
        return self.rows * self.cols


DEFAULT_GRID = GridSpec()


def _tile_span(rel_x: float, length: float, spec: GridSpec):
    """Column range [start, stop) covered by [rel_x, rel_x + length)."""
    start = math.floor(rel_x + spec.behind)
    stop = math.ceil(rel_x + length + spec.behind)
    return max(start, 0), min(stop, spec.cols)


def encode(sensed: SensedEnvironment, spec: GridSpec = DEFAULT_GRID) -> np.ndarray:
    """480-element state vector for one sensed scene.

    Speeds are written raw in m/s (no normalization).  When a tile is claimed
    by two vehicles (possible under measurement noise) the one nearer to the
    ego wins; the ego always wins its own tiles.
    """
    grid = np.zeros((spec.rows, spec.cols))
    ego_row = 1
    if sensed.off_road_left:
        grid[0, :] = OFF_ROAD
    if sensed.off_road_right:
        grid[2, :] = OFF_ROAD

    # Farther vehicles first so nearer ones overwrite them.
    order = sorted(sensed.neighbors, key=lambda n: (-abs(n.rel_x), n.vehicle_id))
    for n in order:
        row = ego_row + (n.lane - sensed.ego_lane)
        if row < 0 or row >= spec.rows:
            continue
        lo, hi = _tile_span(n.rel_x, n.length, spec)
        if lo < hi:
            grid[row, lo:hi] = max(n.v if n.v is not None else 0.0, 0.0)

    lo, hi = _tile_span(0.0, sensed.ego_length, spec)
    grid[ego_row, lo:hi] = sensed.ego_v
    return grid.reshape(-1)


def decode_debug(state: np.ndarray, spec: GridSpec = DEFAULT_GRID) -> str:
    """Lossless, human-readable grid dump.

    One line per row (left/ego/right), one token per tile: '.' for free road,
    'x' for off-road, otherwise the tile value via repr.  parse_debug inverts
    it exactly.
    """
    state = np.asarray(state, dtype=float)
    if state.size != spec.total:
        raise ValueError(f"state vector must have {spec.total} elements, "
                         f"got {state.size}")
    grid = state.reshape(spec.rows, spec.cols)
    labels = ("left ", "ego  ", "right")
    lines = []
    for label, row in zip(labels, grid):
        tokens = []
        for val in row:
            if val == 0.0:
                tokens.append(".")
            elif val == OFF_ROAD:
                tokens.append("x")
            else:
                tokens.append(repr(float(val)))
        lines.append(f"{label}| " + " ".join(tokens))
    return "\n".join(lines)


def parse_debug(dump: str, spec: GridSpec = DEFAULT_GRID) -> np.ndarray:
    """Invert decode_debug back into the tile vector."""
    rows = []
    for line in dump.strip().splitlines():
        _, _, body = line.partition("|")
        vals = []
        for token in body.split():
            if token == ".":
                vals.append(0.0)
            elif token == "x":
                vals.append(OFF_ROAD)
            else:
                vals.append(float(token))
        rows.append(vals)
    flat = [v for row in rows for v in row]
    if len(flat) != spec.total:
        raise ValueError(f"dump decodes to {len(flat)} tiles, "
                         f"expected {spec.total}")
    return np.array(flat)
