"""Covered-area reward: union of discs around point projections.

Each point is treated as a sphere of the given radius; the reward is the area
its projections cover on the table plane.  The union area is computed on a
fixed world-anchored lattice of cell size radius/8 (a cell counts as covered
when its centre lies inside some disc), so adding points can only grow the
area.  If any point sits above `height_threshold`, the reward is 0: a rollout
that leaves points hanging in the air is treated as an invalid prediction.
"""

from __future__ import annotations

import numpy as np

# planning default: same radius as the connectivity neighbourhood
DEFAULT_REWARD_RADIUS = 0.045
# 15 particle radii; predictions above this after settling are rejected
DEFAULT_HEIGHT_THRESHOLD = 15 * 0.00625


def covered_cells(points: np.ndarray, radius: float) -> np.ndarray:
    """Packed lattice keys of covered cells (unique, sorted)."""
    pts = np.asarray(points, dtype=np.float64)
    cell = radius / 8.0
    half = 9  # ceil(radius / cell) + 1
    offs = np.arange(-half, half + 1)
    ox, oz = np.meshgrid(offs, offs, indexing="ij")
    n_off = ox.size
    cx = np.floor(pts[:, 0] / cell).astype(np.int64)
    cz = np.floor(pts[:, 2] / cell).astype(np.int64)
    ix = (cx[:, None, None] + ox[None]).reshape(-1)
    iz = (cz[:, None, None] + oz[None]).reshape(-1)
    wx = (ix + 0.5) * cell
    wz = (iz + 0.5) * cell
    px = np.repeat(pts[:, 0], n_off)
    pz = np.repeat(pts[:, 2], n_off)
    inside = (wx - px) ** 2 + (wz - pz) ** 2 < radius * radius
    keys = ix[inside] * (1 << 32) + iz[inside]
    return np.unique(keys)


def coverage_reward(
    points: np.ndarray,
    radius: float = DEFAULT_REWARD_RADIUS,
    height_threshold: float | None = DEFAULT_HEIGHT_THRESHOLD,
) -> float:
    """Union area (m^2) of discs at the x/z projections; 0 above the height gate."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return 0.0
    if height_threshold is not None and float(pts[:, 1].max()) > height_threshold:
        return 0.0
    cell = radius / 8.0
    return float(len(covered_cells(pts, radius)) * cell * cell)
