"""Proximity ("nearby") edges between cloud points.

An edge connects every pair of points strictly closer than the neighbour
radius R.  The radius is roughly twice the voxel size so that points in
adjacent voxels end up connected.  Edges are recomputed from positions at
every step; structural mesh edges are a labelled subset of them.
"""

from __future__ import annotations

import numpy as np

from ..spatial import radius_pairs

DEFAULT_NEIGHBOR_RADIUS = 0.045


def collision_edges(points: np.ndarray, radius: float = DEFAULT_NEIGHBOR_RADIUS) -> np.ndarray:
    """Pairs (i, j), i < j, with ||p_i - p_j|| < radius, lexicographically sorted."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return radius_pairs(np.asarray(points, dtype=np.float64), radius)
