"""Uniform spatial-hash neighbour queries.

`radius_pairs` returns exactly the unordered index pairs closer than a strict
radius, identical to an all-pairs scan but computed by bucketing points into a
grid of cell size `radius` and matching the 27 neighbouring cells.  Output is
deterministic: pairs (i, j) with i < j, sorted lexicographically.
"""

from __future__ import annotations

import itertools

import numpy as np

_OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)


def _ragged_arange(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    rep = np.repeat(np.arange(len(counts)), counts)
    base = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.repeat(starts, counts) + (np.arange(total) - np.repeat(base, counts))


def radius_pairs(points: np.ndarray, radius: float) -> np.ndarray:
    """All pairs (i, j), i < j, with ||p_i - p_j|| strictly below `radius`."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)

    cells = np.floor(pts / radius).astype(np.int64)
    lo = cells.min(axis=0) - 1
    dims = cells.max(axis=0) - lo + 2  # room for +1 neighbour offsets

    def pack(c):
        rel = c - lo
        return (rel[:, 0] * dims[1] + rel[:, 1]) * dims[2] + rel[:, 2]

    keys = pack(cells)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]

    out_i, out_j = [], []
    r2 = radius * radius
    for off in _OFFSETS:
        probe = pack(cells + off)
        left = np.searchsorted(sorted_keys, probe, side="left")
        right = np.searchsorted(sorted_keys, probe, side="right")
        counts = right - left
        if counts.sum() == 0:
            continue
        src = np.repeat(np.arange(n), counts)
        dst = order[_ragged_arange(left, counts)]
        keep = src < dst
        src, dst = src[keep], dst[keep]
        if len(src) == 0:
            continue
        d2 = np.sum((pts[src] - pts[dst]) ** 2, axis=1)
        close = d2 < r2
        out_i.append(src[close])
        out_j.append(dst[close])

    if not out_i:
        return np.empty((0, 2), dtype=np.int64)
    i = np.concatenate(out_i)
    j = np.concatenate(out_j)
    order = np.lexsort((j, i))
    return np.stack([i[order], j[order]], axis=1)
