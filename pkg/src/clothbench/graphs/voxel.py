"""Voxel-grid downsampling of raw point clouds.

One output point per occupied voxel: the centroid of the raw points inside.
Using a grid three times the particle radius makes graph density independent
of the camera resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_VOXEL_SIZE = 0.0216  # three particle radii, matching the mesh subsampling


@dataclass
class VoxelizedPointCloud:
    points: np.ndarray  # (n, 3) centroids, one per occupied voxel
    voxel_size: float
    voxel_indices: np.ndarray  # (n, 3) int64 source voxel of each point

    def __len__(self) -> int:
        return len(self.points)


def voxel_filter(raw_points: np.ndarray, voxel_size: float = DEFAULT_VOXEL_SIZE) -> VoxelizedPointCloud:
    """Collapse raw points to per-voxel centroids, sorted by voxel index."""
    pts = np.asarray(raw_points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ValueError("raw point cloud must be a non-empty (n, 3) array")
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")

    cells = np.floor(pts / voxel_size).astype(np.int64)
    # lexicographic order on (ix, iy, iz)
    order = np.lexsort((cells[:, 2], cells[:, 1], cells[:, 0]))
    cells_sorted = cells[order]
    pts_sorted = pts[order]
    new_voxel = np.any(np.diff(cells_sorted, axis=0) != 0, axis=1)
    starts = np.concatenate(([0], np.flatnonzero(new_voxel) + 1))
    counts = np.diff(np.concatenate((starts, [len(pts)])))
    sums = np.add.reduceat(pts_sorted, starts, axis=0)
    centroids = sums / counts[:, None]
    return VoxelizedPointCloud(
        points=centroids,
        voxel_size=voxel_size,
        voxel_indices=cells_sorted[starts],
    )
