"""Connectivity graphs over observed points or simulator particles.

A graph couples node positions with per-node velocity history, picked flag
and table clearance, plus an edge list split into structural (mesh) edges and
proximity (collision) edges.  Mesh edges carry rest distances.

The gripper protocol bakes the upcoming low-level delta into the graph: edges
are built from the observed positions, then the picked node is displaced by
the delta and its newest velocity slot is set to delta/dt.  Rolling out a
model and labelling training data use the same construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edges import DEFAULT_NEIGHBOR_RADIUS, collision_edges
from .voxel import VoxelizedPointCloud

VELOCITY_HISTORY = 4  # past velocities fed to the dynamics model


@dataclass
class ConnectivityGraph:
    points: np.ndarray  # (n, 3) node positions (picked node already displaced)
    edges: np.ndarray  # (e, 2) int64, i < j
    mesh_mask: np.ndarray  # (e,) bool; True = structural edge
    rest_distances: np.ndarray  # (e,) float; 0 for non-mesh edges
    velocity_history: np.ndarray  # (n, m, 3), oldest first, zero-padded
    picked_mask: np.ndarray  # (n,) bool one-hot (at most one True)
    table_clearance: np.ndarray  # (n,) metres above the table plane
    cloud: VoxelizedPointCloud | None = None  # present for observation graphs

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def validate(self, radius: float = DEFAULT_NEIGHBOR_RADIUS) -> None:
        n, m = self.n_nodes, self.n_edges
        assert self.velocity_history.shape[0] == n
        assert self.mesh_mask.shape == (m,) and self.rest_distances.shape == (m,)
        assert self.picked_mask.sum() <= 1
        assert np.all(self.rest_distances[~self.mesh_mask] == 0.0)


def build_graph(
    positions: np.ndarray,
    velocity_history: np.ndarray,
    picked_node: int | None = None,
    picked_delta: np.ndarray | None = None,
    dt: float = 0.05,
    mesh_edges: np.ndarray | None = None,
    mesh_rest: np.ndarray | None = None,
    radius: float = DEFAULT_NEIGHBOR_RADIUS,
    table_height: float = 0.0,
    cloud: VoxelizedPointCloud | None = None,
) -> ConnectivityGraph:
    """Assemble a graph: proximity edges from `positions`, then apply the pick.

    `mesh_edges` (k, 2) with `mesh_rest` (k,) are kept as structural edges
    whether or not they currently satisfy the proximity criterion; proximity
    edges duplicate-free on top of them.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    prox = collision_edges(positions, radius)

    if mesh_edges is None or len(mesh_edges) == 0:
        edges = prox
        mesh_mask = np.zeros(len(prox), dtype=bool)
        rest = np.zeros(len(prox))
    else:
        mesh_edges = np.asarray(mesh_edges, dtype=np.int64)
        mesh_rest = np.asarray(mesh_rest, dtype=np.float64)
        mesh_keys = mesh_edges[:, 0] * n + mesh_edges[:, 1]
        order = np.argsort(mesh_keys)
        mesh_edges, mesh_rest, mesh_keys = mesh_edges[order], mesh_rest[order], mesh_keys[order]
        prox_keys = prox[:, 0] * n + prox[:, 1]
        dup = np.isin(prox_keys, mesh_keys)
        prox = prox[~dup]
        edges = np.vstack([mesh_edges, prox]) if len(prox) else mesh_edges
        mesh_mask = np.zeros(len(edges), dtype=bool)
        mesh_mask[: len(mesh_edges)] = True
        rest = np.concatenate([mesh_rest, np.zeros(len(prox))])
        # canonical order: sorted by (i, j)
        keys = edges[:, 0] * n + edges[:, 1]
        order = np.argsort(keys, kind="stable")
        edges, mesh_mask, rest = edges[order], mesh_mask[order], rest[order]

    hist = np.array(velocity_history, dtype=np.float64, copy=True)
    pts = positions.copy()
    picked_mask = np.zeros(n, dtype=bool)
    if picked_node is not None:
        picked_mask[picked_node] = True
        if picked_delta is not None:
            delta = np.asarray(picked_delta, dtype=np.float64)
            pts[picked_node] = pts[picked_node] + delta
            hist[picked_node, -1] = delta / dt

    return ConnectivityGraph(
        points=pts,
        edges=edges,
        mesh_mask=mesh_mask,
        rest_distances=rest,
        velocity_history=hist,
        picked_mask=picked_mask,
        table_clearance=pts[:, 1] - table_height,
        cloud=cloud,
    )


def zero_history(n: int, m: int = VELOCITY_HISTORY) -> np.ndarray:
    return np.zeros((n, m, 3))


def nearest_node(points: np.ndarray, target) -> int:
    d2 = np.sum((np.asarray(points, dtype=np.float64) - np.asarray(target, dtype=np.float64)) ** 2, axis=1)
    return int(np.argmin(d2))
