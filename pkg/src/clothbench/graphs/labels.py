"""Ground-truth labels for observation graphs.

Cloud points are matched to the subsampled mesh particles; a proximity edge
is labelled structural when its endpoints' matched particles are joined by a
subsampled spring.  Per-node targets (acceleration, velocity) are copied from
the matched particles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..plan.reward import DEFAULT_REWARD_RADIUS, coverage_reward
from ..sim.mesh import ClothMesh, downsampled_adjacency
from ..sim.state import SimState
from .edges import DEFAULT_NEIGHBOR_RADIUS, collision_edges
from .graph import ConnectivityGraph
from .matching import bipartite_match
from .voxel import VoxelizedPointCloud


@dataclass
class LabeledSample:
    graph: ConnectivityGraph
    target_accelerations: np.ndarray  # (n, 3)
    mesh_edge_labels: np.ndarray  # (e,) bool over the graph's edges
    gt_velocity_t: np.ndarray  # (n, 3) matched particle velocity at t
    reward_next: float  # covered area after this step, m^2
    matched_particles: np.ndarray  # (n,) indices into mesh.downsampled_indices
    full_state: "TeacherSample | None" = None


@dataclass
class TeacherSample:
    """Full subsampled-particle graph for privileged training."""

    graph: ConnectivityGraph
    target_accelerations: np.ndarray
    reward_next: float


def down_rest_distances(mesh: ClothMesh) -> np.ndarray:
    """Pairwise rest-state distances between subsampled particles."""
    rest = mesh.rest_positions()[mesh.downsampled_indices]
    return np.linalg.norm(rest[:, None, :] - rest[None, :, :], axis=2)


def label_edges(
    points: np.ndarray,
    edges: np.ndarray,
    mesh: ClothMesh,
    down_positions: np.ndarray,
):
    """Match points to subsampled particles and label structural edges.

    Returns (assignment, labels, rest_distances) aligned with `edges`.
    """
    match = bipartite_match(points, down_positions)
    adj = downsampled_adjacency(mesh)
    a = match.assignment
    labels = np.zeros(len(edges), dtype=bool)
    rest = np.zeros(len(edges))
    rest_all = down_rest_distances(mesh)
    for k, (i, j) in enumerate(edges):
        pa, pb = int(a[i]), int(a[j])
        key = (pa, pb) if pa < pb else (pb, pa)
        if key in adj:
            labels[k] = True
            rest[k] = rest_all[pa, pb]
    return a, labels, rest


def label_sample(
    state_t: SimState,
    state_next: SimState,
    mesh: ClothMesh,
    cloud_t: VoxelizedPointCloud,
    dt: float = 0.05,
    radius: float = DEFAULT_NEIGHBOR_RADIUS,
    velocity_history: np.ndarray | None = None,
    picked_node: int | None = None,
    picked_delta: np.ndarray | None = None,
    table_height: float = 0.0,
    reward_radius: float = DEFAULT_REWARD_RADIUS,
) -> LabeledSample:
    """Label one transition observed as `cloud_t`.

    Node targets come from the matched subsampled particles: acceleration
    (v_next - v_t) / dt and current velocity.  `velocity_history` defaults to
    the matched particles' current velocity in the newest slot only.
    """
    down = mesh.downsampled_indices
    pts = np.asarray(cloud_t.points, dtype=np.float64)
    edges = collision_edges(pts, radius)
    assignment, labels, rest = label_edges(pts, edges, mesh, state_t.positions[down])

    v_t = state_t.velocities[down][assignment]
    v_next = state_next.velocities[down][assignment]
    accel = (v_next - v_t) / dt

    if velocity_history is None:
        from .graph import zero_history

        velocity_history = zero_history(len(pts))
        velocity_history[:, -1] = v_t

    from .graph import build_graph

    graph = build_graph(
        pts,
        velocity_history,
        picked_node=picked_node,
        picked_delta=picked_delta,
        dt=dt,
        mesh_edges=edges[labels],
        mesh_rest=rest[labels],
        radius=radius,
        table_height=table_height,
        cloud=cloud_t,
    )
    # build_graph re-sorts edges; recompute the label mask in its order
    labels_sorted = graph.mesh_mask.copy()
    reward = coverage_reward(state_next.positions, radius=reward_radius, height_threshold=None)
    return LabeledSample(
        graph=graph,
        target_accelerations=accel,
        mesh_edge_labels=labels_sorted,
        gt_velocity_t=v_t,
        reward_next=reward,
        matched_particles=assignment,
    )


def teacher_sample(
    state_t: SimState,
    state_next: SimState,
    mesh: ClothMesh,
    dt: float = 0.05,
    radius: float = DEFAULT_NEIGHBOR_RADIUS,
    velocity_history: np.ndarray | None = None,
    picked_node: int | None = None,
    picked_delta: np.ndarray | None = None,
    table_height: float = 0.0,
    reward_radius: float = DEFAULT_REWARD_RADIUS,
) -> TeacherSample:
    """Privileged sample over all subsampled particles with true springs."""
    down = mesh.downsampled_indices
    pos = state_t.positions[down]
    springs = sorted(downsampled_adjacency(mesh))
    mesh_edges = np.array(springs, dtype=np.int64)
    rest_all = down_rest_distances(mesh)
    mesh_rest = rest_all[mesh_edges[:, 0], mesh_edges[:, 1]]

    v_t = state_t.velocities[down]
    accel = (state_next.velocities[down] - v_t) / dt
    if velocity_history is None:
        from .graph import zero_history

        velocity_history = zero_history(len(pos))
        velocity_history[:, -1] = v_t

    from .graph import build_graph

    graph = build_graph(
        pos,
        velocity_history,
        picked_node=picked_node,
        picked_delta=picked_delta,
        dt=dt,
        mesh_edges=mesh_edges,
        mesh_rest=mesh_rest,
        radius=radius,
        table_height=table_height,
    )
    reward = coverage_reward(state_next.positions, radius=reward_radius, height_threshold=None)
    return TeacherSample(graph=graph, target_accelerations=accel, reward_next=reward)
