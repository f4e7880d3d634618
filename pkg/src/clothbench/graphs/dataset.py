"""Trajectory dataset generation and loading.

A dataset directory holds `manifest.json` plus one `traj_{i:05d}/` per
trajectory containing `meta.json` and raw little-endian blobs:

* positions.f32 / velocities.f32 - (T+1, P, 3) full particle state per step
* cloud_points.f32               - voxelized cloud per step, ragged (counts in meta)
* accel_targets.f32              - per-node targets for steps 0..T-1, ragged
* edge_labels.u8                 - per-proximity-edge labels, ragged
* rewards.f32                    - (T,) covered area after each step

Everything persisted is float32, and every derived quantity (proximity
edges, matching, labels) is computed from the float32-cast values at
generation time, so reloading and recomputing yields identical results.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rng
from ..plan.reward import DEFAULT_REWARD_RADIUS, coverage_reward
from ..sim.camera import CameraSpec, render_point_cloud
from ..sim.config import SimConfig
from ..sim.crumple import crumple
from ..sim.mesh import ClothMesh, build_cloth, downsampled_adjacency
from ..sim.pbd import step
from ..sim.state import SimState, attach, release
from .edges import DEFAULT_NEIGHBOR_RADIUS, collision_edges
from .graph import VELOCITY_HISTORY, build_graph, nearest_node, zero_history
from .labels import LabeledSample, TeacherSample, down_rest_distances, label_edges
from .voxel import DEFAULT_VOXEL_SIZE, VoxelizedPointCloud, voxel_filter

SCHEMA_VERSION = 1


@dataclass
class DataGenConfig:
    n_trajectories: int = 50
    rows_range: tuple = (24, 24)
    cols_range: tuple = (24, 24)
    spacing: float = 0.00625
    particle_radius: float = 0.00625
    downsample_factor: int = 3
    voxel_size: float = DEFAULT_VOXEL_SIZE
    neighbor_radius: float = DEFAULT_NEIGHBOR_RADIUS
    reward_radius: float = DEFAULT_REWARD_RADIUS
    n_move_steps: int = 60
    n_settle_steps: int = 40
    distance_range: tuple = (0.15, 0.4)
    noise_sigma: float = 0.0
    dt: float = 0.05
    history: int = VELOCITY_HISTORY
    # wider than the observation camera: collection actions move up to 0.4 m
    # and the cloth must stay in frame for every low-level step
    camera: CameraSpec = field(default_factory=lambda: CameraSpec(extent=1.0))
    table_height: float = 0.0

    def sim_config(self) -> SimConfig:
        return SimConfig.cloth_preset(dt=self.dt, table_height=self.table_height)


def local_height_maxima(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Indices of points whose height tops every neighbour within 2 voxel sizes."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    dx = pts[:, 0][:, None] - pts[:, 0][None, :]
    dz = pts[:, 2][:, None] - pts[:, 2][None, :]
    near = (dx**2 + dz**2) <= (2 * voxel_size) ** 2
    np.fill_diagonal(near, False)
    y = pts[:, 1]
    nbr_max = np.where(near, y[None, :], -np.inf).max(axis=1)
    cand = np.flatnonzero(y > nbr_max - 1e-12)
    if len(cand) == 0:
        cand = np.array([int(np.argmax(y))])
    return cand


def sample_pick_and_place(cloud_points: np.ndarray, gen: np.random.Generator, cfg: DataGenConfig):
    """Data-collection action: pick a locally highest point, move a random way.

    The unnormalised direction has horizontal components in [-0.5, 0.5] and a
    non-negative vertical one in [0, 0.5]; the normalised direction is scaled
    by a distance from `distance_range`.
    """
    cand = local_height_maxima(cloud_points, cfg.voxel_size)
    pick = cloud_points[int(gen.choice(cand))].astype(np.float64)
    while True:
        d = np.array([gen.uniform(-0.5, 0.5), gen.uniform(0.0, 0.5), gen.uniform(-0.5, 0.5)])
        norm = np.linalg.norm(d)
        if norm > 1e-9:
            break
    direction = d / norm
    distance = float(gen.uniform(*cfg.distance_range))
    place = pick + distance * direction
    return pick, place


def _write_blob(path: Path, array: np.ndarray, dtype) -> None:
    np.ascontiguousarray(array.astype(dtype)).tofile(path)


def _read_blob(path: Path, dtype, shape=None) -> np.ndarray:
    data = np.fromfile(path, dtype=dtype)
    return data.reshape(shape) if shape is not None else data


def generate_trajectory(traj_dir: Path, traj_seed: int, cfg: DataGenConfig) -> None:
    """Simulate, render and label one trajectory into `traj_dir`."""
    gen = rng.stream(traj_seed, "traj")
    rows = int(gen.integers(cfg.rows_range[0], cfg.rows_range[1] + 1))
    cols = int(gen.integers(cfg.cols_range[0], cfg.cols_range[1] + 1))
    mesh = build_cloth(rows, cols, spacing=cfg.spacing, particle_radius=cfg.particle_radius,
                       downsample_factor=cfg.downsample_factor)
    sim_cfg = cfg.sim_config()

    state = crumple(mesh, seed=rng.child_seed(traj_seed, "crumple"), config=sim_cfg)

    cloud0 = render_point_cloud(state, mesh, cfg.camera, cfg.noise_sigma,
                                seed=rng.child_seed(traj_seed, "render/0"))
    vox0 = voxel_filter(cloud0.points, cfg.voxel_size)
    pick, place = sample_pick_and_place(vox0.points, gen, cfg)
    picked_particle = attach(state, pick)
    delta = (place - pick) / cfg.n_move_steps

    n_steps = cfg.n_move_steps + cfg.n_settle_steps
    states = [state.copy()]
    for t in range(cfg.n_move_steps):
        state = step(state, mesh, delta, config=sim_cfg)
        states.append(state.copy())
    release(state)
    for t in range(cfg.n_settle_steps):
        state = step(state, mesh, (0.0, 0.0, 0.0), config=sim_cfg)
        states.append(state.copy())

    positions = np.stack([s.positions for s in states]).astype(np.float32)
    velocities = np.stack([s.velocities for s in states]).astype(np.float32)

    clouds = []
    for t in range(n_steps + 1):
        raw = render_point_cloud(states[t], mesh, cfg.camera, cfg.noise_sigma,
                                 seed=rng.child_seed(traj_seed, f"render/{t}")) \
            if t > 0 else cloud0
        clouds.append(voxel_filter(raw.points, cfg.voxel_size).points.astype(np.float32))

    # labels are functions of the float32 arrays so reloading reproduces them
    down = mesh.downsampled_indices
    accel_chunks, label_chunks, rewards = [], [], []
    for t in range(n_steps):
        pts = clouds[t].astype(np.float64)
        edges = collision_edges(pts, cfg.neighbor_radius)
        down_pos = positions[t][down].astype(np.float64)
        assignment, labels, _ = label_edges(pts, edges, mesh, down_pos)
        v_t = velocities[t][down][assignment].astype(np.float64)
        v_next = velocities[t + 1][down][assignment].astype(np.float64)
        accel_chunks.append(((v_next - v_t) / cfg.dt).astype(np.float32))
        label_chunks.append(labels.astype(np.uint8))
        rewards.append(coverage_reward(positions[t + 1].astype(np.float64),
                                       radius=cfg.reward_radius, height_threshold=None))

    traj_dir.mkdir(parents=True, exist_ok=True)
    _write_blob(traj_dir / "positions.f32", positions, "<f4")
    _write_blob(traj_dir / "velocities.f32", velocities, "<f4")
    _write_blob(traj_dir / "cloud_points.f32", np.concatenate(clouds, axis=0), "<f4")
    _write_blob(traj_dir / "accel_targets.f32", np.concatenate(accel_chunks, axis=0), "<f4")
    _write_blob(traj_dir / "edge_labels.u8", np.concatenate(label_chunks), "u1")
    _write_blob(traj_dir / "rewards.f32", np.asarray(rewards), "<f4")

    meta = {
        "seed": traj_seed,
        "rows": rows,
        "cols": cols,
        "dt": cfg.dt,
        "n_move_steps": cfg.n_move_steps,
        "n_settle_steps": cfg.n_settle_steps,
        "action": {"pick": [float(v) for v in pick], "place": [float(v) for v in place]},
        "picked_particle": int(picked_particle),
        "cloud_counts": [int(len(c)) for c in clouds],
        "edge_counts": [int(len(c)) for c in label_chunks],
        "shapes": {
            "positions": list(positions.shape),
            "velocities": list(velocities.shape),
            "rewards": [n_steps],
        },
    }
    with open(traj_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _config_to_dict(cfg: DataGenConfig) -> dict:
    d = dataclasses.asdict(cfg)
    return d


def _config_from_dict(d: dict) -> DataGenConfig:
    d = dict(d)
    cam = d.pop("camera")
    cfg = DataGenConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
    cfg.camera = CameraSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in cam.items()})
    return cfg


def generate_dataset(cfg: DataGenConfig, master_seed: int, out_dir, jobs: int = 1) -> Path:
    """Write a dataset directory; byte-identical for a given (cfg, seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": _config_to_dict(cfg),
        "master_seed": master_seed,
        "n_trajectories": cfg.n_trajectories,
        "normalization": None,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")

    seeds = [rng.child_seed(master_seed, f"traj/{i}") for i in range(cfg.n_trajectories)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(generate_trajectory, out / f"traj_{i:05d}", seeds[i], cfg)
                for i in range(cfg.n_trajectories)
            ]
            for f in futures:
                f.result()
    else:
        for i in range(cfg.n_trajectories):
            generate_trajectory(out / f"traj_{i:05d}", seeds[i], cfg)
    return out


class Trajectory:
    """Lazy view of one stored trajectory."""

    def __init__(self, path: Path, cfg: DataGenConfig):
        self.path = Path(path)
        self.cfg = cfg
        with open(self.path / "meta.json") as fh:
            self.meta = json.load(fh)
        shapes = self.meta["shapes"]
        self.positions = _read_blob(self.path / "positions.f32", "<f4", shapes["positions"])
        self.velocities = _read_blob(self.path / "velocities.f32", "<f4", shapes["velocities"])
        counts = self.meta["cloud_counts"]
        flat = _read_blob(self.path / "cloud_points.f32", "<f4").reshape(-1, 3)
        bounds = np.cumsum([0] + counts)
        self.clouds = [flat[bounds[k]:bounds[k + 1]] for k in range(len(counts))]
        acc = _read_blob(self.path / "accel_targets.f32", "<f4").reshape(-1, 3)
        self.accels = [acc[bounds[k]:bounds[k + 1]] for k in range(len(counts) - 1)]
        ecounts = self.meta["edge_counts"]
        ebounds = np.cumsum([0] + ecounts)
        lab = _read_blob(self.path / "edge_labels.u8", "u1")
        self.edge_labels = [lab[ebounds[k]:ebounds[k + 1]].astype(bool) for k in range(len(ecounts))]
        self.rewards = _read_blob(self.path / "rewards.f32", "<f4")
        self.mesh = build_cloth(self.meta["rows"], self.meta["cols"], spacing=cfg.spacing,
                                particle_radius=cfg.particle_radius,
                                downsample_factor=cfg.downsample_factor)

    @property
    def n_steps(self) -> int:
        return self.meta["n_move_steps"] + self.meta["n_settle_steps"]

    def delta(self) -> np.ndarray:
        a = self.meta["action"]
        return (np.asarray(a["place"]) - np.asarray(a["pick"])) / self.meta["n_move_steps"]

    def picker_position(self, t: int) -> np.ndarray | None:
        if t >= self.meta["n_move_steps"]:
            return None
        return self.positions[t, self.meta["picked_particle"]].astype(np.float64)

    def velocity_window(self, source: np.ndarray, t: int, m: int) -> np.ndarray:
        """(n, m, 3) history from per-step velocity arrays, zero-padded before t=0."""
        n = source.shape[1]
        hist = np.zeros((n, m, 3))
        for k in range(m):
            ts = t - (m - 1 - k)
            if ts >= 0:
                hist[:, k, :] = source[ts]
        return hist

    def edge_sample(self, t: int):
        """(points, edges, labels) without matching, for classifier training."""
        pts = self.clouds[t].astype(np.float64)
        edges = collision_edges(pts, self.cfg.neighbor_radius)
        labels = self.edge_labels[t]
        if len(labels) != len(edges):
            raise ValueError(f"stored labels misaligned at step {t} of {self.path}")
        return pts, edges, labels

    def student_sample(self, t: int) -> LabeledSample:
        pts = self.clouds[t].astype(np.float64)
        cloud = VoxelizedPointCloud(points=pts, voxel_size=self.cfg.voxel_size,
                                    voxel_indices=np.floor(pts / self.cfg.voxel_size).astype(np.int64))
        edges = collision_edges(pts, self.cfg.neighbor_radius)
        down = self.mesh.downsampled_indices
        down_pos = self.positions[t][down].astype(np.float64)
        assignment, labels, rest = label_edges(pts, edges, self.mesh, down_pos)
        if not np.array_equal(labels, self.edge_labels[t]):
            raise ValueError(f"stored labels inconsistent at step {t} of {self.path}")

        down_vels = self.velocities[:, down, :].astype(np.float64)
        hist_particles = self.velocity_window(down_vels, t, self.cfg.history)
        hist = hist_particles[assignment]

        picker = self.picker_position(t)
        picked_node = nearest_node(pts, picker) if picker is not None else None
        picked_delta = self.delta() if picker is not None else None

        graph = build_graph(
            pts, hist, picked_node=picked_node, picked_delta=picked_delta, dt=self.cfg.dt,
            mesh_edges=edges[labels], mesh_rest=rest[labels],
            radius=self.cfg.neighbor_radius, table_height=self.cfg.table_height, cloud=cloud,
        )
        return LabeledSample(
            graph=graph,
            target_accelerations=self.accels[t].astype(np.float64),
            mesh_edge_labels=graph.mesh_mask.copy(),
            gt_velocity_t=hist[:, -1, :].copy(),
            reward_next=float(self.rewards[t]),
            matched_particles=assignment,
        )

    def teacher_sample(self, t: int) -> TeacherSample:
        down = self.mesh.downsampled_indices
        pos = self.positions[t][down].astype(np.float64)
        down_vels = self.velocities[:, down, :].astype(np.float64)
        hist = self.velocity_window(down_vels, t, self.cfg.history)
        picker = self.picker_position(t)
        picked_node = nearest_node(pos, picker) if picker is not None else None
        picked_delta = self.delta() if picker is not None else None

        springs = sorted(downsampled_adjacency(self.mesh))
        mesh_edges = np.array(springs, dtype=np.int64)
        rest_all = down_rest_distances(self.mesh)
        mesh_rest = rest_all[mesh_edges[:, 0], mesh_edges[:, 1]]
        graph = build_graph(
            pos, hist, picked_node=picked_node, picked_delta=picked_delta, dt=self.cfg.dt,
            mesh_edges=mesh_edges, mesh_rest=mesh_rest,
            radius=self.cfg.neighbor_radius, table_height=self.cfg.table_height,
        )
        accel = (self.velocities[t + 1][down].astype(np.float64)
                 - self.velocities[t][down].astype(np.float64)) / self.cfg.dt
        return TeacherSample(graph=graph, target_accelerations=accel,
                             reward_next=float(self.rewards[t]))


class ClothDataset:
    def __init__(self, path):
        self.path = Path(path)
        with open(self.path / "manifest.json") as fh:
            self.manifest = json.load(fh)
        self.cfg = _config_from_dict(self.manifest["config"])
        self.n_trajectories = self.manifest["n_trajectories"]
        self._cache: dict[int, Trajectory] = {}

    def trajectory(self, i: int) -> Trajectory:
        if i not in self._cache:
            self._cache[i] = Trajectory(self.path / f"traj_{i:05d}", self.cfg)
        return self._cache[i]

    def split(self, val_fraction: float = 0.1):
        """(train_ids, val_ids): the last fraction of trajectories validates."""
        n_val = max(1, int(round(self.n_trajectories * val_fraction)))
        n_val = min(n_val, self.n_trajectories - 1) if self.n_trajectories > 1 else 0
        ids = list(range(self.n_trajectories))
        return ids[: self.n_trajectories - n_val], ids[self.n_trajectories - n_val:]
