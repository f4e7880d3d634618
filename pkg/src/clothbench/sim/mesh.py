"""Rest-state cloth meshes: particle grids with typed spring constraints.

A cloth is a rows x cols grid of particles.  Three spring families hold it
together:

* stretch: 4-neighbours at rest length ``spacing``
* shear:   diagonal neighbours at rest length ``spacing * sqrt(2)``
* bend:    2-apart grid neighbours at rest length ``2 * spacing``

The grid is also subsampled by ``downsample_factor`` (every k-th row/column,
giving ceil(rows/k) x ceil(cols/k) particles), and the same spring pattern is
rebuilt on the subsampled grid.  The subsampled mesh is what observation
graphs are matched against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STRETCH, SHEAR, BEND = 0, 1, 2
KIND_NAMES = ("stretch", "shear", "bend")

DEFAULT_STIFFNESS = {"stretch": 0.8, "shear": 0.9, "bend": 1.0}
DEFAULT_PARTICLE_RADIUS = 0.00625
DEFAULT_SPACING = 0.00625


@dataclass(frozen=True)
class Spring:
    i: int
    j: int
    rest_length: float
    kind: int  # STRETCH / SHEAR / BEND


def _grid_springs(rows: int, cols: int, spacing: float) -> list[Spring]:
    def pid(r, c):
        return r * cols + c

    springs = []
    # stretch: axis-aligned neighbours
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                springs.append(Spring(pid(r, c), pid(r, c + 1), spacing, STRETCH))
            if r + 1 < rows:
                springs.append(Spring(pid(r, c), pid(r + 1, c), spacing, STRETCH))
    # shear: diagonals of each quad
    diag = spacing * math.sqrt(2.0)
    for r in range(rows - 1):
        for c in range(cols - 1):
            springs.append(Spring(pid(r, c), pid(r + 1, c + 1), diag, SHEAR))
            springs.append(Spring(pid(r, c + 1), pid(r + 1, c), diag, SHEAR))
    # bend: 2-apart along each axis
    for r in range(rows):
        for c in range(cols):
            if c + 2 < cols:
                springs.append(Spring(pid(r, c), pid(r, c + 2), 2 * spacing, BEND))
            if r + 2 < rows:
                springs.append(Spring(pid(r, c), pid(r + 2, c), 2 * spacing, BEND))
    return springs


def color_springs(springs: list[Spring], n_particles: int) -> list[np.ndarray]:
    """Partition springs into groups with no shared particle (greedy colouring).

    Within a group the distance projections touch disjoint particles, so a
    vectorised update is exactly equivalent to processing them sequentially.
    Group order and membership are deterministic.
    """
    color_of = np.full(len(springs), -1, dtype=np.int64)
    used_by: list[set[int]] = [set() for _ in range(n_particles)]
    n_colors = 0
    for s_idx, s in enumerate(springs):
        taken = used_by[s.i] | used_by[s.j]
        c = 0
        while c in taken:
            c += 1
        color_of[s_idx] = c
        used_by[s.i].add(c)
        used_by[s.j].add(c)
        n_colors = max(n_colors, c + 1)
    return [np.flatnonzero(color_of == c) for c in range(n_colors)]


@dataclass
class ClothMesh:
    rows: int
    cols: int
    spacing: float
    particle_radius: float
    springs: list[Spring]
    stiffness: dict[str, float]
    downsample_factor: int
    downsampled_indices: np.ndarray  # particle ids retained after subsampling
    downsampled_springs: list[Spring]  # indices into downsampled_indices
    # spring arrays, grouped for conflict-free vectorised projection
    spring_groups: list[np.ndarray] = field(default_factory=list, repr=False)
    spring_i: np.ndarray = field(default=None, repr=False)
    spring_j: np.ndarray = field(default=None, repr=False)
    spring_rest: np.ndarray = field(default=None, repr=False)
    spring_k: np.ndarray = field(default=None, repr=False)
    # spring-connected pairs are governed by their distance constraints and
    # skipped by self-collision (sorted keys i * n + j, i < j)
    collision_excluded_keys: np.ndarray = field(default=None, repr=False)

    @property
    def n_particles(self) -> int:
        return self.rows * self.cols

    @property
    def down_rows(self) -> int:
        return -(-self.rows // self.downsample_factor)

    @property
    def down_cols(self) -> int:
        return -(-self.cols // self.downsample_factor)

    def rest_positions(self, center=(0.0, 0.0), height: float | None = None) -> np.ndarray:
        """Flat grid in the xz-plane, centred on ``center``, resting on the table."""
        if height is None:
            height = self.particle_radius
        r_idx, c_idx = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        x = (c_idx - (self.cols - 1) / 2.0) * self.spacing + center[0]
        z = (r_idx - (self.rows - 1) / 2.0) * self.spacing + center[1]
        pos = np.stack([x.ravel(), np.full(self.n_particles, float(height)), z.ravel()], axis=1)
        return pos

    def spring_count(self, kind: int) -> int:
        return sum(1 for s in self.springs if s.kind == kind)


def finalize_springs(springs: list[Spring], n_particles: int, stiffness_of_kind) -> tuple:
    """Pack a spring list into flat arrays plus conflict-free groups."""
    groups = color_springs(springs, n_particles)
    i = np.array([s.i for s in springs], dtype=np.int64)
    j = np.array([s.j for s in springs], dtype=np.int64)
    rest = np.array([s.rest_length for s in springs], dtype=np.float64)
    k = np.array([stiffness_of_kind(s.kind) for s in springs], dtype=np.float64)
    return groups, i, j, rest, k


def pair_keys(i: np.ndarray, j: np.ndarray, n_particles: int) -> np.ndarray:
    lo = np.minimum(i, j).astype(np.int64)
    hi = np.maximum(i, j).astype(np.int64)
    return lo * n_particles + hi


def build_cloth(
    rows: int,
    cols: int,
    spacing: float = DEFAULT_SPACING,
    stiffness: dict[str, float] | None = None,
    particle_radius: float = DEFAULT_PARTICLE_RADIUS,
    downsample_factor: int = 3,
) -> ClothMesh:
    """Construct a grid cloth with stretch/shear/bend springs.

    Raises ValueError for grids smaller than 4x4 or non-positive spacing.
    """
    if rows < 4 or cols < 4:
        raise ValueError(f"cloth grid must be at least 4x4, got {rows}x{cols}")
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    stiff = dict(DEFAULT_STIFFNESS)
    if stiffness:
        stiff.update(stiffness)

    springs = _grid_springs(rows, cols, spacing)

    # subsample every k-th row/column; ceil(rows/k) of them survive per axis
    k = downsample_factor
    kept_r = np.arange(0, rows, k)
    kept_c = np.arange(0, cols, k)
    down_idx = (kept_r[:, None] * cols + kept_c[None, :]).ravel().astype(np.int64)
    down_springs = _grid_springs(len(kept_r), len(kept_c), spacing * k)

    mesh = ClothMesh(
        rows=rows,
        cols=cols,
        spacing=spacing,
        particle_radius=particle_radius,
        springs=springs,
        stiffness=stiff,
        downsample_factor=k,
        downsampled_indices=down_idx,
        downsampled_springs=down_springs,
    )
    kind_k = lambda kind: stiff[KIND_NAMES[kind]]
    (mesh.spring_groups, mesh.spring_i, mesh.spring_j,
     mesh.spring_rest, mesh.spring_k) = finalize_springs(springs, rows * cols, kind_k)
    mesh.collision_excluded_keys = np.sort(pair_keys(mesh.spring_i, mesh.spring_j, rows * cols))
    return mesh


@dataclass
class ParticleSystem:
    """Free-form particle set with explicit springs (duck-typed like ClothMesh)."""

    n_particles: int
    particle_radius: float
    spring_groups: list[np.ndarray]
    spring_i: np.ndarray
    spring_j: np.ndarray
    spring_rest: np.ndarray
    spring_k: np.ndarray
    collision_excluded_keys: np.ndarray


def build_particle_system(
    n_particles: int,
    springs: list[Spring],
    particle_radius: float = DEFAULT_PARTICLE_RADIUS,
    stiffness: float = DEFAULT_STIFFNESS["stretch"],
) -> ParticleSystem:
    groups, i, j, rest, k = finalize_springs(springs, n_particles, lambda kind: stiffness)
    return ParticleSystem(
        n_particles=n_particles,
        particle_radius=particle_radius,
        spring_groups=groups,
        spring_i=i,
        spring_j=j,
        spring_rest=rest,
        spring_k=k,
        collision_excluded_keys=np.sort(pair_keys(i, j, n_particles)) if len(i) else np.empty(0, np.int64),
    )


def downsampled_adjacency(mesh: ClothMesh) -> set[tuple[int, int]]:
    """Unordered pairs (a, b), a < b, joined by a downsampled spring."""
    pairs = set()
    for s in mesh.downsampled_springs:
        a, b = (s.i, s.j) if s.i < s.j else (s.j, s.i)
        pairs.add((a, b))
    return pairs
