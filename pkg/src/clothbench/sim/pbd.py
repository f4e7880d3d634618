"""Position-based dynamics stepping.

One step advances the cloth by ``dt`` in ``n_substeps`` equal substeps.  A
substep is: semi-implicit gravity integration, ``n_pbd_iterations`` of
Gauss-Seidel distance-constraint projection (springs processed in
conflict-free groups, correction scaled by the per-kind stiffness each
iteration), a particle-particle separation pass, table projection, and
velocity recovery from positions.  Tangential table friction is applied once
per step.  A picked particle is kinematic: it tracks
picker_position + picker_delta with infinite mass and ends the step with
velocity picker_delta / dt.

With the default ``n_substeps = 1`` a free particle follows textbook
semi-implicit Euler exactly.  Cloth-scale runs (crumpling, data generation,
episodes) use `SimConfig.cloth_preset()`, which substeps for constraint
stability; see the preset docstring.
"""

from __future__ import annotations

import numpy as np

from ..spatial import radius_pairs
from .config import SimConfig
from .mesh import ClothMesh
from .state import SimState

_EPS_LEN = 1e-12
# collision candidate pairs are gathered once per step with this slack and
# re-checked against the true separation each substep
_PAIR_CACHE_INFLATION = 1.6


def project_spring_groups(x, w, groups, si, sj, rest, stiff):
    """One Gauss-Seidel sweep over all spring groups (in place)."""
    for grp in groups:
        i = si[grp]
        j = sj[grp]
        d = x[i] - x[j]
        length = np.linalg.norm(d, axis=1)
        wi = w[i]
        wj = w[j]
        wsum = wi + wj
        ok = (length > _EPS_LEN) & (wsum > 0)
        scale = np.where(ok, stiff[grp] * (length - rest[grp]) / (wsum * np.maximum(length, _EPS_LEN)), 0.0)
        corr = d * scale[:, None]
        x[i] -= corr * wi[:, None]
        x[j] += corr * wj[:, None]


def collision_candidates(x, radius, excluded_keys=None):
    """Candidate index pairs for minimum-separation resolution."""
    pairs = radius_pairs(x, 2.0 * radius * _PAIR_CACHE_INFLATION)
    if excluded_keys is not None and len(excluded_keys) and len(pairs):
        keys = pairs[:, 0] * len(x) + pairs[:, 1]
        pos = np.searchsorted(excluded_keys, keys)
        pos = np.minimum(pos, len(excluded_keys) - 1)
        pairs = pairs[excluded_keys[pos] != keys]
    return pairs


def separate_pairs(x, w, pairs, min_sep, x_prev=None, friction=0.0):
    """Push candidate pairs apart to `min_sep` (one Jacobi pass, in place).

    Spring-connected pairs must already be excluded; their rest distance may
    legitimately sit below the separation.  With `friction` > 0, a fraction of
    the pair's tangential relative displacement since `x_prev` is removed as
    well, so stacked layers stick instead of creeping sideways.
    """
    if len(pairs) == 0:
        return
    i, j = pairs[:, 0], pairs[:, 1]
    d = x[i] - x[j]
    length = np.linalg.norm(d, axis=1)
    hit = (length < min_sep) & (length > _EPS_LEN)
    if not hit.any():
        return
    i, j, d, length = i[hit], j[hit], d[hit], length[hit]
    wi, wj = w[i], w[j]
    wsum = wi + wj
    wsafe = np.maximum(wsum, _EPS_LEN)
    push = np.where(wsum > 0, (min_sep - length) / (wsafe * length), 0.0)
    corr = d * push[:, None]
    if friction > 0.0 and x_prev is not None:
        rel = (x[i] - x_prev[i]) - (x[j] - x_prev[j])
        normal = d / length[:, None]
        tang = rel - np.sum(rel * normal, axis=1)[:, None] * normal
        tnorm = np.linalg.norm(tang, axis=1)
        # Coulomb cap: tangential removal bounded by friction * normal push
        cap = friction * (min_sep - length)
        scale = np.where(tnorm > _EPS_LEN, np.minimum(1.0, cap / np.maximum(tnorm, _EPS_LEN)), 0.0)
        corr -= tang * (scale / wsafe * (wsum > 0))[:, None]
    delta = np.zeros_like(x)
    counts = np.zeros(len(x))
    np.add.at(delta, i, corr * wi[:, None])
    np.add.at(delta, j, -corr * wj[:, None])
    np.add.at(counts, i, 1.0)
    np.add.at(counts, j, 1.0)
    x += delta / np.maximum(counts, 1.0)[:, None]


def step(
    state: SimState,
    mesh: ClothMesh,
    picker_delta=(0.0, 0.0, 0.0),
    dt: float | None = None,
    config: SimConfig | None = None,
) -> SimState:
    """Advance the cloth by one timestep; returns a new SimState."""
    config = config or SimConfig()
    if dt is None:
        dt = config.dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    state.validate()

    x = state.positions.copy()
    v = state.velocities.copy()
    n = len(x)
    w = np.ones(n)
    floor = config.table_height + mesh.particle_radius

    picked = state.picked
    delta = np.asarray(picker_delta, dtype=np.float64)
    new_picker = None
    if picked is not None:
        new_picker = state.picker_position + delta
        # the picker cannot drag the cloth through the table
        new_picker[1] = max(new_picker[1], floor)
        w[picked] = 0.0
        picker_path = state.picker_position + (new_picker - state.picker_position) \
            * (np.arange(1, config.n_substeps + 1)[:, None] / config.n_substeps)

    pairs = collision_candidates(x, mesh.particle_radius, mesh.collision_excluded_keys) \
        if config.self_collision else np.empty((0, 2), dtype=np.int64)

    dt_s = dt / config.n_substeps
    for s in range(config.n_substeps):
        x_prev = x.copy()
        v[:, 1] -= config.gravity * dt_s
        x += v * dt_s * w[:, None]
        if picked is not None:
            x[picked] = picker_path[s]

        for _ in range(config.n_pbd_iterations):
            project_spring_groups(x, w, mesh.spring_groups, mesh.spring_i, mesh.spring_j,
                                  mesh.spring_rest, mesh.spring_k)
        if config.self_collision:
            for _ in range(config.n_collision_passes):
                separate_pairs(x, w, pairs, 2.0 * mesh.particle_radius,
                               x_prev=x_prev, friction=config.contact_friction)
        # floor contact with Coulomb-capped tangential friction
        pen = np.where(w > 0, floor - x[:, 1], 0.0)
        clamped = pen > 0
        if clamped.any():
            x[clamped, 1] = floor
            if config.contact_friction > 0.0:
                txz = x[clamped][:, (0, 2)] - x_prev[clamped][:, (0, 2)]
                tnorm = np.linalg.norm(txz, axis=1)
                cap = config.contact_friction * pen[clamped]
                scale = np.where(tnorm > _EPS_LEN, np.minimum(1.0, cap / np.maximum(tnorm, _EPS_LEN)), 0.0)
                x[clamped, 0] -= txz[:, 0] * scale
                x[clamped, 2] -= txz[:, 1] * scale
        v = (x - x_prev) / dt_s

    contact = x[:, 1] <= floor + 1e-9
    v[contact, 0] *= config.table_friction_damping
    v[contact, 2] *= config.table_friction_damping
    if picked is not None:
        x[picked] = new_picker
        v[picked] = delta / dt

    return SimState(
        positions=x,
        velocities=v,
        picked=picked,
        picker_position=new_picker,
        time=state.time + dt,
    )


def settle(state: SimState, mesh: ClothMesh, n_steps: int, config: SimConfig | None = None) -> SimState:
    """Run `n_steps` picker-free steps."""
    for _ in range(n_steps):
        state = step(state, mesh, (0.0, 0.0, 0.0), config=config)
    return state
