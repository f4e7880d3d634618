"""Crumpled start-state generation: pick the flat cloth up, then drop it."""

from __future__ import annotations

import numpy as np

from .. import rng
from .config import SimConfig
from .mesh import ClothMesh
from .pbd import settle, step
from .state import SimState, attach, flatten_reference, release

LIFT_STEPS = 30
SETTLE_STEPS = 60
LIFT_RANGE = (0.05, 0.15)


def crumple(
    mesh: ClothMesh,
    seed: int,
    config: SimConfig | None = None,
    lift_height: float | None = None,
) -> SimState:
    """Deterministic crumpled configuration for (mesh, seed).

    A seeded random particle of the flat cloth is lifted to a seeded height in
    LIFT_RANGE over LIFT_STEPS steps, released, and the cloth settles for
    SETTLE_STEPS steps.  `lift_height` overrides the seeded height (0.0 gives
    a degenerate no-op drop).
    """
    config = config or SimConfig.cloth_preset()
    gen = rng.stream(seed, "crumple")
    state = flatten_reference(mesh)

    u = int(gen.integers(0, mesh.n_particles))
    if lift_height is None:
        lift_height = float(gen.uniform(*LIFT_RANGE))

    attach(state, state.positions[u])
    delta = np.array([0.0, lift_height / LIFT_STEPS, 0.0])
    for _ in range(LIFT_STEPS):
        state = step(state, mesh, delta, config=config)
    release(state)
    state = settle(state, mesh, SETTLE_STEPS, config=config)
    return state
