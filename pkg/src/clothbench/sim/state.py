"""Per-timestep simulator state and the spherical picker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import ClothMesh


@dataclass
class SimState:
    positions: np.ndarray  # (n, 3) float64, metres
    velocities: np.ndarray  # (n, 3) float64, m/s
    picked: int | None = None  # particle bound to the picker, if any
    picker_position: np.ndarray | None = None  # (3,), equals positions[picked]
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            picked=self.picked,
            picker_position=None if self.picker_position is None else self.picker_position.copy(),
            time=self.time,
        )

    def validate(self) -> None:
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite particle positions")
        if self.picked is not None:
            if self.picker_position is None:
                raise ValueError("picked particle without picker position")
            if not np.array_equal(self.positions[self.picked], self.picker_position):
                raise ValueError("picked particle detached from picker")


def flatten_reference(mesh: ClothMesh) -> SimState:
    """Rest grid laid flat on the table with zero velocity."""
    pos = mesh.rest_positions()
    return SimState(positions=pos, velocities=np.zeros_like(pos))


def attach_nearest(state: SimState, picker_position) -> int:
    """Index of the particle closest to the picker; ties go to the lowest index.

    Attaching is the caller's move: set ``state.picked`` to the returned index
    and snap ``state.picker_position`` onto that particle.
    """
    p = np.asarray(picker_position, dtype=np.float64)
    d2 = np.sum((state.positions - p) ** 2, axis=1)
    return int(np.argmin(d2))  # argmin returns the first minimum


def attach(state: SimState, picker_position) -> int:
    """Attach the picker: nearest particle binds and the picker snaps onto it."""
    u = attach_nearest(state, picker_position)
    state.picked = u
    state.picker_position = state.positions[u].copy()
    return u


def release(state: SimState) -> None:
    state.picked = None
    state.picker_position = None
