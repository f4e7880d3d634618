"""Simulator constants."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class SimConfig:
    dt: float = 0.05
    gravity: float = 9.81  # m/s^2, acting along -y
    n_substeps: int = 1
    n_pbd_iterations: int = 15
    table_height: float = 0.0
    # tangential velocity multiplier applied on table contact; 0.5 stops a
    # sliding cloth within ~20 steps
    table_friction_damping: float = 0.5
    # particle-particle separation passes per substep (spatial-hash pairs)
    n_collision_passes: int = 2
    self_collision: bool = True
    # fraction of tangential relative motion removed between colliding pairs
    contact_friction: float = 1.0

    @classmethod
    def cloth_preset(cls, **overrides) -> "SimConfig":
        """Constants used for cloth-scale runs (crumpling, datasets, episodes).

        A hanging cloth moves several spring lengths per dt = 0.05, which a
        single projection pass cannot track: the sheet stretches hugely and
        dropped configurations unfold instead of piling up.  Substepping the
        same dt keeps constraints tight so folds survive.
        """
        cfg = cls(n_substeps=5, n_pbd_iterations=4, n_collision_passes=2)
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return cfg
