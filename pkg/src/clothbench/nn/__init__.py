from .gnn import (
    DYNAMICS_MODEL,
    EDGE_MODEL,
    GnsParameters,
    NormStats,
    forward_dynamics,
    forward_edges,
    forward_reward,
    init_gns,
    make_batch,
)
from .checkpoint import load_model, save_model

__all__ = [
    "DYNAMICS_MODEL",
    "EDGE_MODEL",
    "GnsParameters",
    "NormStats",
    "forward_dynamics",
    "forward_edges",
    "forward_reward",
    "init_gns",
    "make_batch",
    "load_model",
    "save_model",
]
