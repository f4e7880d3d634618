from .voxel import VoxelizedPointCloud, voxel_filter, DEFAULT_VOXEL_SIZE
from .edges import collision_edges, DEFAULT_NEIGHBOR_RADIUS
from .matching import MatchResult, bipartite_match

__all__ = [
    "VoxelizedPointCloud",
    "voxel_filter",
    "DEFAULT_VOXEL_SIZE",
    "collision_edges",
    "DEFAULT_NEIGHBOR_RADIUS",
    "MatchResult",
    "bipartite_match",
]
