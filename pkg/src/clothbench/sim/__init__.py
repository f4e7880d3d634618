from .mesh import ClothMesh, Spring, build_cloth
from .config import SimConfig
from .state import SimState, flatten_reference, attach_nearest
from .pbd import step
from .crumple import crumple
from .camera import CameraSpec, RawPointCloud, render_point_cloud, render_depth

__all__ = [
    "ClothMesh",
    "Spring",
    "build_cloth",
    "SimConfig",
    "SimState",
    "flatten_reference",
    "attach_nearest",
    "step",
    "crumple",
    "CameraSpec",
    "RawPointCloud",
    "render_point_cloud",
    "render_depth",
]
