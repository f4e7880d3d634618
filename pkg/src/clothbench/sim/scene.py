"""Scene configuration files.

A scene is a JSON document describing the cloth, simulator constants, camera
and master seed.  All keys are optional; omitted ones fall back to the
defaults documented in the dataclasses.  Schema:

    {
      "cloth":  {"rows": 24, "cols": 24, "spacing": 0.00625,
                 "particle_radius": 0.00625, "downsample_factor": 3,
                 "stiffness": {"stretch": 0.8, "shear": 0.9, "bend": 1.0}},
      "sim":    {"dt": 0.05, "gravity": 9.81, "n_pbd_iterations": 15, ...},
      "camera": {"mode": "top_down_ortho", "image_width": 200, ...},
      "seed":   0
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .camera import CameraSpec
from .config import SimConfig
from .mesh import ClothMesh, build_cloth


@dataclass
class ClothSpec:
    rows: int = 24
    cols: int = 24
    spacing: float = 0.00625
    particle_radius: float = 0.00625
    downsample_factor: int = 3
    stiffness: dict = field(default_factory=dict)

    def build(self) -> ClothMesh:
        return build_cloth(
            self.rows,
            self.cols,
            spacing=self.spacing,
            stiffness=self.stiffness or None,
            particle_radius=self.particle_radius,
            downsample_factor=self.downsample_factor,
        )


@dataclass
class SceneConfig:
    cloth: ClothSpec = field(default_factory=ClothSpec)
    sim: SimConfig = field(default_factory=SimConfig)
    camera: CameraSpec = field(default_factory=CameraSpec)
    seed: int = 0


def _update_dataclass(obj, data: dict, name: str):
    fields = {f.name for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in fields:
            raise ValueError(f"unknown key {key!r} in {name} section")
        if isinstance(value, list):
            value = tuple(value)
        setattr(obj, key, value)
    return obj


def scene_from_dict(data: dict) -> SceneConfig:
    cfg = SceneConfig()
    if "cloth" in data:
        _update_dataclass(cfg.cloth, data["cloth"], "cloth")
    if "sim" in data:
        _update_dataclass(cfg.sim, data["sim"], "sim")
    if "camera" in data:
        _update_dataclass(cfg.camera, data["camera"], "camera")
    cfg.seed = int(data.get("seed", 0))
    cfg.camera.validate()
    return cfg


def load_scene(path) -> SceneConfig:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))


def scene_to_dict(cfg: SceneConfig) -> dict:
    return {
        "cloth": dataclasses.asdict(cfg.cloth),
        "sim": dataclasses.asdict(cfg.sim),
        "camera": dataclasses.asdict(cfg.camera),
        "seed": cfg.seed,
    }


def save_scene(cfg: SceneConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
