"""Synthetic depth camera: particles rendered as spheres into a z-buffer.

Two modes: a top-down orthographic camera over the workspace (default) and a
pinhole camera with free pose.  Every covered pixel back-projects to one 3-D
point from the nearest sphere surface; Gaussian noise of standard deviation
`noise_sigma` is added to the per-pixel depth before back-projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from .mesh import ClothMesh
from .state import SimState

TOP_DOWN_ORTHO = "top_down_ortho"
PINHOLE = "pinhole"


@dataclass
class CameraSpec:
    mode: str = TOP_DOWN_ORTHO
    image_width: int = 200
    image_height: int = 200
    extent: float = 0.5  # metres across the image width (ortho)
    center: tuple = (0.0, 0.0)  # workspace centre (x, z) under the ortho camera
    camera_height: float = 1.0  # ortho reference plane; depth = height - surface y
    near: float = 0.0
    far: float = 10.0
    # pinhole-only pose and optics
    eye: tuple = (0.0, 0.35, -0.45)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    fov_deg: float = 45.0

    def validate(self) -> None:
        if self.image_width < 16 or self.image_height < 16:
            raise ValueError("image dimensions must be at least 16 pixels")
        if self.mode == TOP_DOWN_ORTHO and self.extent <= 0:
            raise ValueError("camera extent must be positive")
        if self.far <= self.near:
            raise ValueError("far clip must exceed near clip")
        if self.mode not in (TOP_DOWN_ORTHO, PINHOLE):
            raise ValueError(f"unknown camera mode {self.mode!r}")


@dataclass
class RawPointCloud:
    points: np.ndarray  # (n, 3) float64
    pixel_rows: np.ndarray = field(default=None, repr=False)
    pixel_cols: np.ndarray = field(default=None, repr=False)


def _ortho_grid(camera: CameraSpec):
    px = camera.extent / camera.image_width
    extent_h = px * camera.image_height
    x0 = camera.center[0] - camera.extent / 2.0
    z0 = camera.center[1] - extent_h / 2.0
    return px, x0, z0


def render_depth(positions: np.ndarray, radius: float, camera: CameraSpec) -> np.ndarray:
    """Depth image (metres); +inf where no sphere covers the pixel."""
    camera.validate()
    h, w = camera.image_height, camera.image_width
    depth = np.full((h, w), np.inf)

    if camera.mode == TOP_DOWN_ORTHO:
        px, x0, z0 = _ortho_grid(camera)
        top_y = np.full((h, w), -np.inf)
        half = int(np.ceil(radius / px)) + 1
        offs = np.arange(-half, half + 1)
        ou, ov = np.meshgrid(offs, offs, indexing="xy")
        cu = np.floor((positions[:, 0] - x0) / px).astype(np.int64)
        cv = np.floor((positions[:, 2] - z0) / px).astype(np.int64)
        pu = cu[:, None, None] + ou[None]
        pv = cv[:, None, None] + ov[None]
        wx = x0 + (pu + 0.5) * px
        wz = z0 + (pv + 0.5) * px
        d2 = (wx - positions[:, None, None, 0]) ** 2 + (wz - positions[:, None, None, 2]) ** 2
        inside = (d2 < radius**2) & (pu >= 0) & (pu < w) & (pv >= 0) & (pv < h)
        surf = positions[:, None, None, 1] + np.sqrt(np.maximum(radius**2 - d2, 0.0))
        np.maximum.at(top_y, (pv[inside], pu[inside]), surf[inside])
        hit = np.isfinite(top_y)
        depth[hit] = camera.camera_height - top_y[hit]
    else:
        eye = np.asarray(camera.eye, dtype=np.float64)
        fwd = np.asarray(camera.look_at, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(camera.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        rot = np.stack([right, down, fwd])  # world -> camera
        f = 0.5 * w / np.tan(np.radians(camera.fov_deg) / 2.0)
        cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
        cam_pts = (positions - eye) @ rot.T
        for c in cam_pts:
            z = c[2]
            if z <= max(camera.near, radius * 1e-3):
                continue
            u0 = f * c[0] / z + cx
            v0 = f * c[1] / z + cy
            pr = int(np.ceil(f * radius / z)) + 2
            us = np.arange(max(0, int(u0) - pr), min(w, int(u0) + pr + 1))
            vs = np.arange(max(0, int(v0) - pr), min(h, int(v0) + pr + 1))
            if len(us) == 0 or len(vs) == 0:
                continue
            uu, vv = np.meshgrid(us, vs, indexing="xy")
            dirs = np.stack([(uu - cx) / f, (vv - cy) / f, np.ones_like(uu, dtype=np.float64)], axis=-1)
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
            b = dirs @ c
            disc = b**2 - (c @ c - radius**2)
            hit = disc >= 0
            t = b - np.sqrt(np.maximum(disc, 0.0))
            zd = t * dirs[..., 2]
            ok = hit & (t > 0) & (zd < depth[vv, uu])
            depth[vv[ok], uu[ok]] = zd[ok]

    depth[(depth < camera.near) | (depth > camera.far)] = np.inf
    return depth


def depth_mask(depth: np.ndarray) -> np.ndarray:
    return np.isfinite(depth)


def back_project(depth: np.ndarray, camera: CameraSpec) -> RawPointCloud:
    """One point per finite-depth pixel, in raster order."""
    rows, cols = np.nonzero(np.isfinite(depth))
    d = depth[rows, cols]
    if camera.mode == TOP_DOWN_ORTHO:
        px, x0, z0 = _ortho_grid(camera)
        x = x0 + (cols + 0.5) * px
        z = z0 + (rows + 0.5) * px
        y = camera.camera_height - d
        pts = np.stack([x, y, z], axis=1)
    else:
        eye = np.asarray(camera.eye, dtype=np.float64)
        fwd = np.asarray(camera.look_at, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(camera.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        f = 0.5 * camera.image_width / np.tan(np.radians(camera.fov_deg) / 2.0)
        cx, cy = (camera.image_width - 1) / 2.0, (camera.image_height - 1) / 2.0
        xc = (cols - cx) / f * d
        yc = (rows - cy) / f * d
        cam = np.stack([xc, yc, d], axis=1)
        pts = eye + cam @ np.stack([right, down, fwd])
    return RawPointCloud(points=pts, pixel_rows=rows, pixel_cols=cols)


def render_point_cloud(
    state: SimState,
    mesh: ClothMesh,
    camera: CameraSpec,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> RawPointCloud:
    """Render the cloth to a partial point cloud (occluded particles absent)."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    depth = render_depth(state.positions, mesh.particle_radius, camera)
    hit = np.isfinite(depth)
    noise = rng.stream(seed, "depth-noise").standard_normal(int(hit.sum()))
    depth[hit] += noise_sigma * noise
    return back_project(depth, camera)
