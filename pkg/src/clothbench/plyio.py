"""Binary little-endian PLY point-cloud reader/writer (float32 positions)."""

from __future__ import annotations

import numpy as np


def write_ply(path, points: np.ndarray) -> None:
    pts = np.ascontiguousarray(np.asarray(points, dtype="<f4"))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(pts.tobytes())


def read_ply(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise ValueError(f"{path} is not a PLY file")
    n = None
    for line in blob[:end].decode("ascii").splitlines():
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts[:2] == ["format", "ascii"]:
            raise ValueError("only binary little-endian PLY is supported")
    if n is None:
        raise ValueError("PLY header lacks a vertex element")
    body = blob[end + len(b"end_header\n"):]
    pts = np.frombuffer(body, dtype="<f4", count=n * 3).reshape(n, 3)
    return pts.copy()
