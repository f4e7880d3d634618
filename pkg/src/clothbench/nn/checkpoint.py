"""Model checkpoints: `model.json` (architecture, statistics, parameter
table with blob offsets) next to `model.f32` (little-endian float32 values,
row-major).  Save -> load -> save reproduces both files byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gnn import GnBlock, GnsParameters, NormStats
from .mlp import MlpParams

FORMAT_VERSION = 1


def save_model(params: GnsParameters, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table = []
    offset = 0
    chunks = []
    for name, arr in params.named_arrays():
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr32.size
        chunks.append(arr32.reshape(-1))
    blob = np.concatenate(chunks) if chunks else np.empty(0, dtype="<f4")

    st = params.stats
    meta = {
        "format_version": FORMAT_VERSION,
        "variant": params.variant,
        "l_blocks": params.l_blocks,
        "latent_dim": params.latent_dim,
        "hidden_dim": params.hidden_dim,
        "history": params.history,
        "use_global": params.use_global,
        "has_reward_head": params.reward_head is not None,
        "stats": {
            "node_mean": st.node_mean.tolist(),
            "node_std": st.node_std.tolist(),
            "edge_mean": st.edge_mean.tolist(),
            "edge_std": st.edge_std.tolist(),
            "accel_mean": st.accel_mean.tolist(),
            "accel_std": st.accel_std.tolist(),
            "reward_mean": st.reward_mean,
            "reward_std": st.reward_std,
        },
        "params": table,
        "total_values": int(offset),
    }
    with open(directory / "model.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    blob.tofile(directory / "model.f32")
    return directory


def _mlp_from_table(named: dict, prefix: str) -> MlpParams:
    weights, biases = [], []
    k = 0
    while f"{prefix}.w{k}" in named:
        weights.append(named[f"{prefix}.w{k}"])
        biases.append(named[f"{prefix}.b{k}"])
        k += 1
    if not weights:
        raise ValueError(f"checkpoint lacks parameters for {prefix!r}")
    return MlpParams(weights=weights, biases=biases)


def load_model(directory) -> GnsParameters:
    directory = Path(directory)
    with open(directory / "model.json") as fh:
        meta = json.load(fh)
    blob = np.fromfile(directory / "model.f32", dtype="<f4")
    if len(blob) != meta["total_values"]:
        raise ValueError("model.f32 size does not match the parameter table")

    named = {}
    for entry in meta["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        named[entry["name"]] = blob[entry["offset"]:entry["offset"] + size].reshape(shape).copy()

    st = meta["stats"]
    stats = NormStats(
        node_mean=np.asarray(st["node_mean"], dtype=np.float64),
        node_std=np.asarray(st["node_std"], dtype=np.float64),
        edge_mean=np.asarray(st["edge_mean"], dtype=np.float64),
        edge_std=np.asarray(st["edge_std"], dtype=np.float64),
        accel_mean=np.asarray(st["accel_mean"], dtype=np.float64),
        accel_std=np.asarray(st["accel_std"], dtype=np.float64),
        reward_mean=st["reward_mean"],
        reward_std=st["reward_std"],
    )

    blocks = []
    for l in range(meta["l_blocks"]):
        blocks.append(GnBlock(
            edge=_mlp_from_table(named, f"blocks.{l}.edge"),
            node=_mlp_from_table(named, f"blocks.{l}.node"),
            globl=_mlp_from_table(named, f"blocks.{l}.global"),
        ))
    return GnsParameters(
        variant=meta["variant"],
        l_blocks=meta["l_blocks"],
        latent_dim=meta["latent_dim"],
        hidden_dim=meta["hidden_dim"],
        history=meta["history"],
        use_global=meta["use_global"],
        node_encoder=_mlp_from_table(named, "node_encoder"),
        edge_encoder=_mlp_from_table(named, "edge_encoder"),
        blocks=blocks,
        decoder=_mlp_from_table(named, "decoder"),
        reward_head=_mlp_from_table(named, "reward_head") if meta["has_reward_head"] else None,
        stats=stats,
    )
