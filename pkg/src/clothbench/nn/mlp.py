"""Fully connected blocks: three ReLU hidden layers, linear output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor

N_HIDDEN_LAYERS = 3
HIDDEN_WIDTH = 128


@dataclass
class MlpParams:
    weights: list[np.ndarray]  # each (d_in, d_out)
    biases: list[np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def init_mlp(gen: np.random.Generator, in_dim: int, out_dim: int,
             hidden: int = HIDDEN_WIDTH, n_hidden: int = N_HIDDEN_LAYERS,
             dtype=np.float32) -> MlpParams:
    """Fan-in-scaled uniform initialisation."""
    dims = [in_dim] + [hidden] * n_hidden + [out_dim]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(gen.uniform(-bound, bound, (d_in, d_out)).astype(dtype))
        biases.append(gen.uniform(-bound, bound, d_out).astype(dtype))
    return MlpParams(weights=weights, biases=biases)


class MlpTensors:
    """Parameter arrays lifted onto a tape for one forward/backward pass."""

    def __init__(self, tape: Tape, params: MlpParams, needs_grad: bool):
        self.weights = [tape.leaf(w, needs_grad) for w in params.weights]
        self.biases = [tape.leaf(b, needs_grad) for b in params.biases]

    def tensors(self):
        return self.weights + self.biases


def mlp_forward(tape: Tape, mlp: MlpTensors, x: Tensor) -> Tensor:
    n = len(mlp.weights)
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        x = tape.add_bias(tape.matmul(x, w), b)
        if k < n - 1:
            x = tape.relu(x)
    return x


def mlp_apply(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass (no tape)."""
    n = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = x @ w + b
        if k < n - 1:
            x = np.maximum(x, 0)
    return x
