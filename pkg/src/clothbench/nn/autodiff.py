"""Minimal reverse-mode automatic differentiation over numpy arrays.

Operations append their backward closure to a tape as they execute; calling
`Tape.backward` on a scalar loss walks the tape in reverse, accumulating
gradients into `Tensor.grad`.  Only the handful of operations the graph
network needs are provided.  Gradient accumulation uses `np.add.at` for
gathers, which is deterministic, and every op preserves the dtype of its
inputs so the same code runs in float32 for training and float64 for
finite-difference shadow checks.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "needs_grad")

    def __init__(self, value: np.ndarray, needs_grad: bool = False):
        self.value = value
        self.grad = None
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.value.shape

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad


class Tape:
    def __init__(self):
        self._ops: list = []

    def _track(self, out: Tensor, backward) -> Tensor:
        if out.needs_grad:
            self._ops.append(backward)
        return out

    def leaf(self, value: np.ndarray, needs_grad: bool = False) -> Tensor:
        return Tensor(np.asarray(value), needs_grad)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.value @ b.value, a.needs_grad or b.needs_grad)

        def backward():
            if out.grad is None:
                return
            if a.needs_grad:
                a.ensure_grad()
                a.grad += out.grad @ b.value.T
            if b.needs_grad:
                b.ensure_grad()
                b.grad += a.value.T @ out.grad

        return self._track(out, backward)

    def add_bias(self, x: Tensor, b: Tensor) -> Tensor:
        out = Tensor(x.value + b.value, x.needs_grad or b.needs_grad)

        def backward():
            if out.grad is None:
                return
            if x.needs_grad:
                x.ensure_grad()
                x.grad += out.grad
            if b.needs_grad:
                b.ensure_grad()
                b.grad += out.grad.sum(axis=0)

        return self._track(out, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.value + b.value, a.needs_grad or b.needs_grad)

        def backward():
            if out.grad is None:
                return
            for t in (a, b):
                if t.needs_grad:
                    t.ensure_grad()
                    t.grad += out.grad

        return self._track(out, backward)

    def relu(self, x: Tensor) -> Tensor:
        out = Tensor(np.maximum(x.value, 0), x.needs_grad)

        def backward():
            if out.grad is None:
                return
            x.ensure_grad()
            x.grad += out.grad * (x.value > 0)

        return self._track(out, backward)

    def concat(self, tensors: list[Tensor]) -> Tensor:
        out = Tensor(np.concatenate([t.value for t in tensors], axis=1),
                     any(t.needs_grad for t in tensors))
        widths = [t.value.shape[1] for t in tensors]

        def backward():
            if out.grad is None:
                return
            start = 0
            for t, w in zip(tensors, widths):
                if t.needs_grad:
                    t.ensure_grad()
                    t.grad += out.grad[:, start:start + w]
                start += w

        return self._track(out, backward)

    def gather(self, x: Tensor, idx: np.ndarray) -> Tensor:
        out = Tensor(x.value[idx], x.needs_grad)

        def backward():
            if out.grad is None:
                return
            x.ensure_grad()
            np.add.at(x.grad, idx, out.grad)

        return self._track(out, backward)

    def segment_sum(self, x: Tensor, idx: np.ndarray, n: int) -> Tensor:
        acc = np.zeros((n, x.value.shape[1]), dtype=x.value.dtype)
        np.add.at(acc, idx, x.value)
        out = Tensor(acc, x.needs_grad)

        def backward():
            if out.grad is None:
                return
            x.ensure_grad()
            x.grad += out.grad[idx]

        return self._track(out, backward)

    def segment_mean(self, x: Tensor, idx: np.ndarray, n: int) -> Tensor:
        counts = np.bincount(idx, minlength=n).astype(x.value.dtype)
        counts = np.maximum(counts, 1)
        acc = np.zeros((n, x.value.shape[1]), dtype=x.value.dtype)
        np.add.at(acc, idx, x.value)
        out = Tensor(acc / counts[:, None], x.needs_grad)

        def backward():
            if out.grad is None:
                return
            x.ensure_grad()
            x.grad += (out.grad / counts[:, None])[idx]

        return self._track(out, backward)

    def scale(self, x: Tensor, s: float) -> Tensor:
        out = Tensor(x.value * s, x.needs_grad)

        def backward():
            if out.grad is None:
                return
            x.ensure_grad()
            x.grad += out.grad * s

        return self._track(out, backward)

    def mse(self, pred: Tensor, target: np.ndarray) -> Tensor:
        diff = pred.value - target
        out = Tensor(np.asarray((diff * diff).mean(), dtype=pred.value.dtype), pred.needs_grad)

        def backward():
            if out.grad is None:
                return
            pred.ensure_grad()
            pred.grad += (2.0 / diff.size) * diff * out.grad

        return self._track(out, backward)

    def bce_logits(self, logits: Tensor, labels: np.ndarray) -> Tensor:
        z = logits.value
        y = labels.astype(z.dtype)
        # mean of y*softplus(-z) + (1-y)*softplus(z)
        loss = np.logaddexp(0.0, z) - y * z
        out = Tensor(np.asarray(loss.mean(), dtype=z.dtype), logits.needs_grad)

        def backward():
            if out.grad is None:
                return
            logits.ensure_grad()
            sig = 1.0 / (1.0 + np.exp(-z))
            logits.grad += (sig - y) / z.size * out.grad

        return self._track(out, backward)

    def add_scalars(self, terms: list[tuple[float, Tensor]]) -> Tensor:
        total = sum(wgt * t.value for wgt, t in terms)
        out = Tensor(np.asarray(total), any(t.needs_grad for _, t in terms))

        def backward():
            if out.grad is None:
                return
            for wgt, t in terms:
                if t.needs_grad:
                    t.ensure_grad()
                    t.grad += wgt * out.grad

        return self._track(out, backward)

    def backward(self, loss: Tensor) -> None:
        loss.grad = np.ones_like(loss.value)
        for op in reversed(self._ops):
            op()
