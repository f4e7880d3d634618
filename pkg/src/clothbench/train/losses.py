"""Training losses.

All losses operate in normalised spaces: accelerations and rewards are
standardised by the model statistics before comparison.  The public helpers
here are plain numpy; the trainers assemble the same quantities on the
autodiff tape.
"""

from __future__ import annotations

import numpy as np

PROB_CLAMP = 1e-7


def loss_accel(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error between normalised accelerations."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError("shape mismatch")
    if pred.size == 0:
        raise ValueError("empty batch")
    return float(((pred - target) ** 2).mean())


def loss_edge(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy; probabilities clamped away from {0, 1}."""
    probs = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ValueError("shape mismatch")
    if probs.size == 0:
        raise ValueError("empty batch")
    return float(-(labels * np.log(probs) + (1.0 - labels) * np.log(1.0 - probs)).mean())


def loss_imitation(h_student, h_teacher, c_student, c_teacher,
                   lambda_node: float = 1.0, lambda_global: float = 1.0) -> float:
    """Weighted MSE between matched node embeddings and global embeddings."""
    node = loss_accel(h_student, h_teacher)
    glob = loss_accel(c_student, c_teacher)
    return lambda_node * node + lambda_global * glob


def loss_reward(pred, target) -> float:
    """Mean squared error between normalised rewards."""
    return loss_accel(np.asarray(pred, dtype=np.float64).reshape(-1),
                      np.asarray(target, dtype=np.float64).reshape(-1))
