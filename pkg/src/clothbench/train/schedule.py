"""Reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

PLATEAU_FACTOR = 0.8
PLATEAU_REL_IMPROVEMENT = 1e-4
LR_MIN = 1e-6


@dataclass
class PlateauState:
    lr: float
    best: float = float("inf")
    bad_epochs: int = 0
    patience: int = 5
    factor: float = PLATEAU_FACTOR
    min_lr: float = LR_MIN

    def update(self, val_loss: float) -> float:
        """Report one epoch's validation loss; returns the lr to use next."""
        if val_loss < self.best * (1.0 - PLATEAU_REL_IMPROVEMENT):
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


def lr_on_plateau(history, patience: int = 5, lr: float = 1e-4) -> float:
    """Learning rate after feeding a whole validation-loss history."""
    state = PlateauState(lr=lr, patience=patience)
    for v in history:
        state.update(v)
    return state.lr
