from .grad import LOSS_ACCEL, LOSS_ACCEL_REWARD, LOSS_EDGE, LOSS_IMITATION, backward
from .losses import loss_accel, loss_edge, loss_imitation, loss_reward
from .optim import AdamState, adam_step, clip_global_norm
from .schedule import PlateauState, lr_on_plateau
from .trainers import TrainConfig, train_dynamics, train_edge, train_student_imitation

__all__ = [
    "LOSS_ACCEL",
    "LOSS_ACCEL_REWARD",
    "LOSS_EDGE",
    "LOSS_IMITATION",
    "backward",
    "loss_accel",
    "loss_edge",
    "loss_imitation",
    "loss_reward",
    "AdamState",
    "adam_step",
    "clip_global_norm",
    "PlateauState",
    "lr_on_plateau",
    "TrainConfig",
    "train_dynamics",
    "train_edge",
    "train_student_imitation",
]
