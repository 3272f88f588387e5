"""Dense float64 kernel: autodiff tensors, layers, losses, Adam, streams."""

from .gradcheck import grad_check
from .layers import DenseLayer, LayerNorm, dense_forward, dropout_apply, glorot_uniform
from .losses import cross_entropy, loss_cross_entropy, loss_mse, mse
from .optim import Adam, AdamState, TrainingConfig, adam_update
from .rng import Rng
from .tensor import Tensor, parameter

__all__ = [
    "Adam",
    "AdamState",
    "DenseLayer",
    "LayerNorm",
    "Rng",
    "Tensor",
    "TrainingConfig",
    "adam_update",
    "cross_entropy",
    "dense_forward",
    "dropout_apply",
    "glorot_uniform",
    "grad_check",
    "loss_cross_entropy",
    "loss_mse",
    "mse",
    "parameter",
]
