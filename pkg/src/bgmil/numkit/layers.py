from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .tensor import Tensor, activation, ensure_tensor, parameter


def glorot_uniform(fan_in: int, fan_out: int, rng: Rng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class DenseLayer:
    """Affine map followed by an elementwise activation."""

    weight: Tensor
    bias: Tensor
    activation: str = "identity"

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(
                f"weight {self.weight.shape} and bias {self.bias.shape} are inconsistent"
            )
        activation(self.activation)  # validates the name

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: Rng, activation: str = "identity") -> "DenseLayer":
        return cls(parameter(glorot_uniform(in_dim, out_dim, rng)), parameter(np.zeros(out_dim)), activation)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def __call__(self, x) -> Tensor:
        return dense_forward(self, x)


def dense_forward(layer: DenseLayer, x) -> Tensor:
    x = ensure_tensor(x)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"input has {x.shape[-1]} columns, layer expects {layer.in_dim}")
    return activation(layer.activation)(x @ layer.weight + layer.bias)


def dropout_mask(shape, rate: float, rng: Rng) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_apply(x, rate: float, rng: Rng | None, train_mode: bool):
    """Inverted dropout. Returns ``x`` itself when inactive or ``rate == 0``.

    Works on plain arrays and on tensors (the mask is a constant factor).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train_mode or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("active dropout needs an Rng")
    mask = dropout_mask(np.shape(x.data if isinstance(x, Tensor) else x), rate, rng)
    return x * mask


@dataclass
class LayerNorm:
    gain: Tensor
    bias: Tensor
    eps: float = 1e-5

    @classmethod
    def init(cls, dim: int) -> "LayerNorm":
        return cls(parameter(np.ones(dim)), parameter(np.zeros(dim)))

    def parameters(self) -> list[Tensor]:
        return [self.gain, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        from .tensor import layer_norm

        return layer_norm(x, self.gain, self.bias, self.eps)
