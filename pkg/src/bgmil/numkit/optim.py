from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 200
    loss: str = "cross_entropy"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.loss not in ("cross_entropy", "mse"):
            raise ValueError(f"loss must be cross_entropy or mse, got {self.loss!r}")


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_update(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    config: TrainingConfig,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam step. Inputs are not modified; new arrays and state are returned.

    Weight decay enters as an L2 term on the gradient, before the moments.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state = AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    t = state.step + 1
    lr, wd = config.learning_rate, config.weight_decay
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        if wd:
            g = g + wd * p
        m = BETA1 * m + (1 - BETA1) * g
        v = BETA2 * v + (1 - BETA2) * g * g
        m_hat = m / (1 - BETA1**t)
        v_hat = v / (1 - BETA2**t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + EPS))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(t, new_m, new_v)


class Adam:
    """Stateful wrapper over :func:`adam_update` for a list of tensors."""

    def __init__(self, params: list[Tensor], config: TrainingConfig):
        self.params = params
        self.config = config
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_update([p.data for p in self.params], grads, self.state, self.config)
        for p, value in zip(self.params, new):
            p.data = value
