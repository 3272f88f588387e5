from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def grad_check(
    forward: Callable[[], Tensor],
    params: list[Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest |analytic - central difference| / max(1, |analytic|) over ``params``.

    ``forward`` must rebuild the scalar output from the current parameter
    values. ``max_entries`` limits the per-parameter entries probed (sampled
    with ``rng``) for large models.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    for p in params:
        p.grad = None
    out = forward()
    if out.data.size != 1:
        raise ValueError("forward must return a scalar")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite analytic gradient")
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = float(forward().data)
            flat[i] = orig - h
            down = float(forward().data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError("non-finite value during finite differencing")
            numeric = (up - down) / (2 * h)
            ai = a.reshape(-1)[i]
            worst = max(worst, abs(ai - numeric) / max(1.0, abs(ai)))
    for p in params:
        p.grad = None
    return worst
