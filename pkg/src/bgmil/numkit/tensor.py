"""Small reverse-mode autodiff over float64 numpy arrays.

Only the operations the bag encoders, GCN heads and losses need are
provided. Every op records its parents and a closure that maps the upstream
gradient to parent gradients; ``Tensor.backward`` walks the graph in reverse
topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


def _as_array(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    # sum out axes that numpy broadcasting added or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[Array], Sequence[Array | None]] | None = None,
    ):
        self.data = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    # -- plumbing -----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> Array:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Array | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, Array] = {id(self): _as_array(grad)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor(
            self.data + other.data,
            _parents=(self, other),
            _backward=lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-ensure_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return ensure_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a, b = self.data, other.data
        return Tensor(
            a * b,
            _parents=(self, other),
            _backward=lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a, b = self.data, other.data
        return Tensor(
            a / b,
            _parents=(self, other),
            _backward=lambda g: (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            ),
        )

    def __rtruediv__(self, other) -> "Tensor":
        return ensure_tensor(other) / self

    def __pow__(self, p: float) -> "Tensor":
        a = self.data
        return Tensor(a**p, _parents=(self,), _backward=lambda g: (g * p * a ** (p - 1),))

    def __matmul__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a, b = self.data, other.data

        def back(g):
            if b.ndim == 1:
                ga = np.multiply.outer(g, b)
                gb = np.tensordot(g, a, axes=(list(range(g.ndim)), list(range(a.ndim - 1))))
                return _unbroadcast(ga, a.shape), gb
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor(a @ b, _parents=(self, other), _backward=back)

    def __getitem__(self, idx) -> "Tensor":
        shape = self.shape

        def back(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor(self.data[idx], _parents=(self,), _backward=back)

    # -- shape ops -----------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        old = self.shape
        return Tensor(self.data.reshape(*shape), _parents=(self,), _backward=lambda g: (g.reshape(old),))

    def swapaxes(self, a1: int, a2: int) -> "Tensor":
        return Tensor(
            np.swapaxes(self.data, a1, a2),
            _parents=(self,),
            _backward=lambda g: (np.swapaxes(g, a1, a2),),
        )

    @property
    def T(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    # -- reductions ----------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), _backward=back)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int = 0) -> "Tensor":
        # gradient routed to the first maximal entry along the axis
        arg = np.argmax(self.data, axis=axis)
        shape = self.shape

        def back(g):
            out = np.zeros(shape)
            np.put_along_axis(out, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
            return (out,)

        return Tensor(np.take_along_axis(self.data, np.expand_dims(arg, axis), axis).squeeze(axis),
                      _parents=(self,), _backward=back)


def ensure_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# -- elementwise -------------------------------------------------------------
def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), _parents=(x,), _backward=lambda g: (g * mask,))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    neg = x.data <= 0
    e = np.exp(np.minimum(x.data, 0.0))
    out = np.where(neg, alpha * (e - 1.0), x.data)
    return Tensor(out, _parents=(x,), _backward=lambda g: (g * np.where(neg, alpha * e, 1.0),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return Tensor(t, _parents=(x,), _backward=lambda g: (g * (1.0 - t * t),))


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return Tensor(e, _parents=(x,), _backward=lambda g: (g * e,))


def log(x: Tensor) -> Tensor:
    a = x.data
    return Tensor(np.log(a), _parents=(x,), _backward=lambda g: (g / a,))


def sqrt(x: Tensor) -> Tensor:
    s = np.sqrt(x.data)
    return Tensor(s, _parents=(x,), _backward=lambda g: (g * 0.5 / s,))


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "elu": elu,
    "tanh": tanh,
    "identity": identity,
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}") from None


# -- composite ops -------------------------------------------------------------
def softmax(x: Tensor, axis: int = -1, mask: Array | None = None) -> Tensor:
    """Softmax along ``axis``. ``mask`` (broadcastable, True = keep) excludes entries."""
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor(s, _parents=(x,), _backward=back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors), _backward=back)


def constant_matmul(a, x: Tensor) -> Tensor:
    """``a @ x`` with ``a`` a fixed dense or scipy-sparse matrix."""
    out = a @ x.data
    return Tensor(np.asarray(out), _parents=(x,), _backward=lambda g: (np.asarray(a.T @ g),))


def segment_pool(x: Tensor, offsets: Array, mode: str) -> Tensor:
    """Pool consecutive row segments of ``x``.

    ``offsets`` holds segment starts plus a final end sentinel, so segment ``i``
    is rows ``offsets[i]:offsets[i+1]``. Empty segments are rejected.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    starts, ends = offsets[:-1], offsets[1:]
    sizes = ends - starts
    if np.any(sizes < 1):
        raise ValueError("cannot pool an empty bag")
    if starts[0] != 0 or ends[-1] != x.shape[0]:
        raise ValueError("offsets must cover every row of the input exactly once")
    seg = np.repeat(np.arange(len(sizes)), sizes)
    if mode == "sum" or mode == "mean":
        out = np.add.reduceat(x.data, starts, axis=0)
        scale = 1.0 / sizes[:, None] if mode == "mean" else np.ones((len(sizes), 1))
        out = out * scale

        def back(g):
            return ((g * scale)[seg],)

        return Tensor(out, _parents=(x,), _backward=back)
    if mode == "max":
        rows = np.empty((len(sizes), x.shape[1]), dtype=np.int64)
        for i, (s, e) in enumerate(zip(starts, ends)):
            rows[i] = s + np.argmax(x.data[s:e], axis=0)
        cols = np.arange(x.shape[1])
        out = x.data[rows, cols[None, :]]
        shape = x.shape

        def back(g):
            full = np.zeros(shape)
            np.add.at(full, (rows, np.broadcast_to(cols, rows.shape)), g)
            return (full,)

        return Tensor(out, _parents=(x,), _backward=back)
    raise ValueError(f"unknown pooling mode {mode!r}; expected mean, max or sum")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centred = x - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    return centred / sqrt(var + eps) * gain + bias


def custom_loss(value: float, grad: Array, *inputs: Tensor) -> Tensor:
    """Wrap a precomputed scalar loss and its gradient w.r.t. ``inputs[0]``."""
    x = inputs[0]
    return Tensor(np.array(value), _parents=(x,), _backward=lambda g: (g * grad,))


def parameters_of(objs: Iterable) -> list[Tensor]:
    out: list[Tensor] = []
    for o in objs:
        out.extend(o.parameters())
    return out
