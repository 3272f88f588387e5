"""Bag encoders: rFF+pool (optionally deeply supervised), residual+pool,
Deep Sets and a SAB+PMA Set Transformer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataio import BagBatch
from .graphcore import GcnStack, NormalizedAdjacency, gcn_forward
from .numkit import DenseLayer, LayerNorm, Rng, Tensor, dropout_apply, parameter
from .numkit.tensor import activation, relu, segment_pool, softmax

KINDS = ("rff_pool", "res_pool", "deep_sets", "set_transformer")
POOLING = ("mean", "max", "sum")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "rff_pool"
    hidden: tuple[int, ...] = (256, 128, 64)
    bag_hidden: tuple[int, ...] = ()
    activation: str = "relu"
    pooling: str = "max"
    dropout_rate: float = 0.0
    deep_supervision: bool = False
    heads: int = 4
    num_seeds: int = 1
    layer_norm: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}; expected one of {KINDS}")
        if self.pooling not in POOLING:
            raise ValueError(f"unknown pooling {self.pooling!r}; expected one of {POOLING}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.kind == "set_transformer":
            if len(self.hidden) != 1:
                raise ValueError("set_transformer takes a single hidden width (the SAB/PMA dimension)")
            if self.hidden[0] % self.heads:
                raise ValueError(f"width {self.hidden[0]} is not divisible by {self.heads} heads")
        if self.deep_supervision and self.kind not in ("rff_pool", "res_pool"):
            raise ValueError("deep supervision applies to rff_pool and res_pool encoders")


def pool(instance_reps, mode: str) -> np.ndarray:
    """Columnwise mean, max or sum of one bag's instance representations."""
    x = np.asarray(instance_reps, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("cannot pool an empty bag")
    return segment_pool(Tensor(x), np.array([0, x.shape[0]]), mode).data[0]


# -- attention blocks ----------------------------------------------------------
@dataclass
class MultiheadAttentionBlock:
    """MAB(Q, K) = LN(H + relu(H Wo + bo)), H = LN(Q Wq + Attn(Q, K)).

    ``layer_norm=False`` drops both normalisations.
    """

    q: DenseLayer
    k: DenseLayer
    v: DenseLayer
    o: DenseLayer
    heads: int
    ln0: LayerNorm | None = None
    ln1: LayerNorm | None = None

    @classmethod
    def init(cls, dim_q: int, dim_k: int, dim: int, heads: int, rng: Rng, layer_norm: bool = True):
        if dim % heads:
            raise ValueError(f"width {dim} is not divisible by {heads} heads")
        return cls(
            DenseLayer.init(dim_q, dim, rng.child(0)),
            DenseLayer.init(dim_k, dim, rng.child(1)),
            DenseLayer.init(dim_k, dim, rng.child(2)),
            DenseLayer.init(dim, dim, rng.child(3)),
            heads,
            LayerNorm.init(dim) if layer_norm else None,
            LayerNorm.init(dim) if layer_norm else None,
        )

    @property
    def dim(self) -> int:
        return self.o.out_dim

    def parameters(self) -> list[Tensor]:
        out = []
        for part in (self.q, self.k, self.v, self.o, self.ln0, self.ln1):
            if part is not None:
                out.extend(part.parameters())
        return out

    def attend(self, q: Tensor, k: Tensor, v: Tensor, key_mask: np.ndarray | None) -> Tensor:
        """Multihead scaled dot-product attention on already projected inputs."""
        b, nq, d = q.shape
        nk = k.shape[1]
        h, dh = self.heads, d // self.heads
        qh = q.reshape(b, nq, h, dh).swapaxes(1, 2)
        kh = k.reshape(b, nk, h, dh).swapaxes(1, 2)
        vh = v.reshape(b, nk, h, dh).swapaxes(1, 2)
        scores = (qh @ kh.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
        mask = None if key_mask is None else key_mask[:, None, None, :]
        att = softmax(scores, axis=-1, mask=mask)
        return (att @ vh).swapaxes(1, 2).reshape(b, nq, d)

    def __call__(self, queries: Tensor, keys: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        q = self.q(queries)
        out = q + self.attend(q, self.k(keys), self.v(keys), key_mask)
        if self.ln0 is not None:
            out = self.ln0(out)
        out = out + relu(self.o(out))
        if self.ln1 is not None:
            out = self.ln1(out)
        return out


def set_attention_block(x, params: MultiheadAttentionBlock, heads: int | None = None) -> Tensor:
    """Self-attention block on a single set (n x d) -> (n x width)."""
    if heads is not None and heads != params.heads:
        raise ValueError(f"block was built for {params.heads} heads, not {heads}")
    x = x if isinstance(x, Tensor) else Tensor(x)
    n, d = x.shape
    return params(x.reshape(1, n, d), x.reshape(1, n, d)).reshape(n, params.dim)


def pma_pool(x, seeds: Tensor, params: MultiheadAttentionBlock) -> Tensor:
    """Attention from ``seeds`` (m x d) onto one set (n x d) -> (m x d)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[0] < 1:
        raise ValueError("cannot pool an empty set")
    n, d = x.shape
    m = seeds.shape[0]
    return params(seeds.reshape(1, m, seeds.shape[1]), x.reshape(1, n, d)).reshape(m, params.dim)


def pad_bags(batch: BagBatch) -> tuple[np.ndarray, np.ndarray]:
    sizes = batch.sizes
    b, width = batch.num_bags, int(sizes.max())
    padded = np.zeros((b, width, batch.instances.shape[1]))
    mask = np.zeros((b, width), dtype=bool)
    for i in range(b):
        padded[i, : sizes[i]] = batch.bag(i)
        mask[i, : sizes[i]] = True
    return padded, mask


# -- encoders --------------------------------------------------------------------
@dataclass
class Encoder:
    """Parameters of a bag encoder plus its forward pass.

    ``forward`` returns one embedding matrix per supervised level; the last
    entry is the bag embedding Z_V used by the head and for graph distances.
    """

    config: EncoderConfig
    layers: list[DenseLayer] = field(default_factory=list)
    projections: list[DenseLayer | None] = field(default_factory=list)
    bag_layers: list[DenseLayer] = field(default_factory=list)
    sab: MultiheadAttentionBlock | None = None
    pma: MultiheadAttentionBlock | None = None
    seeds: Tensor | None = None

    @classmethod
    def init(cls, config: EncoderConfig, d_x: int, rng: Rng) -> "Encoder":
        enc = cls(config)
        act = config.activation
        if config.kind == "set_transformer":
            width = config.hidden[0]
            enc.sab = MultiheadAttentionBlock.init(d_x, d_x, width, config.heads, rng.child(0), config.layer_norm)
            enc.pma = MultiheadAttentionBlock.init(width, width, width, config.heads, rng.child(1), config.layer_norm)
            limit = math.sqrt(6.0 / (config.num_seeds + width))
            enc.seeds = parameter(rng.child(2).uniform(-limit, limit, size=(config.num_seeds, width)))
            return enc
        dims = [d_x, *config.hidden]
        for idx, (i, o) in enumerate(zip(dims, dims[1:])):
            enc.layers.append(DenseLayer.init(i, o, rng.child(0, idx), act))
            if config.kind == "res_pool":
                enc.projections.append(None if i == o else DenseLayer.init(i, o, rng.child(1, idx)))
        bag_dims = [dims[-1], *config.bag_hidden]
        for idx, (i, o) in enumerate(zip(bag_dims, bag_dims[1:])):
            enc.bag_layers.append(DenseLayer.init(i, o, rng.child(2, idx), act))
        return enc

    @property
    def d_z(self) -> int:
        c = self.config
        if c.kind == "set_transformer":
            return c.hidden[0] * c.num_seeds
        if self.bag_layers:
            return self.bag_layers[-1].out_dim
        return self.layers[-1].out_dim if self.layers else -1

    def level_dims(self, d_x: int) -> list[int]:
        if self.config.deep_supervision:
            return [layer.out_dim for layer in self.layers]
        d = self.d_z
        return [d_x if d < 0 else d]

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for layer in self.layers + [p for p in self.projections if p is not None] + self.bag_layers:
            out.extend(layer.parameters())
        for block in (self.sab, self.pma):
            if block is not None:
                out.extend(block.parameters())
        if self.seeds is not None:
            out.append(self.seeds)
        return out

    def forward(self, batch: BagBatch, rng: Rng | None = None, train_mode: bool = False) -> list[Tensor]:
        c = self.config
        if c.kind == "set_transformer":
            return [self._set_transformer(batch, rng, train_mode)]
        h = Tensor(batch.instances)
        if self.layers and h.shape[1] != self.layers[0].in_dim:
            raise ValueError(f"bags have {h.shape[1]} features, encoder expects {self.layers[0].in_dim}")
        levels = []
        for idx, layer in enumerate(self.layers):
            x = dropout_apply(h, c.dropout_rate, None if rng is None else rng.child(idx), train_mode)
            out = layer(x)
            if c.kind == "res_pool":
                proj = self.projections[idx]
                out = out + (x if proj is None else proj(x))
            h = out
            if c.deep_supervision:
                levels.append(segment_pool(h, batch.offsets, c.pooling))
        if c.deep_supervision:
            return levels
        z = segment_pool(h, batch.offsets, c.pooling)
        for idx, layer in enumerate(self.bag_layers):
            z = layer(dropout_apply(z, c.dropout_rate, None if rng is None else rng.child(100 + idx), train_mode))
        return [z]

    def _set_transformer(self, batch: BagBatch, rng, train_mode) -> Tensor:
        padded, mask = pad_bags(batch)
        if padded.shape[2] != self.sab.q.in_dim:
            raise ValueError(f"bags have {padded.shape[2]} features, encoder expects {self.sab.q.in_dim}")
        x = dropout_apply(Tensor(padded), self.config.dropout_rate, rng, train_mode)
        h = self.sab(x, x, mask)
        b = padded.shape[0]
        m, width = self.seeds.shape
        seeds = self.seeds.reshape(1, m, width) + Tensor(np.zeros((b, 1, 1)))
        return self.pma(seeds, h, mask).reshape(b, m * width)


def encode_bags(params: Encoder, bags, rng: Rng | None = None, train_mode: bool = False) -> np.ndarray:
    """Bag embedding matrix (|V| x d_z) for a dataset, batch or list of bags."""
    if hasattr(bags, "batch"):
        bags = bags.batch()
    elif not isinstance(bags, BagBatch):
        bags = BagBatch.from_bags(bags)
    return params.forward(bags, rng, train_mode)[-1].data


# -- deep supervision ------------------------------------------------------------
def deep_supervision_outputs(
    params: Encoder,
    embeddings: Sequence[Tensor],
    heads: Sequence[GcnStack],
    adj: NormalizedAdjacency,
    rng: Rng | None = None,
    train_mode: bool = False,
) -> list[Tensor]:
    """One prediction matrix per supervised level."""
    if not params.config.deep_supervision:
        raise ValueError("encoder was built without deep supervision")
    if len(embeddings) != len(heads):
        raise ValueError(f"{len(embeddings)} levels but {len(heads)} heads")
    return [
        gcn_forward(head, adj, z, None if rng is None else rng.child(i), train_mode)
        for i, (head, z) in enumerate(zip(heads, embeddings))
    ]


def combine_head_losses(losses: Sequence[Tensor]) -> Tensor:
    total = losses[0]
    for extra in losses[1:]:
        total = total + extra
    return total * (1.0 / len(losses))


def combine_head_predictions(outputs: Sequence[np.ndarray], classification: bool) -> np.ndarray:
    """Mean of per-head class probabilities (or raw outputs for regression)."""
    if classification:
        probs = []
        for o in outputs:
            e = np.exp(o - o.max(axis=1, keepdims=True))
            probs.append(e / e.sum(axis=1, keepdims=True))
        return np.mean(probs, axis=0)
    return np.mean(outputs, axis=0)
