"""Between-bag graphs, kNN construction, renormalized adjacency and GCN stacks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .numkit import DenseLayer, Rng, Tensor, dropout_apply
from .numkit.tensor import activation, constant_matmul, ensure_tensor

PRUNE_BELOW = 1e-8


class GraphError(ValueError):
    pass


class Graph:
    """Undirected, non-negatively weighted graph without self-loops.

    Stored as a symmetric CSR matrix; weights below 1e-8 are dropped.
    """

    def __init__(self, adjacency, check: bool = True):
        a = sp.csr_matrix(adjacency, dtype=np.float64)
        if a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got {a.shape}")
        a.data[np.abs(a.data) < PRUNE_BELOW] = 0.0
        a.eliminate_zeros()
        a.sort_indices()
        if check:
            if a.nnz and a.data.min() < 0:
                raise GraphError("negative edge weight")
            if a.diagonal().any():
                raise GraphError("self-loops are not allowed")
            if (a != a.T).nnz:
                raise GraphError("adjacency is not symmetric")
            if not np.all(np.isfinite(a.data)):
                raise GraphError("non-finite edge weight")
        self.adjacency = a

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(sp.csr_matrix((n, n)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "Graph":
        rows, cols, vals = [], [], []
        for i, j, w in edges:
            rows += [i, j]
            cols += [j, i]
            vals += [w, w]
        return cls(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    def degrees(self) -> np.ndarray:
        """Number of incident edges per node."""
        return np.diff(self.adjacency.indptr)

    def weighted_degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    def mean_degree(self) -> float:
        return float(self.degrees().mean())

    def edges(self) -> list[tuple[int, int, float]]:
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[k]), int(upper.col[k]), float(upper.data[k])) for k in order]

    def permuted(self, perm: np.ndarray) -> "Graph":
        """Graph with node ``perm[i]`` renamed to ``i``."""
        a = self.adjacency[perm][:, perm]
        return Graph(a)

    def embed(self, nodes: np.ndarray, n: int) -> "Graph":
        """Place this graph on ``nodes`` of a larger n-node graph; others isolated."""
        coo = self.adjacency.tocoo()
        nodes = np.asarray(nodes)
        return Graph(sp.csr_matrix((coo.data, (nodes[coo.row], nodes[coo.col])), shape=(n, n)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and (self.adjacency != other.adjacency).nnz == 0

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.num_edges()})"


def sq_euclidean(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    sq = (points * points).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    d = np.maximum(0.5 * (d + d.T), 0.0)
    np.fill_diagonal(d, 0.0)
    return d


def nearest_neighbors(dist: np.ndarray, k: int) -> np.ndarray:
    """Row i lists the k nearest other nodes, ties to the lower index."""
    n = dist.shape[0]
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    # stable sort keeps index order among equal distances
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def build_knn_graph(points=None, k: int = 1, distances: np.ndarray | None = None) -> Graph:
    """Unit-weight kNN graph symmetrized by the OR rule."""
    if distances is None:
        if points is None:
            raise ValueError("give points or distances")
        distances = sq_euclidean(points)
    n = distances.shape[0]
    if k < 1:
        raise GraphError(f"k must be at least 1, got {k}")
    if k >= n:
        raise GraphError(f"k={k} must be smaller than the number of nodes ({n})")
    nbrs = nearest_neighbors(distances, k)
    rows = np.repeat(np.arange(n), k)
    a = sp.csr_matrix((np.ones(n * k), (rows, nbrs.ravel())), shape=(n, n))
    a = a.maximum(a.T)
    return Graph(a)


@dataclass(frozen=True)
class NormalizedAdjacency:
    matrix: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n: int) -> "NormalizedAdjacency":
        return cls(sp.identity(n, format="csr", dtype=np.float64))

    def permuted(self, perm: np.ndarray) -> "NormalizedAdjacency":
        return NormalizedAdjacency(self.matrix[perm][:, perm].tocsr())


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a_hat = g.adjacency + sp.identity(g.n, format="csr")
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    m = (inv_sqrt @ a_hat @ inv_sqrt).tocsr()
    m.sort_indices()
    return NormalizedAdjacency(m)


@dataclass
class GcnStack:
    """Graph convolutions H <- act(Ã drop(H) W + b), one DenseLayer per step."""

    layers: list[DenseLayer]
    dropout_rate: float = 0.5

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer widths do not chain: {a.out_dim} -> {b.in_dim}")

    @classmethod
    def init(
        cls,
        dims: list[int],
        rng: Rng,
        dropout_rate: float = 0.5,
        hidden_activation: str = "relu",
    ) -> "GcnStack":
        layers = []
        for idx, (i, o) in enumerate(zip(dims, dims[1:])):
            act = "identity" if idx == len(dims) - 2 else hidden_activation
            layers.append(DenseLayer.init(i, o, rng.child(idx), act))
        return cls(layers, dropout_rate)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def gcn_forward(
    stack: GcnStack,
    adj: NormalizedAdjacency,
    z,
    rng: Rng | None = None,
    train_mode: bool = False,
) -> Tensor:
    """Forward pass over all nodes. Dropout hits each layer input when ``train_mode``."""
    h = ensure_tensor(z)
    if h.shape[1] != stack.in_dim:
        raise ValueError(f"embedding has {h.shape[1]} columns, GCN expects {stack.in_dim}")
    if h.shape[0] != adj.n:
        raise ValueError(f"{h.shape[0]} node rows but adjacency has {adj.n} nodes")
    for idx, layer in enumerate(stack.layers):
        h = dropout_apply(h, stack.dropout_rate, None if rng is None else rng.child(idx), train_mode)
        h = activation(layer.activation)(constant_matmul(adj.matrix, h @ layer.weight) + layer.bias)
    return h
