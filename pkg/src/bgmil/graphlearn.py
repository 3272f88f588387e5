"""MAP graph inference under a log-degree barrier and Frobenius penalty.

The learned adjacency A minimizes

    sum_ij A_ij D_ij - alpha * sum_i log(sum_j A_ij) + beta * ||A||_F^2

over symmetric non-negative A supported on a kr-nearest-neighbour edge set.
Weights live on the upper-triangular edge vector w, so the three terms read
2 z.w, -alpha 1.log(S w) and 2 beta ||w||^2 with S the edge-to-degree map.
The solver is a forward-backward-forward primal-dual iteration.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphcore import Graph, GraphError, nearest_neighbors, sq_euclidean

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.values, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"distance matrix must be square, got {d.shape}")
        if d.shape[0] < 2:
            raise ValueError("need at least two nodes")
        if not np.all(np.isfinite(d)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(d < 0):
            raise ValueError("distances must be non-negative")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix must be symmetric")
        object.__setattr__(self, "values", d)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def scaled(self, c: float) -> "DistanceMatrix":
        return DistanceMatrix(self.values * c)

    def permuted(self, perm) -> "DistanceMatrix":
        return DistanceMatrix(self.values[np.ix_(perm, perm)])


@dataclass(frozen=True)
class GraphLearnConfig:
    k: int = 5
    r: int = 3
    alpha: float = 1.0
    beta: float = 1.0
    max_iters: int = 1000
    rel_tol: float = 1e-5
    auto_calibrate: bool = True
    step: float = 0.95
    representation: str = "penultimate"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.r < 1:
            raise ValueError(f"r must be at least 1, got {self.r}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.step < 1:
            raise ValueError("step must lie in (0, 1)")
        if self.representation not in ("penultimate", "output"):
            raise ValueError("representation must be 'penultimate' or 'output'")


@dataclass(frozen=True)
class EdgeSet:
    """Unordered pairs (i < j), sorted lexicographically."""

    n: int
    i: np.ndarray
    j: np.ndarray

    def __len__(self) -> int:
        return len(self.i)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.i.tolist(), self.j.tolist()))

    @classmethod
    def complete(cls, n: int) -> "EdgeSet":
        i, j = np.triu_indices(n, k=1)
        return cls(n, i.astype(np.int64), j.astype(np.int64))


def pairwise_sq_euclidean(z) -> DistanceMatrix:
    z = np.asarray(getattr(z, "values", z), dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("need at least two representations")
    return DistanceMatrix(sq_euclidean(z))


def restrict_edge_set(d: DistanceMatrix, k: int, r: int) -> EdgeSet:
    m = k * r
    if m >= d.n:
        raise ValueError(f"k*r = {m} must be smaller than the number of nodes ({d.n})")
    nbrs = nearest_neighbors(d.values, m)
    rows = np.repeat(np.arange(d.n), m)
    cols = nbrs.ravel()
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    keys = np.unique(lo * d.n + hi)
    return EdgeSet(d.n, keys // d.n, keys % d.n)


def _objective(w, z, edges: EdgeSet, alpha: float, beta: float) -> float:
    deg = np.bincount(edges.i, w, edges.n) + np.bincount(edges.j, w, edges.n)
    if np.any(deg <= 0):
        return math.inf
    return float(2.0 * (z @ w) - alpha * np.log(deg).sum() + 2.0 * beta * (w @ w))


def graph_objective(a, d: DistanceMatrix, alpha: float, beta: float) -> float:
    """Objective value of adjacency ``a`` (Graph or dense array); +inf with an isolated node."""
    dense = a.dense() if isinstance(a, Graph) else np.asarray(a, dtype=np.float64)
    if dense.shape != d.values.shape:
        raise ValueError(f"adjacency {dense.shape} and distances {d.values.shape} disagree")
    if np.any(dense < 0):
        raise ValueError("adjacency has negative entries")
    deg = dense.sum(axis=1)
    if np.any(deg <= 0):
        return math.inf
    return float((dense * d.values).sum() - alpha * np.log(deg).sum() + beta * (dense * dense).sum())


# -- calibration ---------------------------------------------------------------
def calibration_factor(d: DistanceMatrix, k: int) -> float:
    """Global distance scale under which alpha = beta = 1 gives roughly k neighbours per node.

    For each node, with its sorted distances z_1 <= z_2 <= ... and b_k their
    partial sum, the per-node problem keeps exactly k neighbours when the scale
    lies in [sqrt(2 / (k z_{k+1}^2 - b_k z_{k+1})), sqrt(2 / (k z_k^2 - b_k z_k))].
    Each node's interval is reduced to its geometric midpoint and the nodes are
    combined by geometric mean. Degenerate rows are skipped; if every row is
    degenerate the factor is 1.
    """
    n = d.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n (= {n}), got {k}")
    off = d.values.copy()
    np.fill_diagonal(off, np.inf)
    z = np.sort(off, axis=1)[:, : n - 1]
    b_k = z[:, :k].sum(axis=1)
    zk = z[:, k - 1]
    upper_gap = k * zk * zk - b_k * zk
    if k + 1 <= n - 1:
        zk1 = z[:, k]
        lower_gap = k * zk1 * zk1 - b_k * zk1
    else:
        lower_gap = np.full(n, np.inf)
    logs = []
    for lo_gap, hi_gap in zip(lower_gap, upper_gap):
        lo = math.sqrt(2.0 / lo_gap) if 0 < lo_gap < math.inf else (0.0 if lo_gap == math.inf else math.nan)
        hi = math.sqrt(2.0 / hi_gap) if hi_gap > 0 else math.inf
        if math.isnan(lo) or (lo == 0.0 and hi == math.inf):
            continue
        if lo == 0.0:
            theta = 0.5 * hi
        elif hi == math.inf:
            theta = 2.0 * lo
        else:
            theta = math.sqrt(lo * hi)
        logs.append(math.log(theta))
    if not logs:
        return 1.0
    return math.exp(math.fsum(logs) / len(logs))


def calibrate_scale(d: DistanceMatrix, k: int, edges: EdgeSet | None = None) -> tuple[DistanceMatrix, float]:
    """Standardize ``d`` over ``edges`` and rescale it for alpha = beta = 1.

    Returns the rescaled matrix and the total factor applied to ``d``.
    """
    if not 1 <= k < d.n:
        raise ValueError(f"k must satisfy 1 <= k < n (= {d.n}), got {k}")
    if edges is None:
        edges = EdgeSet.complete(d.n)
    mean = d.values[edges.i, edges.j].mean()
    if mean <= 0:
        return d, 1.0
    theta = calibration_factor(d.scaled(1.0 / mean), k)
    return d.scaled(theta / mean), float(theta / mean)


# -- solver ------------------------------------------------------------------------
@dataclass
class SolverResult:
    graph: Graph
    objective: float
    iterations: int
    converged: bool
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    scale: float = 1.0
    edges: EdgeSet | None = None

    def write_trace(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "current"])
            for it, best, cur in self.trace:
                w.writerow([it, repr(best), repr(cur)])


def typical_weight(d: np.ndarray, k: int, alpha: float, beta: float) -> float:
    """Median per-node edge weight predicted when each node keeps its k nearest neighbours.

    With k active edges and equal degrees s on both ends, stationarity gives
    2 beta s^2 + b_k s - k alpha = 0 (b_k: sum of the k smallest distances).
    """
    off = d.copy()
    np.fill_diagonal(off, np.inf)
    k = min(k, d.shape[0] - 1)
    b = np.sort(off, axis=1)[:, :k].sum(axis=1)
    if beta > 0:
        s = (-b + np.sqrt(b * b + 8.0 * beta * k * alpha)) / (4.0 * beta)
    else:
        s = np.where(b > 0, k * alpha / np.maximum(b, 1e-300), np.inf)
    c = float(np.median(s / k))
    return c if math.isfinite(c) and c > 0 else 1.0


def _solve_edges(
    z: np.ndarray,
    edges: EdgeSet,
    alpha: float,
    beta: float,
    max_iters: int,
    rel_tol: float,
    step: float,
) -> tuple[np.ndarray, float, int, bool, list]:
    """Forward-backward-forward iterations on the edge vector, started from w = 1."""
    n = edges.n
    ei, ej = edges.i, edges.j

    def degree(w):
        return np.bincount(ei, w, n) + np.bincount(ej, w, n)

    def degree_t(v):
        return v[ei] + v[ej]

    support_deg = np.bincount(ei, minlength=n) + np.bincount(ej, minlength=n)
    if np.any(support_deg == 0):
        raise GraphError("a node has no permissible edge")
    # ||S||^2 is the top eigenvalue of the signless Laplacian, at most 2 * max degree
    norm_s = math.sqrt(2.0 * support_deg.max())
    gamma = step / (4.0 * beta + norm_s)

    w = np.ones(len(z))
    v = -alpha / degree(w)
    best_w, best_obj = w.copy(), _objective(w, z, edges, alpha, beta)
    prev_obj = best_obj
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        y = w - gamma * (4.0 * beta * w + degree_t(v))
        y_bar = v + gamma * degree(w)
        p = np.maximum(0.0, y - 2.0 * gamma * z)
        p_bar = 0.5 * (y_bar - np.sqrt(y_bar * y_bar + 4.0 * alpha * gamma))
        q = p - gamma * (4.0 * beta * p + degree_t(p_bar))
        q_bar = p_bar + gamma * degree(p)
        w_change = np.linalg.norm(q - y) / max(np.linalg.norm(w), 1e-300)
        w = w - y + q
        v = v - y_bar + q_bar
        # p is the feasible (non-negative) primal point of this iteration
        obj = _objective(p, z, edges, alpha, beta)
        if obj < best_obj:
            best_obj, best_w = obj, p.copy()
        trace.append((it, best_obj, obj))
        if math.isfinite(obj) and math.isfinite(prev_obj):
            obj_change = abs(obj - prev_obj) / max(abs(prev_obj), 1e-300)
            if obj_change < rel_tol and w_change < rel_tol:
                converged = True
                break
        prev_obj = obj
    return best_w, best_obj, it, converged, trace


def learn_graph(d: DistanceMatrix, cfg: GraphLearnConfig, edges: EdgeSet | None = None) -> SolverResult:
    """Solve for the MAP adjacency; see the module docstring for the objective."""
    if edges is None:
        edges = restrict_edge_set(d, cfg.k, cfg.r)
    scale = 1.0
    alpha, beta = cfg.alpha, cfg.beta
    work = d
    if cfg.auto_calibrate:
        work, scale = calibrate_scale(d, cfg.k, edges)
        alpha = beta = 1.0
    z = work.values[edges.i, edges.j]
    # solve for u = w / c so that the iterates are of order one
    c = typical_weight(work.values, cfg.k, alpha, beta)
    u, _, iters, converged, trace = _solve_edges(c * z, edges, alpha, beta * c * c, cfg.max_iters, cfg.rel_tol, cfg.step)
    w = c * u
    obj = _objective(w, z, edges, alpha, beta)
    # the log barrier shifts by a constant under the change of variables
    shift = len(np.unique(np.concatenate([edges.i, edges.j]))) * alpha * math.log(c)
    trace = [(it, best - shift, cur - shift) for it, best, cur in trace]
    if not converged:
        log.warning("graph solver stopped after %d iterations without meeting rel_tol=%g", iters, cfg.rel_tol)
    graph = Graph(
        sp.csr_matrix((np.concatenate([w, w]), (np.concatenate([edges.i, edges.j]), np.concatenate([edges.j, edges.i]))),
                      shape=(d.n, d.n))
    )
    if np.any(graph.degrees() == 0):
        raise GraphError("solver produced an isolated node")
    return SolverResult(graph, obj, iters, converged, trace, scale, edges)


def solve_graph_map(d: DistanceMatrix, cfg: GraphLearnConfig) -> Graph:
    return learn_graph(d, cfg).graph
