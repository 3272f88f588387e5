"""Bags, datasets, file formats, samplers and split plans."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graphcore import Graph
from .numkit import Rng


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Bag:
    id: str
    features: np.ndarray
    label: int | float | np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise DataFormatError(f"bag {self.id!r}: features must be a non-empty 2-D array")
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass
class BagDataset:
    bags: list[Bag]
    labeled: np.ndarray
    label_kind: str = "categorical"  # or "real"
    num_classes: int | None = None

    def __post_init__(self):
        if not self.bags:
            raise DataFormatError("dataset has no bags")
        dims = {b.features.shape[1] for b in self.bags}
        if len(dims) != 1:
            raise DataFormatError(f"bags disagree on feature dimension: {sorted(dims)}")
        self.labeled = np.asarray(self.labeled, dtype=np.int64)
        if self.labeled.size and (self.labeled.min() < 0 or self.labeled.max() >= len(self.bags)):
            raise DataFormatError("labeled index out of range")
        if self.label_kind not in ("categorical", "real"):
            raise DataFormatError(f"unknown label kind {self.label_kind!r}")
        if self.label_kind == "categorical" and self.num_classes is None:
            labels = [b.label for b in self.bags if b.label is not None]
            self.num_classes = int(max(labels)) + 1 if labels else 2

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def d_x(self) -> int:
        return self.bags[0].features.shape[1]

    @property
    def unlabeled(self) -> np.ndarray:
        mask = np.ones(len(self), dtype=bool)
        mask[self.labeled] = False
        return np.flatnonzero(mask)

    def labels(self, idx: Sequence[int] | None = None) -> np.ndarray:
        idx = range(len(self)) if idx is None else idx
        vals = [self.bags[i].label for i in idx]
        if any(v is None for v in vals):
            raise ValueError("requested labels for unlabeled bags")
        if self.label_kind == "categorical":
            return np.asarray(vals, dtype=np.int64)
        return np.asarray(vals, dtype=np.float64)

    def with_labeled(self, labeled: Sequence[int]) -> "BagDataset":
        return replace(self, labeled=np.asarray(sorted(labeled), dtype=np.int64))

    def subset(self, idx: Sequence[int]) -> "BagDataset":
        idx = list(idx)
        pos = {j: k for k, j in enumerate(idx)}
        return BagDataset(
            [self.bags[i] for i in idx],
            np.asarray([pos[i] for i in self.labeled if i in pos], dtype=np.int64),
            self.label_kind,
            self.num_classes,
        )

    def batch(self) -> "BagBatch":
        return BagBatch.from_bags(self.bags)


@dataclass(frozen=True)
class BagBatch:
    """All instances stacked row-wise with segment offsets (length |V| + 1)."""

    instances: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_bags(cls, bags: Iterable[Bag]) -> "BagBatch":
        feats = [b.features for b in bags]
        sizes = [f.shape[0] for f in feats]
        if min(sizes) < 1:
            raise DataFormatError("empty bag")
        return cls(np.vstack(feats), np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64))

    @property
    def num_bags(self) -> int:
        return len(self.offsets) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def bag(self, i: int) -> np.ndarray:
        return self.instances[self.offsets[i] : self.offsets[i + 1]]


# -- bag JSONL -----------------------------------------------------------------
def _parse_label(raw, label_kind: str):
    if raw is None:
        return None
    if label_kind == "categorical":
        if isinstance(raw, bool) or not float(raw).is_integer():
            raise DataFormatError(f"categorical label must be an integer, got {raw!r}")
        return int(raw)
    return float(raw)


def load_bags_jsonl(path, label_kind: str = "categorical") -> BagDataset:
    bags: list[Bag] = []
    labeled: list[int] = []
    d_x = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "instances" not in rec:
                raise DataFormatError(f"{path}:{lineno}: record needs an 'instances' field")
            bag_id = str(rec.get("id", lineno - 1))
            inst = rec["instances"]
            if not isinstance(inst, list) or not inst:
                raise DataFormatError(f"{path}:{lineno}: bag {bag_id!r} has an empty instance list")
            lengths = {len(row) if isinstance(row, list) else -1 for row in inst}
            if len(lengths) != 1 or -1 in lengths:
                raise DataFormatError(
                    f"{path}:{lineno}: bag {bag_id!r} has inconsistent instance dimensions {sorted(lengths)}"
                )
            (dim,) = lengths
            if d_x is None:
                d_x = dim
            elif dim != d_x:
                raise DataFormatError(f"{path}:{lineno}: bag {bag_id!r} has dimension {dim}, expected {d_x}")
            try:
                label = _parse_label(rec.get("label"), label_kind)
                feats = np.asarray(inst, dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno}: bag {bag_id!r}: {exc}") from None
            if label is not None:
                labeled.append(len(bags))
            bags.append(Bag(bag_id, feats, label))
    if not bags:
        raise DataFormatError(f"{path}: no records")
    return BagDataset(bags, np.asarray(labeled, dtype=np.int64), label_kind)


def write_bags_jsonl(dataset: BagDataset, path) -> None:
    labeled = set(dataset.labeled.tolist())
    with open(path, "w", encoding="utf-8") as fh:
        for i, bag in enumerate(dataset.bags):
            label = bag.label if i in labeled else None
            if isinstance(label, np.generic):
                label = label.item()
            rec = {
                "id": bag.id,
                "label": label,
                # repr of a Python float is the shortest round-tripping form
                "instances": [[float(v) for v in row] for row in bag.features],
            }
            fh.write(json.dumps(rec) + "\n")


# -- edge lists ------------------------------------------------------------------
def load_edge_list(path, n: int) -> Graph:
    edges: dict[tuple[int, int], float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise DataFormatError(f"{path}:{lineno}: expected 'i j [w]', got {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: cannot parse {line!r}") from None
            if not (0 <= i < n and 0 <= j < n):
                raise DataFormatError(f"{path}:{lineno}: node id out of range for n={n}")
            if i == j:
                raise DataFormatError(f"{path}:{lineno}: self-loop on node {i}")
            if w < 0 or not math.isfinite(w):
                raise DataFormatError(f"{path}:{lineno}: invalid weight {w}")
            edges[(min(i, j), max(i, j))] = w
    return Graph.from_edges(n, [(i, j, w) for (i, j), w in edges.items()])


def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={graph.n}\n")
        for i, j, w in graph.edges():
            fh.write(f"{i} {j} {w!r}\n")


# -- predictions ---------------------------------------------------------------
def write_predictions_csv(path, ids: Sequence[str], mean: np.ndarray, std: np.ndarray) -> None:
    mean = np.atleast_2d(np.asarray(mean, dtype=np.float64).T).T
    std = np.atleast_2d(np.asarray(std, dtype=np.float64).T).T
    k = mean.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"pred_{c}" for c in range(k)] + [f"std_{c}" for c in range(k)])
        for i, row_m, row_s in zip(ids, mean, std):
            w.writerow([i] + [repr(float(v)) for v in row_m] + [repr(float(v)) for v in row_s])


# -- sampling & preprocessing --------------------------------------------------
def sample_bags(
    instances: np.ndarray,
    groups: Sequence,
    per_group: int,
    rng: Rng,
    group_labels: dict | None = None,
    label_kind: str = "real",
) -> BagDataset:
    """One bag per group of ``per_group`` instances.

    Sampling is without replacement unless the group is smaller than
    ``per_group``. Groups appear in sorted order of their keys.
    """
    instances = np.asarray(instances, dtype=np.float64)
    groups = np.asarray(groups)
    bags = []
    labeled = []
    for key in sorted(set(groups.tolist())):
        members = np.flatnonzero(groups == key)
        if members.size == 0:
            raise DataFormatError(f"group {key!r} is empty")
        replace_ = members.size < per_group
        pick = rng.choice(members, size=per_group, replace=replace_)
        label = None if group_labels is None else group_labels.get(key)
        if label is not None:
            labeled.append(len(bags))
        bags.append(Bag(str(key), instances[pick], label))
    return BagDataset(bags, np.asarray(labeled, dtype=np.int64), label_kind)


def standardize_features(dataset: BagDataset, use_all_bags: bool = False) -> BagDataset:
    """Per-feature z-scoring with statistics from labeled bags (or all bags)."""
    source = range(len(dataset)) if use_all_bags else dataset.labeled
    if len(source) == 0:
        raise ValueError("standardization needs at least one labeled bag")
    stacked = np.vstack([dataset.bags[i].features for i in source])
    mu = stacked.mean(axis=0)
    sd = stacked.std(axis=0)
    flat = sd <= 1e-12
    mu = np.where(flat, 0.0, mu)
    sd = np.where(flat, 1.0, sd)
    bags = [replace(b, features=(b.features - mu) / sd) for b in dataset.bags]
    return replace(dataset, bags=bags)


# -- splits ----------------------------------------------------------------------
@dataclass(frozen=True)
class SplitPlan:
    folds: list[tuple[np.ndarray, np.ndarray]]
    trial_seed: int
    trial: int = 0


def make_splits(
    n: int,
    folds: int | None = None,
    trials: int = 1,
    rng: Rng | None = None,
    train_fraction: float | None = None,
) -> list[SplitPlan]:
    """k-fold plans (``folds``) or single random train/test plans (``train_fraction``)."""
    rng = rng or Rng(0)
    if (folds is None) == (train_fraction is None):
        raise ValueError("give exactly one of folds or train_fraction")
    if folds is not None:
        if folds < 2:
            raise ValueError("need at least 2 folds")
        if folds > n:
            raise ValueError(f"cannot make {folds} folds from {n} items")
    elif not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    plans = []
    everything = np.arange(n)
    for t in range(trials):
        stream = rng.child(t)
        perm = stream.permutation(n)
        if folds is not None:
            chunks = np.array_split(perm, folds)
            fold_list = [(np.setdiff1d(everything, c), np.sort(c)) for c in chunks]
        else:
            n_train = min(max(1, math.floor(train_fraction * n)), n - 1)
            fold_list = [(np.sort(perm[:n_train]), np.sort(perm[n_train:]))]
        plans.append(SplitPlan(fold_list, trial_seed=int(stream.seed), trial=t))
    return plans
