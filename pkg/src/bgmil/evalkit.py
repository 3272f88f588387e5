"""Metrics, rank aggregation, Wilcoxon signed-rank test and the CV/trials harness."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .dataio import SplitPlan
from .numkit import Rng

# metrics where a larger value is better
HIGHER_IS_BETTER = {"accuracy": True, "rmse": False, "mae": False, "mape": False, "nd": False}


def accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("accuracy of an empty prediction set")
    return float(np.mean(preds == labels))


def normalized_deviation(pred, true) -> float:
    """sum |pred - true| / sum |true|."""
    pred, true = np.asarray(pred, dtype=np.float64), np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("need non-empty inputs of equal shape")
    denom = np.abs(true).sum()
    if denom == 0:
        raise ValueError("normalized deviation is undefined when all true values are zero")
    return float(np.abs(pred - true).sum() / denom)


def regression_metrics(preds, targets) -> tuple[float, float, float]:
    """RMSE, MAE and MAPE (in percent)."""
    p, t = np.asarray(preds, dtype=np.float64).ravel(), np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape or p.size == 0:
        raise ValueError("need non-empty inputs of equal length")
    if np.any(t == 0):
        raise ValueError("MAPE is undefined for zero targets")
    err = p - t
    return (
        float(np.sqrt(np.mean(err * err))),
        float(np.mean(np.abs(err))),
        float(100.0 * np.mean(np.abs(err / t))),
    )


# -- ranks ---------------------------------------------------------------------------
@dataclass
class RankTable:
    algorithms: list[str]
    datasets: list[str]
    ranks: np.ndarray  # datasets x algorithms, 1 = best

    @property
    def average(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    @property
    def median(self) -> np.ndarray:
        return np.median(self.ranks, axis=0)


def rank_table(
    scores,
    algorithms: Sequence[str] | None = None,
    datasets: Sequence[str] | None = None,
    higher_is_better: bool = True,
) -> RankTable:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or np.isnan(s).any():
        raise ValueError("need a complete datasets x algorithms score matrix")
    ranks = stats.rankdata(-s if higher_is_better else s, method="average", axis=1)
    algorithms = list(algorithms or [f"alg{j}" for j in range(s.shape[1])])
    datasets = list(datasets or [f"data{i}" for i in range(s.shape[0])])
    return RankTable(algorithms, datasets, ranks)


# -- Wilcoxon --------------------------------------------------------------------------
@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences b - a
    p_value: float
    n: int
    zeros_dropped: int
    method: str


def _exact_null_counts(ranks: np.ndarray) -> np.ndarray:
    """Number of sign patterns giving each value of 2 W+ (ranks are half-integers)."""
    doubled = np.rint(2 * ranks).astype(np.int64)
    counts = np.zeros(int(doubled.sum()) + 1)
    counts[0] = 1.0
    for r in doubled:
        counts[r:] = counts[r:] + counts[:-r].copy()
    return counts


def wilcoxon_signed_rank(
    a,
    b,
    alternative: str = "greater",
    exact_max_n: int = 20,
) -> WilcoxonResult:
    """Paired test on d = b - a. ``greater`` asks whether b tends to exceed a.

    Zero differences are dropped. Up to ``exact_max_n`` pairs the null is
    enumerated over all sign patterns; beyond that a tie-corrected normal
    approximation with continuity correction is used.
    """
    d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    nonzero = d[d != 0]
    zeros = int(d.size - nonzero.size)
    n = nonzero.size
    if n == 0:
        raise ValueError("all paired differences are zero")
    ranks = stats.rankdata(np.abs(nonzero), method="average")
    w_plus = float(ranks[nonzero > 0].sum())
    if n <= exact_max_n:
        counts = _exact_null_counts(ranks)
        obs = int(round(2 * w_plus))
        total = counts.sum()
        p_ge = float(counts[obs:].sum() / total)
        p_le = float(counts[: obs + 1].sum() / total)
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts**3 - counts) / 48.0
        sd = math.sqrt(var)
        p_ge = float(stats.norm.sf((w_plus - 0.5 - mean) / sd))
        p_le = float(stats.norm.cdf((w_plus + 0.5 - mean) / sd))
        method = "normal"
    if alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    else:
        p = min(1.0, 2.0 * min(p_ge, p_le))
    return WilcoxonResult(w_plus, p, n, zeros, method)


# -- protocol harness ----------------------------------------------------------------
@dataclass
class MetricReport:
    metric: str
    values: list[float]
    keys: list[tuple[int, int]] = field(default_factory=list)  # (trial, fold) per value

    def __post_init__(self):
        if not self.values:
            raise ValueError("a report needs at least one value")

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std_error(self) -> float:
        if len(self.values) < 2:
            return 0.0
        return float(np.std(self.values, ddof=1) / math.sqrt(len(self.values)))


class ProtocolError(RuntimeError):
    pass


PipelineFn = Callable[[np.ndarray, np.ndarray, Rng], Mapping[str, float]]


def run_protocol(
    plans: Sequence[SplitPlan],
    pipeline: PipelineFn,
    seed: int = 0,
    schedule: Sequence[tuple[int, int]] | None = None,
    workers: int = 1,
) -> dict[str, MetricReport]:
    """Run ``pipeline(train, test, rng)`` on every (trial, fold).

    Each unit gets the stream ``Rng(seed, (trial, fold))`` and results are
    reduced in (trial, fold) order, so ``schedule`` and ``workers`` cannot
    change the report.
    """
    units = [(p.trial, f) for p in plans for f in range(len(p.folds))]
    by_trial = {p.trial: p for p in plans}
    order = list(schedule) if schedule is not None else units
    if sorted(order) != sorted(units):
        raise ValueError("schedule must list every (trial, fold) exactly once")

    def run(unit):
        trial, fold = unit
        train, test = by_trial[trial].folds[fold]
        rng = Rng(seed, (trial, fold))
        try:
            return unit, dict(pipeline(train, test, rng))
        except Exception as exc:
            raise ProtocolError(
                f"trial {trial} fold {fold} failed (trial seed {by_trial[trial].trial_seed}, "
                f"stream {seed}/{rng.stream_id}): {exc}"
            ) from exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = dict(pool.map(run, order))
    else:
        results = dict(map(run, order))
    reports: dict[str, MetricReport] = {}
    for unit in sorted(results):
        for name, value in results[unit].items():
            rep = reports.setdefault(name, MetricReport(name, [float(value)], [unit]))
            if rep.keys[-1] != unit:
                rep.values.append(float(value))
                rep.keys.append(unit)
    return reports


# -- reports -------------------------------------------------------------------------
def write_metrics_csv(path, reports: Mapping[str, MetricReport]) -> None:
    """One row per (trial, fold); floats written with repr so reruns compare byte-for-byte."""
    names = sorted(reports)
    keys = reports[names[0]].keys if names else []
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["trial", "fold", *names])
        for row, (trial, fold) in enumerate(keys):
            out.writerow([trial, fold, *(repr(reports[m].values[row]) for m in names)])


def read_metrics_csv(path) -> dict[str, MetricReport]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["trial", "fold"]:
        raise ValueError(f"{path}: not a metrics file")
    names = rows[0][2:]
    keys = [(int(r[0]), int(r[1])) for r in rows[1:]]
    return {
        m: MetricReport(m, [float(r[2 + j]) for r in rows[1:]], list(keys))
        for j, m in enumerate(names)
    }


def format_summary(reports: Mapping[str, MetricReport], title: str = "") -> str:
    lines = [title] if title else []
    width = max((len(m) for m in reports), default=6)
    for m in sorted(reports):
        rep = reports[m]
        lines.append(f"{m:<{width}}  {rep.mean:.4f} +- {rep.std_error:.4f}  (n={len(rep.values)})")
    return "\n".join(lines) + "\n"


def format_rank_table(table: RankTable) -> str:
    width = max(len(d) for d in table.datasets + ["median rank"])
    head = " ".join(f"{a:>10}" for a in table.algorithms)
    lines = [f"{'':<{width}} {head}"]
    for d, row in zip(table.datasets, table.ranks):
        lines.append(f"{d:<{width}} " + " ".join(f"{r:>10.1f}" for r in row))
    lines.append(f"{'average rank':<{width}} " + " ".join(f"{r:>10.2f}" for r in table.average))
    lines.append(f"{'median rank':<{width}} " + " ".join(f"{r:>10.1f}" for r in table.median))
    return "\n".join(lines) + "\n"
