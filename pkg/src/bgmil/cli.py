"""Experiment runner: ``bgmil {validate,run,infer-graph,compare}``.

Experiments are described by a YAML file (see ``configs/`` for examples).
Every run directory gets a flat ``manifest.txt`` which is itself a valid
config: ``bgmil run <dir>/manifest.txt`` reproduces the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import scipy
import yaml

from . import __version__
from .bayespipe import (
    HeadConfig,
    McPredictConfig,
    PipelineConfig,
    PredictiveDistribution,
    TransductionMode,
    infer_graph,
    observed_knn_graph,
    run_algorithm1,
    train_base_model,
    train_gnn_model,
)
from .dataio import (
    BagDataset,
    load_bags_jsonl,
    load_edge_list,
    make_splits,
    standardize_features,
    write_edge_list,
    write_predictions_csv,
)
from .encoders import KINDS, POOLING, EncoderConfig
from .evalkit import (
    HIGHER_IS_BETTER,
    ProtocolError,
    accuracy,
    format_summary,
    normalized_deviation,
    read_metrics_csv,
    regression_metrics,
    run_protocol,
    wilcoxon_signed_rank,
    write_metrics_csv,
)
from .graphcore import Graph, normalize_adjacency
from .graphlearn import GraphLearnConfig, SolverResult
from .numkit import Rng, TrainingConfig
from .numkit.tensor import ACTIVATIONS

log = logging.getLogger("bgmil")

OUTPUT_ROOT_ENV = "BGMIL_OUTPUT_ROOT"
MANIFEST_HEADER = "# bgmil run manifest"
HEAD_TYPES = ("linear", "gcn_obs", "gcn_bayes")

# key -> (default, type); a trailing "?" allows null
SCHEMA: dict[str, dict[str, tuple[Any, str]]] = {
    "data": {
        "bags": (None, "path"),
        "label_kind": ("categorical", "str"),
        "edge_list": (None, "path?"),
        "standardize": (False, "bool"),
    },
    "encoder": {
        "kind": ("rff_pool", "str"),
        "hidden": ([256, 128, 64], "ints"),
        "bag_hidden": ([], "ints"),
        "activation": ("relu", "str"),
        "pooling": ("max", "str"),
        "dropout_rate": (0.0, "float"),
        "deep_supervision": (False, "bool"),
        "heads": (4, "int"),
        "num_seeds": (1, "int"),
        "layer_norm": (True, "bool"),
    },
    "head": {
        "type": ("gcn_bayes", "str"),
        "hidden": ([], "ints"),
        "dropout_rate": (0.5, "float"),
        "activation": ("relu", "str"),
        "knn_k": (None, "int?"),
    },
    "graph_learn": {
        "k": (5, "int"),
        "r": (3, "int"),
        "alpha": (1.0, "float"),
        "beta": (1.0, "float"),
        "max_iters": (1000, "int"),
        "rel_tol": (1e-5, "float"),
        "auto_calibrate": (True, "bool"),
        "step": (0.95, "float"),
        "representation": ("penultimate", "str"),
    },
    "training": {
        "learning_rate": (1e-3, "float"),
        "weight_decay": (0.0, "float"),
        "epochs": (200, "int"),
        "loss": (None, "str?"),
    },
    "protocol": {
        "folds": (10, "int?"),
        "train_fraction": (None, "float?"),
        "trials": (1, "int"),
        "workers": (1, "int"),
    },
    "mc": {
        "samples": (50, "int"),
        "dropout_rate": (None, "float?"),
    },
}
TOP_LEVEL: dict[str, tuple[Any, str]] = {
    "mode": ("transductive", "str"),
    "seed": (0, "int"),
    "output": ("runs/experiment", "str"),
}

# (key path, predicate, message)
RANGES = [
    ("graph_learn.k", lambda v: v >= 1, "must be at least 1"),
    ("graph_learn.r", lambda v: v >= 1, "must be at least 1"),
    ("graph_learn.alpha", lambda v: v > 0, "must be positive"),
    ("graph_learn.beta", lambda v: v >= 0, "must be non-negative"),
    ("graph_learn.max_iters", lambda v: v >= 1, "must be at least 1"),
    ("graph_learn.rel_tol", lambda v: v > 0, "must be positive"),
    ("graph_learn.step", lambda v: 0 < v < 1, "must lie in (0, 1)"),
    ("training.learning_rate", lambda v: v > 0, "must be positive"),
    ("training.weight_decay", lambda v: v >= 0, "must be non-negative"),
    ("training.epochs", lambda v: v >= 1, "must be at least 1"),
    ("encoder.dropout_rate", lambda v: 0 <= v < 1, "must lie in [0, 1)"),
    ("encoder.heads", lambda v: v >= 1, "must be at least 1"),
    ("encoder.num_seeds", lambda v: v >= 1, "must be at least 1"),
    ("encoder.hidden", lambda v: len(v) >= 1 and min(v) >= 1, "needs at least one positive width"),
    ("head.dropout_rate", lambda v: 0 <= v < 1, "must lie in [0, 1)"),
    ("head.knn_k", lambda v: v is None or v >= 1, "must be at least 1"),
    ("protocol.folds", lambda v: v is None or v >= 2, "must be at least 2"),
    ("protocol.train_fraction", lambda v: v is None or 0 < v < 1, "must lie in (0, 1)"),
    ("protocol.trials", lambda v: v >= 1, "must be at least 1"),
    ("protocol.workers", lambda v: v >= 1, "must be at least 1"),
    ("mc.samples", lambda v: v >= 1, "must be at least 1"),
    ("mc.dropout_rate", lambda v: v is None or 0 <= v < 1, "must lie in [0, 1)"),
    ("seed", lambda v: v >= 0, "must be non-negative"),
]
CHOICES = {
    "data.label_kind": ("categorical", "real"),
    "encoder.kind": KINDS,
    "encoder.pooling": POOLING,
    "encoder.activation": tuple(ACTIVATIONS),
    "head.type": HEAD_TYPES,
    "head.activation": tuple(ACTIVATIONS),
    "graph_learn.representation": ("penultimate", "output"),
    "training.loss": (None, "cross_entropy", "mse"),
    "mode": tuple(m.value for m in TransductionMode),
}


class ConfigError(ValueError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {m}" for k, m in problems))


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(str(exc))


# -- config ------------------------------------------------------------------------
def _flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    flat = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, path + "."))
        else:
            flat[path] = value
    return flat


def _unflatten(flat: dict[str, Any]) -> dict:
    tree: dict = {}
    for path, value in flat.items():
        node = tree
        *parents, leaf = path.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return tree


def read_config_file(path) -> dict:
    """YAML experiment file or a run manifest."""
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith(MANIFEST_HEADER):
        flat = {}
        for line in text.splitlines():
            if line.startswith("config.") and "=" in line:
                key, _, value = line.partition("=")
                flat[key[len("config."):]] = json.loads(value)
        return _unflatten(flat)
    raw = yaml.safe_load(text)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError([("<root>", "config must be a mapping")])
    return raw


def _check_type(value, kind: str) -> bool:
    if value is None:
        return kind.endswith("?")
    kind = kind.rstrip("?")
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind in ("str", "path"):
        return isinstance(value, str)
    if kind == "ints":
        return isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    raise AssertionError(kind)


def resolve_config(raw: dict, base_dir: Path = Path(".")) -> dict:
    """Fill defaults, check types, ranges, choices, paths and cross-field rules.

    Raises ConfigError listing every problem with its key path.
    """
    problems: list[tuple[str, str]] = []
    type_errors = 0
    cfg: dict[str, Any] = {}
    for key in raw:
        if key not in SCHEMA and key not in TOP_LEVEL:
            problems.append((key, "unknown key"))
    for section, fields in SCHEMA.items():
        given = raw.get(section) or {}
        if not isinstance(given, dict):
            problems.append((section, "must be a mapping"))
            type_errors += 1
            given = {}
        for key in given:
            if key not in fields:
                problems.append((f"{section}.{key}", "unknown key"))
        cfg[section] = {}
        for key, (default, kind) in fields.items():
            value = given.get(key, default)
            if not _check_type(value, kind):
                problems.append((f"{section}.{key}", f"expected {kind}, got {value!r}"))
                type_errors += 1
            cfg[section][key] = value
    for key, (default, kind) in TOP_LEVEL.items():
        value = raw.get(key, default)
        if not _check_type(value, kind):
            problems.append((key, f"expected {kind}, got {value!r}"))
            type_errors += 1
        cfg[key] = value
    if type_errors:
        # range checks below assume well-typed values
        raise ConfigError(problems)

    flat = _flatten(cfg)
    for path, ok, message in RANGES:
        if not ok(flat[path]):
            problems.append((path, f"{message}, got {flat[path]!r}"))
    for path, options in CHOICES.items():
        if flat[path] not in options:
            problems.append((path, f"must be one of {[o for o in options if o is not None]}, got {flat[path]!r}"))

    data = cfg["data"]
    if data["bags"] is None:
        problems.append(("data.bags", "required"))
    for key in ("bags", "edge_list"):
        if data[key] is not None:
            p = (base_dir / data[key]).resolve()
            if not p.is_file():
                problems.append((f"data.{key}", f"file not found: {p}"))
            data[key] = str(p)

    proto = cfg["protocol"]
    if "train_fraction" in (raw.get("protocol") or {}) and "folds" not in (raw.get("protocol") or {}):
        proto["folds"] = None
    if (proto["folds"] is None) == (proto["train_fraction"] is None):
        problems.append(("protocol", "give exactly one of folds or train_fraction"))

    head = cfg["head"]
    if head["type"] == "gcn_obs" and data["edge_list"] is None and head["knn_k"] is None:
        problems.append(("head", "gcn_obs needs a graph source: data.edge_list or head.knn_k"))

    training = cfg["training"]
    if training["loss"] is None:
        training["loss"] = "cross_entropy" if data["label_kind"] == "categorical" else "mse"
    elif (training["loss"] == "cross_entropy") != (data["label_kind"] == "categorical"):
        problems.append(("training.loss", f"{training['loss']} does not match {data['label_kind']} labels"))

    if not problems:
        # the dataclasses carry their own consistency checks
        for section, build in (("encoder", _encoder_cfg), ("graph_learn", _graph_cfg), ("head", _head_cfg)):
            try:
                build(cfg)
            except ValueError as exc:
                problems.append((section, str(exc)))
    if problems:
        raise ConfigError(problems)
    return cfg


def _encoder_cfg(cfg) -> EncoderConfig:
    e = dict(cfg["encoder"])
    e["hidden"] = tuple(e["hidden"])
    e["bag_hidden"] = tuple(e["bag_hidden"])
    return EncoderConfig(**e)


def _graph_cfg(cfg) -> GraphLearnConfig:
    return GraphLearnConfig(**cfg["graph_learn"])


def _head_cfg(cfg) -> HeadConfig:
    h = cfg["head"]
    return HeadConfig(tuple(h["hidden"]), h["dropout_rate"], h["activation"])


def pipeline_config(cfg) -> PipelineConfig:
    t = cfg["training"]
    return PipelineConfig(
        encoder=_encoder_cfg(cfg),
        head=_head_cfg(cfg),
        training=TrainingConfig(t["learning_rate"], t["weight_decay"], t["epochs"], t["loss"], cfg["seed"]),
        graph_learn=_graph_cfg(cfg),
        mc=McPredictConfig(cfg["mc"]["samples"], cfg["mc"]["dropout_rate"]),
        mode=TransductionMode(cfg["mode"]),
    )


def load_config(path, output: str | None = None) -> dict:
    path = Path(path)
    raw = read_config_file(path)
    if output is not None:
        raw["output"] = output
    return resolve_config(raw, path.parent)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def output_dir(cfg: dict) -> Path:
    out = Path(cfg["output"])
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, cfg: dict, command: str) -> None:
    lines = [
        MANIFEST_HEADER,
        f"command={command}",
        f"config_hash={config_hash(cfg)}",
        f"seed={cfg['seed']}",
        f"data.sha256={_sha256_file(cfg['data']['bags'])}",
        f"version.bgmil={__version__}",
        f"version.python={platform.python_version()}",
        f"version.numpy={np.__version__}",
        f"version.scipy={scipy.__version__}",
    ]
    lines += [f"config.{k}={json.dumps(v)}" for k, v in sorted(_flatten(cfg).items())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k] = v
    return out


# -- running --------------------------------------------------------------------
@dataclass
class UnitOutput:
    test: np.ndarray
    prediction: PredictiveDistribution
    graph: Graph | None
    solver: SolverResult | None


def _deterministic(model, adj, dataset: BagDataset) -> PredictiveDistribution:
    mean = model.predict(dataset.batch(), adj)
    return PredictiveDistribution(mean, mean[None], model.classification)


def run_head(dataset: BagDataset, cfg: dict, rng: Rng, stage=lambda name: None):
    """Fit the configured head on ``dataset.labeled``; predictions for every bag."""
    pcfg = pipeline_config(cfg)
    head = cfg["head"]["type"]
    g_file = None
    if cfg["data"]["edge_list"] is not None:
        stage("load-graph")
        g_file = load_edge_list(cfg["data"]["edge_list"], len(dataset))
    if head == "gcn_bayes":
        pred, graph, diag = run_algorithm1(dataset, pcfg, g_file, rng, on_stage=stage)
        return pred, graph, diag.solver
    # the base model shares the bayes run's training stream so heads stay paired
    train_stream = rng.child(0)
    stage("base-model")
    if head == "linear":
        base = train_base_model(dataset, pcfg.encoder, pcfg.training, None, pcfg.head, train_stream)
        return _deterministic(base.model, base.adjacency, dataset), None, None
    if g_file is not None:
        base = train_base_model(dataset, pcfg.encoder, pcfg.training, g_file, pcfg.head, train_stream)
        return _deterministic(base.model, base.adjacency, dataset), g_file, None
    base = train_base_model(dataset, pcfg.encoder, pcfg.training, None, pcfg.head, train_stream)
    stage("observed-graph")
    g_obs = observed_knn_graph(base, dataset, cfg["head"]["knn_k"])
    stage("gnn-training")
    model, _ = train_gnn_model(dataset, g_obs, pcfg.encoder, pcfg.head, pcfg.training, train_stream)
    return _deterministic(model, normalize_adjacency(g_obs), dataset), g_obs, None


def unit_metrics(pred: PredictiveDistribution, truth: np.ndarray) -> dict[str, float]:
    if pred.classification:
        return {"accuracy": accuracy(pred.predicted_labels(), truth)}
    out = {"nd": normalized_deviation(pred.mean, truth)}
    if np.all(truth != 0):
        out["rmse"], out["mae"], out["mape"] = regression_metrics(pred.mean, truth)
    else:
        err = pred.mean - truth
        out["rmse"], out["mae"] = float(np.sqrt(np.mean(err**2))), float(np.mean(np.abs(err)))
    return out


def _load_dataset(cfg) -> BagDataset:
    return load_bags_jsonl(cfg["data"]["bags"], cfg["data"]["label_kind"])


def _with_stage(name: str, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def cmd_run(cfg: dict) -> Path:
    out = output_dir(cfg)
    dataset = _with_stage("load-data", _load_dataset, cfg)
    pool = dataset.labeled
    proto = cfg["protocol"]
    plans = _with_stage(
        "splits",
        lambda: make_splits(len(pool), proto["folds"], proto["trials"], Rng(cfg["seed"], 0), proto["train_fraction"]),
    )
    kept: dict[tuple[int, int], UnitOutput] = {}

    def unit(train_pos, test_pos, rng):
        current = ["setup"]
        try:
            train, test = pool[train_pos], pool[test_pos]
            ds = dataset.with_labeled(train)
            if cfg["data"]["standardize"]:
                current[0] = "standardize"
                ds = standardize_features(ds)
            pred, graph, solver = run_head(ds, cfg, rng, lambda s: current.__setitem__(0, s))
            current[0] = "metrics"
            metrics = unit_metrics(pred.take(test), dataset.labels(test))
        except Exception as exc:
            raise StageError(current[0], exc) from exc
        if rng.stream_id[0] == 0:
            kept[tuple(rng.stream_id)] = UnitOutput(test, pred.take(test), graph, solver)
        return metrics

    try:
        reports = run_protocol(plans, unit, cfg["seed"], workers=proto["workers"])
    except ProtocolError as exc:
        stage = exc.__cause__.stage if isinstance(exc.__cause__, StageError) else "protocol"
        raise StageError(stage, exc) from exc

    def write():
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", reports)
        title = f"{cfg['head']['type']} on {Path(cfg['data']['bags']).name}"
        (out / "summary.txt").write_text(format_summary(reports, title), encoding="utf-8")
        # trial 0 out-of-fold predictions, in bag order
        units = [kept[k] for k in sorted(kept)]
        idx = np.concatenate([u.test for u in units])
        order = np.argsort(idx, kind="stable")
        mean = np.concatenate([u.prediction.mean for u in units])[order]
        std = np.concatenate([u.prediction.std for u in units])[order]
        write_predictions_csv(out / "predictions.csv", [dataset.bags[i].id for i in idx[order]], mean, std)
        first = kept[min(kept)]
        if first.graph is not None:
            write_edge_list(first.graph, out / "graph.edges")
        if first.solver is not None:
            first.solver.write_trace(out / "solver_trace.csv")
        write_manifest(out / "manifest.txt", cfg, "run")

    _with_stage("report", write)
    return out


def cmd_infer_graph(cfg: dict) -> Path:
    """Base model on the file's labeled bags, then the MAP graph over all bags."""
    out = output_dir(cfg)
    dataset = _with_stage("load-data", _load_dataset, cfg)
    if cfg["data"]["standardize"]:
        dataset = _with_stage("standardize", standardize_features, dataset)
    pcfg = pipeline_config(cfg)
    g_obs = None
    if cfg["data"]["edge_list"] is not None:
        g_obs = _with_stage("load-graph", load_edge_list, cfg["data"]["edge_list"], len(dataset))
    base = _with_stage(
        "base-model",
        train_base_model, dataset, pcfg.encoder, pcfg.training, g_obs, pcfg.head, Rng(cfg["seed"]).child(0),
    )
    graph, solver = _with_stage("graph-inference", infer_graph, base, dataset, pcfg.graph_learn, pcfg.mode)

    def write():
        out.mkdir(parents=True, exist_ok=True)
        write_edge_list(graph, out / "graph.edges")
        solver.write_trace(out / "solver_trace.csv")
        write_manifest(out / "manifest.txt", cfg, "infer-graph")

    _with_stage("report", write)
    return out


# -- compare ----------------------------------------------------------------------
def compare_runs(run_dirs: list[Path], level: float = 0.05) -> str:
    """Paired one-sided Wilcoxon of every run against the first (the base).

    ``*`` marks a significant improvement over the base, ``**`` one that also
    beats every other compared run.
    """
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    reports = [read_metrics_csv(Path(d) / "metrics.csv") for d in run_dirs]
    manifests = [read_manifest(Path(d) / "manifest.txt") for d in run_dirs]
    for d, rep, man in zip(run_dirs[1:], reports[1:], manifests[1:]):
        if man.get("seed") != manifests[0].get("seed"):
            raise ValueError(f"unpaired protocols: {d} uses seed {man.get('seed')}, base uses {manifests[0].get('seed')}")
        for key in ("config.protocol.folds", "config.protocol.train_fraction", "config.protocol.trials"):
            if man.get(key) != manifests[0].get(key):
                raise ValueError(f"unpaired protocols: {key} differs for {d}")
        common = set(rep) & set(reports[0])
        if not common:
            raise ValueError(f"{d} shares no metric with the base run")
        for m in common:
            if rep[m].keys != reports[0][m].keys:
                raise ValueError(f"pairing error: {d} has {len(rep[m].keys)} trials, base has {len(reports[0][m].keys)}")

    names = [str(d) for d in run_dirs]
    lines = [f"base: {names[0]}"]
    metrics = sorted(set.intersection(*(set(r) for r in reports)))

    def test(a, b, higher):
        try:
            return wilcoxon_signed_rank(a.values, b.values, "greater" if higher else "less").p_value
        except ValueError:
            return None  # identical scores

    for m in metrics:
        higher = HIGHER_IS_BETTER.get(m, True)
        lines.append(f"[{m}] ({'higher' if higher else 'lower'} is better)")
        for j in range(1, len(run_dirs)):
            p = test(reports[0][m], reports[j][m], higher)
            mean = reports[j][m].mean
            if p is None:
                lines.append(f"  {names[j]}: mean {mean:.4f}  no difference")
                continue
            stars = ""
            if p < level:
                stars = "*"
                siblings = [test(reports[k][m], reports[j][m], higher) for k in range(1, len(run_dirs)) if k != j]
                if siblings and all(q is not None and q < level for q in siblings):
                    stars = "**"
            lines.append(f"  {names[j]}: mean {mean:.4f}  p={p:.6g} {stars}".rstrip())
    return "\n".join(lines) + "\n"


# -- entry point -------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgmil", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("validate", "check a config without running anything"),
        ("run", "run the configured protocol and write reports"),
        ("infer-graph", "train the base model and write the learned graph"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", type=Path)
        if name != "validate":
            p.add_argument("--output", help="override the config's output directory")
    p = sub.add_parser("compare", help="paired significance tests across run directories")
    p.add_argument("runs", nargs="+", type=Path, help="base run first")
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--out", type=Path, help="also write the report here")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            report = compare_runs(args.runs, args.level)
            sys.stdout.write(report)
            if args.out:
                args.out.write_text(report, encoding="utf-8")
            return 0
        cfg = load_config(args.config, getattr(args, "output", None))
        if args.command == "validate":
            print("OK")
            print(yaml.safe_dump(cfg, sort_keys=True), end="")
            return 0
        out = cmd_run(cfg) if args.command == "run" else cmd_infer_graph(cfg)
        print(f"wrote {out}")
        return 0
    except ConfigError as exc:
        for key, message in exc.problems:
            print(f"config error at {key}: {message}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc.__cause__ or exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
