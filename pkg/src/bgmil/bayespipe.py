"""Bayesian graph MIL pipeline.

Steps: train a base model, compute bag-embedding distances, solve for the
MAP graph, retrain encoder and GCN jointly on that graph, then average S
dropout-perturbed GCN passes over the fixed bag embeddings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .dataio import BagBatch, BagDataset
from .encoders import Encoder, EncoderConfig, combine_head_losses, combine_head_predictions
from .graphcore import Graph, GcnStack, NormalizedAdjacency, build_knn_graph, gcn_forward, normalize_adjacency
from .graphlearn import GraphLearnConfig, SolverResult, learn_graph, pairwise_sq_euclidean
from .numkit import Adam, Rng, Tensor, TrainingConfig
from .numkit.losses import LOSSES

log = logging.getLogger(__name__)


class TransductionMode(str, Enum):
    TRANSDUCTIVE = "transductive"
    TND = "tnd"  # test nodes disconnected
    TND_TRAINING = "tnd_training"  # test nodes disconnected while training only


@dataclass(frozen=True)
class HeadConfig:
    hidden: tuple[int, ...] = ()
    dropout_rate: float = 0.5
    activation: str = "relu"

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("head dropout_rate must lie in [0, 1)")


@dataclass(frozen=True)
class McPredictConfig:
    samples: int = 50
    dropout_rate: float | None = None  # None: the heads' own rate

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"need at least one MC sample, got {self.samples}")
        if self.dropout_rate is not None and not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("MC dropout_rate must lie in [0, 1)")


# -- model ---------------------------------------------------------------------------
@dataclass
class MilGnnModel:
    """Bag encoder followed by one GCN stack per supervised level."""

    encoder: Encoder
    heads: list[GcnStack]
    classification: bool

    @classmethod
    def init(
        cls,
        enc_cfg: EncoderConfig,
        head_cfg: HeadConfig,
        d_x: int,
        out_dim: int,
        classification: bool,
        rng: Rng,
    ) -> "MilGnnModel":
        encoder = Encoder.init(enc_cfg, d_x, rng.child(0))
        heads = [
            GcnStack.init([d, *head_cfg.hidden, out_dim], rng.child(1, i), head_cfg.dropout_rate, head_cfg.activation)
            for i, d in enumerate(encoder.level_dims(d_x))
        ]
        return cls(encoder, heads, classification)

    def parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + [p for h in self.heads for p in h.parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def embed(self, batch: BagBatch, rng: Rng | None = None, train_mode: bool = False) -> list[Tensor]:
        return self.encoder.forward(batch, rng, train_mode)

    def head_outputs(
        self,
        levels: Sequence[Tensor],
        adj: NormalizedAdjacency,
        rng: Rng | None = None,
        dropout: bool = False,
        rate: float | None = None,
    ) -> list[Tensor]:
        outs = []
        for i, (head, z) in enumerate(zip(self.heads, levels)):
            stack = head if rate is None else replace(head, dropout_rate=rate)
            outs.append(gcn_forward(stack, adj, z, None if rng is None else rng.child(i), dropout))
        return outs

    def predict(self, batch: BagBatch, adj: NormalizedAdjacency) -> np.ndarray:
        """Deterministic prediction: class probabilities or regression means."""
        outs = self.head_outputs(self.embed(batch), adj)
        return _finalize(combine_head_predictions([o.data for o in outs], self.classification), self.classification)

    def representations(self, batch: BagBatch, adj: NormalizedAdjacency, which: str = "penultimate") -> np.ndarray:
        if which == "penultimate":
            return self.embed(batch)[-1].data
        return self.predict(batch, adj).reshape(batch.num_bags, -1)


def _finalize(pred: np.ndarray, classification: bool) -> np.ndarray:
    return pred if classification else pred[:, 0]


@dataclass
class BaseModel:
    model: MilGnnModel
    adjacency: NormalizedAdjacency
    losses: list[float] = field(default_factory=list)

    def representations(self, dataset: BagDataset, which: str = "penultimate") -> np.ndarray:
        return self.model.representations(dataset.batch(), self.adjacency, which)


@dataclass
class PredictiveDistribution:
    mean: np.ndarray
    samples: np.ndarray  # (S, n, C) for classification, (S, n) for regression
    classification: bool

    @property
    def std(self) -> np.ndarray:
        return self.samples.std(axis=0)

    def predicted_labels(self) -> np.ndarray:
        if not self.classification:
            raise ValueError("labels are only defined for classification")
        return np.argmax(self.mean, axis=1)

    def take(self, idx) -> "PredictiveDistribution":
        return PredictiveDistribution(self.mean[idx], self.samples[:, idx], self.classification)


# -- training ------------------------------------------------------------------------
def _task(dataset: BagDataset, training: TrainingConfig) -> tuple[bool, int]:
    classification = dataset.label_kind == "categorical"
    if classification != (training.loss == "cross_entropy"):
        raise ValueError(f"loss {training.loss!r} does not match {dataset.label_kind} labels")
    return classification, (dataset.num_classes if classification else 1)


def fit_model(
    model: MilGnnModel,
    dataset: BagDataset,
    adj: NormalizedAdjacency,
    training: TrainingConfig,
    rng: Rng,
    batch: BagBatch | None = None,
) -> list[float]:
    """Full-batch training on the labeled bags; dropout active in encoder and heads."""
    if len(dataset.labeled) == 0:
        raise ValueError("no labeled bags to train on")
    if adj.n != len(dataset):
        raise ValueError(f"graph has {adj.n} nodes but the dataset has {len(dataset)} bags")
    batch = batch or dataset.batch()
    labeled = dataset.labeled
    targets = dataset.labels(labeled)
    loss_fn = LOSSES[training.loss]
    opt = Adam(model.parameters(), training)
    history = []
    for epoch in range(training.epochs):
        stream = rng.child(epoch)
        levels = model.embed(batch, stream.child(0), train_mode=True)
        outs = model.head_outputs(levels, adj, stream.child(1), dropout=True)
        loss = combine_head_losses([loss_fn(o[labeled], targets) for o in outs])
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.data))
    return history


def _new_model(dataset, enc_cfg, head_cfg, training, rng) -> MilGnnModel:
    classification, out_dim = _task(dataset, training)
    return MilGnnModel.init(enc_cfg, head_cfg, dataset.d_x, out_dim, classification, rng)


def train_base_model(
    dataset: BagDataset,
    enc_cfg: EncoderConfig,
    training: TrainingConfig,
    g_obs: Graph | None = None,
    head_cfg: HeadConfig = HeadConfig(),
    rng: Rng | None = None,
) -> BaseModel:
    """Base model: linear head without an observed graph, GCN over it otherwise.

    ``rng`` defaults to a stream keyed by ``training.seed``; the same stream
    drives initialisation and dropout so retraining on another graph is paired.
    """
    rng = rng or Rng(training.seed)
    adj = NormalizedAdjacency.identity(len(dataset)) if g_obs is None else normalize_adjacency(g_obs)
    model = _new_model(dataset, enc_cfg, head_cfg, training, rng.child(0))
    losses = fit_model(model, dataset, adj, training, rng.child(1))
    return BaseModel(model, adj, losses)


def train_gnn_model(
    dataset: BagDataset,
    graph: Graph | NormalizedAdjacency,
    enc_cfg: EncoderConfig,
    head_cfg: HeadConfig,
    training: TrainingConfig,
    rng: Rng | None = None,
) -> tuple[MilGnnModel, list[float]]:
    """Joint encoder + GCN training over ``graph`` (same streams as the base model)."""
    rng = rng or Rng(training.seed)
    adj = graph if isinstance(graph, NormalizedAdjacency) else normalize_adjacency(graph)
    if adj.n != len(dataset):
        raise ValueError(f"graph has {adj.n} nodes but the dataset has {len(dataset)} bags")
    model = _new_model(dataset, enc_cfg, head_cfg, training, rng.child(0))
    losses = fit_model(model, dataset, adj, training, rng.child(1))
    return model, losses


# -- graph inference -------------------------------------------------------------------
def infer_graph(
    base: BaseModel,
    dataset: BagDataset,
    glcfg: GraphLearnConfig,
    mode: TransductionMode | str = TransductionMode.TRANSDUCTIVE,
) -> tuple[Graph, SolverResult]:
    """MAP graph from base-model representations.

    In the tnd modes only labeled bags enter the solve and the others are
    left isolated.
    """
    mode = TransductionMode(mode)
    reps = base.representations(dataset, glcfg.representation)
    n = len(dataset)
    if mode is TransductionMode.TRANSDUCTIVE:
        result = learn_graph(pairwise_sq_euclidean(reps), glcfg)
        return result.graph, result
    nodes = dataset.labeled
    result = learn_graph(pairwise_sq_euclidean(reps[nodes]), glcfg)
    return result.graph.embed(nodes, n), result


def observed_knn_graph(base: BaseModel, dataset: BagDataset, k: int) -> Graph:
    """kNN heuristic graph over base-model bag embeddings."""
    return build_knn_graph(base.representations(dataset), k)


# -- prediction -------------------------------------------------------------------------
def mc_predict(
    model: MilGnnModel,
    graph: Graph | NormalizedAdjacency,
    dataset: BagDataset,
    cfg: McPredictConfig,
    rng: Rng,
) -> PredictiveDistribution:
    """Average of ``cfg.samples`` GCN passes with fresh dropout masks over fixed embeddings."""
    adj = graph if isinstance(graph, NormalizedAdjacency) else normalize_adjacency(graph)
    levels = [z.detach() for z in model.embed(dataset.batch())]
    samples = []
    for s in range(cfg.samples):
        outs = model.head_outputs(levels, adj, rng.child(s), dropout=True, rate=cfg.dropout_rate)
        samples.append(_finalize(combine_head_predictions([o.data for o in outs], model.classification),
                                 model.classification))
    stacked = np.stack(samples)
    # offsets from the first sample keep the mean exact when all samples agree
    mean = stacked[0] + (stacked - stacked[0]).mean(axis=0)
    return PredictiveDistribution(mean, stacked, model.classification)


# -- full pipeline ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PipelineConfig:
    encoder: EncoderConfig = EncoderConfig()
    head: HeadConfig = HeadConfig()
    training: TrainingConfig = TrainingConfig()
    graph_learn: GraphLearnConfig = GraphLearnConfig()
    mc: McPredictConfig = McPredictConfig()
    mode: TransductionMode = TransductionMode.TRANSDUCTIVE
    graph_source: str = "infer"  # "infer" or "identity" (no propagation)

    def __post_init__(self):
        object.__setattr__(self, "mode", TransductionMode(self.mode))
        if self.graph_source not in ("infer", "identity"):
            raise ValueError("graph_source must be 'infer' or 'identity'")


@dataclass
class Diagnostics:
    base_losses: list[float]
    gnn_losses: list[float]
    solver: SolverResult | None
    base_prediction: PredictiveDistribution
    eval_graph: Graph | None = None


def run_algorithm1(
    dataset: BagDataset,
    cfg: PipelineConfig,
    g_obs: Graph | None = None,
    rng: Rng | None = None,
    on_stage: Callable[[str], None] | None = None,
) -> tuple[PredictiveDistribution, Graph | None, Diagnostics]:
    """Base model, graph inference, joint retraining and MC-dropout prediction.

    ``on_stage`` is called with a stage name before each step (used for error
    reporting).
    """
    stage = on_stage or (lambda name: None)
    rng = rng or Rng(cfg.training.seed)
    train_stream, mc_stream = rng.child(0), rng.child(1)
    stage("base-model")
    base = train_base_model(dataset, cfg.encoder, cfg.training, g_obs, cfg.head, train_stream)
    base_pred = mc_predict(base.model, base.adjacency, dataset, cfg.mc, mc_stream)

    solver = None
    graph: Graph | None = None
    eval_graph: Graph | None = None
    if cfg.graph_source == "identity":
        train_adj = eval_adj = NormalizedAdjacency.identity(len(dataset))
    else:
        stage("graph-inference")
        graph, solver = infer_graph(base, dataset, cfg.graph_learn, cfg.mode)
        train_adj = eval_adj = normalize_adjacency(graph)
        eval_graph = graph
        if cfg.mode is TransductionMode.TND_TRAINING:
            eval_graph, _ = infer_graph(base, dataset, cfg.graph_learn, TransductionMode.TRANSDUCTIVE)
            eval_adj = normalize_adjacency(eval_graph)

    stage("gnn-training")
    model, gnn_losses = train_gnn_model(dataset, train_adj, cfg.encoder, cfg.head, cfg.training, train_stream)
    stage("prediction")
    predictive = mc_predict(model, eval_adj, dataset, cfg.mc, mc_stream)
    return predictive, graph, Diagnostics(base.losses, gnn_losses, solver, base_pred, eval_graph)
