from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Bag, BagDataset
from .numkit import Rng


def clustered_bags(
    rng: Rng,
    n_bags: int = 200,
    n_clusters: int = 8,
    d_x: int = 8,
    bag_size: tuple[int, int] = (5, 15),
    center_scale: float = 2.0,
    bag_spread: float = 1.0,
    instance_spread: float = 1.0,
    label_kind: str = "categorical",
) -> tuple[BagDataset, np.ndarray]:
    """Two-class bags whose label is fixed by a latent cluster.

    Each cluster has a centre; a bag draws its own mean around its cluster's
    centre (``bag_spread``) and its instances around that mean
    (``instance_spread``). Clusters alternate labels, so bags of one cluster
    share both their label and their instance distribution. All bags are
    labeled; callers pick the training subset. Returns the dataset and the
    cluster index of every bag.
    """
    centers = rng.child(0).normal(scale=center_scale, size=(n_clusters, d_x))
    cluster_labels = np.arange(n_clusters) % 2
    draw = rng.child(1)
    assign = draw.integers(0, n_clusters, size=n_bags)
    bags = []
    for i, c in enumerate(assign):
        n_i = int(draw.integers(bag_size[0], bag_size[1] + 1))
        mean = centers[c] + bag_spread * draw.normal(size=d_x)
        feats = mean + instance_spread * draw.normal(size=(n_i, d_x))
        label = int(cluster_labels[c]) if label_kind == "categorical" else float(centers[c].sum())
        bags.append(Bag(f"bag{i}", feats, label))
    return BagDataset(bags, np.arange(n_bags), label_kind, 2 if label_kind == "categorical" else None), assign


@dataclass(frozen=True)
class SyntheticStudy:
    """Settings for the paired base-vs-Bayesian comparison on clustered bags."""

    n_bags: int = 200
    n_clusters: int = 8
    bag_spread: float = 1.0
    train_fraction: float = 0.1
    hidden: tuple[int, ...] = (32, 16)
    pooling: str = "mean"
    learning_rate: float = 5e-3
    weight_decay: float = 1e-3
    epochs: int = 150
    k: int = 5
    r: int = 2
    mc_samples: int = 30


def paired_synthetic_run(study: SyntheticStudy, seed: int) -> tuple[float, float]:
    """Test accuracy of the base model and of the Bayesian GCN for one seed.

    Both models share the data, split and training streams, so the pair
    differs only by the learned graph.
    """
    from .bayespipe import McPredictConfig, PipelineConfig, run_algorithm1, train_base_model
    from .dataio import make_splits
    from .encoders import EncoderConfig
    from .graphlearn import GraphLearnConfig
    from .numkit import TrainingConfig

    ds, _ = clustered_bags(Rng(seed), study.n_bags, study.n_clusters, bag_spread=study.bag_spread)
    train, test = make_splits(len(ds), train_fraction=study.train_fraction, rng=Rng(seed, 7))[0].folds[0]
    ds = ds.with_labeled(train)
    cfg = PipelineConfig(
        encoder=EncoderConfig(kind="rff_pool", hidden=study.hidden, pooling=study.pooling),
        training=TrainingConfig(study.learning_rate, study.weight_decay, study.epochs, seed=seed),
        graph_learn=GraphLearnConfig(k=study.k, r=study.r),
        mc=McPredictConfig(samples=study.mc_samples),
    )
    truth = ds.labels(test)
    base = train_base_model(ds, cfg.encoder, cfg.training, None, cfg.head, Rng(seed).child(0))
    base_acc = float(np.mean(base.model.predict(ds.batch(), base.adjacency).argmax(1)[test] == truth))
    pred, _, _ = run_algorithm1(ds, cfg, rng=Rng(seed))
    bayes_acc = float(np.mean(pred.predicted_labels()[test] == truth))
    return base_acc, bayes_acc
