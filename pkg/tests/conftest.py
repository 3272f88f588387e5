import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bgmil.dataio import Bag, BagDataset
from bgmil.numkit import Rng

settings.register_profile(
    "default",
    settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]),
)
settings.register_profile("thorough", settings(max_examples=500, deadline=None))
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_bags(rng: Rng, n_bags=6, d_x=3, sizes=(1, 5), labels=True, num_classes=2):
    bags = []
    for i in range(n_bags):
        n_i = int(rng.integers(sizes[0], sizes[1] + 1))
        label = int(i % num_classes) if labels else None
        bags.append(Bag(f"b{i}", rng.normal(size=(n_i, d_x)), label))
    labeled = np.arange(n_bags) if labels else np.array([], dtype=int)
    return BagDataset(bags, labeled, "categorical", num_classes)


def jitter(params, rng: Rng, scale=0.1):
    """Move parameters off exact-zero biases so checks avoid relu/max kinks."""
    for i, p in enumerate(params):
        p.data += scale * rng.child(i).normal(size=p.data.shape)
    return params


@pytest.fixture
def small_dataset():
    return random_bags(Rng(123), n_bags=8, d_x=3)
