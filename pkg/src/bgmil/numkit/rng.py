"""Seeded, splittable random streams.

Each stream is a Philox (counter-based) generator keyed by the root seed and
a tuple of stream ids, so the draws for e.g. (trial 3, fold 2, MC sample 17)
do not depend on how many other streams were consumed before it.
"""

from __future__ import annotations

import numpy as np


class Rng:
    def __init__(self, seed: int, stream_id: int | tuple[int, ...] = ()):
        if isinstance(stream_id, int):
            stream_id = (stream_id,)
        self.seed = int(seed)
        self.stream_id: tuple[int, ...] = tuple(int(s) for s in stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *ids: int) -> "Rng":
        """Independent stream derived from this one's key (not its state)."""
        return Rng(self.seed, self.stream_id + tuple(ids))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream_id={self.stream_id})"

    # thin pass-throughs used across the package
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def random(self, size=None):
        return self.generator.random(size)
