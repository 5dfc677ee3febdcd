"""Seeded random streams with reproducible per-worker substreams."""
from __future__ import annotations

import numpy as np

DEFAULT_SEED = 0xDEC0DE
_MAX_SEED = 2**64 - 1


class RandomSource:
    """Thin wrapper around a PCG64 generator seeded by a 64-bit unsigned integer.

    ``spawn`` hands out independent child streams in a fixed order, so work
    split into chunks reproduces bit for bit regardless of how many workers
    process the chunks.
    """

    def __init__(self, seed: int = DEFAULT_SEED, *, _seq: np.random.SeedSequence | None = None):
        if _seq is None:
            seed = int(seed)
            if not 0 <= seed <= _MAX_SEED:
                raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
            _seq = np.random.SeedSequence(seed)
        self.seed = seed
        self._seq = _seq
        self._gen = np.random.Generator(np.random.PCG64(_seq))

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, spawn_key={self._seq.spawn_key})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def spawn(self, count: int) -> list["RandomSource"]:
        return [RandomSource(self.seed, _seq=s) for s in self._seq.spawn(count)]

    def copy(self) -> "RandomSource":
        """Independent source in the same state, with the same future children and draws."""
        q = self._seq
        seq = np.random.SeedSequence(q.entropy, spawn_key=q.spawn_key, pool_size=q.pool_size,
                                     n_children_spawned=q.n_children_spawned)
        out = RandomSource(self.seed, _seq=seq)
        out._gen.bit_generator.state = self._gen.bit_generator.state
        return out

    def integers(self, low, high, size=None):
        """Uniform integers on ``[low, high)``; unbiased (bounded rejection, no modulo)."""
        return self._gen.integers(low, high, size=size, dtype=np.int64)

    def uniform(self, size=None):
        return self._gen.random(size)

    def categorical(self, p, size=None):
        return self._gen.choice(len(p), size=size, p=p)


def as_source(rng) -> RandomSource:
    if isinstance(rng, RandomSource):
        return rng
    if rng is None:
        return RandomSource()
    return RandomSource(int(rng))
