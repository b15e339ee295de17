"""Seeded, splittable random streams."""

from __future__ import annotations

import numpy as np


class RandomSource:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams with the same seed but different ``stream_id`` are derived through
    :class:`numpy.random.SeedSequence` spawn keys and are statistically
    independent. ``spawn`` derives further child streams, so a replication can
    hand separate streams to generation, sampling and fitting.
    """

    __slots__ = ("seed", "stream_id", "path", "gen")

    def __init__(self, seed: int, stream_id: int = 0, path: tuple = ()):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self.path)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, key: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream_id, self.path + (key,))

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


def as_generator(rng) -> np.random.Generator:
    """Accept a RandomSource, a numpy Generator or an int seed."""
    if isinstance(rng, RandomSource):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomSource(int(rng)).gen
    raise TypeError(f"expected RandomSource or numpy Generator, got {type(rng).__name__}")
