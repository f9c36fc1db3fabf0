"""Seedable, splittable random streams.

A stream is an immutable (seed, path) pair.  Child streams extend the path,
and numpy's ``SeedSequence`` maps each distinct path to an independent
PCG64 state, so the draws consumed by one operation never depend on what any
other operation consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RandomStream:
    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        seed = int(self.seed)
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))

    def split(self, *indices: int) -> "RandomStream":
        """Child stream keyed by ``indices`` appended to the current path."""
        return RandomStream(self.seed, self.path + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        """A fresh generator; equal streams always give equal draw sequences."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def label(self) -> str:
        return f"{self.seed}:" + "/".join(str(i) for i in self.path)

    @classmethod
    def from_label(cls, label: str) -> "RandomStream":
        seed, _, rest = label.partition(":")
        path = tuple(int(i) for i in rest.split("/") if i != "")
        return cls(int(seed), path)


def as_generator(stream_or_gen) -> np.random.Generator:
    """Accept a stream or an already-built generator."""
    if isinstance(stream_or_gen, np.random.Generator):
        return stream_or_gen
    if isinstance(stream_or_gen, RandomStream):
        return stream_or_gen.generator()
    raise TypeError("expected RandomStream or numpy Generator")
