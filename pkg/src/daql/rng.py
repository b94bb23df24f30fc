"""Deterministic, schedule-independent random streams.

Every stochastic task unit (noise draw, training restart, mesh node, ...)
gets its own ``RngStream`` derived from a root (seed, stream) pair, so
results do not depend on execution order or thread scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    # Standard splitmix64 finalizer; used to fold child ids into stream ids.
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream id) pair naming one independent random substream.

    Identical pairs yield identical draw sequences across runs and across
    any parallel schedule.  Use :meth:`child` to derive substreams for
    nested task units.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed & _MASK64, spawn_key=(self.stream & _MASK64,)
        )
        return np.random.default_rng(ss)

    def child(self, *ids: int) -> "RngStream":
        s = self.stream & _MASK64
        for i in ids:
            s = _splitmix64(s ^ _splitmix64(i & _MASK64))
        return RngStream(self.seed, s)
