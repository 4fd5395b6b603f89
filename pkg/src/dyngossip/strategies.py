"""Online token-forwarding strategies.

A strategy object is stepped once per round through ``choose(state, r)`` and
returns a broadcast vector. It sees the round-start token matrix and its own
memory, never the graph the adversary is about to build.
"""

from __future__ import annotations

import numpy as np

from .model import EMPTY, TokenMatrix
from .rng import substream

STRATEGIES = ("uniform_random", "round_robin", "rarest_first_global")

# CLI spellings
ALIASES = {"uniform": "uniform_random", "rr": "round_robin", "rarest": "rarest_first_global"}


class Strategy:
    name = "base"

    def __init__(self, n: int, k: int, seed: int | None = 0):
        self.n = n
        self.k = k
        self.seed = seed
        self.round = 0

    def choose(self, state: TokenMatrix, r: int) -> np.ndarray:
        self.round = r
        return self._choose(state, r)

    def _choose(self, state: TokenMatrix, r: int) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, k={self.k}, seed={self.seed})"


class UniformRandom(Strategy):
    """Each node picks uniformly among the tokens it holds.

    Node ``v`` in round ``r`` uses the ``v``-th draw of the ``(seed, r)``
    strategy stream, so a choice depends only on ``(seed, r, v)``.
    """

    name = "uniform_random"

    def _choose(self, state, r):
        u = substream(self.seed, "strategy", r).random(self.n)
        counts = state.holds.sum(axis=1)
        b = np.full(self.n, EMPTY, dtype=np.int64)
        for v in np.flatnonzero(counts):
            held = np.flatnonzero(state.holds[v])
            b[v] = held[int(u[v] * len(held))]
        return b


class RoundRobin(Strategy):
    """Each node cycles through its held tokens in id order.

    The cursor is the last token a node sent; the next broadcast is the
    smallest held id above it, wrapping around.
    """

    name = "round_robin"

    def __init__(self, n, k, seed=0):
        super().__init__(n, k, seed)
        self.cursor = np.full(n, EMPTY, dtype=np.int64)

    def _choose(self, state, r):
        holds = state.holds
        after = holds & (np.arange(self.k)[None, :] > self.cursor[:, None])
        b = np.where(after.any(axis=1), after.argmax(axis=1), holds.argmax(axis=1)).astype(np.int64)
        b[~holds.any(axis=1)] = EMPTY
        self.cursor = np.where(b != EMPTY, b, self.cursor)
        return b


class RarestFirstGlobal(Strategy):
    """Centralised baseline: send the held token with the fewest holders, ties to lowest id."""

    name = "rarest_first_global"

    def _choose(self, state, r):
        counts = state.holder_counts()
        # held tokens keep their count, others are pushed past any real count
        masked = np.where(state.holds, counts[None, :], self.n + 1)
        b = np.argmin(masked, axis=1).astype(np.int64)
        b[~state.holds.any(axis=1)] = EMPTY
        return b


_REGISTRY = {cls.name: cls for cls in (UniformRandom, RoundRobin, RarestFirstGlobal)}


def make_strategy(name: str, n: int, k: int, seed: int | None = 0) -> Strategy:
    try:
        cls = _REGISTRY[ALIASES.get(name, name)]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {sorted(_REGISTRY)}") from None
    return cls(n, k, seed)


def choose_broadcasts(strategy: str | Strategy, state: TokenMatrix, mem: Strategy | None = None,
                      seed: int | None = 0, r: int = 1) -> np.ndarray:
    """One-shot broadcast choice for round ``r``.

    ``mem`` carries strategy memory across calls; without it a fresh strategy
    of the named kind is used.
    """
    if isinstance(strategy, Strategy):
        mem = strategy
    elif mem is None:
        mem = make_strategy(strategy, state.n, state.k, seed)
    return mem.choose(state, r)
