"""Token distributions, communication graphs and the synchronous round engine.

A run is a sequence of rounds. In each round every node broadcasts at most one
token it already holds (or the ``EMPTY`` sentinel) and every neighbour in that
round's connected graph receives it. Tokens are never lost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .rng import substream

EMPTY = -1
"""Broadcast sentinel meaning "send nothing". Every node implicitly holds it."""


class GossipError(Exception):
    """Base class for contract violations detected by the engine."""


class InfeasibleBroadcast(GossipError):
    """A node tried to broadcast a token it does not hold."""

    def __init__(self, node: int, token: int, round_index: int | None = None):
        self.node = node
        self.token = token
        self.round_index = round_index
        where = f" in round {round_index}" if round_index is not None else ""
        super().__init__(f"node {node} broadcasts token {token} it does not hold{where}")


class DisconnectedGraph(GossipError, ValueError):
    """A communication graph that must be connected is not."""


class InvariantViolation(GossipError, AssertionError):
    """A checked structural property failed."""


# ---------------------------------------------------------------------------
# Token distributions
# ---------------------------------------------------------------------------


class TokenMatrix:
    """Immutable ``n x k`` boolean matrix; ``holds[v, t]`` is True if node v has token t."""

    __slots__ = ("holds",)

    def __init__(self, holds):
        arr = np.array(holds, dtype=bool, copy=True)
        if arr.ndim != 2:
            raise ValueError("token matrix must be two-dimensional")
        arr.setflags(write=False)
        self.holds = arr

    @property
    def n(self) -> int:
        return self.holds.shape[0]

    @property
    def k(self) -> int:
        return self.holds.shape[1]

    @classmethod
    def empty(cls, n: int, k: int) -> "TokenMatrix":
        return cls(np.zeros((n, k), dtype=bool))

    @classmethod
    def full(cls, n: int, k: int) -> "TokenMatrix":
        return cls(np.ones((n, k), dtype=bool))

    @classmethod
    def from_holders(cls, n: int, k: int, holders: Sequence[Iterable[int]]) -> "TokenMatrix":
        """Build from per-node token lists."""
        if len(holders) != n:
            raise ValueError(f"expected {n} holder lists, got {len(holders)}")
        arr = np.zeros((n, k), dtype=bool)
        for v, toks in enumerate(holders):
            for t in toks:
                if not 0 <= t < k:
                    raise ValueError(f"token id {t} out of range [0, {k})")
                arr[v, t] = True
        return cls(arr)

    def to_holders(self) -> list[list[int]]:
        return [np.flatnonzero(row).tolist() for row in self.holds]

    def has(self, v: int, t: int) -> bool:
        return t == EMPTY or bool(self.holds[v, t])

    def holder_counts(self) -> np.ndarray:
        return self.holds.sum(axis=0)

    def missing_count(self) -> int:
        return int(self.holds.size - np.count_nonzero(self.holds))

    def is_complete(self) -> bool:
        return bool(self.holds.all())

    def with_extended(self) -> np.ndarray:
        """``holds`` with one extra all-True column standing for ``EMPTY``."""
        return np.hstack([self.holds, np.ones((self.n, 1), dtype=bool)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenMatrix):
            return NotImplemented
        return self.holds.shape == other.holds.shape and bool(np.array_equal(self.holds, other.holds))

    def __hash__(self):
        return hash((self.holds.shape, self.holds.tobytes()))

    def __repr__(self) -> str:
        return f"TokenMatrix(n={self.n}, k={self.k}, missing={self.missing_count()})"


def missing_count(state: TokenMatrix) -> int:
    """Number of (node, token) pairs not yet delivered."""
    return state.missing_count()


def new_distribution(n: int, k: int, spec, seed: int | None = 0) -> TokenMatrix:
    """Draw an initial token distribution.

    ``spec`` is one of ``("bernoulli", p)``, ``"one_token_per_node"`` or
    ``("explicit", holders)`` where ``holders`` lists token ids per node.
    Random draws come from the ``"distribution"`` substream of ``seed``.
    """
    kind, arg = (spec, None) if isinstance(spec, str) else (spec[0], spec[1])
    if kind == "bernoulli":
        p = float(arg)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli probability {p} outside [0, 1]")
        rng = substream(seed, "distribution")
        return TokenMatrix(rng.random((n, k)) < p)
    if kind == "one_token_per_node":
        if k > n:
            raise ValueError(f"one_token_per_node needs k <= n, got n={n}, k={k}")
        rng = substream(seed, "distribution")
        perm = rng.permutation(n)
        arr = np.zeros((n, k), dtype=bool)
        arr[perm[:k], np.arange(k)] = True
        return TokenMatrix(arr)
    if kind == "explicit":
        return TokenMatrix.from_holders(n, k, arg)
    raise ValueError(f"unknown distribution spec {spec!r}")


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------


def _components(n: int, edges: np.ndarray) -> tuple[int, np.ndarray]:
    if n == 0:
        return 0, np.zeros(0, dtype=np.int64)
    m = len(edges)
    adj = coo_matrix((np.ones(m, dtype=np.int8), (edges[:, 0], edges[:, 1])), shape=(n, n))
    return connected_components(adj, directed=False)


def dense_components(adj: np.ndarray) -> tuple[int, np.ndarray]:
    """Component labels of a symmetric boolean adjacency matrix, numbered by lowest member."""
    n = adj.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    count = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        seen = np.zeros(n, dtype=bool)
        seen[start] = True
        frontier = seen.copy()
        while frontier.any():
            nxt = adj[frontier].any(axis=0) & ~seen
            seen |= nxt
            frontier = nxt
        labels[seen] = count
        count += 1
    return count, labels


class CommGraph:
    """Simple undirected graph on nodes ``0..n-1`` used for one round.

    Edges are stored as a sorted ``(m, 2)`` array with ``u < v``. Connectivity
    is checked on construction unless ``check=False``.
    """

    __slots__ = ("n", "edges", "_adj", "_connected")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = (), check: bool = True):
        if n < 1:
            raise ValueError("a communication graph needs at least one node")
        norm = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
            norm.add((u, v) if u < v else (v, u))
        arr = np.array(sorted(norm), dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        self.n = n
        self.edges = arr
        self._adj = None
        self._connected = None
        if check and not self.is_connected():
            raise DisconnectedGraph(f"graph on {n} nodes with {len(arr)} edges is not connected")

    @classmethod
    def from_array(cls, n: int, edges: np.ndarray, check: bool = True) -> "CommGraph":
        """Vectorised constructor for an ``(m, 2)`` edge array; normalises and deduplicates."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and ((e < 0).any() or (e >= n).any() or (e[:, 0] == e[:, 1]).any()):
            raise ValueError("edge array has self-loops or out-of-range endpoints")
        e = np.unique(np.sort(e, axis=1), axis=0)
        e.setflags(write=False)
        g = cls.__new__(cls)
        g.n, g.edges, g._adj, g._connected = n, e, None, None
        if check and not g.is_connected():
            raise DisconnectedGraph(f"graph on {n} nodes with {len(e)} edges is not connected")
        return g

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, check: bool = True) -> "CommGraph":
        """Build from a symmetric boolean ``n x n`` matrix (diagonal ignored)."""
        adj = np.asarray(adj, dtype=bool)
        n = adj.shape[0]
        iu, iv = np.nonzero(np.triu(adj, 1))
        e = np.column_stack([iu, iv]).astype(np.int64)
        e.setflags(write=False)
        g = cls.__new__(cls)
        g.n, g.edges, g._adj = n, e, None
        sym = adj | adj.T
        np.fill_diagonal(sym, False)
        g._connected = dense_components(sym)[0] == 1
        if check and not g._connected:
            raise DisconnectedGraph(f"graph on {n} nodes with {len(e)} edges is not connected")
        return g

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls(n, ((u, v) for u in range(n) for v in range(u + 1, n)))

    @classmethod
    def path(cls, n: int) -> "CommGraph":
        return cls(n, ((v, v + 1) for v in range(n - 1)))

    @classmethod
    def star(cls, n: int, hub: int = 0) -> "CommGraph":
        return cls(n, ((hub, v) for v in range(n) if v != hub))

    def is_connected(self) -> bool:
        if self._connected is None:
            self._connected = _components(self.n, self.edges)[0] == 1
        return self._connected

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, self.edges.tolist()))

    def neighbors(self, u: int) -> list[int]:
        if self._adj is None:
            adj: list[list[int]] = [[] for _ in range(self.n)]
            for a, b in self.edges.tolist():
                adj[a].append(b)
                adj[b].append(a)
            self._adj = adj
        return self._adj[u]

    def __len__(self) -> int:
        return len(self.edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CommGraph):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.edges, other.edges))

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))

    def __repr__(self) -> str:
        return f"CommGraph(n={self.n}, m={len(self.edges)})"


class GraphSequence:
    """Lazy map from round index (1-based) to a connected :class:`CommGraph`.

    ``length`` is the number of recorded rounds, or ``None`` for an unbounded
    generator. A recorded list with ``extend="cycle"`` repeats forever; with
    ``extend="error"`` asking past the end raises ``IndexError``.
    """

    def __init__(self, n: int, provider: Callable[[int], CommGraph], length: int | None = None,
                 extend: str = "error"):
        if extend not in ("cycle", "error"):
            raise ValueError(f"extend must be 'cycle' or 'error', not {extend!r}")
        self.n = n
        self.length = length
        self.extend = extend
        self._provider = provider
        self._cache: dict[int, CommGraph] = {}

    @classmethod
    def from_graphs(cls, graphs: Sequence[CommGraph], extend: str = "error", n: int | None = None):
        graphs = list(graphs)
        if n is None:
            if not graphs:
                raise ValueError("n is required for an empty sequence")
            n = graphs[0].n
        for i, g in enumerate(graphs, 1):
            if g.n != n:
                raise ValueError(f"round {i} graph has {g.n} nodes, expected {n}")
        if extend == "cycle" and not graphs:
            raise ValueError("cannot cycle an empty sequence")
        return cls(n, lambda r: graphs[(r - 1) % len(graphs)], length=len(graphs), extend=extend)

    @classmethod
    def static(cls, g: CommGraph) -> "GraphSequence":
        return cls(g.n, lambda r: g, length=None, extend="cycle")

    def graph(self, r: int) -> CommGraph:
        if r < 1:
            raise IndexError(f"rounds are numbered from 1, got {r}")
        if self.length is not None and self.extend == "error" and r > self.length:
            raise IndexError(f"round {r} past the end of a {self.length}-round sequence")
        g = self._cache.get(r)
        if g is None:
            g = self._provider(r)
            if g.n != self.n:
                raise ValueError(f"round {r} graph has {g.n} nodes, expected {self.n}")
            self._cache[r] = g
        return g

    __getitem__ = graph

    def graphs(self, start: int, count: int) -> list[CommGraph]:
        return [self.graph(r) for r in range(start, start + count)]

    def recorded(self, rounds: int | None = None) -> list[CommGraph]:
        if rounds is None:
            if self.length is None:
                raise ValueError("unbounded sequence: give the number of rounds to record")
            rounds = self.length
        return self.graphs(1, rounds)

    def __len__(self) -> int:
        if self.length is None:
            raise TypeError("unbounded sequence has no length")
        return self.length

    def __iter__(self) -> Iterator[CommGraph]:
        r = 1
        while self.length is None or self.extend == "cycle" or r <= self.length:
            yield self.graph(r)
            r += 1


# ---------------------------------------------------------------------------
# Broadcasts and schedules
# ---------------------------------------------------------------------------


def broadcast(n: int, choices: Mapping[int, int | None] | None = None) -> np.ndarray:
    """Total broadcast vector; nodes not in ``choices`` (or mapped to None) send ``EMPTY``."""
    b = np.full(n, EMPTY, dtype=np.int64)
    for v, t in (choices or {}).items():
        b[v] = EMPTY if t is None else t
    return b


@dataclass
class Schedule:
    """One broadcast vector per round, in round order."""

    rounds: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rounds)

    def __getitem__(self, i):
        return self.rounds[i]

    def __iter__(self):
        return iter(self.rounds)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Schedule):
            return NotImplemented
        return len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.rounds, other.rounds))

    def append(self, bcast) -> None:
        self.rounds.append(np.asarray(bcast, dtype=np.int64))

    def extend(self, other: "Schedule") -> None:
        self.rounds.extend(other.rounds)

    def trimmed(self) -> "Schedule":
        """Copy without trailing all-``EMPTY`` rounds."""
        end = len(self.rounds)
        while end and (self.rounds[end - 1] == EMPTY).all():
            end -= 1
        return Schedule(list(self.rounds[:end]))


@dataclass(frozen=True)
class RoundMetrics:
    useful_exchanges: int
    token_gains: int
    missing_total: int
    per_node_missing: tuple[int, ...]


def is_free_edge(state: TokenMatrix, bcast, u: int, v: int) -> bool:
    """True if each endpoint already holds what the other broadcasts."""
    if u == v:
        raise ValueError("a free edge needs two distinct endpoints")
    return state.has(u, int(bcast[v])) and state.has(v, int(bcast[u]))


def check_feasible(state: TokenMatrix, bcast) -> np.ndarray:
    """Validate a broadcast vector against ``state`` and return it as an int array."""
    b = np.asarray(bcast, dtype=np.int64)
    if b.shape != (state.n,):
        raise ValueError(f"broadcast vector must have length {state.n}")
    if ((b < EMPTY) | (b >= state.k)).any():
        bad = int(np.flatnonzero((b < EMPTY) | (b >= state.k))[0])
        raise ValueError(f"node {bad} broadcasts out-of-range token {int(b[bad])}")
    senders = np.flatnonzero(b != EMPTY)
    ok = state.holds[senders, b[senders]]
    if not ok.all():
        v = int(senders[np.argmin(ok)])
        raise InfeasibleBroadcast(v, int(b[v]))
    return b


def execute_round(state: TokenMatrix, bcast, g: CommGraph) -> tuple[TokenMatrix, RoundMetrics]:
    """Deliver one round of broadcasts over ``g``.

    Metrics are measured against the round-start state: a useful exchange is
    one (edge, direction) whose receiver lacked the token it was sent.
    """
    if g.n != state.n:
        raise ValueError(f"graph has {g.n} nodes, state has {state.n}")
    b = check_feasible(state, bcast)
    holds = state.holds
    e = g.edges
    senders = np.concatenate([e[:, 0], e[:, 1]])
    receivers = np.concatenate([e[:, 1], e[:, 0]])
    toks = b[senders]
    sent = toks != EMPTY
    receivers, toks = receivers[sent], toks[sent]
    useful = int(np.count_nonzero(~holds[receivers, toks]))
    new = holds.copy()
    new[receivers, toks] = True
    gains = int(np.count_nonzero(new)) - int(np.count_nonzero(holds))
    per_node = (new.shape[1] - new.sum(axis=1)).astype(int)
    metrics = RoundMetrics(useful, gains, int(per_node.sum()), tuple(per_node.tolist()))
    return TokenMatrix(new), metrics


def run_schedule(init: TokenMatrix, seq: GraphSequence, sched: Schedule,
                 start_round: int = 1) -> tuple[TokenMatrix, list[RoundMetrics]]:
    """Replay ``sched`` over ``seq`` starting at ``start_round``; fails on the first infeasible broadcast."""
    state = init
    metrics = []
    for i, bcast in enumerate(sched):
        r = start_round + i
        try:
            state, m = execute_round(state, bcast, seq.graph(r))
        except InfeasibleBroadcast as exc:
            raise InfeasibleBroadcast(exc.node, exc.token, r) from None
        metrics.append(m)
    return state, metrics


# ---------------------------------------------------------------------------
# Online runs
# ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    bcast: np.ndarray
    graph: CommGraph
    metrics: RoundMetrics


@dataclass
class Transcript:
    initial: TokenMatrix
    rounds: list[RoundRecord]
    final: TokenMatrix

    def __len__(self) -> int:
        return len(self.rounds)

    def states(self) -> list[TokenMatrix]:
        """Round-start states ``[s_1, ..., s_R]`` followed by the final state."""
        out = [self.initial]
        state = self.initial
        for rec in self.rounds:
            state, _ = execute_round(state, rec.bcast, rec.graph)
            out.append(state)
        return out

    def replay(self) -> TokenMatrix:
        return self.states()[-1]

    def metrics(self) -> list[RoundMetrics]:
        return [rec.metrics for rec in self.rounds]


def run_online(strategy, adversary, init: TokenMatrix, max_rounds: int) -> Transcript:
    """Play ``strategy`` against ``adversary`` until every node has every token.

    Each round the strategy commits broadcasts via ``strategy.choose(state, r)``
    without seeing the graph; the adversary then builds the round's graph from
    ``adversary(state, bcast)`` knowing those broadcasts.
    """
    if max_rounds < 0:
        raise ValueError("max_rounds must be non-negative")
    state = init
    records: list[RoundRecord] = []
    for r in range(1, max_rounds + 1):
        if state.is_complete():
            break
        bcast = check_feasible(state, strategy.choose(state, r))
        g = adversary(state, bcast)
        if g.n != state.n or not g.is_connected():
            raise DisconnectedGraph(f"adversary produced a disconnected graph in round {r}")
        state, m = execute_round(state, bcast, g)
        records.append(RoundRecord(bcast, g, m))
    return Transcript(init, records, state)
