"""Evolution graph: the time-expanded, capacitated DAG of a dynamic network.

For ``l`` rounds there are ``2l + 1`` levels of node copies. Level ``2i - 1``
is the start of round ``i`` and level ``2i`` its end (level 0 is the initial
state). Edge templates, for each round ``i`` and node ``v``:

* buffer     ``(v, 2i-2) -> (v, 2i)``    capacity ``k`` (stands in for infinity)
* selection  ``(v, 2i-2) -> (v, 2i-1)``  capacity 1 (one token per broadcast)
* broadcast  ``(u, 2i-1) -> (v, 2i)``    capacity 1 for each edge ``{u, v}`` of ``G_i``

A capacity-respecting packing of one out-arborescence per token is the same
thing as a feasible broadcast schedule; the functions here convert between the
two and extract gather schedules from a maximum flow.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .model import EMPTY, GossipError, GraphSequence, Schedule, TokenMatrix, run_schedule

BROADCAST, BUFFER, SELECTION, SOURCE = 0, 1, 2, 3
KIND_NAMES = ("broadcast", "buffer", "selection", "source")

INF_CAPACITY = 2 ** 30
"""Buffer capacity used when no token count is given."""


class PackingError(GossipError):
    """Two trees claim the same unit-capacity edge, or a tree is malformed."""


class UndeliveredToken(GossipError):
    """A destination does not hold its token at the end of the schedule."""


class EvoVertex(NamedTuple):
    node: int
    level: int


SUPERSOURCE = EvoVertex(-1, -1)


class EvoEdge(NamedTuple):
    tail: EvoVertex
    head: EvoVertex
    kind: str
    capacity: int


class EvolutionGraph:
    """Edges are held in parallel arrays over vertex ids ``level * n + node``.

    The super-source, when attached, has id ``n * (2l + 1)``.
    """

    def __init__(self, n: int, l: int, tail, head, cap, kind, start_round: int = 1,
                 sources: dict[int, tuple[int, ...]] | None = None):
        self.n = n
        self.l = l
        self.start_round = start_round
        self.tail = np.asarray(tail, dtype=np.int64)
        self.head = np.asarray(head, dtype=np.int64)
        self.cap = np.asarray(cap, dtype=np.int64)
        self.kind = np.asarray(kind, dtype=np.int8)
        self.sources = sources
        self._index: dict[tuple[int, int], int] | None = None
        self._matrix = None

    # vertex ids
    @property
    def num_levels(self) -> int:
        return 2 * self.l + 1

    @property
    def num_vertices(self) -> int:
        return self.n * self.num_levels + (1 if self.sources is not None else 0)

    def vid(self, v: EvoVertex | tuple[int, int]) -> int:
        node, level = v
        if level == -1:
            if self.sources is None:
                raise KeyError("no super-source attached")
            return self.n * self.num_levels
        if not (0 <= node < self.n and 0 <= level < self.num_levels):
            raise KeyError(f"vertex {tuple(v)} not in evolution graph")
        return level * self.n + node

    def vertex(self, vid: int) -> EvoVertex:
        if vid == self.n * self.num_levels:
            return SUPERSOURCE
        return EvoVertex(int(vid % self.n), int(vid // self.n))

    def vertices(self) -> list[EvoVertex]:
        out = [EvoVertex(v, lev) for lev in range(self.num_levels) for v in range(self.n)]
        if self.sources is not None:
            out.append(SUPERSOURCE)
        return out

    # edges
    def __len__(self) -> int:
        return len(self.tail)

    def edge(self, i: int) -> EvoEdge:
        return EvoEdge(self.vertex(self.tail[i]), self.vertex(self.head[i]), KIND_NAMES[self.kind[i]],
                       int(self.cap[i]))

    def edges(self) -> list[EvoEdge]:
        return [self.edge(i) for i in range(len(self))]

    def edge_index(self, tail: EvoVertex | tuple[int, int], head: EvoVertex | tuple[int, int]) -> int:
        if self._index is None:
            self._index = {(int(a), int(b)): i for i, (a, b) in enumerate(zip(self.tail, self.head))}
        try:
            return self._index[(self.vid(tail), self.vid(head))]
        except KeyError:
            raise KeyError(f"no edge {tuple(tail)} -> {tuple(head)}") from None

    def capacity_matrix(self) -> csr_matrix:
        if self._matrix is None:
            nv = self.num_vertices
            cap = np.minimum(self.cap, INF_CAPACITY).astype(np.int32)
            self._matrix = csr_matrix((cap, (self.tail, self.head)), shape=(nv, nv))
        return self._matrix

    def kind_counts(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(self.kind == i)) for i, name in enumerate(KIND_NAMES)}

    def round_of(self, i: int) -> int:
        """Absolute round of a broadcast or selection edge."""
        lev = int(self.tail[i] // self.n)
        return self.start_round + lev // 2

    def to_dict(self) -> dict:
        return {
            "n": self.n, "l": self.l, "start_round": self.start_round,
            "vertices": [list(v) for v in self.vertices()],
            "edges": [{"from": list(e.tail), "to": list(e.head), "kind": e.kind, "capacity": e.capacity}
                      for e in self.edges()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def build_evolution_graph(seq: GraphSequence, l: int, k: int | None = None,
                          start_round: int = 1) -> EvolutionGraph:
    """Evolution graph for rounds ``start_round .. start_round + l - 1`` of ``seq``.

    ``k`` is the buffer capacity (the token count); without it buffers get
    :data:`INF_CAPACITY`.
    """
    if l < 0:
        raise ValueError("l must be non-negative")
    n = seq.n
    buf = INF_CAPACITY if k is None else k
    tails, heads, caps, kinds = [], [], [], []
    nodes = np.arange(n, dtype=np.int64)
    for i in range(1, l + 1):
        prev, mid, end = (2 * i - 2) * n, (2 * i - 1) * n, 2 * i * n
        tails += [prev + nodes, prev + nodes]
        heads += [end + nodes, mid + nodes]
        caps += [np.full(n, buf), np.ones(n, dtype=np.int64)]
        kinds += [np.full(n, BUFFER), np.full(n, SELECTION)]
        e = seq.graph(start_round + i - 1).edges
        u = np.concatenate([e[:, 0], e[:, 1]])
        v = np.concatenate([e[:, 1], e[:, 0]])
        tails.append(mid + u)
        heads.append(end + v)
        caps.append(np.ones(len(u), dtype=np.int64))
        kinds.append(np.full(len(u), BROADCAST))
    cat = (lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64))
    return EvolutionGraph(n, l, cat(tails), cat(heads), cat(caps), cat(kinds), start_round)


def attach_supersource(evo: EvolutionGraph, sources: Iterable[tuple[int, int]]) -> EvolutionGraph:
    """Add a super-source with one edge per source node, capacity = tokens sourced there."""
    if evo.sources is not None:
        raise ValueError("super-source already attached")
    by_node: dict[int, list[int]] = defaultdict(list)
    seen: set[int] = set()
    for node, tok in sources:
        if tok in seen:
            raise ValueError(f"token {tok} listed twice in sources")
        if not 0 <= node < evo.n:
            raise ValueError(f"source node {node} out of range")
        seen.add(tok)
        by_node[int(node)].append(int(tok))
    src = {v: tuple(sorted(ts)) for v, ts in sorted(by_node.items())}
    s = evo.n * evo.num_levels
    nodes = np.array(list(src), dtype=np.int64)
    return EvolutionGraph(
        evo.n, evo.l,
        np.concatenate([evo.tail, np.full(len(nodes), s)]),
        np.concatenate([evo.head, nodes]),
        np.concatenate([evo.cap, [len(ts) for ts in src.values()]]).astype(np.int64),
        np.concatenate([evo.kind, np.full(len(nodes), SOURCE)]),
        evo.start_round, src)


@dataclass
class FlowResult:
    value: int
    flow: np.ndarray   # per edge, aligned with the evolution graph's edge arrays
    source: EvoVertex = SUPERSOURCE
    sink: EvoVertex | None = None


def max_flow(evo: EvolutionGraph, s: EvoVertex | tuple[int, int], t: EvoVertex | tuple[int, int]) -> FlowResult:
    """Exact integral maximum flow from ``s`` to ``t``."""
    si, ti = evo.vid(s), evo.vid(t)
    if si == ti:
        raise ValueError("source and sink must differ")
    res = maximum_flow(evo.capacity_matrix(), si, ti, method="dinic")
    per_edge = np.asarray(res.flow[evo.tail, evo.head]).ravel().astype(np.int64)
    return FlowResult(int(res.flow_value), np.maximum(per_edge, 0), EvoVertex(*s), EvoVertex(*t))


def decompose_paths(evo: EvolutionGraph, flow: FlowResult) -> list[list[int]]:
    """Split an integral flow into ``flow.value`` unit paths (lists of edge indices).

    Greedy peeling along positive-flow edges; termination is guaranteed
    because every edge climbs a level.
    """
    s, t = evo.vid(flow.source), evo.vid(flow.sink)
    remaining = flow.flow.copy()
    out: dict[int, list[int]] = defaultdict(list)
    for i in np.flatnonzero(remaining > 0):
        out[int(evo.tail[i])].append(int(i))
    paths = []
    for _ in range(flow.value):
        path, v = [], s
        while v != t:
            edges = out[v]
            while remaining[edges[-1]] == 0:
                edges.pop()
            i = edges[-1]
            remaining[i] -= 1
            path.append(i)
            v = int(evo.head[i])
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Steiner trees <-> schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteinerTree:
    token: int
    root: EvoVertex
    edges: frozenset[tuple[EvoVertex, EvoVertex]]
    terminals: frozenset[EvoVertex] = field(default_factory=frozenset)

    def broadcasts(self) -> list[tuple[int, int]]:
        """``(round_offset, node)`` for every broadcast edge; offsets start at 1."""
        return sorted({((a.level + 1) // 2, a.node) for a, b in self.edges if a.level % 2 == 1})

    def to_dict(self) -> dict:
        return {"token": self.token, "root": list(self.root),
                "edges": sorted([list(a), list(b)] for a, b in self.edges),
                "terminals": sorted(list(v) for v in self.terminals)}


def trees_to_json(trees: Sequence[SteinerTree]) -> str:
    return json.dumps({str(tr.token): tr.to_dict() for tr in trees}, sort_keys=True)


def schedule_to_trees(init: TokenMatrix, seq: GraphSequence, sched: Schedule,
                      dests: Sequence[Iterable[int]] | None = None, start_round: int = 1,
                      all_selections: bool = False) -> list[SteinerTree]:
    """One tree per token, built backwards from its destinations at the last level.

    A node that already held the token after the previous round keeps it via
    its buffer edge; otherwise the lowest-id neighbour that broadcast the
    token to it supplies it through a selection + broadcast edge pair. Each
    token must start at exactly one node. ``dests`` defaults to every node.

    With ``all_selections`` every tree node that broadcasts the token also
    gets its selection edge, even when nobody needs what it sends; the tree
    then records the schedule's full use of that token.
    """
    n, k, l = init.n, init.k, len(sched)
    if dests is None:
        dests = [range(n)] * k
    if len(dests) != k:
        raise ValueError(f"need one destination set per token ({k})")
    counts = init.holds.sum(axis=0)
    if (counts != 1).any():
        t = int(np.flatnonzero(counts != 1)[0])
        raise ValueError(f"token {t} must start at exactly one node, found {int(counts[t])}")
    states = [init]
    state = init
    for i, bcast in enumerate(sched):
        state, _ = run_schedule(state, seq, Schedule([bcast]), start_round + i)
        states.append(state)
    trees = []
    for tok in range(k):
        root = EvoVertex(int(np.flatnonzero(init.holds[:, tok])[0]), 0)
        cur = sorted(set(int(v) for v in dests[tok]))
        for v in cur:
            if not states[l].holds[v, tok]:
                raise UndeliveredToken(f"destination {v} never receives token {tok}")
        terminals = frozenset(EvoVertex(v, 2 * l) for v in cur)
        edges: set[tuple[EvoVertex, EvoVertex]] = set()
        for j in range(l - 1, -1, -1):
            g = seq.graph(start_round + j)
            b = sched[j]
            nxt: set[int] = set()
            for v in cur:
                if states[j].holds[v, tok]:
                    edges.add((EvoVertex(v, 2 * j), EvoVertex(v, 2 * j + 2)))
                    nxt.add(v)
                    continue
                u = min(w for w in g.neighbors(v) if b[w] == tok)
                edges.add((EvoVertex(u, 2 * j), EvoVertex(u, 2 * j + 1)))
                edges.add((EvoVertex(u, 2 * j + 1), EvoVertex(v, 2 * j + 2)))
                nxt.add(u)
            if all_selections:
                for u in nxt:
                    if b[u] == tok:
                        edges.add((EvoVertex(u, 2 * j), EvoVertex(u, 2 * j + 1)))
            cur = sorted(nxt)
        trees.append(SteinerTree(tok, root, frozenset(edges), terminals))
    return trees


def trees_to_schedule(trees: Sequence[SteinerTree], n: int, rounds: int | None = None) -> Schedule:
    """Node ``u`` sends token ``i`` in round ``j`` iff tree ``i`` selects ``u`` for round ``j``.

    A tree selects ``u`` when it holds the selection edge into ``(u, 2j-1)``,
    which every broadcast edge out of that vertex requires. Raises
    :class:`PackingError` if two trees claim the same sender and round.
    """
    if rounds is None:
        rounds = max(((b.level + 1) // 2 for tr in trees for _, b in tr.edges), default=0)
    rows = np.full((rounds, n), EMPTY, dtype=np.int64)
    claimed: dict[tuple[int, int], int] = {}
    for tr in trees:
        sel = {(a.node, b.level) for a, b in tr.edges if a.level % 2 == 0 and b.level == a.level + 1}
        bc = {(a.node, a.level) for a, b in tr.edges if a.level % 2 == 1}
        for key in sel | bc:
            owner = claimed.setdefault(key, tr.token)
            if owner != tr.token:
                raise PackingError(f"tokens {owner} and {tr.token} both use node {key[0]} at level {key[1]}")
        for node, level in sel | bc:
            rows[(level + 1) // 2 - 1, node] = tr.token
    return Schedule([row for row in rows])


def verify_packing(trees: Sequence[SteinerTree], evo: EvolutionGraph) -> bool:
    """True iff every tree is an arborescence of ``evo`` edges reaching its
    terminals and the trees jointly respect all capacities."""
    usage = np.zeros(len(evo), dtype=np.int64)
    for tr in trees:
        if tr.root.level != 0:
            return False
        children: dict[EvoVertex, list[EvoVertex]] = defaultdict(list)
        parents: dict[EvoVertex, EvoVertex] = {}
        for a, b in tr.edges:
            try:
                usage[evo.edge_index(a, b)] += 1
            except KeyError:
                return False
            if b in parents or b == tr.root:
                return False
            parents[b] = a
            children[a].append(b)
        seen = {tr.root}
        stack = [tr.root]
        while stack:
            for c in children[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        if len(seen) != len(parents) + 1:
            return False
        if any(t not in seen or t.level != 2 * evo.l for t in tr.terminals):
            return False
    return bool((usage <= evo.cap).all())
