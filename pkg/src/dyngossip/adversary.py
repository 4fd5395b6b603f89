"""Strong adversary built from free edges, half-empty configurations and the
lower-bound experiment.

In each round the adversary sees the committed broadcasts, keeps every free
edge (an edge over which neither endpoint can learn anything) and links the
resulting components in a line. Only the ``l - 1`` line edges can carry new
tokens, and ``l`` is bounded by the largest half-empty configuration of the
round-start state.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from .model import (EMPTY, CommGraph, InvariantViolation, RoundMetrics, TokenMatrix,
                    check_feasible, dense_components, execute_round, new_distribution, run_online)
from .strategies import Strategy, make_strategy


@dataclass(frozen=True)
class ComponentPartition:
    blocks: tuple[tuple[int, ...], ...]
    representatives: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def block_of(self) -> np.ndarray:
        n = sum(len(b) for b in self.blocks)
        lab = np.empty(n, dtype=np.int64)
        for i, b in enumerate(self.blocks):
            lab[list(b)] = i
        return lab


@dataclass(frozen=True)
class HalfEmptyConfig:
    """Nodes ``v_i`` and tokens ``t_i`` such that for all ``i != j``, ``v_i``
    misses ``t_j`` or ``v_j`` misses ``t_i``.

    ``EMPTY`` may appear once among the tokens; every node holds it.
    """

    nodes: tuple[int, ...]
    tokens: tuple[int, ...]

    def __post_init__(self):
        if len(self.nodes) != len(self.tokens):
            raise ValueError("nodes and tokens must have the same length")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("configuration nodes must be distinct")
        real = [t for t in self.tokens if t != EMPTY]
        if len(set(real)) != len(real):
            raise ValueError("configuration tokens must be distinct")
        if len(self.tokens) - len(real) > 1:
            raise ValueError("at most one EMPTY token is allowed")

    @property
    def size(self) -> int:
        return len(self.nodes)

    def non_empty_size(self) -> int:
        return sum(t != EMPTY for t in self.tokens)

    def is_valid(self, state: TokenMatrix) -> bool:
        return is_half_empty(state, self.nodes, self.tokens)


def is_half_empty(state: TokenMatrix, nodes: Sequence[int], tokens: Sequence[int]) -> bool:
    """Check the pairwise missing condition directly against ``state``."""
    if not len(nodes):
        return True
    ext = state.with_extended()
    toks = np.where(np.asarray(tokens) == EMPTY, state.k, tokens)
    has = ext[np.ix_(np.asarray(nodes), toks)]   # has[i, j]: v_i holds t_j
    both = has & has.T
    np.fill_diagonal(both, False)
    return not both.any()


def free_matrix(state: TokenMatrix, bcast) -> np.ndarray:
    """``F[u, v]`` is True iff ``(u, v)`` is a free pair this round (diagonal False)."""
    b = check_feasible(state, bcast)
    ext = state.with_extended()
    cols = np.where(b == EMPTY, state.k, b)
    holds_sent = ext[:, cols]          # [u, v]: u holds what v broadcasts
    free = holds_sent & holds_sent.T
    np.fill_diagonal(free, False)
    return free


def _partition(n: int, free: np.ndarray, members: np.ndarray | None = None) -> ComponentPartition:
    if members is None:
        members = np.arange(n)
    count, labels = dense_components(free[np.ix_(members, members)])
    # members are sorted and labels follow first appearance, so blocks come out ordered
    blocks = tuple(tuple(members[labels == c].tolist()) for c in range(count))
    return ComponentPartition(blocks, tuple(b[0] for b in blocks))


def free_components(state: TokenMatrix, bcast) -> ComponentPartition:
    """Connected components of the free-pair graph; blocks ordered by their minimum node."""
    return _partition(state.n, free_matrix(state, bcast))


def adversary_graph(state: TokenMatrix, bcast, supernode: Iterable[int] | None = None) -> CommGraph:
    """The strong adversary's graph for one round.

    All free edges plus a line through the block representatives (lowest id
    per block, blocks in order of that id), which adds exactly ``l - 1``
    non-free edges.

    With ``supernode``, those nodes are chained together, cut off from every
    other free edge, and hung as a single endpoint at the head of the line,
    so at most one edge joins them to the rest of the network.
    """
    n = state.n
    free = free_matrix(state, bcast)
    if supernode is None:
        part = _partition(n, free)
        line = list(part.representatives)
        extra: list[tuple[int, int]] = []
    else:
        group = np.array(sorted(set(int(v) for v in supernode)), dtype=np.int64)
        rest = np.setdiff1d(np.arange(n), group)
        inside = np.zeros(n, dtype=bool)
        inside[group] = True
        cross = inside[:, None] != inside[None, :]
        free = free & ~cross
        part = _partition(n, free, rest) if len(rest) else ComponentPartition((), ())
        line = ([int(group[0])] if len(group) else []) + list(part.representatives)
        extra = list(zip(group[:-1].tolist(), group[1:].tolist()))
    adj = free.copy()
    for u, v in list(zip(line[:-1], line[1:])) + extra:
        adj[u, v] = adj[v, u] = True
    return CommGraph.from_adjacency(adj)


class StrongAdversary:
    """Callable adversary for :func:`run_online`."""

    def __init__(self, supernode: Iterable[int] | None = None):
        self.supernode = None if supernode is None else tuple(supernode)

    def __call__(self, state: TokenMatrix, bcast) -> CommGraph:
        return adversary_graph(state, bcast, self.supernode)


def half_empty_witness(state: TokenMatrix, bcast) -> tuple[HalfEmptyConfig, int]:
    """Return the (representative, its broadcast) configuration and the round's useful exchanges.

    The configuration is checked against ``state`` and must have size at
    least ``m/2 + 1`` where ``m`` is the number of useful exchanges when the
    round is played on :func:`adversary_graph`; a failure raises
    :class:`InvariantViolation`.
    """
    b = check_feasible(state, bcast)
    part = free_components(state, b)
    reps = part.representatives
    config = HalfEmptyConfig(tuple(reps), tuple(int(b[v]) for v in reps))
    _, metrics = execute_round(state, b, adversary_graph(state, b))
    m = metrics.useful_exchanges
    if not config.is_valid(state):
        raise InvariantViolation(f"witness {config} is not half-empty")
    if 2 * config.size < m + 2:
        raise InvariantViolation(f"witness size {config.size} < {m}/2 + 1")
    return config, m


def max_half_empty(state: TokenMatrix, size_limit: int | None = None) -> HalfEmptyConfig:
    """Largest half-empty configuration over real tokens, by branch and bound.

    Exponential in the worst case; meant for n around a dozen. Candidates are
    (node, token) pairs ordered by how many tokens the node misses, and a
    branch is cut when its size plus the number of distinct nodes (or tokens)
    still available cannot beat the incumbent.
    """
    n, k = state.n, state.k
    limit = min(n, k) if size_limit is None else min(size_limit, n, k)
    if limit <= 0:
        return HalfEmptyConfig((), ())
    H = state.holds
    missing = k - H.sum(axis=1)
    order = sorted(range(n), key=lambda v: (-missing[v], v))
    cands = [(v, t) for v in order for t in range(k)]
    c = len(cands)
    cv = np.array([v for v, _ in cands])
    ct = np.array([t for _, t in cands])
    # compatible[a, b]: the two pairs can coexist in a configuration
    comp = (cv[:, None] != cv[None, :]) & (ct[:, None] != ct[None, :]) \
        & ~(H[cv[:, None], ct[None, :]] & H[cv[None, :], ct[:, None]])
    def bits(idx) -> int:
        return sum(1 << int(j) for j in idx)

    adj = [bits(np.flatnonzero(row)) for row in comp]
    node_masks = [bits(np.flatnonzero(cv == v)) for v in range(n)]
    tok_masks = [bits(np.flatnonzero(ct == t)) for t in range(k)]
    best_set = [0]

    def bound(mask: int) -> int:
        nodes = sum(1 for nm in node_masks if nm & mask)
        toks = sum(1 for tm in tok_masks if tm & mask)
        return min(nodes, toks)

    def expand(chosen: list[int], mask: int) -> bool:
        if len(chosen) > len(best_set):
            best_set[:] = chosen
            if len(best_set) >= limit:
                return True
        while mask:
            if len(chosen) + bound(mask) <= len(best_set):
                return False
            i = (mask & -mask).bit_length() - 1
            mask &= ~(1 << i)
            if expand(chosen + [i], mask & adj[i]):
                return True
        return False

    expand([], (1 << c) - 1)
    return HalfEmptyConfig(tuple(int(cv[i]) for i in best_set), tuple(int(ct[i]) for i in best_set))


# ---------------------------------------------------------------------------
# Single-source reduction
# ---------------------------------------------------------------------------


def _hopcroft_karp(adj: list[list[int]], n_right: int) -> dict[int, int]:
    INF = math.inf
    n_left = len(adj)
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    dist = [0.0] * n_left

    def bfs() -> bool:
        queue = []
        for u in range(n_left):
            if match_l[u] < 0:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = INF
        found = False
        for u in queue:
            for w in adj[u]:
                x = match_r[w]
                if x < 0:
                    found = True
                elif dist[x] == INF:
                    dist[x] = dist[u] + 1
                    queue.append(x)
        return found

    def dfs(u: int) -> bool:
        for w in adj[u]:
            x = match_r[w]
            if x < 0 or (dist[x] == dist[u] + 1 and dfs(x)):
                match_l[u] = w
                match_r[w] = u
                return True
        dist[u] = INF
        return False

    while bfs():
        for u in range(n_left):
            if match_l[u] < 0:
                dfs(u)
    return {u: w for u, w in enumerate(match_l) if w >= 0}


def matching_reduction(single: TokenMatrix, rich: TokenMatrix) -> dict[int, int] | None:
    """Perfect matching ``v -> u`` with ``rich[u] ⊇ single[v]``, or None if none exists.

    ``single`` must give every token to exactly one node and no node more than
    one token. Under the matching, a run from ``rich`` can imitate any run
    from ``single`` by having ``u`` forget everything ``v`` did not start with.
    """
    if single.n != rich.n or single.k != rich.k:
        raise ValueError("distributions must share n and k")
    if (single.holds.sum(axis=1) > 1).any():
        raise ValueError("single distribution has a node with more than one token")
    if (single.holds.sum(axis=0) != 1).any():
        raise ValueError("single distribution must place each token at exactly one node")
    n = single.n
    everyone = list(range(n))
    adj = []
    for v in range(n):
        toks = np.flatnonzero(single.holds[v])
        adj.append(everyone if len(toks) == 0 else np.flatnonzero(rich.holds[:, toks[0]]).tolist())
    match = _hopcroft_karp(adj, n)
    return match if len(match) == n else None


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class ExperimentRecord:
    n: int
    k: int
    seed: int
    strategy: str
    rounds_used: int
    completed: bool
    init_missing: int
    max_useful: int
    metrics: list[RoundMetrics] = field(default_factory=list, repr=False)

    @property
    def bound(self) -> float | None:
        """Rounds forced by the per-round progress cap: ``init_missing / max_useful``."""
        return None if self.max_useful == 0 else self.init_missing / self.max_useful

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bound"] = self.bound
        d["metrics"] = [{"round": i, "useful_exchanges": m.useful_exchanges, "token_gains": m.token_gains,
                         "missing_total": m.missing_total} for i, m in enumerate(self.metrics, 1)]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def csv_row(self) -> dict:
        return {"n": self.n, "k": self.k, "seed": self.seed, "rounds_used": self.rounds_used,
                "init_missing": self.init_missing, "max_useful": self.max_useful,
                "bound": "" if self.bound is None else f"{self.bound:.6f}"}


CSV_FIELDS = ("n", "k", "seed", "rounds_used", "init_missing", "max_useful", "bound")


def lower_bound_experiment(n: int, k: int, strategy: str | Strategy = "round_robin", seed: int = 0,
                           max_rounds: int | None = None, p: float = 0.75,
                           return_transcript: bool = False):
    """Run ``strategy`` from a Bernoulli(``p``) start against the strong adversary.

    ``max_rounds`` defaults to ``n k``. With ``return_transcript`` the full
    :class:`Transcript` is returned alongside the record.
    """
    init = new_distribution(n, k, ("bernoulli", p), seed)
    strat = strategy if isinstance(strategy, Strategy) else make_strategy(strategy, n, k, seed)
    cap = n * max(k, 1) if max_rounds is None else max_rounds
    tr = run_online(strat, StrongAdversary(), init, cap)
    ms = tr.metrics()
    rec = ExperimentRecord(n=n, k=k, seed=seed, strategy=strat.name, rounds_used=len(tr),
                           completed=tr.final.is_complete(), init_missing=init.missing_count(),
                           max_useful=max((m.useful_exchanges for m in ms), default=0), metrics=ms)
    return (rec, tr) if return_transcript else rec


def _trial(args):
    n, k, strategy, seed, max_rounds = args
    return lower_bound_experiment(n, k, strategy, seed, max_rounds)


def batch_experiments(n: int, k: int, strategy: str, seeds: Iterable[int], max_rounds: int | None = None,
                      workers: int = 1) -> list[ExperimentRecord]:
    """One record per seed, in seed order; ``workers > 1`` runs trials in a process pool."""
    jobs = [(n, k, strategy, int(s), max_rounds) for s in seeds]
    if workers <= 1:
        return [_trial(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial, jobs))
