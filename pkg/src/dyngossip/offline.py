"""Offline schedulers: gather-by-flow, seed-set gather-and-flood, and the
derandomised choice of the seed set.

The gather-and-flood scheduler picks a seed set ``S``, routes every token to
each seed node in turn with a max-flow schedule, then floods the tokens one
at a time. A node ``u`` gets token ``t`` in its flood window as soon as ``S``
meets the set of nodes that can reach ``u`` inside that window. Choosing ``S``
by conditional expectations makes that certain whenever the expected number of
uncovered (node, token) pairs is below one.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .evolution import (BROADCAST, SUPERSOURCE, EvoVertex, attach_supersource, build_evolution_graph,
                        decompose_paths, max_flow)
from .model import EMPTY, GossipError, GraphSequence, InvariantViolation, Schedule, TokenMatrix, execute_round
from .rng import substream


class FlowDeficit(GossipError):
    """The gather flow could not route every token (only possible on disconnected input)."""


# ---------------------------------------------------------------------------
# Gather
# ---------------------------------------------------------------------------


def gather_sources(init: TokenMatrix, target: int) -> list[tuple[int, int]]:
    """One source per token: the target itself if it holds the token, else the lowest-id holder."""
    out = []
    for t in range(init.k):
        holders = np.flatnonzero(init.holds[:, t])
        if len(holders) == 0:
            raise ValueError(f"token {t} is held by no node")
        out.append((target if init.holds[target, t] else int(holders[0]), t))
    return out


def gather_all(seq: GraphSequence, init: TokenMatrix, target: int, start_round: int = 1,
               rounds: int | None = None, shortest: bool = False) -> Schedule:
    """Schedule that brings every token to ``target``.

    Routes one unit of flow per token through the evolution graph of the
    ``rounds`` (default ``n + k``) rounds starting at ``start_round`` and turns
    the broadcast edges on each path into broadcasts. With ``shortest`` the
    window is cut to the fewest rounds that still admit a full flow. Trailing
    idle rounds are dropped.
    """
    n, k = init.n, init.k
    window = n + k if rounds is None else rounds
    sources = gather_sources(init, target)
    evo = attach_supersource(build_evolution_graph(seq, window, k, start_round), sources)

    def flow_to(l):
        return max_flow(evo, SUPERSOURCE, EvoVertex(target, 2 * l))

    if shortest:
        lo, hi = 0, window
        if flow_to(hi).value < k:
            raise FlowDeficit(f"only {flow_to(hi).value} of {k} tokens reach node {target} in {window} rounds")
        while lo < hi:
            mid = (lo + hi) // 2
            if flow_to(mid).value >= k:
                hi = mid
            else:
                lo = mid + 1
        window = lo
    flow = flow_to(window)
    if flow.value < k:
        raise FlowDeficit(f"only {flow.value} of {k} tokens reach node {target} in {window} rounds")

    pending = {v: list(toks) for v, toks in evo.sources.items()}
    rows = np.full((window, n), EMPTY, dtype=np.int64)
    for path in decompose_paths(evo, flow):
        tok = pending[int(evo.head[path[0]])].pop(0)
        for i in path:
            if evo.kind[i] != BROADCAST:
                continue
            level = int(evo.tail[i] // n)
            node = int(evo.tail[i] % n)
            assert rows[level // 2, node] in (EMPTY, tok), "selection capacity violated"
            rows[level // 2, node] = tok
    return Schedule(list(rows)).trimmed()


# ---------------------------------------------------------------------------
# Parameters and windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GossipParams:
    """Seed-set size ``s``, flood window ``delta`` and per-seed gather window."""

    s: int
    delta: int
    gather_window: int
    mode: str = "random"
    compact: bool = True

    @classmethod
    def for_size(cls, n: int, k: int, mode: str = "random", compact: bool | None = None) -> "GossipParams":
        """``s = 2 ceil(sqrt(k log2 n))`` capped at ``n``, ``delta = ceil(2n sqrt(log2 n / k))``.

        ``compact`` (default on for random mode) shortens each gather to its
        minimum length and ends a flood window once its token is everywhere.
        The derandomised mode needs the fixed layout and forces it off.
        """
        if mode not in ("random", "derandomized"):
            raise ValueError(f"mode must be 'random' or 'derandomized', not {mode!r}")
        lg = math.log2(n) if n > 1 else 0.0
        s = min(n, max(1, 2 * math.ceil(math.sqrt(k * lg))))
        delta = max(1, math.ceil(2 * n * math.sqrt(lg / k))) if k else 1
        if compact is None:
            compact = mode == "random"
        if mode == "derandomized" and compact:
            raise ValueError("the derandomized mode uses the fixed window layout")
        return cls(s, delta, n + k, mode, compact)

    def trivial(self, n: int, k: int) -> bool:
        return k <= math.sqrt(math.log2(n)) if n > 1 else True


@dataclass(frozen=True)
class TokenWindow:
    token: int
    first_round: int
    last_round: int

    def __post_init__(self):
        if self.last_round < self.first_round - 1:
            raise ValueError("window ends before it starts")

    def __len__(self) -> int:
        return self.last_round - self.first_round + 1


def flood_windows(params: GossipParams, k: int) -> list[TokenWindow]:
    """Fixed layout: consecutive ``delta``-round windows after ``s`` gather windows."""
    start = params.s * params.gather_window + 1
    return [TokenWindow(t, start + t * params.delta, start + (t + 1) * params.delta - 1) for t in range(k)]


# ---------------------------------------------------------------------------
# Reachability and the conditional-expectation potential
# ---------------------------------------------------------------------------


def reach_matrix(seq: GraphSequence, window: TokenWindow) -> np.ndarray:
    """``R[w, u]`` is True iff flooding from ``w`` over the window reaches ``u``."""
    n = seq.n
    reach = np.eye(n, dtype=bool)
    for r in range(window.first_round, window.last_round + 1):
        e = seq.graph(r).edges
        adj = np.eye(n, dtype=np.int64)
        adj[e[:, 0], e[:, 1]] = adj[e[:, 1], e[:, 0]] = 1
        reach = (reach.astype(np.int64) @ adj) > 0
    return reach


def backward_reach_set(seq: GraphSequence, window: TokenWindow, u: int) -> set[int]:
    """Nodes whose flood started at ``window.first_round`` reaches ``u`` by ``window.last_round``.

    Computed backwards: walking the window's rounds in reverse, each round
    adds every neighbour of the current set.
    """
    found = np.zeros(seq.n, dtype=bool)
    found[u] = True
    for r in range(window.last_round, window.first_round - 1, -1):
        e = seq.graph(r).edges
        nxt = found.copy()
        nxt[e[found[e[:, 0]], 1]] = True
        nxt[e[found[e[:, 1]], 0]] = True
        found = nxt
    return set(np.flatnonzero(found).tolist())


def failure_prob(u: int, t: int, S: Iterable[int], T: Iterable[int], B: Iterable[int], s: int,
                 n: int) -> Fraction:
    """Probability that ``S`` plus ``s - |S|`` uniform picks from ``V \\ T`` misses ``B``.

    ``V`` is ``range(n)``; ``u`` and ``t`` only name the pair ``B`` belongs to.
    """
    S, T, B = set(S), set(T), set(B)
    r = s - len(S)
    if r < 0:
        raise ValueError(f"seed set already has {len(S)} > {s} nodes")
    if not S <= T:
        raise ValueError("S must be a subset of T")
    if S & B:
        return Fraction(0)
    size_u = n - len(T)
    if r > size_u:
        return Fraction(1)
    b = len(B - T)
    return Fraction(math.comb(size_u - b, r), math.comb(size_u, r))


class Potential:
    """Sum of :func:`failure_prob` over all (node, token) pairs, on bitmasks."""

    def __init__(self, n: int, reach_sets: Sequence[int], s: int):
        self.n = n
        self.masks = list(reach_sets)
        self.s = s

    def __call__(self, S: int, T: int) -> Fraction:
        r = self.s - S.bit_count()
        if r < 0:
            raise ValueError("seed set larger than s")
        size_u = self.n - T.bit_count()
        free = ((1 << self.n) - 1) & ~T
        uncovered = [m for m in self.masks if not m & S]
        if r > size_u:
            return Fraction(len(uncovered))
        num = sum(math.comb(size_u - (m & free).bit_count(), r) for m in uncovered)
        return Fraction(num, math.comb(size_u, r))


@dataclass
class DerandResult:
    seed_set: list[int]
    chosen: list[int]                      # picked by the scan, before padding
    initial_phi: Fraction
    final_phi: Fraction
    guaranteed: bool                       # initial_phi < 1
    steps: list[tuple[int, Fraction, Fraction, Fraction | None]] = field(default_factory=list, repr=False)
    # (node, phi before, phi if skipped, phi if taken)

    def to_dict(self) -> dict:
        return {"seed_set": self.seed_set, "chosen": self.chosen, "initial_phi": str(self.initial_phi),
                "final_phi": str(self.final_phi), "guaranteed": self.guaranteed}


def window_reach_masks(seq: GraphSequence, windows: Sequence[TokenWindow]) -> list[int]:
    """Bitmask of the backward reach set for every (node, window) pair, windows outermost."""
    out = []
    for w in windows:
        reach = reach_matrix(seq, w)
        for u in range(seq.n):
            out.append(sum(1 << int(x) for x in np.flatnonzero(reach[:, u])))
    return out


def derandomize_seed_set(seq: GraphSequence, windows: Sequence[TokenWindow], s: int) -> DerandResult:
    """Pick a seed set by the method of conditional expectations.

    Nodes are scanned in id order; node ``v`` joins ``S`` when that does not
    raise the potential (ties join). The potential never increases, so if it
    starts below 1 it ends at 0 and ``S`` meets every reach set. A short
    ``S`` is padded with the lowest unchosen ids.
    """
    n = seq.n
    s = min(s, n)
    phi_of = Potential(n, window_reach_masks(seq, windows), s)
    S = T = 0
    phi = initial = phi_of(0, 0)
    steps = []
    for v in range(n):
        bit = 1 << v
        T |= bit
        skip = phi_of(S, T)
        take = phi_of(S | bit, T) if S.bit_count() < s else None
        best = skip if take is None else min(skip, take)
        if best > phi:
            raise InvariantViolation(f"potential rose at node {v}: {phi} -> {best}")
        steps.append((v, phi, skip, take))
        if take is not None and take <= skip:
            S |= bit
            phi = take
        else:
            phi = skip
    chosen = [v for v in range(n) if S >> v & 1]
    seed_set = list(chosen)
    for v in range(n):
        if len(seed_set) >= s:
            break
        if v not in chosen:
            seed_set.append(v)
    return DerandResult(sorted(seed_set), chosen, initial, phi, initial < 1, steps)


# ---------------------------------------------------------------------------
# Gather-and-flood scheduler
# ---------------------------------------------------------------------------


class _Player:
    """Appends rounds to a schedule while tracking state; stops once everyone has everything."""

    def __init__(self, seq: GraphSequence, init: TokenMatrix):
        self.seq = seq
        self.state = init
        self.schedule = Schedule()

    @property
    def next_round(self) -> int:
        return len(self.schedule) + 1

    @property
    def done(self) -> bool:
        return self.state.is_complete()

    def play(self, bcast) -> bool:
        if self.done:
            return False
        self.state, _ = execute_round(self.state, bcast, self.seq.graph(self.next_round))
        self.schedule.append(bcast)
        return True

    def idle_until(self, round_index: int) -> None:
        while self.next_round < round_index and self.play(np.full(self.state.n, EMPTY)):
            pass

    def flood(self, t: int, rounds: int | None, stop_when_full: bool) -> int:
        """Every holder of ``t`` sends it; ``rounds=None`` floods until ``t`` is everywhere."""
        played = 0
        while rounds is None or played < rounds:
            full = bool(self.state.holds[:, t].all())
            if full and (stop_when_full or rounds is None):
                break
            b = np.where(self.state.holds[:, t], t, EMPTY)
            if not self.play(b):
                break
            played += 1
        return played


@dataclass
class GossipResult:
    schedule: Schedule
    final: TokenMatrix
    log: dict

    @property
    def rounds(self) -> int:
        return len(self.schedule)

    @property
    def fallback_rounds(self) -> int:
        return self.log["fallback_rounds"]


def gather_flood_gossip(seq: GraphSequence, init: TokenMatrix, params: GossipParams | None = None,
                        seed: int = 0) -> GossipResult:
    """Offline k-gossip schedule in ``O(n sqrt(k log n))`` rounds.

    With ``k <= sqrt(log2 n)`` tokens are simply flooded one after another.
    Otherwise every token is gathered at each seed node and then flooded for
    ``delta`` rounds. Any token still missing afterwards is flooded to
    completion, so the returned schedule always finishes the job.
    """
    n, k = init.n, init.k
    if (init.holds.sum(axis=0) == 0).any():
        raise ValueError("every token must start at some node")
    params = params or GossipParams.for_size(n, k)
    player = _Player(seq, init)
    log: dict = {"n": n, "k": k, "seed": seed, "params": asdict(params), "seed_set": [],
                 "gather_windows": [], "flood_windows": [], "fallback_rounds": 0, "fallback_tokens": []}

    if params.trivial(n, k):
        log["branch"] = "trivial"
        for t in range(k):
            first = player.next_round
            played = player.flood(t, n, stop_when_full=params.compact)
            log["flood_windows"].append([t, first, first + played - 1])
    else:
        log["branch"] = "gather_flood"
        fixed = flood_windows(params, k)
        if params.mode == "derandomized":
            der = derandomize_seed_set(seq, fixed, params.s)
            seeds = der.seed_set
            log["derandomization"] = der.to_dict()
        else:
            rng = substream(seed, "seed-set")
            seeds = sorted(rng.choice(n, size=params.s, replace=False).tolist())
        log["seed_set"] = seeds
        for i, v in enumerate(seeds):
            if player.done:
                break
            if not params.compact:
                player.idle_until(1 + i * params.gather_window)
            first = player.next_round
            g = gather_all(seq, player.state, v, first, params.gather_window, shortest=params.compact)
            for b in g:
                player.play(b)
            log["gather_windows"].append([v, first, player.next_round - 1])
        for w in fixed:
            if player.done:
                break
            if not params.compact:
                player.idle_until(w.first_round)
            first = player.next_round
            played = player.flood(w.token, params.delta, stop_when_full=params.compact)
            log["flood_windows"].append([w.token, first, first + played - 1])
    for t in range(k):
        if not player.state.holds[:, t].all():
            log["fallback_tokens"].append(t)
            log["fallback_rounds"] += player.flood(t, None, stop_when_full=True)
    log["total_rounds"] = len(player.schedule)
    return GossipResult(player.schedule, player.state, log)


def log_to_json(log: dict) -> str:
    return json.dumps(log, sort_keys=True, indent=1)
