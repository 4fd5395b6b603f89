"""Connected graph-sequence generators.

Generated sequences are lazy: round ``r`` is drawn from its own substream of
the seed, so any round can be produced without drawing the earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .model import CommGraph, DisconnectedGraph, GraphSequence
from .rng import substream

MODELS = ("gnp_repair", "static", "path", "star_rotating", "recorded")


@dataclass(frozen=True)
class GeneratorSpec:
    model: str
    n: int
    seed: int = 0
    p: float = 0.1
    graph: CommGraph | None = None     # for "static"
    file: str | None = None            # for "recorded"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown generator model {self.model!r}; choose from {MODELS}")


def random_spanning_tree(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random labelled tree on ``n`` nodes (random Prufer sequence)."""
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    if n == 2:
        return np.array([[0, 1]], dtype=np.int64)
    tree = nx.from_prufer_sequence(rng.integers(0, n, size=n - 2).tolist())
    return np.array(sorted(tree.edges()), dtype=np.int64)


def gnp_repair(n: int, p: float, rng: np.random.Generator) -> CommGraph:
    """G(n, p) united with a random spanning tree, hence always connected."""
    iu, iv = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    edges = np.vstack([np.column_stack([iu[keep], iv[keep]]), random_spanning_tree(n, rng)])
    return CommGraph.from_array(n, edges)


def generate_sequence(spec: GeneratorSpec, rounds: int | None = None) -> GraphSequence:
    """Sequence described by ``spec``.

    ``rounds=None`` gives an unbounded lazy sequence; otherwise the first
    ``rounds`` graphs are recorded and reading past them is an error.
    """
    if rounds is not None and rounds < 0:
        raise ValueError("rounds must be non-negative")
    n = spec.n
    if spec.model == "gnp_repair":
        if not 0.0 <= spec.p <= 1.0:
            raise ValueError(f"edge probability {spec.p} outside [0, 1]")
        seq = GraphSequence(n, lambda r: gnp_repair(n, spec.p, substream(spec.seed, "generator", r)))
    elif spec.model == "static":
        if spec.graph is None:
            raise ValueError("static model needs a graph")
        if not spec.graph.is_connected():
            raise DisconnectedGraph("static input graph is not connected")
        seq = GraphSequence.static(spec.graph)
    elif spec.model == "path":
        seq = GraphSequence.static(CommGraph.path(n))
    elif spec.model == "star_rotating":
        seq = GraphSequence(n, lambda r: CommGraph.star(n, r % n))
    else:
        from .io import load_sequence
        seq = load_sequence(spec.file)
        if seq.n != n:
            raise ValueError(f"recorded sequence has {seq.n} nodes, expected {n}")
    if rounds is None:
        return seq
    return GraphSequence.from_graphs(seq.graphs(1, rounds), extend="error", n=n)
