import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import A, B, C, D, E, random_broadcast
from dyngossip.evolution import (INF_CAPACITY, SUPERSOURCE, EvoVertex,
                                 PackingError, SteinerTree, UndeliveredToken, attach_supersource,
                                 build_evolution_graph, decompose_paths, max_flow, schedule_to_trees,
                                 trees_to_json, trees_to_schedule, verify_packing)
from dyngossip.generators import GeneratorSpec, generate_sequence
from dyngossip.model import (CommGraph, GraphSequence, Schedule, TokenMatrix, broadcast, execute_round,
                             new_distribution, run_schedule)

V = EvoVertex
# the worked example's tree, written as (node, level) pairs
WORKED_TREE = {
    ((B, 0), (B, 1)), ((B, 1), (A, 2)), ((B, 1), (C, 2)), ((B, 0), (B, 2)), ((A, 2), (A, 4)),
    ((B, 2), (B, 4)), ((C, 2), (C, 4)), ((C, 2), (C, 3)), ((C, 3), (D, 4)), ((C, 3), (E, 4)),
}


def as_pairs(tree):
    return {(tuple(a), tuple(b)) for a, b in tree.edges}


def random_seq(rng, n, rounds, p=None):
    p = rng.uniform(0.0, 0.5) if p is None else p
    return generate_sequence(GeneratorSpec("gnp_repair", n, int(rng.integers(1 << 30)), p=p), rounds)


def random_feasible_run(rng, n, k, rounds):
    """Single-source init, a random sequence and a random feasible schedule on it."""
    init = new_distribution(n, k, "one_token_per_node", seed=int(rng.integers(1 << 30)))
    seq = random_seq(rng, n, rounds)
    state, rows = init, []
    for r in range(1, rounds + 1):
        b = random_broadcast(rng, state)
        rows.append(b)
        state, _ = execute_round(state, b, seq.graph(r))
    return init, seq, Schedule(rows), state


# --- construction ----------------------------------------------------------

def test_zero_rounds():
    evo = build_evolution_graph(GraphSequence.static(CommGraph.path(4)), 0)
    assert evo.num_vertices == 4 and len(evo) == 0


def test_worked_example_counts(five_node_seq):
    evo = build_evolution_graph(five_node_seq, 2, k=1)
    counts = evo.kind_counts()
    assert evo.num_vertices == 25
    assert counts["buffer"] == 10 and counts["selection"] == 10 and counts["broadcast"] == 16


def test_vertex_ids_round_trip(five_node_seq):
    evo = build_evolution_graph(five_node_seq, 2)
    for v in evo.vertices():
        assert evo.vertex(evo.vid(v)) == v


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_edge_counts_match_templates(seed):
    rng = np.random.default_rng(seed)
    n, l = 8, 3
    seq = random_seq(rng, n, l)
    k = int(rng.integers(1, 6))
    evo = build_evolution_graph(seq, l, k=k)
    # independent recount: walk the templates per round
    expect = {"buffer": 0, "selection": 0, "broadcast": 0}
    caps = {}
    for i in range(1, l + 1):
        for v in range(n):
            expect["buffer"] += 1
            expect["selection"] += 1
            caps[((v, 2 * i - 2), (v, 2 * i))] = k
            caps[((v, 2 * i - 2), (v, 2 * i - 1))] = 1
        for u, v in seq.graph(i).edges.tolist():
            expect["broadcast"] += 2
            caps[((u, 2 * i - 1), (v, 2 * i))] = 1
            caps[((v, 2 * i - 1), (u, 2 * i))] = 1
    assert {kk: evo.kind_counts()[kk] for kk in expect} == expect
    got = {(tuple(e.tail), tuple(e.head)): e.capacity for e in evo.edges()}
    assert got == caps


def test_buffers_default_to_unbounded():
    evo = build_evolution_graph(GraphSequence.static(CommGraph.path(2)), 1)
    assert evo.edge(evo.edge_index((0, 0), (0, 2))).capacity == INF_CAPACITY


def test_supersource_fusion():
    evo = build_evolution_graph(GraphSequence.static(CommGraph.path(4)), 1)
    s = attach_supersource(evo, [(0, 0), (0, 1), (3, 2)])
    src = [e for e in s.edges() if e.kind == "source"]
    assert [(e.head, e.capacity) for e in src] == [(V(0, 0), 2), (V(3, 0), 1)]
    assert all(e.tail == SUPERSOURCE for e in src)
    single = attach_supersource(evo, [(2, t) for t in range(5)])
    assert [e.capacity for e in single.edges() if e.kind == "source"] == [5]
    with pytest.raises(ValueError):
        attach_supersource(evo, [(0, 0), (1, 0)])


def test_evolution_graph_serialises(five_node_seq):
    d = json.loads(build_evolution_graph(five_node_seq, 2).to_json())
    assert d["n"] == 5 and d["l"] == 2


# --- flow ------------------------------------------------------------------

def brute_min_cut(evo, s, t):
    """Smallest s-t cut over every vertex bipartition."""
    nv = evo.num_vertices + (evo.sources is not None)
    si, ti = evo.vid(s), evo.vid(t)
    others = [v for v in range(nv) if v not in (si, ti)]
    masks = np.arange(1 << len(others), dtype=np.int64)
    side = np.zeros((len(masks), nv), dtype=bool)
    for j, v in enumerate(others):
        side[:, v] = (masks >> j) & 1
    side[:, si] = True
    crossing = side[:, evo.tail] & ~side[:, evo.head]
    return int((crossing * evo.cap[None, :]).sum(axis=1).min())


def test_flow_small_cases():
    seq = GraphSequence.static(CommGraph.path(2))
    evo = build_evolution_graph(seq, 1)
    # (0,0)->(0,1)->(1,2): one unit via broadcast, none via buffer to a different node
    assert max_flow(evo, (0, 0), (1, 2)).value == 1
    evo2 = build_evolution_graph(GraphSequence.static(CommGraph.path(3)), 1)
    s = attach_supersource(evo2, [(0, 0), (2, 1)])
    assert max_flow(s, SUPERSOURCE, (1, 2)).value == 2


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_flow_equals_brute_min_cut(seed):
    rng = np.random.default_rng(seed)
    n, l = int(rng.integers(2, 4)), int(rng.integers(1, 3))
    if n * (2 * l + 1) > 16:
        l = 1
    seq = random_seq(rng, n, l)
    k = int(rng.integers(1, 4))
    holders = [[int(rng.integers(n)), t] for t in range(k)]
    evo = attach_supersource(build_evolution_graph(seq, l, k=k), holders)
    sink = V(int(rng.integers(n)), 2 * l)
    assert max_flow(evo, SUPERSOURCE, sink).value == brute_min_cut(evo, SUPERSOURCE, sink)


def test_decompose_zero_flow():
    evo = build_evolution_graph(GraphSequence.static(CommGraph.path(3)), 1)
    f = max_flow(evo, (0, 0), (2, 2))
    assert f.value == 0 and decompose_paths(evo, f) == []


def test_decompose_two_disjoint_paths():
    evo = attach_supersource(build_evolution_graph(GraphSequence.static(CommGraph.path(3)), 1), [(0, 0), (2, 1)])
    f = max_flow(evo, SUPERSOURCE, (1, 2))
    paths = decompose_paths(evo, f)
    assert len(paths) == 2
    firsts = sorted(tuple(evo.edge(p[0]).head) for p in paths)
    assert firsts == [(0, 0), (2, 0)]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_decomposition_respects_capacities(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    k = int(rng.integers(1, n + 1))
    l = n + k
    seq = random_seq(rng, n, l)
    sources = [(int(rng.integers(n)), t) for t in range(k)]
    evo = attach_supersource(build_evolution_graph(seq, l, k=k), sources)
    f = max_flow(evo, SUPERSOURCE, V(0, 2 * l))
    paths = decompose_paths(evo, f)
    use = np.zeros(len(evo), dtype=np.int64)
    for p in paths:
        for a, b in zip(p, p[1:]):
            assert evo.head[a] == evo.tail[b]
        np.add.at(use, p, 1)
    assert len(paths) == f.value == k
    assert (use <= evo.cap).all() and (use == f.flow).all()


# --- Steiner trees ---------------------------------------------------------

def test_worked_tree(five_node_seq, five_node_init, five_node_schedule):
    [tree] = schedule_to_trees(five_node_init, five_node_seq, five_node_schedule)
    assert as_pairs(tree) == WORKED_TREE
    evo = build_evolution_graph(five_node_seq, 2, k=1)
    assert verify_packing([tree], evo)


def test_worked_tree_to_schedule(five_node_seq, five_node_init, five_node_schedule):
    [tree] = schedule_to_trees(five_node_init, five_node_seq, five_node_schedule, all_selections=True)
    assert as_pairs(tree) == WORKED_TREE | {((A, 2), (A, 3)), ((B, 2), (B, 3))}
    sched = trees_to_schedule([tree], 5)
    assert sched == five_node_schedule
    assert run_schedule(five_node_init, five_node_seq, sched)[0].is_complete()


def test_minimal_tree_schedule_still_delivers(five_node_seq, five_node_init, five_node_schedule):
    [tree] = schedule_to_trees(five_node_init, five_node_seq, five_node_schedule)
    sched = trees_to_schedule([tree], 5)
    assert sched == Schedule([broadcast(5, {B: 0}), broadcast(5, {C: 0})])
    assert run_schedule(five_node_init, five_node_seq, sched)[0].is_complete()


def test_already_delivered_token_is_a_buffer_chain():
    seq = GraphSequence.static(CommGraph.path(3))
    init = TokenMatrix.from_holders(3, 1, [[0], [], []])
    [tree] = schedule_to_trees(init, seq, Schedule([broadcast(3), broadcast(3)]), dests=[[0]])
    assert as_pairs(tree) == {((0, 0), (0, 2)), ((0, 2), (0, 4))}


def test_undelivered_destination():
    seq = GraphSequence.static(CommGraph.path(3))
    init = TokenMatrix.from_holders(3, 1, [[0], [], []])
    with pytest.raises(UndeliveredToken):
        schedule_to_trees(init, seq, Schedule([broadcast(3)]))


def test_empty_tree_list():
    assert len(trees_to_schedule([], 4)) == 0


def test_shared_selection_edge_is_an_error():
    sel = frozenset({(V(0, 0), V(0, 1)), (V(0, 1), V(1, 2))})
    t0 = SteinerTree(0, V(0, 0), sel, frozenset({V(1, 2)}))
    t1 = SteinerTree(1, V(0, 0), sel, frozenset({V(1, 2)}))
    with pytest.raises(PackingError):
        trees_to_schedule([t0, t1], 2)


def test_verify_packing_unit_capacity():
    evo = build_evolution_graph(GraphSequence.static(CommGraph.path(2)), 1, k=2)
    edges = frozenset({(V(0, 0), V(0, 1)), (V(0, 1), V(1, 2))})
    t = SteinerTree(0, V(0, 0), edges, frozenset({V(1, 2)}))
    assert verify_packing([t], evo)
    assert not verify_packing([t, SteinerTree(1, V(0, 0), edges, frozenset({V(1, 2)}))], evo)


def test_verify_packing_rejects_foreign_edges():
    evo = build_evolution_graph(GraphSequence.static(CommGraph.path(3)), 1)
    t = SteinerTree(0, V(0, 0), frozenset({(V(0, 0), V(0, 1)), (V(0, 1), V(2, 2))}), frozenset({V(2, 2)}))
    assert not verify_packing([t], evo)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_schedule_tree_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    k = int(rng.integers(1, n + 1))
    rounds = int(rng.integers(1, 6))
    init, seq, sched, final = random_feasible_run(rng, n, k, rounds)
    dests = [np.flatnonzero(final.holds[:, t]) for t in range(k)]
    trees = schedule_to_trees(init, seq, sched, dests)
    assert verify_packing(trees, build_evolution_graph(seq, rounds, k=k))
    replayed, _ = run_schedule(init, seq, trees_to_schedule(trees, n, rounds))
    assert replayed == final
    json.loads(trees_to_json(trees))
