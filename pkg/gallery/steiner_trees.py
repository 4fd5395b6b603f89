"""
Schedules as trees in the evolution graph
=========================================

A schedule on l rounds is the same thing as a packing of one tree per token
in a layered graph with 2l+1 levels. Here a single token starts at node B
of a five-node network.
"""

from dyngossip.evolution import build_evolution_graph, schedule_to_trees, trees_to_schedule, verify_packing
from dyngossip.model import CommGraph, GraphSequence, Schedule, TokenMatrix, broadcast, run_schedule

A, B, C, D, E = range(5)
names = "ABCDE"

# round 1 is a path, round 2 a star around C
seq = GraphSequence.from_graphs([CommGraph(5, [(A, B), (B, C), (C, D), (D, E)]),
                                 CommGraph(5, [(C, A), (C, B), (C, D), (C, E)])])
init = TokenMatrix.from_holders(5, 1, [[], [0], [], [], []])
sched = Schedule([broadcast(5, {B: 0}), broadcast(5, {A: 0, B: 0, C: 0})])

evo = build_evolution_graph(seq, 2, k=1)
print(evo.num_vertices, "vertices;", evo.kind_counts())

[tree] = schedule_to_trees(init, seq, sched)
for a, b in sorted(tree.edges, key=lambda e: (e[0].level, e[0].node, e[1].node)):
    print(f"  {names[a.node]}{a.level} -> {names[b.node]}{b.level}")
print("valid packing:", verify_packing([tree], evo))

# back to broadcasts: only B and then C are actually needed
back = trees_to_schedule([tree], 5)
print([[names[v] for v, t in enumerate(row) if t >= 0] for row in back])
print("still delivers:", run_schedule(init, seq, back)[0].is_complete())
