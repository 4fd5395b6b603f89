"""
Choosing seed nodes without randomness
======================================

A random seed set works with high probability. Scanning the nodes and
keeping the choice that does not raise the expected number of uncovered
(node, token) pairs gives a deterministic set that covers them all.
"""

from dyngossip.model import CommGraph, GraphSequence
from dyngossip.offline import GossipParams, TokenWindow, backward_reach_set, derandomize_seed_set

n, k = 32, 8
seq = GraphSequence.static(CommGraph.path(n))

# short windows on a path: each node is reached only from a small ball
d = 4
windows = [TokenWindow(t, 1 + t * d, (t + 1) * d) for t in range(k)]
s = GossipParams.for_size(n, k).s

res = derandomize_seed_set(seq, windows, s)
print("expected misses before:", float(res.initial_phi), " after:", res.final_phi)
print("seed set:", res.seed_set)

S = set(res.seed_set)
covered = all(S & backward_reach_set(seq, w, u) for w in windows for u in range(n))
print("every node reached in every window:", covered)
