"""
Offline gossip by gathering and flooding
========================================

With the whole graph sequence known in advance, every token is first
routed to a few seed nodes by max-flow. Then each token is flooded for a
short window, which is enough because some seed is always close to every
node.
"""

from dyngossip.generators import GeneratorSpec, generate_sequence
from dyngossip.model import new_distribution, run_schedule
from dyngossip.offline import GossipParams, gather_flood_gossip

n, k = 64, 16
seq = generate_sequence(GeneratorSpec("gnp_repair", n, seed=1, p=0.1))
init = new_distribution(n, k, "one_token_per_node", seed=1)

params = GossipParams.for_size(n, k)
print("seed-set size s =", params.s, " flood window =", params.delta)

res = gather_flood_gossip(seq, init, params, seed=1)
final, _ = run_schedule(init, seq, res.schedule)
print("rounds used:", res.rounds, " everyone has everything:", final.is_complete())
print("flooding one token at a time would budget n*k =", n * k, "rounds")

# the phase log records what happened when
for v, first, last in res.log["gather_windows"][:3]:
    print(f"gather at node {v}: rounds {first}-{last}")
