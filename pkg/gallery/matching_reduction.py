"""
From many holders to one
========================

Lower bounds proved for a start where each token has a single holder carry
over to a random rich start, provided the single-holder nodes can be
matched to rich nodes that hold at least as much.
"""

from dyngossip.adversary import matching_reduction
from dyngossip.model import new_distribution

n, k = 64, 32
found = 0
for seed in range(100):
    single = new_distribution(n, k, "one_token_per_node", seed=seed)
    rich = new_distribution(n, k, ("bernoulli", 0.75), seed=seed)
    found += matching_reduction(single, rich) is not None
print(f"perfect matching in {found} of 100 draws")
