"""
Stalling online gossip with a strong adversary
==============================================

The adversary sees each round's broadcasts before it picks the graph. It
keeps every free edge and joins the free components in a line, so at most
a handful of deliveries are useful in any round.
"""

import math

from dyngossip.adversary import lower_bound_experiment

n = k = 64
cap = 10 * math.log2(n)

# start from a Bernoulli(3/4) distribution: about nk/4 = 1024 tokens are missing
for name in ("uniform", "rr", "rarest"):
    rec = lower_bound_experiment(n, k, name, seed=0, max_rounds=1000)
    print(f"{rec.strategy:>20}: missing {rec.init_missing:4d}  max useful/round {rec.max_useful}"
          f"  (cap {cap:.0f})  rounds {rec.rounds_used}  completed {rec.completed}")

# rounds needed >= missing / max useful per round
print("implied floor on rounds:", math.ceil(0.9 * n * k / 4 / cap))
