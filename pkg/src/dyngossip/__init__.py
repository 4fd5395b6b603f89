"""k-gossip on dynamic networks: round engine, strong adversary and offline schedulers."""

from .model import (EMPTY, CommGraph, DisconnectedGraph, GossipError, GraphSequence, InfeasibleBroadcast,
                    RoundMetrics, Schedule, TokenMatrix, Transcript, broadcast, execute_round, is_free_edge,
                    missing_count, new_distribution, run_online, run_schedule)

__version__ = "0.1.0"
