import numpy as np
import pytest

from dyngossip.model import CommGraph, GraphSequence, Schedule, TokenMatrix, broadcast

# nodes A..E of the five-node worked example
A, B, C, D, E = range(5)


@pytest.fixture
def five_node_seq():
    """Round 1 is the path A-B-C-D-E, round 2 is the star centred at C."""
    g1 = CommGraph(5, [(A, B), (B, C), (C, D), (D, E)])
    g2 = CommGraph(5, [(C, A), (C, B), (C, D), (C, E)])
    return GraphSequence.from_graphs([g1, g2])


@pytest.fixture
def five_node_init():
    return TokenMatrix.from_holders(5, 1, [[], [0], [], [], []])


@pytest.fixture
def five_node_schedule():
    return Schedule([broadcast(5, {B: 0}), broadcast(5, {A: 0, B: 0, C: 0})])


def random_state(rng: np.random.Generator, n: int, k: int, p: float | None = None) -> TokenMatrix:
    p = rng.uniform(0.1, 0.9) if p is None else p
    return TokenMatrix(rng.random((n, k)) < p)


def random_broadcast(rng: np.random.Generator, state: TokenMatrix) -> np.ndarray:
    """Each node sends a uniformly chosen held token, or nothing with probability 1/4."""
    b = np.full(state.n, -1, dtype=np.int64)
    for v in range(state.n):
        held = np.flatnonzero(state.holds[v])
        if len(held) and rng.random() >= 0.25:
            b[v] = rng.choice(held)
    return b


_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance.append((report.nodeid.split("::")[-1], "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for name, verdict in _acceptance:
            terminalreporter.write_line(f"{verdict}  {name}")
