import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from dglearn.graph import DirectedGraph, SupportMatrix

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

X = True
O = False

# Example 1 of the equivalence calculus (0-based edges)
G1 = DirectedGraph(3, frozenset({(0, 1), (0, 2), (2, 1)}))
G2 = DirectedGraph(3, frozenset({(0, 1), (1, 0), (2, 1)}))
G3 = DirectedGraph(3, frozenset({(0, 1), (1, 2), (2, 0)}))
G4 = DirectedGraph(3, frozenset({(0, 1), (0, 2), (2, 1), (1, 0)}))

CHAIN = DirectedGraph(3, frozenset({(0, 1), (1, 2)}))
CHAIN_REV = DirectedGraph(3, frozenset({(2, 1), (1, 0)}))
FORK = DirectedGraph(3, frozenset({(1, 0), (1, 2)}))
COLLIDER = DirectedGraph(3, frozenset({(0, 1), (2, 1)}))
TWO_CYCLE = DirectedGraph(2, frozenset({(0, 1), (1, 0)}))

# ground truths for the virtual-edge experiments
VIRTUAL_2CYCLE = DirectedGraph(4, frozenset({(0, 1), (1, 2), (2, 1), (3, 2)}))
VIRTUAL_4CYCLE = DirectedGraph(5, frozenset({(1, 2), (2, 3), (3, 4), (4, 1), (0, 2)}))


def sm(rows) -> SupportMatrix:
    return SupportMatrix.from_array(np.array(rows, dtype=bool))


@st.composite
def graphs(draw, min_p=1, max_p=5, dag=False):
    p = draw(st.integers(min_p, max_p))
    pairs = [(i, j) for i in range(p) for j in range(p) if i != j]
    if dag:
        order = draw(st.permutations(range(p)))
        rank = {v: t for t, v in enumerate(order)}
        pairs = [(i, j) for i, j in pairs if rank[i] < rank[j]]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    return DirectedGraph(p, frozenset(chosen))


@st.composite
def support_matrices(draw, min_p=2, max_p=5, diagonal=True):
    p = draw(st.integers(min_p, max_p))
    cols = []
    for j in range(p):
        c = draw(st.integers(0, (1 << p) - 1))
        if diagonal:
            c |= 1 << j
        cols.append(c)
    return SupportMatrix(p, tuple(cols))


def random_graph(rng, p, density=0.4) -> DirectedGraph:
    a = rng.random((p, p)) < density
    np.fill_diagonal(a, False)
    return DirectedGraph.from_adjacency(a)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str):
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
