"""Directed graphs, support matrices and structural queries.

Vertices are 0-based everywhere in code; user-facing text uses 1-based labels
(``X1``, ``X2``, ...). An edge ``(i, j)`` means ``X_i -> X_j``.

A support matrix stores, for each column ``j``, the set of rows with a nonzero
entry. For a graph this is ``I + B_G``: column ``j`` holds ``j`` itself and the
parents of ``j``. Columns are kept as integer bitmasks (bit ``i`` of column
``j`` set iff cell ``(i, j)`` is nonzero), which makes the rotation calculus in
:mod:`dglearn.equivalence` cheap.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidGraph, NotAcyclic, NotGraphRepresentable, ParseError

Edge = tuple[int, int]
Cycle = tuple[int, ...]


@dataclass(frozen=True)
class DirectedGraph:
    p: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 1:
            raise InvalidGraph(f"vertex count must be a positive integer, got {self.p!r}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise InvalidGraph(f"self-loop on X{i + 1}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise InvalidGraph(f"edge ({i}, {j}) out of range for p={self.p}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_adjacency(cls, adj) -> "DirectedGraph":
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise InvalidGraph("adjacency matrix must be square")
        if np.any(np.diag(adj) != 0):
            raise InvalidGraph("adjacency matrix has a nonzero diagonal")
        rows, cols = np.nonzero(adj)
        return cls(adj.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    def adjacency(self) -> np.ndarray:
        """Binary matrix ``B_G`` with ``[i, j] = 1`` iff ``X_i -> X_j``."""
        a = np.zeros((self.p, self.p), dtype=int)
        for i, j in self.edges:
            a[i, j] = 1
        return a

    def __len__(self):
        return len(self.edges)

    def __contains__(self, edge) -> bool:
        return tuple(edge) in self.edges

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def parents(self, v: int) -> frozenset[int]:
        return frozenset(i for i, j in self.edges if j == v)

    def children(self, v: int) -> frozenset[int]:
        return frozenset(j for i, j in self.edges if i == v)

    def successors(self) -> list[list[int]]:
        succ: list[list[int]] = [[] for _ in range(self.p)]
        for i, j in sorted(self.edges):
            succ[i].append(j)
        return succ

    def adjacent(self, a: int, b: int) -> bool:
        return (a, b) in self.edges or (b, a) in self.edges

    def degree(self, v: int) -> int:
        return sum(1 for i, j in self.edges if i == v or j == v)

    def with_edges(self, add: Iterable[Edge] = (), remove: Iterable[Edge] = ()) -> "DirectedGraph":
        return DirectedGraph(self.p, (self.edges - frozenset(remove)) | frozenset(add))

    def is_subgraph_of(self, other: "DirectedGraph") -> bool:
        return self.p == other.p and self.edges <= other.edges

    def to_json(self) -> dict:
        return {"p": self.p, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_json(cls, obj) -> "DirectedGraph":
        try:
            p = obj["p"]
            edges = [tuple(e) for e in obj["edges"]]
            if any(len(e) != 2 for e in edges) or not isinstance(p, int):
                raise ValueError("edges must be [i, j] pairs and p an integer")
            return cls(p, frozenset(edges))
        except InvalidGraph:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed graph JSON: {exc}") from exc

    def __str__(self):
        body = ", ".join(f"X{i + 1}->X{j + 1}" for i, j in self.sorted_edges())
        return f"DirectedGraph(p={self.p}; {body})"


@dataclass(frozen=True)
class SupportMatrix:
    """Binary {0, x} pattern, stored column-wise as bitmasks."""

    p: int
    cols: tuple[int, ...]

    def __post_init__(self):
        if len(self.cols) != self.p:
            raise DimensionMismatch(f"expected {self.p} columns, got {len(self.cols)}")
        full = (1 << self.p) - 1
        if any(c < 0 or c & ~full for c in self.cols):
            raise DimensionMismatch("column mask has bits outside [0, p)")

    @classmethod
    def from_array(cls, a) -> "SupportMatrix":
        a = np.asarray(a) != 0
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch("support matrix must be square")
        p = a.shape[0]
        cols = tuple(sum(1 << i for i in range(p) if a[i, j]) for j in range(p))
        return cls(p, cols)

    @classmethod
    def identity(cls, p: int) -> "SupportMatrix":
        return cls(p, tuple(1 << j for j in range(p)))

    def to_array(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for j, c in enumerate(self.cols):
            for i in range(self.p):
                if c >> i & 1:
                    a[i, j] = True
        return a

    def __getitem__(self, ij) -> bool:
        i, j = ij
        return bool(self.cols[j] >> i & 1)

    def nnz(self) -> int:
        return sum(c.bit_count() for c in self.cols)

    def n_offdiagonal(self) -> int:
        return sum((c & ~(1 << j)).bit_count() for j, c in enumerate(self.cols))

    def is_graph_representable(self) -> bool:
        return all(c >> j & 1 for j, c in enumerate(self.cols))

    def issubset(self, other: "SupportMatrix") -> bool:
        if self.p != other.p:
            raise DimensionMismatch(f"p={self.p} vs p={other.p}")
        return all(a & ~b == 0 for a, b in zip(self.cols, other.cols))

    __le__ = issubset

    def successors(self) -> list[list[int]]:
        """Off-diagonal pattern read as a graph: ``i -> j`` iff cell (i, j) set."""
        succ: list[list[int]] = [[] for _ in range(self.p)]
        for j, c in enumerate(self.cols):
            for i in range(self.p):
                if i != j and c >> i & 1:
                    succ[i].append(j)
        return succ

    def pretty(self) -> str:
        a = self.to_array()
        return "\n".join(" ".join("x" if v else "0" for v in row) for row in a)

    def to_json(self) -> list[list[int]]:
        return self.to_array().astype(int).tolist()


@dataclass(frozen=True)
class MSCSPartition:
    """Maximal strongly connected subgraphs in topological order."""

    blocks: tuple[tuple[int, ...], ...]

    def block_of(self) -> dict[int, int]:
        return {v: b for b, block in enumerate(self.blocks) for v in block}


def support_of_graph(g: DirectedGraph) -> SupportMatrix:
    cols = [1 << j for j in range(g.p)]
    for i, j in g.edges:
        cols[j] |= 1 << i
    return SupportMatrix(g.p, tuple(cols))


def graph_of_support(xi: SupportMatrix) -> DirectedGraph:
    if not xi.is_graph_representable():
        zeros = ", ".join(f"X{j + 1}" for j, c in enumerate(xi.cols) if not c >> j & 1)
        raise NotGraphRepresentable(f"zero diagonal at {zeros}")
    edges = frozenset((i, j) for j, c in enumerate(xi.cols) for i in range(xi.p) if i != j and c >> i & 1)
    return DirectedGraph(xi.p, edges)


def _tarjan(p: int, succ: Sequence[Sequence[int]]) -> list[list[int]]:
    # Iterative Tarjan; components come out in reverse topological order.
    index = [-1] * p
    low = [0] * p
    on_stack = [False] * p
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(p):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, pos = work[-1]
            if pos < len(succ[v]):
                work[-1] = (v, pos + 1)
                w = succ[v][pos]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def find_mscs(g: DirectedGraph) -> MSCSPartition:
    comps = _tarjan(g.p, g.successors())
    return MSCSPartition(tuple(tuple(c) for c in reversed(comps)))


def is_acyclic(g: DirectedGraph) -> bool:
    return all(len(b) == 1 for b in find_mscs(g).blocks)


def _simple_cycles(p: int, succ: Sequence[Sequence[int]]) -> list[Cycle]:
    # Cycles are rooted at their minimum vertex, so each is found exactly once.
    cycles: list[Cycle] = []
    for start in range(p):
        path = [start]
        on_path = [False] * p
        on_path[start] = True
        iters = [iter(succ[start])]
        while iters:
            for w in iters[-1]:
                if w == start:
                    cycles.append(tuple(path))
                elif w > start and not on_path[w]:
                    path.append(w)
                    on_path[w] = True
                    iters.append(iter(succ[w]))
                    break
            else:
                iters.pop()
                on_path[path.pop()] = False
    cycles.sort()
    return cycles


def simple_cycles(g: DirectedGraph) -> list[Cycle]:
    """All simple directed cycles, each rotated so its minimum vertex leads."""
    return _simple_cycles(g.p, g.successors())


def _check_same_p(g1: DirectedGraph, g2: DirectedGraph):
    if g1.p != g2.p:
        raise DimensionMismatch(f"graphs have p={g1.p} and p={g2.p}")


def shd(g1: DirectedGraph, g2: DirectedGraph) -> int:
    """Ordered-pair structural Hamming distance (a reversal costs 2)."""
    _check_same_p(g1, g2)
    return len(g1.edges ^ g2.edges)


def skeleton(g: DirectedGraph) -> frozenset[frozenset[int]]:
    return frozenset(frozenset(e) for e in g.edges)


def v_structures(g: DirectedGraph) -> frozenset[tuple[int, int, int]]:
    """Colliders ``a -> c <- b`` with ``a < b`` non-adjacent, as ``(a, c, b)``."""
    out = set()
    for c in range(g.p):
        for a, b in itertools.combinations(sorted(g.parents(c)), 2):
            if not g.adjacent(a, b):
                out.add((a, c, b))
    return frozenset(out)


def dag_markov_equivalent(g1: DirectedGraph, g2: DirectedGraph) -> bool:
    _check_same_p(g1, g2)
    for g in (g1, g2):
        if not is_acyclic(g):
            raise NotAcyclic(f"{g} has a directed cycle")
    return skeleton(g1) == skeleton(g2) and v_structures(g1) == v_structures(g2)


def all_graphs(p: int) -> Iterable[DirectedGraph]:
    """Every directed graph on ``p`` vertices (2^(p(p-1)) of them)."""
    pairs = [(i, j) for i in range(p) for j in range(p) if i != j]
    for mask in range(1 << len(pairs)):
        yield DirectedGraph(p, frozenset(e for b, e in enumerate(pairs) if mask >> b & 1))


def all_dags(p: int) -> list[DirectedGraph]:
    return [g for g in all_graphs(p) if is_acyclic(g)]
