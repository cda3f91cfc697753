"""Support-rotation calculus and distribution-equivalence classes.

A support rotation ``A(i, j, k)`` is the support-level effect of the Givens
rotation in the ``(j, k)`` column plane that zeros cell ``(i, j)``. Only
lossless moves (reductions, reversible acute rotations and column swaps) are
needed to decide equivalence; column swaps between graph-representable
matrices are realized as cycle reversions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    IllegalTarget,
    IndexOutOfRange,
    NotACycle,
    NotExchangeable,
    NotReducible,
)
from .graph import (
    Cycle,
    DirectedGraph,
    SupportMatrix,
    _simple_cycles,
    graph_of_support,
    support_of_graph,
)

DEFAULT_BUDGET = 10**6


class RotationKind(str, enum.Enum):
    NO_EFFECT = "no_effect"
    REDUCTION = "reduction"
    REVERSIBLE_ACUTE = "reversible_acute"
    IRREVERSIBLE_ACUTE = "irreversible_acute"
    COLUMN_SWAP = "column_swap"


@dataclass(frozen=True)
class RotationMove:
    kind: RotationKind
    i: int
    j: int
    k: int

    def to_json(self) -> dict:
        return {"op": self.kind.value, "i": self.i, "j": self.j, "k": self.k}


@dataclass(frozen=True)
class CycleReversal:
    cycle: Cycle

    def to_json(self) -> dict:
        return {"op": "cycle_reversal", "cycle": list(self.cycle)}


def _check_indices(xi: SupportMatrix, i: int, j: int, k: int):
    if not all(0 <= x < xi.p for x in (i, j, k)):
        raise IndexOutOfRange(f"(i, j, k)=({i}, {j}, {k}) outside [0, {xi.p})")
    if j == k:
        raise IndexOutOfRange("rotation plane needs j != k")


def classify_rotation(xi: SupportMatrix, i: int, j: int, k: int) -> RotationKind:
    _check_indices(xi, i, j, k)
    cj, ck = xi.cols[j], xi.cols[k]
    if not cj >> i & 1:
        return RotationKind.NO_EFFECT
    if not ck >> i & 1:
        return RotationKind.COLUMN_SWAP
    ndiff = ((cj ^ ck) & ~(1 << i)).bit_count()
    if ndiff == 0:
        return RotationKind.REDUCTION
    if ndiff == 1:
        return RotationKind.REVERSIBLE_ACUTE
    return RotationKind.IRREVERSIBLE_ACUTE


def apply_support_rotation(xi: SupportMatrix, i: int, j: int, k: int) -> SupportMatrix:
    kind = classify_rotation(xi, i, j, k)
    if kind is RotationKind.NO_EFFECT:
        return xi
    cols = list(xi.cols)
    cj, ck = cols[j], cols[k]
    if kind is RotationKind.COLUMN_SWAP:
        cols[j], cols[k] = ck, cj
    else:
        # acute: every row other than i with a nonzero in either column fills both
        union = (cj | ck) & ~(1 << i)
        cols[j] = union
        cols[k] = union | (1 << i)
    return SupportMatrix(xi.p, tuple(cols))


def support_rotation_angle(Q: np.ndarray, xi: SupportMatrix, i: int, j: int, k: int) -> float:
    """Givens angle whose real rotation of ``Q`` stays inside ``A(i, j, k)(xi)``.

    ``Q`` must have support contained in ``xi``. When both ``Q[i, j]`` and
    ``Q[i, k]`` vanish the angle is decided by the pattern alone.
    """
    qij, qik = Q[i, j], Q[i, k]
    if qij == 0 and qik == 0:
        if xi[i, j] and not xi[i, k]:
            return math.pi / 2
        return 0.0
    return math.atan2(-qij, qik)


def _rotations(p: int, cols: tuple[int, ...]) -> dict:
    # raw form of find_rotations_with_moves: column tuples -> (kind, i, j, k)
    out: dict = {}
    for j in range(p):
        cj = cols[j]
        for k in range(j + 1, p):
            ck = cols[k]
            diff = cj ^ ck
            nd = diff.bit_count()
            if nd == 0:
                for i in range(p):
                    if not cj >> i & 1:
                        continue
                    bit = 1 << i
                    if i != j:
                        nc = cols[:j] + (cj & ~bit,) + cols[j + 1:]
                        if nc not in out:
                            out[nc] = (RotationKind.REDUCTION, i, j, k)
                    if i != k:
                        nc = cols[:k] + (ck & ~bit,) + cols[k + 1:]
                        if nc not in out:
                            out[nc] = (RotationKind.REDUCTION, i, k, j)
            elif nd == 1:
                ell = diff.bit_length() - 1
                filled = cj | ck
                for i in range(p):
                    if i == ell or not cj >> i & 1:
                        continue
                    cut = filled & ~(1 << i)
                    if i != j:
                        nc = list(cols)
                        nc[j] = cut
                        nc[k] = filled
                        nc = tuple(nc)
                        if nc not in out:
                            out[nc] = (RotationKind.REVERSIBLE_ACUTE, i, j, k)
                    if i != k:
                        nc = list(cols)
                        nc[k] = cut
                        nc[j] = filled
                        nc = tuple(nc)
                        if nc not in out:
                            out[nc] = (RotationKind.REVERSIBLE_ACUTE, i, k, j)
    return out


def find_rotations_with_moves(xi: SupportMatrix) -> dict[SupportMatrix, RotationMove]:
    """Legal reductions and reversible acute rotations, never zeroing a diagonal.

    Results come in a deterministic order, each with the first move producing it.
    """
    return {SupportMatrix(xi.p, c): RotationMove(*m) for c, m in _rotations(xi.p, xi.cols).items()}


def find_rotations(xi: SupportMatrix) -> set[SupportMatrix]:
    return set(find_rotations_with_moves(xi))


def _reverse_cycle_cols(cols: tuple[int, ...], cycle: Cycle) -> tuple[int, ...]:
    # Column of each cycle member moves to its predecessor's slot.
    new = list(cols)
    for t, v in enumerate(cycle):
        new[cycle[t - 1]] = cols[v]
    return tuple(new)


def reverse_cycle_support(xi: SupportMatrix, cycle: Cycle) -> SupportMatrix:
    return SupportMatrix(xi.p, _reverse_cycle_cols(xi.cols, tuple(cycle)))


def _check_cycle(g: DirectedGraph, cycle) -> Cycle:
    cycle = tuple(int(v) for v in cycle)
    if len(cycle) < 2 or len(set(cycle)) != len(cycle):
        raise NotACycle(f"{cycle} is not a simple cycle")
    for t, v in enumerate(cycle):
        u = cycle[t - 1]
        if (u, v) not in g.edges:
            raise NotACycle(f"edge X{u + 1}->X{v + 1} of {cycle} missing from graph")
    return cycle


def reverse_cycle(g: DirectedGraph, cycle) -> DirectedGraph:
    """Reverse a directed cycle, retargeting other edges into it to the predecessor."""
    cycle = _check_cycle(g, cycle)
    return graph_of_support(reverse_cycle_support(support_of_graph(g), cycle))


def _successors(p: int, cols: tuple[int, ...]) -> list[list[int]]:
    succ: list[list[int]] = [[] for _ in range(p)]
    for j, c in enumerate(cols):
        c &= ~(1 << j)
        while c:
            low = c & -c
            succ[low.bit_length() - 1].append(j)
            c ^= low
    for s in succ:
        s.sort()
    return succ


def _reversals(p: int, cols: tuple[int, ...]) -> dict:
    out: dict = {}
    for c in _simple_cycles(p, _successors(p, cols)):
        nc = _reverse_cycle_cols(cols, c)
        if nc not in out:
            out[nc] = c
    return out


def reverse_cycles_with_moves(xi: SupportMatrix) -> dict[SupportMatrix, CycleReversal]:
    return {SupportMatrix(xi.p, c): CycleReversal(cyc) for c, cyc in _reversals(xi.p, xi.cols).items()}


@dataclass
class EquivalenceClass:
    seed: SupportMatrix
    members: list[SupportMatrix]
    exhausted: bool
    # column tuple -> (predecessor column tuple, raw move); the seed maps to None
    trace: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.members)

    def __contains__(self, xi: SupportMatrix) -> bool:
        return xi.cols in self.trace

    def graphs(self) -> list[DirectedGraph]:
        return [graph_of_support(m) for m in self.members]

    def witness(self, target: SupportMatrix) -> list:
        moves = []
        cur = target.cols
        while self.trace[cur] is not None:
            prev, move = self.trace[cur]
            moves.append(CycleReversal(move) if isinstance(move[0], int) else RotationMove(*move))
            cur = prev
        return moves[::-1]


class _Stop(Exception):
    pass


def _dfs_closure(p, start, expand, trace, order, budget, visit) -> bool:
    """Depth-first traversal over a stack of candidate sets. False if budget hit."""
    stack = [[(start, item) for item in reversed(list(expand(p, start).items()))]]
    while stack:
        pending = stack[-1]
        if not pending:
            stack.pop()
            continue
        parent, (cols, move) = pending.pop()
        if cols in trace:
            continue
        if len(order) >= budget:
            return False
        trace[cols] = (parent, move)
        order.append(cols)
        if visit is not None and visit(cols):
            raise _Stop
        stack.append([(cols, item) for item in reversed(list(expand(p, cols).items()))])
    return True


def enumerate_equivalence_class(xi: SupportMatrix, budget: int = DEFAULT_BUDGET, visit=None) -> EquivalenceClass:
    """Depth-first enumeration: rotation closure, then cycle-reversion closure.

    ``visit`` is an optional callback on raw column tuples; returning True stops
    the enumeration early (the class is then marked not exhausted).
    """
    if not xi.is_graph_representable():
        graph_of_support(xi)  # raises NotGraphRepresentable
    p = xi.p
    trace: dict = {xi.cols: None}
    order = [xi.cols]
    exhausted = True
    try:
        if visit is not None and visit(xi.cols):
            raise _Stop
        exhausted = _dfs_closure(p, xi.cols, _rotations, trace, order, budget, visit)
        if exhausted:
            for tilde in list(order):
                if not _dfs_closure(p, tilde, _reversals, trace, order, budget, visit):
                    exhausted = False
                    break
    except _Stop:
        exhausted = False
    members = [SupportMatrix(p, c) for c in order]
    return EquivalenceClass(seed=xi, members=members, exhausted=exhausted, trace=trace)


class Verdict(str, enum.Enum):
    EQUIVALENT = "equivalent"
    NOT_EQUIVALENT = "not_equivalent"
    INCONCLUSIVE = "inconclusive"


@dataclass
class EquivalenceResult:
    verdict: Verdict
    class_sizes: list[int]
    exhausted: list[bool]
    # moves taking g1 into a subset of g2, and g2 into a subset of g1
    witness_forward: Optional[list] = None
    witness_backward: Optional[list] = None

    def to_json(self) -> dict:
        out = {
            "verdict": self.verdict.value,
            "class_sizes": self.class_sizes,
            "exhausted": self.exhausted,
        }
        if self.witness_forward is not None or self.witness_backward is not None:
            out["witness_sequence"] = {
                "g1_to_subset_of_g2": None if self.witness_forward is None else [m.to_json() for m in self.witness_forward],
                "g2_to_subset_of_g1": None if self.witness_backward is None else [m.to_json() for m in self.witness_backward],
            }
        return out


def has_two_cycle(g: DirectedGraph) -> bool:
    return any((j, i) in g.edges for i, j in g.edges)


def check_equivalent(g1: DirectedGraph, g2: DirectedGraph, budget: int = DEFAULT_BUDGET) -> EquivalenceResult:
    """Decide ``Theta(g1) == Theta(g2)`` by searching lossless moves both ways.

    Every class member generates exactly the seed's distribution set, so a member
    of ``g1``'s class whose support fits inside ``g2`` shows ``Theta(g1)`` is
    contained in ``Theta(g2)``. Equivalence needs both directions.
    """
    if g1.p != g2.p:
        raise DimensionMismatch(f"graphs have p={g1.p} and p={g2.p}")
    xi1, xi2 = support_of_graph(g1), support_of_graph(g2)
    if xi1 == xi2:
        return EquivalenceResult(Verdict.EQUIVALENT, [1, 1], [True, True], [], [])
    # A graph without 2-cycles is irreducible: its whole class keeps its edge count.
    for g, other in ((g1, g2), (g2, g1)):
        if len(g) > len(other) and not has_two_cycle(g):
            return EquivalenceResult(Verdict.NOT_EQUIVALENT, [0, 0], [False, False])

    order = [(0, xi1, xi2), (1, xi2, xi1)]
    if len(g2) < len(g1):
        order.reverse()
    found: list = [None, None]
    sizes = [0, 0]
    exhausted = [False, False]
    witnesses: list = [None, None]
    for side, seed, other in order:
        target = other.cols
        hit: list = []

        def visit(cols, target=target, hit=hit):
            if all(a & ~b == 0 for a, b in zip(cols, target)):
                hit.append(cols)
                return True
            return False

        cls = enumerate_equivalence_class(seed, budget, visit=visit)
        sizes[side] = len(cls)
        exhausted[side] = cls.exhausted
        if hit:
            found[side] = True
            witnesses[side] = cls.witness(SupportMatrix(seed.p, hit[0]))
            if hit[0] == target:
                found = [True, True]
                break
        elif cls.exhausted:
            found[side] = False
            break
    if found[0] is False or found[1] is False:
        verdict = Verdict.NOT_EQUIVALENT
    elif found[0] and found[1]:
        verdict = Verdict.EQUIVALENT
    else:
        verdict = Verdict.INCONCLUSIVE
    return EquivalenceResult(verdict, sizes, exhausted, witnesses[0], witnesses[1])


class Reducibility(str, enum.Enum):
    REDUCIBLE = "reducible"
    IRREDUCIBLE = "irreducible"
    INCONCLUSIVE = "inconclusive"


@dataclass
class ReducibilityResult:
    status: Reducibility
    graph: DirectedGraph
    removed: frozenset = frozenset()

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "graph": self.graph.to_json(),
            "removed_edges": sorted(list(e) for e in self.removed),
        }


def _reduce_once(g: DirectedGraph, budget: int):
    xi = support_of_graph(g)
    cls = enumerate_equivalence_class(xi, budget)
    n = len(g)
    smaller = [m for m in cls.members if m.n_offdiagonal() < n]
    if not smaller:
        return (None, cls.exhausted)
    subs = [m for m in smaller if m.issubset(xi)]
    pool = subs or smaller
    best = min(pool, key=lambda m: (m.n_offdiagonal(), m.cols))
    return graph_of_support(best), cls.exhausted


def is_reducible(g: DirectedGraph, budget: int = DEFAULT_BUDGET) -> ReducibilityResult:
    """Find an equivalent graph with strictly fewer edges, reduced to irreducibility."""
    if not has_two_cycle(g):
        return ReducibilityResult(Reducibility.IRREDUCIBLE, g)
    reduced, exhausted = _reduce_once(g, budget)
    if reduced is None:
        status = Reducibility.IRREDUCIBLE if exhausted else Reducibility.INCONCLUSIVE
        return ReducibilityResult(status, g)
    while has_two_cycle(reduced):
        nxt, _ = _reduce_once(reduced, budget)
        if nxt is None:
            break
        reduced = nxt
    return ReducibilityResult(Reducibility.REDUCIBLE, reduced, g.edges - reduced.edges)


def closed_parent_set(g: DirectedGraph, v: int) -> frozenset[int]:
    return g.parents(v) | {v}


def _check_target(g: DirectedGraph, j: int, k: int, target) -> tuple[int, int]:
    if j == k or not (0 <= j < g.p and 0 <= k < g.p):
        raise IndexOutOfRange(f"bad vertex pair ({j}, {k})")
    a, b = (int(x) for x in target)
    if a == b:
        raise IllegalTarget("diagonal entries have no graphical counterpart")
    if b not in (j, k):
        raise IllegalTarget(f"target edge must point into X{j + 1} or X{k + 1}")
    if (a, b) not in g.edges:
        raise IllegalTarget(f"X{a + 1}->X{b + 1} is not an edge")
    return a, b


def parent_exchange(g: DirectedGraph, j: int, k: int, target_edge) -> DirectedGraph:
    a, b = _check_target(g, j, k, target_edge)
    if len(closed_parent_set(g, j) ^ closed_parent_set(g, k)) != 1:
        raise NotExchangeable(f"X{j + 1}, X{k + 1} are not parent exchangeable")
    other = k if b == j else j
    xi = apply_support_rotation(support_of_graph(g), a, b, other)
    return graph_of_support(xi)


def parent_reduction(g: DirectedGraph, j: int, k: int, target_edge) -> DirectedGraph:
    a, b = _check_target(g, j, k, target_edge)
    if closed_parent_set(g, j) != closed_parent_set(g, k):
        raise NotReducible(f"X{j + 1}, X{k + 1} are not parent reducible")
    return g.with_edges(remove=[(a, b)])
