"""Local search over directed graphs with the l0-penalized likelihood score.

Moves are edge addition, deletion and reversal plus two virtual-edge operators.
A virtual edge is a spurious adjacency that a greedy search adds between two
non-adjacent vertices sharing a child that is an ancestor of one of them; the
virtual operators remove it in one atomic move while orienting the cycle that
explains the dependence.
"""
from __future__ import annotations

import enum
import logging
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .equivalence import Reducibility, is_reducible
from .errors import OptimizationFailed, PreconditionViolated, SingularSystem
from .graph import DirectedGraph, Edge
from .scoring import DEFAULT_RESTARTS, ScoredModel, Scorer
from .sem import Dataset

log = logging.getLogger(__name__)


class MoveKind(enum.IntEnum):
    ADD = 0
    DELETE = 1
    REVERSE = 2
    VIRTUAL_CASE1 = 3
    VIRTUAL_CASE2 = 4

    @property
    def virtual(self) -> bool:
        return self >= MoveKind.VIRTUAL_CASE1


@dataclass(frozen=True, order=True)
class Move:
    kind: MoveKind
    payload: tuple

    def apply(self, g: DirectedGraph) -> DirectedGraph:
        k, a = self.kind, self.payload
        if k is MoveKind.ADD:
            return g.with_edges(add=[a])
        if k is MoveKind.DELETE:
            return g.with_edges(remove=[a])
        if k is MoveKind.REVERSE:
            i, j = a
            return g.with_edges(add=[(j, i)], remove=[(i, j)])
        if k is MoveKind.VIRTUAL_CASE1:
            i, path = a
            return apply_virtual_case1(g, i, path[0], path[-1], path)
        return apply_virtual_case2(g, *a)

    def to_json(self) -> dict:
        return {"kind": self.kind.name.lower(), "payload": _listify(self.payload)}


def _listify(x):
    if isinstance(x, tuple):
        return [_listify(v) for v in x]
    return x


@dataclass
class SearchConfig:
    algorithm: str = "tabu"  # "tabu" or "hill"
    tabu_length: int = 5
    patience: int = 5
    restarts: int = DEFAULT_RESTARTS  # optimizer restarts per cyclic block fit
    seed: int = 0
    max_iterations: int = 1000
    lam: Optional[float] = None
    virtual: bool = True
    # a virtual move may raise the NLL by at most virtual_tol * n
    virtual_tol: float = 1e-3
    max_path_len: int = 4
    threads: int = 0  # 0: DGLEARN_THREADS or 1
    reduce_budget: int = 100_000
    final_reduction: bool = True

    def __post_init__(self):
        if self.tabu_length < 0:
            raise ValueError("tabu_length must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.algorithm not in ("tabu", "hill"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


def _edges_between(g: DirectedGraph, a: int, b: int) -> list[Edge]:
    return [e for e in ((a, b), (b, a)) if e in g.edges]


def _is_triangle(g: DirectedGraph, a: int, b: int, c: int) -> bool:
    return g.adjacent(a, b) and g.adjacent(a, c) and g.adjacent(b, c)


def apply_virtual_case1(g: DirectedGraph, i: int, j: int, k: int, path) -> DirectedGraph:
    """Orient ``path`` (j ... k) into a cycle through ``j -> k``, drop i--j, orient i -> k.

    A direct path ``(j, k)`` is the 2-cycle special case: the cycle closes as
    ``j <-> k`` instead of through other vertices.
    """
    path = tuple(int(v) for v in path)
    if len({i, j, k}) != 3 or not _is_triangle(g, i, j, k):
        raise PreconditionViolated(f"no triangle over X{i + 1}, X{j + 1}, X{k + 1}")
    if len(path) < 2 or path[0] != j or path[-1] != k or len(set(path)) != len(path) or i in path:
        raise PreconditionViolated(f"path {path} must run from X{j + 1} to X{k + 1} avoiding X{i + 1}")
    for a, b in zip(path, path[1:]):
        if not g.adjacent(a, b):
            raise PreconditionViolated(f"X{a + 1} and X{b + 1} are not adjacent")
    add: set = set()
    remove: set = set()
    if len(path) == 2:
        add |= {(j, k), (k, j)}
    else:
        if (k, j) in g.edges and (j, k) not in g.edges:
            remove.add((k, j))
        add.add((j, k))
        # cycle runs k -> ... -> j along the reversed path
        back = path[::-1]
        for a, b in zip(back, back[1:]):
            if (a, b) not in g.edges:
                remove.add((b, a))
                add.add((a, b))
    remove |= set(_edges_between(g, i, j))
    if (k, i) in g.edges:
        remove.add((k, i))
    add.add((i, k))
    return DirectedGraph(g.p, (g.edges - remove) | (add - remove) | (add & {(i, k)}))


def apply_virtual_case2(g: DirectedGraph, i: int, j: int, k: int, l: int) -> DirectedGraph:
    """Drop i--j and l--k, add ``k -> j`` closing the 2-cycle ``j <-> k``, orient i -> k and l -> j."""
    if len({i, j, k, l}) != 4:
        raise PreconditionViolated("case 2 needs four distinct vertices")
    if not (_is_triangle(g, i, j, k) and _is_triangle(g, l, j, k)):
        raise PreconditionViolated(
            f"need triangles over X{i + 1},X{j + 1},X{k + 1} and X{l + 1},X{j + 1},X{k + 1}"
        )
    if (j, k) not in g.edges or (k, j) in g.edges:
        raise PreconditionViolated(f"need X{j + 1}->X{k + 1} without the reverse edge")
    remove = set(_edges_between(g, i, j)) | set(_edges_between(g, l, k))
    # the surviving triangle edges point into the 2-cycle, as in case 1
    remove |= {(k, i), (j, l)}
    return g.with_edges(add=[(k, j), (i, k), (l, j)], remove=remove)


def _undirected_paths(g: DirectedGraph, j: int, k: int, avoid: int, max_len: int) -> list[tuple]:
    """Simple undirected paths j ... k with 2..max_len edges, not through ``avoid``."""
    nbrs = [sorted({b for a, b in g.edges if a == v} | {a for a, b in g.edges if b == v}) for v in range(g.p)]
    out = []
    stack = [(j,)]
    while stack:
        path = stack.pop()
        v = path[-1]
        for w in nbrs[v]:
            if w == avoid or w in path:
                continue
            if w == k:
                if len(path) >= 2:
                    out.append(path + (k,))
                continue
            if len(path) < max_len:
                stack.append(path + (w,))
    out.sort()
    return out


def neighbors(g: DirectedGraph, virtual: bool = True, max_path_len: int = 4) -> list[Move]:
    """All candidate moves in deterministic order (kind, then payload)."""
    p = g.p
    moves: list[Move] = []
    for i in range(p):
        for j in range(p):
            if i != j and (i, j) not in g.edges:
                moves.append(Move(MoveKind.ADD, (i, j)))
    for e in g.sorted_edges():
        moves.append(Move(MoveKind.DELETE, e))
    for i, j in g.sorted_edges():
        if (j, i) not in g.edges:
            moves.append(Move(MoveKind.REVERSE, (i, j)))
    if not virtual:
        return moves
    for i in range(p):
        for j in range(p):
            for k in range(p):
                if len({i, j, k}) < 3 or not _is_triangle(g, i, j, k):
                    continue
                for path in _undirected_paths(g, j, k, i, max_path_len):
                    moves.append(Move(MoveKind.VIRTUAL_CASE1, (i, path)))
    for j, k in g.sorted_edges():
        if (k, j) in g.edges:
            continue
        common = [v for v in range(p) if v not in (j, k) and g.adjacent(v, j) and g.adjacent(v, k)]
        for i in common:
            for l in common:
                if i != l:
                    moves.append(Move(MoveKind.VIRTUAL_CASE2, (i, j, k, l)))
    moves.sort()
    return moves


def _thread_count(cfg: SearchConfig) -> int:
    if cfg.threads > 0:
        return cfg.threads
    try:
        return max(1, int(os.environ.get("DGLEARN_THREADS", "1")))
    except ValueError:
        return 1


class _Evaluator:
    def __init__(self, data: Dataset, cfg: SearchConfig, scorer: Optional[Scorer] = None):
        self.cfg = cfg
        self.n = data.n
        self.scorer = scorer or Scorer.for_data(data, lam=cfg.lam, restarts=cfg.restarts, seed=cfg.seed)
        self.threads = _thread_count(cfg)

    def score(self, g: DirectedGraph) -> Optional[ScoredModel]:
        try:
            return self.scorer.score(g)
        except (OptimizationFailed, SingularSystem):
            return None

    def candidates(self, current: ScoredModel) -> list[tuple[Move, ScoredModel]]:
        g = current.graph
        seen = {g.edges}
        todo = []
        for mv in neighbors(g, self.cfg.virtual, self.cfg.max_path_len):
            h = mv.apply(g)
            if h.edges in seen:
                continue
            seen.add(h.edges)
            todo.append((mv, h))
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                scored = list(pool.map(lambda t: self.score(t[1]), todo))
        else:
            scored = [self.score(h) for _, h in todo]
        out = []
        for (mv, _), sm in zip(todo, scored):
            if sm is None:
                continue
            if mv.kind.virtual and sm.nll - current.nll > self.cfg.virtual_tol * self.n:
                continue
            out.append((mv, sm))
        return out


@dataclass
class SearchTrace:
    scores: list[float] = field(default_factory=list)
    moves: list[Move] = field(default_factory=list)


def _finalize(ev: _Evaluator, best: ScoredModel) -> ScoredModel:
    if not ev.cfg.final_reduction:
        return best
    red = is_reducible(best.graph, ev.cfg.reduce_budget)
    if red.status is not Reducibility.REDUCIBLE:
        return best
    reduced = ev.score(red.graph)
    if reduced is None:
        log.info("reduction of %s has no stable fit; keeping it", best.graph)
        return best
    return reduced


def hill_climb(
    data: Dataset,
    init: Optional[DirectedGraph] = None,
    cfg: Optional[SearchConfig] = None,
    trace: Optional[SearchTrace] = None,
    scorer: Optional[Scorer] = None,
) -> ScoredModel:
    cfg = cfg or SearchConfig(algorithm="hill")
    ev = _Evaluator(data, cfg, scorer)
    init = init or DirectedGraph(data.p)
    current = ev.score(init)
    if current is None:
        raise OptimizationFailed(f"initial graph {init} has no stable fit")
    if trace is not None:
        trace.scores.append(current.score)
    for _ in range(cfg.max_iterations):
        cands = ev.candidates(current)
        if not cands:
            break
        mv, best = min(cands, key=lambda t: (t[1].score, t[0]))
        if not best.score < current.score:
            break
        current = best
        if trace is not None:
            trace.scores.append(current.score)
            trace.moves.append(mv)
    return _finalize(ev, current)


def tabu_search(
    data: Dataset,
    init: Optional[DirectedGraph] = None,
    cfg: Optional[SearchConfig] = None,
    trace: Optional[SearchTrace] = None,
    scorer: Optional[Scorer] = None,
) -> ScoredModel:
    """Move to the best non-tabu neighbour each iteration, improving or not.

    Structures visited in the last ``tabu_length`` iterations are tabu. Stops
    after ``patience`` consecutive iterations without a new overall best.
    """
    cfg = cfg or SearchConfig()
    ev = _Evaluator(data, cfg, scorer)
    init = init or DirectedGraph(data.p)
    current = ev.score(init)
    if current is None:
        raise OptimizationFailed(f"initial graph {init} has no stable fit")
    best = current
    tabu: deque = deque(maxlen=cfg.tabu_length)
    tabu.append(current.graph.edges)
    stale = 0
    if trace is not None:
        trace.scores.append(current.score)
    for _ in range(cfg.max_iterations):
        cands = [(mv, sm) for mv, sm in ev.candidates(current) if sm.graph.edges not in tabu]
        if not cands:
            break
        mv, current = min(cands, key=lambda t: (t[1].score, t[0]))
        tabu.append(current.graph.edges)
        if trace is not None:
            trace.scores.append(current.score)
            trace.moves.append(mv)
        if current.score < best.score:
            best = current
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return _finalize(ev, best)


def learn(data: Dataset, cfg: SearchConfig, init: Optional[DirectedGraph] = None) -> ScoredModel:
    if cfg.algorithm == "hill":
        return hill_climb(data, init, cfg)
    return tabu_search(data, init, cfg)
