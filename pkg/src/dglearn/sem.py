"""Linear Gaussian SEM: parameters, precision matrices, sampling, random graphs.

The model is ``X = B^T X + N`` with ``N ~ N(0, diag(omega))``; ``B[i, j] != 0``
means ``X_i -> X_j``. The precision matrix is
``Theta = (I - B) diag(omega)^-1 (I - B)^T``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    InfeasibleConstraints,
    NotPositiveDefinite,
    ParseError,
    SingularSystem,
    StabilityRejectionLimit,
)
from .graph import DirectedGraph

STABILITY_MARGIN = 1e-6


@dataclass(frozen=True)
class Parameterization:
    B: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        omega = np.array(self.omega, dtype=float).ravel()
        if B.ndim != 2 or B.shape[0] != B.shape[1] or omega.shape[0] != B.shape[0]:
            raise DimensionMismatch(f"B {B.shape} and omega {omega.shape} disagree")
        if np.any(np.diag(B) != 0):
            raise ValueError("B must have a zero diagonal")
        if np.any(omega <= 0):
            raise ValueError("noise variances must be positive")
        B.flags.writeable = False
        omega.flags.writeable = False
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "omega", omega)

    @property
    def p(self) -> int:
        return self.B.shape[0]

    def graph(self) -> DirectedGraph:
        return DirectedGraph.from_adjacency(self.B != 0)

    def conforms_to(self, g: DirectedGraph) -> bool:
        return bool(np.all((self.B != 0) <= (g.adjacency() != 0)))

    def to_json(self) -> dict:
        return {"B": self.B.tolist(), "omega": self.omega.tolist()}

    @classmethod
    def from_json(cls, obj) -> "Parameterization":
        try:
            return cls(np.asarray(obj["B"], dtype=float), np.asarray(obj["omega"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed parameter JSON: {exc}") from exc


@dataclass(frozen=True)
class PrecisionMatrix:
    theta: np.ndarray
    # Theta = factor @ factor.T with factor = (I - B) diag(omega)^(-1/2)
    factor: np.ndarray

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.theta)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DimensionMismatch("data must be a nonempty n x p matrix")
        X.flags.writeable = False
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def S(self) -> np.ndarray:
        """Uncentred empirical covariance ``X^T X / n`` (the model is zero-mean)."""
        return self.X.T @ self.X / self.n

    def to_csv(self, path, header: bool = True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if header:
                w.writerow([f"x{i + 1}" for i in range(self.p)])
            for row in self.X:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        rows = []
        try:
            with open(path, newline="") as fh:
                for t, row in enumerate(csv.reader(fh)):
                    if not row:
                        continue
                    if t == 0 and row[0].strip().lower().startswith("x"):
                        continue
                    rows.append([float(v) for v in row])
        except ValueError as exc:
            raise ParseError(f"bad CSV value in {Path(path).name}: {exc}") from exc
        if not rows or len({len(r) for r in rows}) != 1:
            raise ParseError(f"{path}: empty or ragged data")
        return cls(np.asarray(rows))


def precision_of(params: Parameterization) -> PrecisionMatrix:
    p = params.p
    ImB = np.eye(p) - params.B
    if np.linalg.cond(ImB) > 1e12:
        raise SingularSystem("I - B is numerically singular")
    factor = ImB / np.sqrt(params.omega)[None, :]
    theta = factor @ factor.T
    return PrecisionMatrix(theta=(theta + theta.T) / 2, factor=factor)


def covariance_of(params: Parameterization) -> np.ndarray:
    """``Sigma = (I - B)^-T diag(omega) (I - B)^-1``, formed by solves."""
    p = params.p
    ImB = np.eye(p) - params.B
    try:
        A = np.linalg.solve(ImB.T, np.diag(params.omega))  # (I-B)^-T Omega
        sigma = np.linalg.solve(ImB.T, A.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return (sigma + sigma.T) / 2


def apply_givens(Q: np.ndarray, j: int, k: int, theta: float) -> np.ndarray:
    """Rotate columns ``j`` and ``k`` of ``Q``.

    Each row ``v`` maps to ``v_j' = cos*v_j + sin*v_k`` and
    ``v_k' = -sin*v_j + cos*v_k``.
    """
    if j == k:
        raise ValueError("rotation plane needs j != k")
    Q = np.array(Q, dtype=float)
    c, s = math.cos(theta), math.sin(theta)
    vj, vk = Q[:, j].copy(), Q[:, k].copy()
    Q[:, j] = c * vj + s * vk
    Q[:, k] = -s * vj + c * vk
    return Q


def spectral_radius(B: np.ndarray) -> float:
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(B))))


def is_stable(B, margin: float = STABILITY_MARGIN) -> bool:
    return spectral_radius(B) < 1.0 - margin


def _two_interval_uniform(rng: np.random.Generator, size, lo: float, hi: float) -> np.ndarray:
    mag = rng.uniform(lo, hi, size=size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return sign * mag


def sample_parameters(
    g: DirectedGraph,
    rng: np.random.Generator,
    weight_range: tuple[float, float] = (0.2, 0.8),
    variance_range: tuple[float, float] = (1.0, 3.0),
    max_rejections: int = 10_000,
) -> Parameterization:
    """Weights uniform on ``[-hi, -lo] U [lo, hi]``, variances uniform; resample B until stable."""
    p = g.p
    edges = g.sorted_edges()
    rows = np.array([e[0] for e in edges], dtype=int)
    cols = np.array([e[1] for e in edges], dtype=int)
    omega = rng.uniform(*variance_range, size=p)
    for _ in range(max_rejections + 1):
        B = np.zeros((p, p))
        if edges:
            B[rows, cols] = _two_interval_uniform(rng, len(edges), *weight_range)
        if is_stable(B):
            return Parameterization(B, omega)
    raise StabilityRejectionLimit(f"no stable draw for {g} after {max_rejections} rejections")


def sample_data(params: Parameterization, n: int, rng: np.random.Generator) -> Dataset:
    """Rows ``x`` solve ``x (I - B) = e`` with independent Gaussian noise ``e``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p = params.p
    noise = rng.standard_normal((n, p)) * np.sqrt(params.omega)[None, :]
    ImB = np.eye(p) - params.B
    try:
        X = np.linalg.solve(ImB.T, noise.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return Dataset(X)


def _longest_path_exceeds(succ: list[set[int]], src: int, dst: int, limit: int) -> bool:
    # Is there a simple path src ~> dst with more than `limit` edges?
    stack = [(src, 0, frozenset([src]))]
    while stack:
        v, depth, seen = stack.pop()
        for w in succ[v]:
            if w == dst:
                if depth + 1 > limit:
                    return True
            elif w not in seen:
                stack.append((w, depth + 1, seen | {w}))
    return False


def random_dg(
    p: int,
    max_degree: int,
    max_cycle_len: int,
    rng: np.random.Generator,
    n_edges: int | None = None,
    max_proposals: int | None = None,
) -> DirectedGraph:
    """Random DG with bounded total degree and bounded simple-cycle length.

    Proposes uniformly random ordered pairs and keeps those that respect both
    constraints, until ``n_edges`` (default ``floor(1.2 p)``) edges are placed or
    the proposal budget runs out. ``max_cycle_len <= 1`` yields a DAG.
    """
    if p < 1 or max_degree < 0:
        raise InfeasibleConstraints(f"need p >= 1 and max_degree >= 0 (got {p}, {max_degree})")
    if n_edges is None:
        n_edges = int(1.2 * p)
    cap = min(p * (p - 1), p * max_degree // 2)
    n_edges = min(n_edges, cap)
    if max_proposals is None:
        max_proposals = 50 * p * p + 100
    succ: list[set[int]] = [set() for _ in range(p)]
    deg = [0] * p
    edges: set = set()
    if p < 2 or n_edges == 0:
        return DirectedGraph(p, frozenset())
    for _ in range(max_proposals):
        if len(edges) >= n_edges:
            break
        i, j = (int(v) for v in rng.choice(p, size=2, replace=False))
        if (i, j) in edges or deg[i] >= max_degree or deg[j] >= max_degree:
            continue
        # adding i -> j closes cycles j ~> i -> j
        if max_cycle_len <= 1:
            if _reaches(succ, j, i):
                continue
        elif _longest_path_exceeds(succ, j, i, max_cycle_len - 1):
            continue
        edges.add((i, j))
        succ[i].add(j)
        deg[i] += 1
        deg[j] += 1
    return DirectedGraph(p, frozenset(edges))


def _reaches(succ: list[set[int]], src: int, dst: int) -> bool:
    seen = {src}
    stack = [src]
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for w in succ[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def _logdet_spd(A: np.ndarray, name: str) -> float:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} is not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def kl_gaussian(sigma_true, sigma_fit) -> float:
    """``KL(N(0, sigma_true) || N(0, sigma_fit))``."""
    St = np.asarray(sigma_true, dtype=float)
    Sf = np.asarray(sigma_fit, dtype=float)
    if St.shape != Sf.shape or St.ndim != 2:
        raise DimensionMismatch(f"{St.shape} vs {Sf.shape}")
    p = St.shape[0]
    ld_t = _logdet_spd(St, "sigma_true")
    ld_f = _logdet_spd(Sf, "sigma_fit")
    tr = float(np.trace(np.linalg.solve(Sf, St)))
    return max(0.0, 0.5 * (tr - p + ld_f - ld_t))
