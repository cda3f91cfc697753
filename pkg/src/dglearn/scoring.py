"""Gaussian likelihood, l0-penalized scoring and support-constrained fitting.

All fitting runs on sufficient statistics: the uncentred second-moment matrix
``S`` and the sample count ``n``. With the noise variances profiled out, the
negative log-likelihood of a weight matrix ``B`` is

    f(B) = -n log|det(I - B)| + (n/2) sum_i log r_i(B),
    r_i(B) = [(I - B)^T S (I - B)]_ii,

and ``nll = f(B) + n p / 2`` at the optimal variances ``omega_i = r_i``. The
objective splits over maximal strongly connected blocks because ``I - B`` is
block triangular in a topological block order, so each block is fit on its own
and cached by (vertices, parent sets).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import DimensionMismatch, OptimizationFailed, SingularSystem, UnstableOptimum
from .equivalence import reverse_cycle_support
from .graph import DirectedGraph, MSCSPartition, find_mscs, graph_of_support, simple_cycles, support_of_graph
from .sem import Dataset, Parameterization, covariance_of, is_stable, kl_gaussian, spectral_radius

DEFAULT_RESTARTS = 5
INIT_SCALE = 0.5
# Without the stability constraint, equivalent parameterizations can sit across
# the det(I - B) = 0 surface, which the log-det barrier keeps local runs from
# crossing; odd restarts then start from wide, unprojected draws.
WIDE_INIT_SCALE = 5.0
MAX_REVERSAL_SEEDS = 20
MAX_ITER = 500
GTOL = 1e-7


def bic_lambda(n: int) -> float:
    return 0.5 * math.log(n)


def _logabsdet(M: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(M)
    if sign == 0 or not np.isfinite(logdet):
        raise SingularSystem("I - B is singular")
    return float(logdet)


def nll_from_moments(S: np.ndarray, n: float, params: Parameterization) -> float:
    p = params.p
    ImB = np.eye(p) - params.B
    resid = np.einsum("ai,ab,bi->i", ImB, S, ImB)  # r_i
    omega = params.omega
    return float(-n * _logabsdet(ImB) + np.sum(0.5 * n * np.log(omega) + 0.5 * n * resid / omega))


def nll(data: Dataset, params: Parameterization) -> float:
    """Negative log-likelihood, up to the constant ``(n p / 2) log(2 pi)``."""
    if data.p != params.p:
        raise DimensionMismatch(f"data has p={data.p}, params p={params.p}")
    return nll_from_moments(data.S, data.n, params)


def concentrated_nll(B: np.ndarray, S: np.ndarray, n: float, mask: Optional[np.ndarray] = None):
    """Profiled objective ``f(B)`` and its gradient (masked to ``mask`` if given)."""
    p = B.shape[0]
    ImB = np.eye(p) - B
    sign, logdet = np.linalg.slogdet(ImB)
    if sign == 0:
        raise SingularSystem("I - B is singular")
    SI = S @ ImB
    r = np.einsum("ai,ai->i", ImB, SI)
    f = -n * logdet + 0.5 * n * np.sum(np.log(r))
    grad = n * np.linalg.inv(ImB).T - n * SI / r[None, :]
    if mask is not None:
        grad = grad * mask
    return float(f), grad


def block_nll_from_moments(S, n, params: Parameterization, partition: MSCSPartition) -> dict:
    out = {}
    B, omega = params.B, params.omega
    p = params.p
    ImB = np.eye(p) - B
    resid = np.einsum("ai,ab,bi->i", ImB, S, ImB)
    for block in partition.blocks:
        idx = list(block)
        logdet = _logabsdet(ImB[np.ix_(idx, idx)]) if len(idx) > 1 else math.log(abs(ImB[idx[0], idx[0]]))
        terms = 0.5 * n * np.log(omega[idx]) + 0.5 * n * resid[idx] / omega[idx]
        out[tuple(block)] = float(-n * logdet + np.sum(terms))
    return out


def block_nll(data: Dataset, params: Parameterization, partition: Optional[MSCSPartition] = None) -> dict:
    """NLL of each block conditioned on its external parents; values sum to ``nll``."""
    if partition is None:
        partition = find_mscs(params.graph())
    return block_nll_from_moments(data.S, data.n, params, partition)


@dataclass
class BlockFit:
    vertices: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    weights: tuple[np.ndarray, ...]
    omega: np.ndarray
    nll: float


@dataclass
class ScoredModel:
    graph: DirectedGraph
    params: Parameterization
    nll: float
    penalty: float
    score: float
    per_block_nll: dict
    lam: float

    def report(self) -> dict:
        return {
            "score": self.score,
            "nll": self.nll,
            "penalty": self.penalty,
            "lambda": self.lam,
            "n_edges": len(self.graph),
            "spectral_radius": spectral_radius(self.params.B),
            "blocks": [
                {"vertices": list(k), "nll": v} for k, v in self.per_block_nll.items()
            ],
        }


def _block_key(g: DirectedGraph, block) -> tuple:
    return tuple((v, tuple(sorted(g.parents(v)))) for v in block)


class Scorer:
    """Fits and scores graphs against fixed moments, caching per-block fits.

    Block fits are pure functions of (moments, block key, seed), so a cache hit
    and a fresh fit give identical numbers; this makes incremental rescoring
    during search match from-scratch scoring.
    """

    def __init__(
        self,
        S: np.ndarray,
        n: float,
        lam: Optional[float] = None,
        restarts: int = DEFAULT_RESTARTS,
        seed: int = 0,
        gtol: float = GTOL,
        max_iter: int = MAX_ITER,
        require_stable: bool = True,
    ):
        self.S = np.asarray(S, dtype=float)
        self.n = n
        self.p = self.S.shape[0]
        self.lam = bic_lambda(int(n)) if lam is None else lam
        self.restarts = max(1, restarts)
        self.seed = seed
        self.gtol = gtol
        self.max_iter = max_iter
        self.require_stable = require_stable
        self.cache: dict = {}
        self.fits = 0

    @classmethod
    def for_data(cls, data: Dataset, **kw) -> "Scorer":
        return cls(data.S, data.n, **kw)

    def fit_block(self, key: tuple) -> BlockFit:
        hit = self.cache.get(key)
        if hit is not None:
            if isinstance(hit, Exception):
                raise hit
            return hit
        self.fits += 1
        try:
            fit = self._fit_singleton(key) if len(key) == 1 else self._fit_cyclic(key)
        except OptimizationFailed as exc:
            self.cache[key] = exc
            raise
        self.cache[key] = fit
        return fit

    def _fit_singleton(self, key) -> BlockFit:
        (v, pa), = key
        S, n = self.S, self.n
        pa_idx = list(pa)
        if pa_idx:
            Spp = S[np.ix_(pa_idx, pa_idx)]
            Spv = S[pa_idx, v]
            w, *_ = np.linalg.lstsq(Spp, Spv, rcond=None)
            r = float(S[v, v] - Spv @ w)
        else:
            w = np.zeros(0)
            r = float(S[v, v])
        if r <= 0:
            raise OptimizationFailed(f"degenerate residual variance for X{v + 1}")
        value = 0.5 * n * math.log(r) + 0.5 * n
        return BlockFit((v,), (pa,), (w,), np.array([r]), value)

    def _fit_cyclic(self, key) -> BlockFit:
        verts = [v for v, _ in key]
        # local coordinates: block vertices first, then external parents
        ext = sorted({u for _, pa in key for u in pa} - set(verts))
        local = verts + ext
        pos = {v: t for t, v in enumerate(local)}
        m, q = len(verts), len(local)
        S = self.S[np.ix_(local, local)]
        n = self.n
        rows, cols = [], []
        for c, (v, pa) in enumerate(key):
            for u in pa:
                rows.append(pos[u])
                cols.append(c)
        rows_a = np.array(rows, dtype=int)
        cols_a = np.array(cols, dtype=int)
        in_block = rows_a < m

        def unpack(x):
            W = np.zeros((q, m))
            W[rows_a, cols_a] = x
            return W

        def objective(x):
            # f(W)/n, W the q x m slab of B feeding the block columns
            W = unpack(x)
            M = np.zeros((q, m))
            M[:m, :m] = np.eye(m)
            M -= W
            A = M[:m, :m]
            sign, logdet = np.linalg.slogdet(A)
            if sign == 0 or not np.isfinite(logdet):
                return np.inf, np.zeros_like(x)
            SM = S @ M
            r = np.einsum("ai,ai->i", M, SM)
            if np.any(r <= 0):
                return np.inf, np.zeros_like(x)
            f = -logdet + 0.5 * np.sum(np.log(r))
            G = -SM / r[None, :]
            G[:m, :m] += np.linalg.inv(A).T
            return float(f), G[rows_a, cols_a]

        rng = np.random.default_rng([self.seed, *[v for v, _ in key], *[u + 1 for _, pa in key for u in pa]])
        best = None
        converged = 0
        for r in range(self.restarts):
            if r == 0:
                x0 = np.zeros(len(rows))
            elif not self.require_stable and r % 2 == 1:
                x0 = rng.uniform(-WIDE_INIT_SCALE, WIDE_INIT_SCALE, size=len(rows))
            else:
                x0 = rng.uniform(-INIT_SCALE, INIT_SCALE, size=len(rows))
                Bb = unpack(x0)[:m, :m]
                rho = spectral_radius(Bb)
                if rho >= 0.95:
                    x0 = x0 * np.where(in_block, 0.95 / rho, 1.0)
            res = optimize.minimize(
                objective, x0, jac=True, method="L-BFGS-B",
                options={"maxiter": self.max_iter, "gtol": self.gtol, "ftol": 1e-15, "maxcor": 20},
            )
            f, g = objective(res.x)
            if not np.isfinite(f):
                continue
            if not (res.success or np.max(np.abs(g), initial=0.0) < 1e-5):
                continue
            converged += 1
            if self.require_stable and not is_stable(unpack(res.x)[:m, :m]):
                continue
            if best is None or f < best[0] - 1e-12:
                best = (f, res.x)
        if best is None:
            if converged:
                raise UnstableOptimum(f"every optimum for block {[v + 1 for v in verts]} is unstable")
            raise OptimizationFailed(f"no restart converged for block {[v + 1 for v in verts]}")
        f, x = best
        W = unpack(x)
        M = -W
        M[:m, :m] += np.eye(m)
        r = np.einsum("ai,ai->i", M, S @ M)
        weights = []
        for c, (v, pa) in enumerate(key):
            weights.append(np.array([W[pos[u], c] for u in pa]))
        value = n * f + 0.5 * n * m
        return BlockFit(tuple(verts), tuple(pa for _, pa in key), tuple(weights), r, float(value))

    def score(self, g: DirectedGraph) -> ScoredModel:
        if g.p != self.p:
            raise DimensionMismatch(f"graph p={g.p}, moments p={self.p}")
        partition = find_mscs(g)
        B = np.zeros((self.p, self.p))
        omega = np.zeros(self.p)
        per_block = {}
        total = 0.0
        for block in partition.blocks:
            fit = self.fit_block(_block_key(g, block))
            for v, pa, w, om in zip(fit.vertices, fit.parents, fit.weights, fit.omega):
                if pa:
                    B[list(pa), v] = w
                omega[v] = om
            per_block[tuple(block)] = fit.nll
            total += fit.nll
        params = Parameterization(B, omega)
        penalty = self.lam * len(g)
        return ScoredModel(g, params, total, penalty, total + penalty, per_block, self.lam)


def fit_mle(data: Dataset, g: DirectedGraph, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> Parameterization:
    return Scorer.for_data(data, restarts=restarts, seed=seed).score(g).params


def l0_score(
    data: Dataset,
    g: DirectedGraph,
    lam: Optional[float] = None,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
) -> ScoredModel:
    """``min nll + lam * |E(g)|`` with ``lam = 0.5 log n`` by default."""
    return Scorer.for_data(data, lam=lam, restarts=restarts, seed=seed).score(g)


def fit_kl(
    g: DirectedGraph,
    sigma_target: np.ndarray,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    gtol: float = 1e-9,
    require_stable: bool = True,
) -> tuple[Parameterization, float]:
    """Parameters of ``g`` minimizing ``KL(N(0, sigma_target) || N(0, Sigma(B, omega)))``.

    With ``require_stable=False`` the search ranges over every admissible
    ``(B, omega)``, i.e. the full distribution set of ``g``.

    This is the population MLE: the KL objective equals the profiled NLL with
    ``S = sigma_target`` and ``n = 1``, minus ``log det(sigma_target) / 2``.
    """
    scorer = Scorer(
        sigma_target, 1.0, lam=0.0, restarts=restarts, seed=seed, gtol=gtol, max_iter=2000,
        require_stable=require_stable,
    )
    params = scorer.score(g).params
    kl = kl_gaussian(sigma_target, covariance_of(params))
    if require_stable:
        return params, kl
    # Equivalent parameterizations may lie across det(I - B) = 0, out of reach of
    # local runs. Reversing a cycle permutes the columns of Q = (I - B) Omega^-1/2,
    # so a fit of each cycle-reversed graph maps back to an exact candidate for g.
    for cycle in simple_cycles(g)[:MAX_REVERSAL_SEEDS]:
        h = graph_of_support(reverse_cycle_support(support_of_graph(g), cycle))
        try:
            th = Scorer(sigma_target, 1.0, lam=0.0, restarts=restarts, seed=seed, gtol=gtol, max_iter=2000,
                        require_stable=False).score(h).params
        except (OptimizationFailed, SingularSystem):
            continue
        cand = _unreverse(th, cycle)
        if cand is None:
            continue
        k = kl_gaussian(sigma_target, covariance_of(cand))
        if k < kl:
            params, kl = cand, k
    return params, kl


def _unreverse(th: Parameterization, cycle) -> Optional[Parameterization]:
    Q = (np.eye(len(th.omega)) - th.B) / np.sqrt(th.omega)
    Qg = Q.copy()
    for t, v in enumerate(cycle):
        Qg[:, v] = Q[:, cycle[t - 1]]
    d = np.diag(Qg)
    if np.any(np.abs(d) < 1e-12):
        return None
    B = np.eye(len(d)) - Qg / d
    np.fill_diagonal(B, 0.0)
    return Parameterization(B, 1.0 / d ** 2)


def fit_l1(
    data: Dataset,
    lam1: float = 0.1,
    threshold: float = 0.05,
    max_iter: int = 5000,
    tol: float = 1e-8,
) -> Parameterization:
    """Proximal-gradient l1-penalized MLE over all off-diagonal weights.

    Minimizes ``f(B)/n + lam1 * |B|_1`` (per-sample scaling), keeps iterates
    stable, zeroes ``|B_ij| < threshold`` and refits the noise variances.
    """
    S = data.S
    p = data.p
    mask = 1.0 - np.eye(p)
    B = np.zeros((p, p))
    f, g = concentrated_nll(B, S, 1.0, mask)
    step = 1.0
    for _ in range(max_iter):
        obj = f + lam1 * np.abs(B).sum()
        while True:
            Z = B - step * g
            Bn = np.sign(Z) * np.maximum(np.abs(Z) - step * lam1, 0.0) * mask
            if is_stable(Bn):
                try:
                    fn, gn = concentrated_nll(Bn, S, 1.0, mask)
                except SingularSystem:
                    fn = np.inf
                D = Bn - B
                if np.isfinite(fn) and fn <= f + np.sum(g * D) + np.sum(D * D) / (2 * step) + 1e-15:
                    break
            step *= 0.5
            if step < 1e-14:
                raise OptimizationFailed("l1 line search stalled")
        change = np.max(np.abs(Bn - B))
        B, f, g = Bn, fn, gn
        new_obj = f + lam1 * np.abs(B).sum()
        step = min(step * 2.0, 1.0)
        if change < tol or abs(obj - new_obj) < tol * 1e-2:
            break
    B = np.where(np.abs(B) < threshold, 0.0, B)
    ImB = np.eye(p) - B
    r = np.einsum("ai,ab,bi->i", ImB, S, ImB)
    return Parameterization(B, r)
