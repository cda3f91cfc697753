"""Evaluation protocols: SHD to an equivalence class and multi-domain success rates."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .equivalence import DEFAULT_BUDGET, EquivalenceClass, Verdict, check_equivalent, enumerate_equivalence_class
from .errors import DGLearnError, DimensionMismatch
from .graph import DirectedGraph, shd, support_of_graph
from .scoring import DEFAULT_RESTARTS, fit_kl, fit_l1
from .search import SearchConfig, learn
from .sem import Dataset, covariance_of, random_dg, sample_data, sample_parameters

log = logging.getLogger(__name__)

# learner(data, seed) -> learned structure
Learner = Callable[[Dataset, int], DirectedGraph]


class ClassDistance(NamedTuple):
    shd: int
    upper_bound: bool  # class enumeration hit its budget


def shd_to_class(g_hat: DirectedGraph, cls: EquivalenceClass) -> ClassDistance:
    """Smallest SHD between ``g_hat`` and any member of ``cls``."""
    if g_hat.p != cls.seed.p:
        raise DimensionMismatch(f"graph p={g_hat.p}, class p={cls.seed.p}")
    members = cls.graphs()
    if not members:
        raise ValueError("equivalence class has no graph-representable member")
    return ClassDistance(min(shd(g_hat, m) for m in members), not cls.exhausted)


def resolve_eta(eta: Union[float, str, None], p: int) -> float:
    if eta is None or eta == "auto":
        return p * 1e-3
    eta = float(eta)
    if eta <= 0:
        raise ValueError("eta must be positive")
    return eta


@dataclass
class DomainResult:
    outputs: list  # learned graph per learning domain
    kl: np.ndarray  # kl[i, j]: output i fitted to domain j
    success_rates: list[float]


def domain_success(g_hat: DirectedGraph, sigmas: Sequence[np.ndarray], eta: float,
                   restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> tuple[float, list[float]]:
    """Fraction of target covariances that ``g_hat`` fits to KL below ``eta``.

    Fits range over all admissible parameters of ``g_hat``, stable or not, so
    equivalent outputs reach the same success rate. A failed fit counts as
    ``inf``.
    """
    kls = []
    for sigma in sigmas:
        try:
            _, kl = fit_kl(g_hat, sigma, restarts=restarts, seed=seed, require_stable=False)
        except DGLearnError as exc:
            log.debug("fit_kl failed for %s: %s", g_hat, exc)
            kl = float("inf")
        kls.append(kl)
    return float(np.mean([k < eta for k in kls])), kls


def finite_or_none(values) -> list:
    """JSON-safe copy of a (nested) list of floats: non-finite entries become None."""
    if isinstance(values, (list, tuple, np.ndarray)):
        return [finite_or_none(v) for v in values]
    return float(values) if np.isfinite(values) else None


def multi_domain_eval(
    g_star: DirectedGraph,
    learner: Learner,
    d: int,
    n: int,
    eta: Union[float, str, None],
    rng: np.random.Generator,
    learn_domains: Optional[int] = None,
    kl_restarts: int = DEFAULT_RESTARTS,
) -> DomainResult:
    """Sample ``d`` parameterizations of ``g_star``, learn on each domain's data,
    and score every output by how many of the ``d`` distributions it can fit.

    ``learn_domains`` limits learning to the first few domains (all by default).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    eta = resolve_eta(eta, g_star.p)
    params = [sample_parameters(g_star, rng) for _ in range(d)]
    sigmas = [covariance_of(th) for th in params]
    m = d if learn_domains is None else min(d, learn_domains)
    outputs, rates, rows = [], [], []
    for i in range(m):
        data = sample_data(params[i], n, rng)
        g_hat = learner(data, int(rng.integers(2**31)))
        rate, kls = domain_success(g_hat, sigmas, eta, kl_restarts)
        outputs.append(g_hat)
        rates.append(rate)
        rows.append(kls)
    return DomainResult(outputs, np.array(rows), rates)


def make_learner(name: str, search: Optional[SearchConfig] = None, truth: Optional[DirectedGraph] = None) -> Learner:
    """Learners by name: oracle, empty, hill, tabu, l1."""
    if name == "oracle":
        if truth is None:
            raise ValueError("oracle learner needs the ground truth")
        return lambda data, seed: truth
    if name == "empty":
        return lambda data, seed: DirectedGraph(data.p)
    if name in ("hill", "tabu"):
        base = search or SearchConfig()

        def run(data, seed):
            cfg = dataclasses.replace(base, algorithm=name, seed=seed)
            return learn(data, cfg).graph

        return run
    if name == "l1":
        return lambda data, seed: fit_l1(data).graph()
    raise ValueError(f"unknown learner {name!r}")


@dataclass
class ExperimentConfig:
    p: int = 5
    n_graphs: int = 20
    max_degree: int = 4
    max_cycle_len: int = 5
    n_samples: int = 10_000
    d: int = 10
    eta: Union[float, str, None] = "auto"
    algorithms: list[str] = field(default_factory=lambda: ["tabu"])
    seed: int = 0
    tabu_length: int = 5
    patience: int = 5
    restarts: int = DEFAULT_RESTARTS
    virtual: bool = True
    class_budget: int = DEFAULT_BUDGET
    kl_restarts: int = DEFAULT_RESTARTS
    threads: int = 1
    record_runtime: bool = False  # wall times break byte-identical reports

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        resolve_eta(self.eta, self.p)
        if self.n_graphs < 1 or self.p < 1 or self.n_samples < 1:
            raise ValueError("p, n_graphs and n_samples must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def search_config(self) -> SearchConfig:
        return SearchConfig(tabu_length=self.tabu_length, patience=self.patience,
                            restarts=self.restarts, virtual=self.virtual)


@dataclass
class EvalReport:
    config: dict
    records: list[dict]
    curves: dict

    def to_json(self) -> dict:
        return {"config": self.config, "records": self.records, "curves": self.curves}

    def curves_csv(self) -> str:
        lines = ["algorithm,curve,x,fraction"]
        for algo, c in self.curves.items():
            for x, f in c["shd"]:
                lines.append(f"{algo},shd_at_most,{x},{f!r}")
            for x, f in c["success"]:
                lines.append(f"{algo},success_at_least,{x!r},{f!r}")
        return "\n".join(lines) + "\n"


SUCCESS_GRID = [round(0.1 * t, 1) for t in range(11)]


def shd_curve(values: Sequence[Optional[int]]) -> list[tuple[int, float]]:
    """Fraction of outputs with SHD at most s, for s = 0 .. max; failed runs never count."""
    if not values:
        return []
    top = max([v for v in values if v is not None], default=0)
    return [(s, sum(v is not None and v <= s for v in values) / len(values)) for s in range(top + 1)]


def success_curve(values: Sequence[Optional[float]]) -> list[tuple[float, float]]:
    if not values:
        return []
    return [(r, sum(v is not None and v >= r - 1e-12 for v in values) / len(values)) for r in SUCCESS_GRID]


def _run_graph(cfg: ExperimentConfig, index: int, seq: np.random.SeedSequence) -> list[dict]:
    rng = np.random.default_rng(seq)
    eta = resolve_eta(cfg.eta, cfg.p)
    g_star = random_dg(cfg.p, cfg.max_degree, cfg.max_cycle_len, rng)
    params = [sample_parameters(g_star, rng) for _ in range(cfg.d)]
    sigmas = [covariance_of(th) for th in params]
    data = sample_data(params[0], cfg.n_samples, rng)
    cls = enumerate_equivalence_class(support_of_graph(g_star), cfg.class_budget)
    learn_seed = int(rng.integers(2**31))
    out = []
    for algo in cfg.algorithms:
        rec = {"graph": index, "algorithm": algo, "truth": g_star.to_json()}
        t0 = time.perf_counter()
        try:
            g_hat = make_learner(algo, cfg.search_config(), g_star)(data, learn_seed)
            dist = shd_to_class(g_hat, cls)
            rate, kls = domain_success(g_hat, sigmas, eta, cfg.kl_restarts)
            rec.update(output=g_hat.to_json(), shd_to_class=dist.shd, shd_upper_bound=dist.upper_bound,
                       success_rate=rate, kl=finite_or_none(kls))
        except DGLearnError as exc:
            rec.update(output=None, shd_to_class=None, shd_upper_bound=None, success_rate=None,
                       error={"kind": exc.kind, "message": str(exc)})
        if cfg.record_runtime:
            rec["runtime"] = time.perf_counter() - t0
        out.append(rec)
    return out


def run_experiment(cfg: ExperimentConfig, progress: Optional[Callable[[int], None]] = None) -> EvalReport:
    """Random ground truths, one learning run per algorithm, both evaluations."""
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_graphs)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            per_graph = list(pool.map(lambda t: _run_graph(cfg, *t), enumerate(seqs)))
    else:
        per_graph = []
        for t, seq in enumerate(seqs):
            per_graph.append(_run_graph(cfg, t, seq))
            if progress:
                progress(t)
    records = [r for rs in per_graph for r in rs]
    curves = {}
    for algo in cfg.algorithms:
        rs = [r for r in records if r["algorithm"] == algo]
        curves[algo] = {
            "shd": shd_curve([r["shd_to_class"] for r in rs]),
            "success": success_curve([r["success_rate"] for r in rs]),
        }
    return EvalReport(json.loads(json.dumps(dataclasses.asdict(cfg))), records, curves)


def recovery_trials(
    truth: DirectedGraph,
    n_trials: int,
    n_samples: int,
    search: Optional[SearchConfig] = None,
    seed: int = 0,
    budget: int = DEFAULT_BUDGET,
) -> list[bool]:
    """Fresh parameters and data per trial; True where the learned graph is equivalent to `truth`."""
    base = search or SearchConfig()
    hits = []
    for t, seq in enumerate(np.random.SeedSequence(seed).spawn(n_trials)):
        rng = np.random.default_rng(seq)
        data = sample_data(sample_parameters(truth, rng), n_samples, rng)
        try:
            g_hat = learn(data, dataclasses.replace(base, seed=t)).graph
        except DGLearnError:
            hits.append(False)
            continue
        hits.append(check_equivalent(g_hat, truth, budget).verdict is Verdict.EQUIVALENT)
    return hits
