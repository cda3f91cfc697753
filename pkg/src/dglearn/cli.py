"""Command-line interface. Results go to stdout as JSON; diagnostics go to stderr.

Exit codes: 0 success, 1 domain error (JSON error object on stdout), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .equivalence import DEFAULT_BUDGET, check_equivalent, enumerate_equivalence_class, is_reducible
from .errors import DGLearnError, ParseError
from .evaluation import ExperimentConfig, finite_or_none, make_learner, multi_domain_eval, run_experiment, shd_to_class
from .graph import DirectedGraph, support_of_graph
from .scoring import DEFAULT_RESTARTS, fit_l1
from .search import SearchConfig, learn
from .sem import Dataset, Parameterization, random_dg, sample_data, sample_parameters

log = logging.getLogger("dglearn")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _graph(path) -> DirectedGraph:
    return DirectedGraph.from_json(_read_json(path))


def _params(path) -> Parameterization:
    return Parameterization.from_json(_read_json(path))


def _rng(args) -> np.random.Generator:
    return np.random.default_rng(args.seed)


def _threads(args) -> int:
    if args.threads:
        return args.threads
    try:
        return max(1, int(os.environ.get("DGLEARN_THREADS", "1")))
    except ValueError:
        return 1


# ---- equiv ----

def cmd_equiv_check(args):
    res = check_equivalent(_graph(args.g1), _graph(args.g2), args.budget)
    return res.to_json()


def cmd_equiv_enumerate(args):
    g = _graph(args.graph)
    cls = enumerate_equivalence_class(support_of_graph(g), args.budget)
    if not cls.exhausted:
        log.warning("enumeration stopped at the budget; the class may be larger")
    return [h.to_json() for h in cls.graphs()]


def cmd_equiv_reduce(args):
    return is_reducible(_graph(args.graph), args.budget).to_json()


# ---- simulate ----

def cmd_simulate_graph(args):
    g = random_dg(args.p, args.max_degree, args.max_cycle_len, _rng(args), n_edges=args.edges)
    return g.to_json()


def cmd_simulate_params(args):
    g = _graph(args.graph)
    th = sample_parameters(g, _rng(args), weight_range=(args.weight_low, args.weight_high),
                           variance_range=(args.var_low, args.var_high))
    return th.to_json()


def cmd_simulate_data(args):
    data = sample_data(_params(args.params), args.n, _rng(args))
    data.to_csv(args.out)
    return {"path": str(args.out), "n": data.n, "p": data.p}


# ---- learn ----

def _search_config(args, algorithm) -> SearchConfig:
    return SearchConfig(
        algorithm=algorithm, tabu_length=args.tabu_length, patience=args.patience,
        restarts=args.restarts, seed=args.seed, max_iterations=args.max_iterations,
        lam=args.lam, virtual=not args.no_virtual, threads=_threads(args),
    )


def cmd_learn(args):
    data = Dataset.from_csv(args.data)
    if args.algo == "l1":
        params = fit_l1(data)
        return {"graph": params.graph().to_json(), "params": params.to_json()}
    init = _graph(args.init) if args.init else None
    if init is not None and init.p != data.p:
        raise ParseError(f"init graph has p={init.p}, data has p={data.p}")
    model = learn(data, _search_config(args, args.algo), init)
    log.info("learned %s (score %.3f)", model.graph, model.score)
    return {"graph": model.graph.to_json(), "params": model.params.to_json(), "report": model.report()}


# ---- evaluate ----

def cmd_evaluate_shd(args):
    truth, out = _graph(args.truth), _graph(args.output)
    cls = enumerate_equivalence_class(support_of_graph(truth), args.budget)
    dist = shd_to_class(out, cls)
    return {"shd": dist.shd, "upper_bound": dist.upper_bound, "class_size": len(cls)}


def cmd_evaluate_multidomain(args):
    truth = _graph(args.truth)
    learner = make_learner(args.algo, _search_config(args, "tabu"), truth)
    res = multi_domain_eval(truth, learner, args.d, args.n, args.eta, _rng(args),
                            learn_domains=args.learn_domains)
    return {
        "success_rates": res.success_rates,
        "outputs": [g.to_json() for g in res.outputs],
        "kl": finite_or_none(res.kl),
    }


# ---- experiment ----

def cmd_experiment_run(args):
    obj = _read_json(args.config)
    if not isinstance(obj, dict):
        raise ParseError("experiment config must be a JSON object")
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.threads:
        obj["threads"] = args.threads
    try:
        cfg = ExperimentConfig.from_dict(obj)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad experiment config: {exc}") from exc
    report = run_experiment(cfg, progress=lambda t: log.info("graph %d/%d done", t + 1, cfg.n_graphs))
    Path(args.out).write_text(json.dumps(report.to_json(), indent=1) + "\n")
    if args.emit_curves:
        Path(args.emit_curves).write_text(report.curves_csv())
    n_ok = sum(r["shd_to_class"] is not None for r in report.records)
    return {"report": str(args.out), "records": len(report.records), "completed": n_ok,
            "curves": report.curves}


def _add_search_args(p):
    p.add_argument("--tabu-length", type=int, default=5)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS, help="optimizer restarts per cyclic block")
    p.add_argument("--max-iterations", type=int, default=1000)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="l0 penalty (default 0.5 log n)")
    p.add_argument("--no-virtual", action="store_true", help="disable the virtual-edge moves")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dglearn", description="Equivalence and structure learning for linear Gaussian directed graphs.")
    ap.add_argument("--version", action="version", version=f"dglearn {__version__}")
    ap.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    ap.add_argument("--threads", type=int, default=0, help="worker threads (default $DGLEARN_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    eq = sub.add_parser("equiv", help="equivalence queries").add_subparsers(dest="sub", required=True)
    p = eq.add_parser("check")
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_equiv_check)
    p = eq.add_parser("enumerate")
    p.add_argument("--graph", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_equiv_enumerate)
    p = eq.add_parser("reduce")
    p.add_argument("--graph", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_equiv_reduce)

    sim = sub.add_parser("simulate", help="random graphs, parameters and data").add_subparsers(dest="sub", required=True)
    p = sim.add_parser("graph")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--max-degree", type=int, default=4)
    p.add_argument("--max-cycle-len", type=int, default=5)
    p.add_argument("--edges", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_simulate_graph)
    p = sim.add_parser("params")
    p.add_argument("--graph", required=True)
    p.add_argument("--weight-low", type=float, default=0.2)
    p.add_argument("--weight-high", type=float, default=0.8)
    p.add_argument("--var-low", type=float, default=1.0)
    p.add_argument("--var-high", type=float, default=3.0)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_simulate_params)
    p = sim.add_parser("data")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_simulate_data)

    p = sub.add_parser("learn", help="learn a structure from data")
    p.add_argument("--data", required=True)
    p.add_argument("--algo", choices=["tabu", "hill", "l1"], default="tabu")
    p.add_argument("--init", default=None)
    p.add_argument("--seed", type=int, required=True)
    _add_search_args(p)
    p.set_defaults(func=cmd_learn)

    ev = sub.add_parser("evaluate", help="evaluation protocols").add_subparsers(dest="sub", required=True)
    p = ev.add_parser("shd")
    p.add_argument("--truth", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_evaluate_shd)
    p = ev.add_parser("multidomain")
    p.add_argument("--truth", required=True)
    p.add_argument("--algo", choices=["tabu", "hill", "l1", "oracle", "empty"], default="tabu")
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--eta", default="auto")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--learn-domains", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    _add_search_args(p)
    p.set_defaults(func=cmd_evaluate_multidomain)

    ex = sub.add_parser("experiment", help="end-to-end experiments").add_subparsers(dest="sub", required=True)
    p = ex.add_parser("run")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-curves", default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_experiment_run)
    return ap


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "eta", None) not in (None, "auto"):
        try:
            if float(args.eta) <= 0:
                raise ValueError
        except ValueError:
            parser.error("--eta must be 'auto' or a positive number")
    try:
        _emit(args.func(args))
    except DGLearnError as exc:
        _emit({"error": exc.kind, "message": str(exc)})
        return 1
    except OSError as exc:
        _emit({"error": "io", "message": str(exc)})
        return 1
    except ValueError as exc:
        parser.error(str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
