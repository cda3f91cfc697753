"""Effect of sample size on the learners at p=5 (n = 1e3, 1e4, 1e5).

    python scripts/sample_size_study.py --graphs 20 --outdir results/
"""
import argparse
import json
from pathlib import Path

from dglearn.evaluation import ExperimentConfig, run_experiment

from desk_experiment import summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--graphs", type=int, default=20)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    ap.add_argument("--algorithms", nargs="+", default=["tabu", "hill", "l1"])
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default=None)
    args = ap.parse_args()

    for n in args.sizes:
        cfg = ExperimentConfig(p=5, n_graphs=args.graphs, n_samples=n, d=args.d, algorithms=args.algorithms,
                               seed=args.seed)
        print(f"n = {n}", flush=True)
        report = run_experiment(cfg)
        summarize(report)
        if args.outdir:
            out = Path(args.outdir)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"n{n}.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True))
            (out / f"n{n}_curves.csv").write_text(report.curves_csv())


if __name__ == "__main__":
    main()
