#!/usr/bin/env python3
"""Prediction experiment: leave-last-site-out error and split-conformal coverage and width."""

import argparse
import sys
from pathlib import Path

from sphsar.simulation import MetricsTable, preset_config, run_prediction_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--space", nargs="+", default=["s5"], choices=("s5", "s110"))
    ap.add_argument("--n", nargs="+", type=int, default=[200, 500, 1000])
    ap.add_argument("--rho0", type=float, default=0.4)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--replications", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--output", default="-")
    args = ap.parse_args(argv)

    out = MetricsTable(("space", "n", "measure"))
    for space in args.space:
        for n in args.n:
            cfg = preset_config("table2", space=space, n=n, seed=args.seed, rho0=args.rho0, kappa=args.kappa,
                                replications=args.replications)
            out.rows.extend(run_prediction_experiment(cfg, workers=args.workers, space=space.upper()).rows)
            print(f"done {space} n={n}", file=sys.stderr, flush=True)
    text = out.to_csv(None if args.output == "-" else Path(args.output))
    if args.output == "-":
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
