#!/usr/bin/env python3
"""Estimation experiment: bias, SD and RMSE of the spatial estimate per (space, n, rho0)."""

import argparse
import sys
from pathlib import Path

from sphsar.simulation import RHO_GRID, MetricsTable, preset_config, run_estimation_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--space", nargs="+", default=["s5", "s110"], choices=("s5", "s110"))
    ap.add_argument("--n", nargs="+", type=int, default=[200, 500, 1000])
    ap.add_argument("--rho0", nargs="+", type=float, default=list(RHO_GRID))
    ap.add_argument("--replications", type=int, default=200)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--output", default="-")
    args = ap.parse_args(argv)

    out = MetricsTable(("space", "n", "rho0"))
    for space in args.space:
        for n in args.n:
            cfg = preset_config("table1", space=space, n=n, seed=args.seed, k=args.k, replications=args.replications)
            t = run_estimation_experiment(cfg, rho_grid=args.rho0, workers=args.workers)
            out.rows.extend(t.rows)
            print(f"done {space} n={n}", file=sys.stderr, flush=True)
    text = out.to_csv(None if args.output == "-" else Path(args.output))
    if args.output == "-":
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
