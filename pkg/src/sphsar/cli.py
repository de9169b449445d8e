"""Command-line interface: ``sphsar {fit,test,predict,conformal,simulate}``.

Exit codes: 0 success, 1 statistical failure, 2 input/output error, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import io as sio
from .conformal import _weight_row, calibrate_split_conformal, predict_point, predicted_transport
from .errors import (AntipodalError, ConvergenceError, DataFormatError, SingularDesignError, SphsarError,
                     UnidentifiedError)
from .embeddings import GridDensity, jensen_shannon, sphere_to_density
from .models import PSSAR, SRMSAR, fit_pssar, fit_srmsar
from .regression import CovariateTable, conditional_frechet_mean
from .simulation import (RHO_GRID, SIGNAL_GRID, preset_config, run_estimation_experiment, run_power_experiment,
                         run_prediction_experiment)
from .sphere import FrechetMeanOptions, HemisphereWarning, UnitVector, geodesic_distance, rodrigues_exp
from .weights import SpatialWeights, grid_first_order_weights

log = logging.getLogger("sphsar")

EXIT_STAT, EXIT_IO, EXIT_CONFIG = 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _alpha(s: str) -> float:
    a = float(s)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _fraction(s: str):
    if s.lower() == "none":
        return None
    f = float(s)
    if not 0 < f <= 1:
        raise argparse.ArgumentTypeError("pca fraction must lie in (0, 1] or be 'none'")
    return f


def _data_args(p, required=True):
    p.add_argument("--data", required=required, help="observations CSV, one row per site")
    p.add_argument("--kind", choices=sio.KINDS, default="unit-vector")
    p.add_argument("--grid-step", type=float, help="grid spacing for density data")
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--weights", help="weight triplets CSV (i, j, w), 0-based")
    g.add_argument("--grid-coords", help="CSV of integer lattice positions; first-order neighbourhood weights")
    p.add_argument("--no-normalize", action="store_true", help="do not row-normalize the weight file")
    p.add_argument("--covariates", help="covariate CSV with a header; selects the regression model")
    p.add_argument("--covariate-columns", help="comma-separated covariate columns (default: all)")
    p.add_argument("--categorical", default="", help="comma-separated categorical covariate columns")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge added to the covariate covariance")
    p.add_argument("--pca-fraction", type=_fraction, default=0.9)
    p.add_argument("--max-iterations", type=int, default=2000, help="Fréchet mean iteration cap")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sphsar", description="Spatial autoregression for data on unit spheres.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="estimate the spatial parameter and write a JSON report")
    _data_args(p)
    p.add_argument("--output", default="-", help="report path (default stdout)")

    p = sub.add_parser("test", help="Wald and bootstrap tests of no spatial dependence")
    _data_args(p)
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="-")

    p = sub.add_parser("predict", help="leave-one-out or new-site predictions")
    _data_args(p, required=False)
    p.add_argument("--fit", help="fit report from 'sphsar fit'; predicts new sites without refitting")
    p.add_argument("--new-weights", help="triplets (r, j, w): new site r's weight on fitted site j")
    p.add_argument("--new-covariates", help="covariate CSV for the new sites (regression model)")
    p.add_argument("--truth", help="observations CSV of the true values at the predicted sites")
    p.add_argument("--output", required=True, help="predictions CSV")

    p = sub.add_parser("conformal", help="split-conformal prediction set for a new site")
    _data_args(p)
    p.add_argument("--alpha", type=_alpha, default=0.1)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--new-weights", required=True, help="triplets (0, j, w) for the new site")
    p.add_argument("--new-covariates", help="one-row covariate CSV for the new site")
    p.add_argument("--candidates", help="observations CSV of candidate objects to test for membership")
    p.add_argument("--output", default="-")

    p = sub.add_parser("simulate", help="run a Monte-Carlo preset and write a CSV table")
    p.add_argument("--preset", choices=("table1", "table2", "power"), required=True)
    p.add_argument("--space", choices=("s5", "s110"), default="s5")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--rho0", type=float, action="append", help="spatial parameter(s); repeatable")
    p.add_argument("--workers", type=int)
    p.add_argument("--output", default="-")
    return ap


# ---------------------------------------------------------------- shared loading

def _split(s):
    return [c.strip() for c in s.split(",") if c.strip()] if s else []


def _load(args):
    Y, q = sio.read_observations(args.data, args.kind, args.grid_step)
    n = Y.shape[0]
    if args.weights:
        W = sio.read_weights(args.weights, n=n, normalize=not args.no_normalize)
    else:
        _, coords = sio._numeric_table(sio._read_rows(args.grid_coords)[1], args.grid_coords)
        try:
            W = grid_first_order_weights(coords)
        except ValueError as exc:
            raise DataFormatError(str(exc)) from None
    if W.n != n:
        raise DataFormatError(f"weights describe {W.n} sites, data has {n}")
    X = names = None
    if args.covariates:
        X, names = sio.read_covariates(args.covariates, _split(args.covariate_columns), _split(args.categorical))
        if X.shape[0] != n:
            raise DataFormatError(f"covariates have {X.shape[0]} rows, data has {n}")
    if args.max_iterations < 1:
        raise ConfigError("--max-iterations must be >= 1")
    opts = FrechetMeanOptions(max_iterations=args.max_iterations)
    return Y, q, W, X, names, opts


def _fit(Y, q, W, X, opts, args):
    if X is None:
        return fit_pssar(Y, W, quadrature=q, opts=opts, pca_fraction=args.pca_fraction)
    return fit_srmsar(Y, X, W, quadrature=q, opts=opts, pca_fraction=args.pca_fraction, ridge=args.ridge)


def fit_report(fit, W: SpatialWeights, names=None) -> dict:
    mom = fit.sar.moments
    rep = {
        "model": fit.kind,
        "n": fit.n,
        "estimate": fit.estimate,
        "solution_kind": fit.sar.gmm.kind,
        "objective_roots": list(fit.sar.objective_roots),
        "polynomial": {"a": fit.sar.gmm.polynomial.a, "b": fit.sar.gmm.polynomial.b, "c": fit.sar.gmm.polynomial.c},
        "interval": [fit.sar.gmm.interval.lo, fit.sar.gmm.interval.hi],
        "residual_norms": fit.sar.residuals.norms().tolist(),
        "moments": {"w1": mom.w1, "w2": mom.w2, "w3": mom.w3, "w4": mom.w4, "w5": mom.w5, "pca_rank": mom.pca_rank},
        "pca_fraction": fit.sar.pca_fraction,
        "transports": sio.family_record(fit.transports),
        "quadrature": None if fit.quadrature is None else fit.quadrature.tolist(),
    }
    try:
        wald = fit.wald()
        rep["wald"] = {"statistic": wald.statistic, "p_value": wald.p_value}
    except SphsarError as exc:
        rep["wald"] = {"error": str(exc)}
    if fit.kind == PSSAR:
        rep["center"] = fit.center.coords.tolist()
    else:
        rep["points"] = fit.points.tolist()
        rep["covariates"] = fit.table.X.tolist()
        rep["covariate_names"] = names
        rep["ridge"] = fit.table.ridge
        rep["site_means"] = fit.base.tolist()
    return rep


def predict_from_report(report: dict, new_row, x_new=None, opts: FrechetMeanOptions | None = None) -> UnitVector:
    """Prediction at a new site from a fit report alone."""
    fam = sio.family_from_record(report["transports"])
    q = None if report.get("quadrature") is None else np.asarray(report["quadrature"], float)
    w = _weight_row(new_row, len(fam))
    T = predicted_transport(fam, float(report["estimate"]), w)
    if report["model"] == PSSAR:
        base = UnitVector(np.asarray(report["center"], float), q)
    else:
        table = CovariateTable(np.asarray(report["covariates"], float), ridge=report.get("ridge", 0.0))
        base = conditional_frechet_mean(np.asarray(report["points"], float), table, x_new, opts, quadrature=q)
    return rodrigues_exp(T, base)


def _new_rows(path, n_fit: int):
    if path is None:
        return None
    _, rows = sio._read_rows(path)
    if rows and not all(sio._is_number(c) for c in rows[0]):
        rows = rows[1:]
    trip = [(int(r[0]), int(r[1]), float(r[2])) for r in rows]
    m = max(t[0] for t in trip) + 1 if trip else 0
    M = np.zeros((m, n_fit))
    for r, j, w in trip:
        if j >= n_fit:
            raise DataFormatError(f"new-site weight refers to site {j} of {n_fit}")
        M[r, j] += w
    sums = M.sum(axis=1, keepdims=True)
    return np.divide(M, sums, out=np.zeros_like(M), where=sums > 0)


# ---------------------------------------------------------------- commands

def _summary(args, line: str):
    # JSON already owns stdout when no output file is given
    if args.output != "-":
        print(line)


def cmd_fit(args):
    Y, q, W, X, names, opts = _load(args)
    fit = _fit(Y, q, W, X, opts, args)
    sio.write_json(args.output, fit_report(fit, W, names))
    _summary(args, f"{fit.kind}: rho_hat = {fit.estimate:.6g} ({fit.sar.gmm.kind}) over {fit.n} sites")
    return 0


def cmd_test(args):
    Y, q, W, X, names, opts = _load(args)
    fit = _fit(Y, q, W, X, opts, args)
    wald = fit.wald()
    boot = fit.bootstrap(alpha=args.alpha, B=args.B, seed=args.seed)
    rep = {
        "model": fit.kind,
        "estimate": fit.estimate,
        "alpha": args.alpha,
        "wald": {"statistic": wald.statistic, "p_value": wald.p_value, "reject": bool(wald.p_value < args.alpha),
                 "pca_fraction": args.pca_fraction},
        "bootstrap": {"B": args.B, "seed": args.seed, "ci_lo": boot.ci_lo, "ci_hi": boot.ci_hi,
                      "reject": boot.reject, "failed_replicates": boot.n_failed},
    }
    sio.write_json(args.output, rep)
    _summary(args, f"rho_hat = {fit.estimate:.6g}; Wald p = {wald.p_value:.4g}; "
                   f"bootstrap interval [{boot.ci_lo:.4g}, {boot.ci_hi:.4g}], reject = {boot.reject}")
    return 0


def _truth(args, m):
    if not args.truth:
        return None
    T, _ = sio.read_observations(args.truth, args.kind, args.grid_step)
    if T.shape[0] != m:
        raise DataFormatError(f"truth has {T.shape[0]} rows for {m} predictions")
    return T


def _predict_report(args):
    if not args.new_weights:
        raise ConfigError("--fit needs --new-weights")
    rep = sio.read_json(args.fit)
    try:
        n, model = int(rep["n"]), rep["model"]
        q = None if rep.get("quadrature") is None else np.asarray(rep["quadrature"], float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{args.fit}: not a fit report ({exc})") from None
    rows = _new_rows(args.new_weights, n)
    Xn = None
    if model == SRMSAR:
        if not args.new_covariates:
            raise ConfigError("--new-covariates is required for the regression model")
        Xn, _ = sio.read_covariates(args.new_covariates, _split(args.covariate_columns) or rep["covariate_names"],
                                    _split(args.categorical))
    opts = FrechetMeanOptions(max_iterations=args.max_iterations)
    preds = [predict_from_report(rep, row, None if Xn is None else Xn[r], opts).coords for r, row in enumerate(rows)]
    return np.vstack(preds), q, _truth(args, len(rows))


def cmd_predict(args):
    if args.fit:
        P, q, truth = _predict_report(args)
        return _write_predictions(args, P, q, truth)
    if not args.data or not (args.weights or args.grid_coords):
        raise ConfigError("predict needs --data and --weights/--grid-coords, or --fit")
    Y, q, W, X, names, opts = _load(args)
    n = Y.shape[0]
    preds = []
    if args.new_weights:
        fit = _fit(Y, q, W, X, opts, args)
        rows = _new_rows(args.new_weights, n)
        Xn = None
        if fit.kind == SRMSAR:
            if not args.new_covariates:
                raise ConfigError("--new-covariates is required for the regression model")
            Xn, _ = sio.read_covariates(args.new_covariates, _split(args.covariate_columns) or names,
                                        _split(args.categorical))
        for r, row in enumerate(rows):
            preds.append(predict_point(fit, row, x_new=None if Xn is None else Xn[r]).coords)
        truth = _truth(args, len(rows))
    else:
        # leave-one-out: drop site i, renormalize the remaining rows, predict from row i
        for i in range(n):
            keep = np.delete(np.arange(n), i)
            Wi = W.subset(keep)
            row = np.asarray(W.matrix[i].toarray()).ravel()[keep]
            s = row.sum()
            row = row / s if s > 0 else row
            Xi = None if X is None else X[keep]
            fit = _fit(Y[keep], q, Wi, Xi, opts, args)
            preds.append(predict_point(fit, row, x_new=None if X is None else X[i]).coords)
        truth = Y if not args.truth else _truth(args, n)
    return _write_predictions(args, np.vstack(preds), q, truth)


def _write_predictions(args, P, q, truth):
    extra = {}
    if truth is not None:
        extra["angle_error"] = [geodesic_distance(UnitVector.normalized(a, q), UnitVector.normalized(b, q))
                                for a, b in zip(P, truth)]
        if args.kind == "density":
            step = float(q[0])
            extra["jensen_shannon"] = [jensen_shannon(sphere_to_density(a, step), sphere_to_density(b, step))
                                       for a, b in zip(P, truth)]
        print(f"mean angle error {np.mean(extra['angle_error']):.6g} over {len(P)} sites")
    sio.write_points(args.output, P, args.kind, q, extra)
    return 0


def cmd_conformal(args):
    Y, q, W, X, names, opts = _load(args)
    n = Y.shape[0]
    kind = PSSAR if X is None else SRMSAR
    sc = calibrate_split_conformal(Y, W, args.split_seed, kind, X=X, quadrature=q, opts=opts, ridge=args.ridge)
    row = _new_rows(args.new_weights, n)[0]
    x_new = None
    if kind == SRMSAR:
        if not args.new_covariates:
            raise ConfigError("--new-covariates is required for the regression model")
        x_new = sio.read_covariates(args.new_covariates, _split(args.covariate_columns) or names,
                                    _split(args.categorical))[0][0]
    cs = sc.prediction_set(row, args.alpha, x_new)
    rec = cs.to_record()
    rec.update(model=kind, split_seed=args.split_seed, n_train=int(sc.train.size), n_cal=int(sc.cal.size),
               rho_train=sc.rho)
    if args.candidates:
        C, _ = sio.read_observations(args.candidates, args.kind, args.grid_step)
        rec["membership"] = [cs.contains(UnitVector.normalized(c, q)) for c in C]
        rec["scores"] = [cs.score(UnitVector.normalized(c, q)) for c in C]
    sio.write_json(args.output, rec)
    _summary(args, f"radius {cs.radius:.6g} at alpha = {args.alpha} from {sc.cal.size} calibration sites")
    return 0


def cmd_simulate(args):
    over = {k: getattr(args, k) for k in ("replications", "B", "k", "kappa") if getattr(args, k) is not None}
    cfg = preset_config(args.preset, space=args.space, n=args.n, seed=args.seed, **over)
    if args.preset == "table1":
        table = run_estimation_experiment(cfg, rho_grid=args.rho0 or RHO_GRID, workers=args.workers)
    elif args.preset == "power":
        table = run_power_experiment(cfg, rho_grid=args.rho0 or SIGNAL_GRID, workers=args.workers)
    else:
        rhos = args.rho0 or [cfg.rho0]
        table = None
        for r in rhos:
            t = run_prediction_experiment(replace(cfg, rho0=r), workers=args.workers)
            if table is None:
                table = t
            else:
                table.rows.extend(t.rows)
    text = table.to_csv(None if args.output == "-" else args.output)
    if args.output == "-":
        sys.stdout.write(text)
    return 0


COMMANDS = {"fit": cmd_fit, "test": cmd_test, "predict": cmd_predict, "conformal": cmd_conformal,
            "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", HemisphereWarning)
    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, PermissionError, IsADirectoryError, DataFormatError) as exc:
        print(f"sphsar: input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UnidentifiedError, ConvergenceError, SingularDesignError, AntipodalError) as exc:
        print(f"sphsar: statistical failure: {exc}", file=sys.stderr)
        return EXIT_STAT
    except (ConfigError, ValueError) as exc:
        print(f"sphsar: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
