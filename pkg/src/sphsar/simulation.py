"""Seeded data generators and Monte-Carlo experiment runners.

Every replicate draws from its own stream spawned from one
:class:`numpy.random.SeedSequence`, so a (config, seed) pair fixes every
number in the output regardless of the worker count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .bootstrap import bootstrap_null_test
from .conformal import calibrate_split_conformal, predict_point
from .family import TransportFamily
from .gmm import fit_sar, wald_statistic
from .models import PSSAR, SRMSAR, fit_pssar
from .sphere import FrechetMeanOptions, HemisphereWarning, UnitVector, geodesic_distance, transport_between
from .weights import SpatialWeights, admissible_rho_interval, knn_random_weights, s_matrix

log = logging.getLogger(__name__)

SIGNAL_GRID = (0.0, 0.1, -0.3, 0.4, -0.7, 0.9)
RHO_GRID = (-0.7, -0.3, 0.0, 0.1, 0.4, 0.9)
WORKERS_ENV = "SPHSAR_WORKERS"


# ---------------------------------------------------------------- vMF sampling

def _wood_cosines(kappa: float, m: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Cosine to the mean direction under vMF(kappa) on S^{m-1} (Wood's rejection scheme)."""
    d1 = m - 1.0
    b = d1 / (2.0 * kappa + math.sqrt(4.0 * kappa**2 + d1**2))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d1 * math.log(1.0 - x0**2)
    out = np.empty(size)
    filled = 0
    while filled < size:
        k = size - filled
        z = rng.beta(d1 / 2.0, d1 / 2.0, size=k)
        u = rng.uniform(size=k)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        ok = kappa * w + d1 * np.log(1.0 - x0 * w) - c >= np.log(u)
        acc = w[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def sample_vmf(mean_dir, kappa: float, rng: np.random.Generator, size: int | None = None):
    """Draw from the von Mises-Fisher law on the unit sphere of ``R^m``.

    Returns one :class:`UnitVector` when ``size`` is None, else an
    ``(size, m)`` array of unit rows.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    mu = np.asarray(getattr(mean_dir, "coords", mean_dir), dtype=float)
    m = mu.size
    if m < 2:
        raise ValueError("need dimension >= 2")
    k = 1 if size is None else size
    w = _wood_cosines(float(kappa), m, k, rng)
    v = rng.standard_normal((k, m))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = w[:, None] * mu + np.sqrt(np.maximum(1.0 - w**2, 0.0))[:, None] * v
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return UnitVector(x[0]) if size is None else x


def uniform_mean_direction(m: int) -> np.ndarray:
    return np.full(m, 1.0 / math.sqrt(m))


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class SimConfig:
    model_kind: str = PSSAR
    n: int = 200
    m: int = 6
    rho0: float = 0.0
    k: int = 10
    kappa: float = 1.0
    replications: int = 200
    B: int = 500
    alphas: tuple[float, ...] = (0.05, 0.10, 0.20)
    seed: int = 0
    pca_fraction: float | None = 0.90
    test_alpha: float = 0.05
    p: int = 2
    covariate_scale: float = 0.25
    frechet_max_iterations: int = 2000

    @property
    def frechet_options(self) -> FrechetMeanOptions:
        return FrechetMeanOptions(max_iterations=self.frechet_max_iterations, check_support=False)

    def __post_init__(self):
        if self.model_kind not in (PSSAR, SRMSAR):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 1 <= self.k < self.n:
            raise ValueError("need 1 <= k < n")
        if self.m < 2:
            raise ValueError("need m >= 2")
        if not -1.0 < self.rho0 < 1.0:
            raise ValueError("rho0 outside the admissible interval")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


def neighbour_schedule(n: int) -> int:
    """The growing-neighbourhood preset: 10, 20, 30 neighbours at 200, 500, 1000 sites."""
    return {200: 10, 500: 20, 1000: 30}.get(n, max(10, round(10 * (n / 200) ** 0.68)))


def replicate_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


# ---------------------------------------------------------------- datasets

@dataclass(frozen=True, eq=False)
class SimDataset:
    transports: TransportFamily
    points: np.ndarray
    W: SpatialWeights
    mean_dir: np.ndarray
    errors: TransportFamily
    rho0: float
    covariates: np.ndarray | None = None
    site_means: np.ndarray | None = None


def _spatial_mix(W: SpatialWeights, rho: float, coef: np.ndarray) -> np.ndarray:
    """``S(rho)^{-1} coef`` by a sparse LU solve."""
    if rho == 0.0:
        return coef.copy()
    lu = splu(sparse.csc_matrix(s_matrix(W, rho)))
    return lu.solve(np.asarray(coef, dtype=float))


def _errors(cfg: SimConfig, mu: np.ndarray, rng) -> TransportFamily:
    draws = sample_vmf(mu, cfg.kappa, rng, size=cfg.n)
    return TransportFamily.logs(mu, draws)


def generate_pssar_dataset(cfg: SimConfig, rng: np.random.Generator, W: SpatialWeights | None = None) -> SimDataset:
    """Transports ``q = S(rho0)^{-1} eps`` with vMF errors around ``1_m / sqrt(m)``."""
    W = W if W is not None else knn_random_weights(cfg.n, cfg.k, rng)
    if cfg.rho0 != 0.0 and cfg.rho0 not in admissible_rho_interval(W):
        raise ValueError("rho0 outside the admissible interval")
    mu = uniform_mean_direction(cfg.m)
    eps = _errors(cfg, mu, rng)
    q = TransportFamily(_spatial_mix(W, cfg.rho0, eps.coef), eps.za, eps.zb)
    y = q.exp_at(mu)
    return SimDataset(q, y, W, mu, eps, cfg.rho0)


def covariate_operators(m: int, p: int):
    """Mean direction ``mu`` and orthonormal ``u_d`` perpendicular to it.

    The covariate generators are ``A_d = covariate_scale * (u_d o mu - mu o u_d)``.
    """
    mu = uniform_mean_direction(m)
    if p > m - 1:
        raise ValueError("need p <= m - 1 covariate directions")
    basis = np.eye(m)[:p] - np.outer(np.eye(m)[:p] @ mu, mu)
    u, _ = np.linalg.qr(basis.T)
    return mu, u.T[:p]


def generate_srmsar_dataset(cfg: SimConfig, rng: np.random.Generator) -> SimDataset:
    """Regression data: ``mu_i = exp(sum_d x_id A_d) mu`` and ``y_i = exp(xi_i) mu_i``.

    With ``covariate_scale = 0`` every site mean is ``mu`` and the draw
    coincides with :func:`generate_pssar_dataset` for the same stream.
    """
    W = knn_random_weights(cfg.n, cfg.k, rng)
    mu, U = covariate_operators(cfg.m, cfg.p)
    eps = _errors(cfg, mu, rng)
    X = rng.standard_normal((cfg.n, cfg.p))
    xi = TransportFamily(_spatial_mix(W, cfg.rho0, eps.coef), eps.za, eps.zb)
    # rotation in span(mu, U' x_i) by angle scale * |x_i|
    t = cfg.covariate_scale * (X @ U)
    ang = np.linalg.norm(t, axis=1)
    dirs = np.divide(t, ang[:, None], out=np.zeros_like(t), where=ang[:, None] > 0)
    site_means = np.cos(ang)[:, None] * mu + np.sin(ang)[:, None] * dirs
    site_means /= np.linalg.norm(site_means, axis=1, keepdims=True)
    y = xi.exp_at(site_means)
    return SimDataset(xi, y, W, mu, eps, cfg.rho0, X, site_means)


# ---------------------------------------------------------------- metrics

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if not math.isfinite(v) else format(v, ".17g")
    return str(v)


@dataclass
class MetricsTable:
    """Long-format rows keyed by setting columns; CSV at full double precision."""

    key_columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    @property
    def columns(self) -> list[str]:
        cols = list(self.key_columns)
        for r in self.rows:
            cols.extend(c for c in r if c not in cols)
        return cols

    def sorted_rows(self) -> list[dict]:
        return sorted(self.rows, key=lambda r: tuple(str(r.get(c)) for c in self.key_columns))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        cols = self.columns
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in self.sorted_rows():
            wr.writerow([_fmt(r.get(c, "")) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def lookup(self, **keys) -> dict:
        hits = [r for r in self.rows if all(r.get(k) == v for k, v in keys.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {keys}")
        return hits[0]


def estimation_summary(estimates, rho0: float) -> dict:
    est = np.asarray(estimates, dtype=float)
    bias = float(est.mean() - rho0)
    sd = float(est.std())
    return {"bias": bias, "sd": sd, "rmse": math.sqrt(sd**2 + bias**2), "replications": int(est.size)}


# ---------------------------------------------------------------- replicate workers

def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _run(fn: Callable, cfg: SimConfig, count: int, workers: int | None, seed: int | None = None) -> list:
    seeds = np.random.SeedSequence(cfg.seed if seed is None else seed).spawn(count)
    args = [(cfg, s) for s in seeds]
    nw = _workers(workers)
    if nw == 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=nw) as ex:
        return list(ex.map(fn, args, chunksize=max(1, count // (4 * nw))))


def _estimate_once(args) -> float:
    cfg, ss = args
    rng = np.random.default_rng(ss)
    data = generate_pssar_dataset(cfg, rng)
    return fit_sar(data.transports, data.W, pca_fraction=None).estimate


def _power_once(args) -> tuple[float, bool, bool]:
    cfg, ss = args
    rng = np.random.default_rng(ss)
    data = generate_pssar_dataset(cfg, rng)
    fit = fit_sar(data.transports, data.W, pca_fraction=cfg.pca_fraction)
    wald = wald_statistic(fit)
    boot_seed = int(rng.integers(0, 2**63 - 1))
    boot = bootstrap_null_test(fit.gram, fit.weights, fit.instrument, fit.estimate,
                               alpha=cfg.test_alpha, B=cfg.B, seed=boot_seed, interval=fit.gmm.interval)
    return fit.estimate, bool(wald.p_value < cfg.test_alpha), boot.reject


def _predict_once(args) -> dict:
    cfg, ss = args
    rng = np.random.default_rng(ss)
    data = generate_pssar_dataset(cfg, rng)
    n = cfg.n
    keep = np.arange(n - 1)
    Wfit = data.W.subset(keep)
    row = np.asarray(data.W.matrix[n - 1, :n - 1].toarray()).ravel()
    Yfit = data.points[: n - 1]
    truth = UnitVector.normalized(data.points[n - 1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HemisphereWarning)
        fit = fit_pssar(Yfit, Wfit, opts=cfg.frechet_options, pca_fraction=None)
        yhat = predict_point(fit, row)
        split_seed = int(rng.integers(0, 2**63 - 1))
        sc = calibrate_split_conformal(Yfit, Wfit, split_seed, opts=cfg.frechet_options)
    out = {"rho_hat": fit.estimate, "error": geodesic_distance(yhat, truth)}
    base = sc.base_for()
    center = sc.center(row)
    score = float((transport_between(base, truth) - center).norm())
    out["score"] = score
    for a in cfg.alphas:
        r = sc.radius(a)
        out[f"radius_{a}"] = r
        out[f"covered_{a}"] = score <= r
    return out


# ---------------------------------------------------------------- experiments

def run_estimation_experiment(cfg: SimConfig, *, rho_grid: Sequence[float] | None = None,
                              workers: int | None = None, space: str | None = None) -> MetricsTable:
    """Bias, SD and RMSE of the spatial estimate fitted on directly generated transports."""
    table = MetricsTable(("space", "n", "rho0"))
    for rho0 in (rho_grid if rho_grid is not None else (cfg.rho0,)):
        c = replace(cfg, rho0=float(rho0))
        est = _run(_estimate_once, c, c.replications, workers)
        table.add(space=space or f"S{c.m - 1}", n=c.n, rho0=float(rho0), k=c.k, **estimation_summary(est, rho0))
    return table


def run_power_experiment(cfg: SimConfig, *, rho_grid: Sequence[float] = SIGNAL_GRID,
                         workers: int | None = None, space: str | None = None) -> MetricsTable:
    """Rejection rates of the Wald and bootstrap tests of ``rho = 0`` per signal strength."""
    table = MetricsTable(("space", "n", "signal"))
    for signal, rho0 in enumerate(rho_grid):
        c = replace(cfg, rho0=float(rho0))
        res = _run(_power_once, c, c.replications, workers)
        wald = np.mean([r[1] for r in res])
        boot = np.mean([r[2] for r in res])
        table.add(space=space or f"S{c.m - 1}", n=c.n, signal=signal, rho0=float(rho0), k=c.k,
                  wald_power=float(wald), bootstrap_power=float(boot), replications=c.replications)
    return table


def run_prediction_experiment(cfg: SimConfig, *, workers: int | None = None, space: str | None = None) -> MetricsTable:
    """Leave-last-site-out prediction error and split-conformal coverage and width."""
    res = _run(_predict_once, cfg, cfg.replications, workers)
    table = MetricsTable(("space", "n", "measure"))
    sp = space or f"S{cfg.m - 1}"
    table.add(space=sp, n=cfg.n, measure="prediction_error", value=float(np.mean([r["error"] for r in res])),
              rho0=cfg.rho0)
    for a in cfg.alphas:
        level = round(1 - a, 10)
        table.add(space=sp, n=cfg.n, measure=f"coverage_{level}", value=float(np.mean([r[f"covered_{a}"] for r in res])),
                  rho0=cfg.rho0)
        table.add(space=sp, n=cfg.n, measure=f"width_{level}", value=float(np.mean([r[f"radius_{a}"] for r in res])),
                  rho0=cfg.rho0)
    return table


# ---------------------------------------------------------------- presets

PRESETS = {
    "table1": dict(m=6, k=10, replications=200),
    "table2": dict(m=6, k=10, replications=200, rho0=0.4),
    "power": dict(m=6, k=10, replications=200, B=500),
}

SPACES = {"s5": 6, "s110": 111}


def preset_config(name: str, *, space: str = "s5", n: int = 200, seed: int = 0, **overrides) -> SimConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if space not in SPACES:
        raise ValueError(f"unknown space {space!r}; choose from {sorted(SPACES)}")
    kw = dict(PRESETS[name], m=SPACES[space], n=n, seed=seed)
    kw.update(overrides)
    return SimConfig(**kw)


def config_dict(cfg: SimConfig) -> dict:
    return asdict(cfg)
