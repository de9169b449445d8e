"""Point prediction at a new site and split-conformal prediction sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .family import TransportFamily
from .gmm import DEFAULT_PCA_FRACTION, fit_sar
from .models import PSSAR, SRMSAR, ModelFit
from .regression import CovariateTable, conditional_frechet_mean, conditional_means
from .sphere import (FrechetMeanOptions, TransportMap, UnitVector, as_points, frechet_mean, rodrigues_exp,
                     transport_between)
from .weights import SpatialWeights, _as_csr


def _weight_row(new_row, n: int) -> np.ndarray:
    w = np.asarray(new_row.toarray() if hasattr(new_row, "toarray") else new_row, dtype=float).reshape(-1)
    if w.size != n:
        raise ValueError(f"weight row has {w.size} entries for {n} sites")
    if np.any(w < 0):
        raise ValueError("weight row must be nonnegative")
    s = w.sum()
    if s != 0 and abs(s - 1.0) > 1e-12:
        raise ValueError(f"weight row sums to {s!r}, expected 0 or 1")
    return w


def predicted_transport(family: TransportFamily, rho: float, new_row) -> TransportMap:
    """``qbar + rho * sum_j w_j (q_j - qbar)``."""
    w = np.asarray(new_row, dtype=float).reshape(-1)
    mean = family.mean_coef()
    c = mean + rho * (w @ (family.coef - mean))
    return family.map_from_coef(c)


def predict_point(fit: ModelFit, new_row, mean: UnitVector | None = None, *, x_new=None) -> UnitVector:
    """Predict the observation at a new site from its weight row over the fitted sites.

    ``mean`` is the base point the predicted transport is exponentiated at;
    by default the fitted Fréchet mean (pure model) or the conditional mean at
    ``x_new`` (regression model).
    """
    w = _weight_row(new_row, fit.n)
    T = predicted_transport(fit.transports, fit.estimate, w)
    base = mean if mean is not None else fit.base_for(x_new)
    return rodrigues_exp(T, base)


@dataclass(frozen=True, eq=False)
class ConformalSet:
    """``{y : ||y (-) base_mean - center|| <= radius}``."""

    center: TransportMap
    radius: float
    base_mean: UnitVector
    alpha: float
    calibration_scores: np.ndarray

    def score(self, y) -> float:
        y = y if isinstance(y, UnitVector) else UnitVector(y, self.base_mean.quadrature)
        return float((transport_between(self.base_mean, y) - self.center).norm())

    def contains(self, y) -> bool:
        return self.score(y) <= self.radius

    def to_record(self) -> dict:
        c = self.center
        return {
            "alpha": self.alpha,
            "radius": self.radius,
            "base_mean": self.base_mean.coords.tolist(),
            "center_atoms": [
                {"weight": float(w), "za": a.tolist(), "zb": b.tolist()} for w, a, b in zip(c.weights, c.za, c.zb)
            ],
        }


def set_contains(cs: ConformalSet, y) -> bool:
    return cs.contains(y)


def conformal_radius(scores, alpha: float, adjusted: bool = True) -> float:
    """Order-statistic radius from calibration scores.

    ``adjusted`` uses the ``ceil((1 - alpha)(n_cal + 1))``-th smallest score
    (``+inf`` past the end); otherwise the ``ceil((1 - alpha) n_cal)``-th.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    n_cal = s.size
    if n_cal == 0:
        raise ValueError("no calibration scores")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    k = math.ceil((1 - alpha) * (n_cal + 1 if adjusted else n_cal) - 1e-12)
    k = max(k, 1)
    return float("inf") if k > n_cal else float(s[k - 1])


def split_indices(n: int, seed, train_size: int | None = None):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    m = math.ceil(n / 2) if train_size is None else train_size
    return np.sort(perm[:m]), np.sort(perm[m:])


@dataclass(frozen=True, eq=False)
class SplitConformal:
    """Calibrated split-conformal predictor; call :meth:`prediction_set` per new site."""

    kind: str
    train: np.ndarray
    cal: np.ndarray
    points: np.ndarray
    quadrature: np.ndarray | None
    transports: TransportFamily  # all sites, against the training-side base points
    rho: float
    scores: np.ndarray
    center_neighbours: str = "train"
    adjusted: bool = True
    train_mean: UnitVector | None = None
    train_table: CovariateTable | None = None
    frechet_options: FrechetMeanOptions | None = None

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def radius(self, alpha: float) -> float:
        return conformal_radius(self.scores, alpha, self.adjusted)

    def center(self, new_row) -> TransportMap:
        w = _weight_row(new_row, self.n)
        tr = self.transports.take(self.train)
        qbar = tr.mean_coef()
        if self.center_neighbours == "train":
            dev = w[self.train] @ (tr.coef - qbar)
        else:
            dev = w @ (self.transports.coef - qbar)
        return self.transports.map_from_coef(qbar + self.rho * dev)

    def base_for(self, x_new=None) -> UnitVector:
        if self.kind == PSSAR:
            return self.train_mean
        if x_new is None:
            raise ValueError("the regression model needs covariates for a new site")
        return conditional_frechet_mean(self.points[self.train], self.train_table, x_new, self.frechet_options,
                                        quadrature=self.quadrature)

    def prediction_set(self, new_row, alpha: float, x_new=None) -> ConformalSet:
        return ConformalSet(self.center(new_row), self.radius(alpha), self.base_for(x_new), alpha,
                            np.sort(self.scores))

    def __call__(self, new_row, alpha: float, x_new=None) -> ConformalSet:
        return self.prediction_set(new_row, alpha, x_new)


def calibrate_split_conformal(Y, W: SpatialWeights, split_seed=0, model_kind: str = PSSAR, *, X=None,
                              quadrature=None, P=None, opts: FrechetMeanOptions | None = None,
                              score_neighbours: str = "all", center_neighbours: str = "train",
                              adjusted: bool = True, ridge: float = 0.0) -> SplitConformal:
    """Split the sites, fit on the training half and score the calibration half.

    Parameters
    ----------
    Y : observations at the ``n`` sites
    W : weights among the ``n`` sites; the training fit uses its renormalized restriction
    split_seed : seed of the random half split (``ceil(n/2)`` training sites)
    model_kind : ``"pssar"`` or ``"srmsar"`` (the latter needs ``X``)
    score_neighbours : ``"all"`` sums calibration-score neighbour terms over every site;
        ``"train"`` restricts them to training sites (rows renormalized)
    center_neighbours : ``"train"`` uses the raw new-site weights on training sites
        for the set center; ``"all"`` uses every fitted site
    adjusted : finite-sample adjusted order statistic for the radius
    """
    pts, q = as_points(Y, quadrature)
    n = pts.shape[0]
    if n < 4:
        raise ValueError("split conformal needs at least four sites")
    if W.n != n:
        raise ValueError(f"{n} observations for {W.n} sites")
    if score_neighbours not in ("all", "train") or center_neighbours not in ("all", "train"):
        raise ValueError("neighbour options are 'all' or 'train'")
    train, cal = split_indices(n, split_seed)
    if cal.size == 0:
        raise ValueError("empty calibration set")
    Wtr = W.subset(train)
    Ptr = None if P is None else _as_csr(P)[train][:, train]

    table = None
    mu = None
    if model_kind == PSSAR:
        mu = frechet_mean(pts[train], opts=opts, quadrature=q)
        fam = TransportFamily.logs(mu.coords, pts, q)
    elif model_kind == SRMSAR:
        if X is None:
            raise ValueError("the regression model needs covariates")
        Xa = np.asarray(X, dtype=float)
        Xa = Xa[:, None] if Xa.ndim == 1 else Xa
        table = CovariateTable(Xa[train], ridge=ridge)
        # conditional means at every site from the training fit: mu_i^train
        field_ = conditional_means(pts[train], table, X0=Xa, opts=opts, quadrature=q)
        fam = TransportFamily.logs(field_.coords(), pts, q)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")

    sar = fit_sar(fam.take(train), Wtr, Ptr, pca_fraction=DEFAULT_PCA_FRACTION)
    rho = sar.estimate
    qbar = fam.take(train).mean_coef()
    dev = fam.coef - qbar
    if score_neighbours == "all":
        lag = np.asarray(W.matrix[cal] @ dev)
    else:
        lag_tr = np.asarray(W.matrix[cal][:, train] @ dev[train])
        sums = np.asarray(W.matrix[cal][:, train].sum(axis=1)).ravel()
        lag = np.divide(lag_tr, sums[:, None], out=np.zeros_like(lag_tr), where=sums[:, None] > 0)
    resid = TransportFamily(dev[cal] - rho * lag, fam.za, fam.zb, q)
    scores = resid.norms()
    return SplitConformal(model_kind, train, cal, pts, q, fam, rho, scores, center_neighbours, adjusted,
                          mu, table, opts)
