"""Global Fréchet regression on the sphere with Euclidean covariates.

The conditional mean at ``x0`` minimizes ``sum_j s_j(x0) d^2(nu, y_j)`` with
``s_j(x0) = 1 + (x0 - xbar)' Sigma^{-1} (x_j - xbar)``. Its residual
transports ``y_i (-) mu_i`` feed the same GMM machinery as the pure model.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatchError, SingularDesignError
from .family import TransportFamily
from .sphere import FrechetMeanOptions, UnitVector, as_points, frechet_mean

log = logging.getLogger(__name__)

CONDITION_WARN = 1e10
CONDITION_SINGULAR = 1.0 / (8 * np.finfo(float).eps)
NEGATIVE_WEIGHT_RESTARTS = 3


class IllConditionedWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class CovariateTable:
    """Covariates with their mean and 1/n covariance.

    Columns that are constant across sites carry no information and are
    dropped before factorizing; a table with no varying column yields unit
    Fréchet weights everywhere.
    """

    X: np.ndarray
    ridge: float = 0.0
    mean: np.ndarray = field(init=False)
    covariance: np.ndarray = field(init=False)
    active: np.ndarray = field(init=False)
    condition_number: float = field(init=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise DimensionMismatchError(f"covariates must be an (n, p) matrix, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates contain non-finite values")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        xbar = X.mean(axis=0)
        active = np.ptp(X, axis=0) > 0 if X.shape[1] else np.zeros(0, bool)
        D = X[:, active] - xbar[active]
        S = D.T @ D / X.shape[0]
        if active.any():
            S = S + self.ridge * np.eye(S.shape[0])
            cond = float(np.linalg.cond(S))
            if not np.isfinite(cond) or cond > CONDITION_SINGULAR:
                raise SingularDesignError(f"covariate covariance is singular (condition number {cond:.3g})")
            if cond > CONDITION_WARN:
                warnings.warn(f"covariate covariance condition number {cond:.3g}", IllConditionedWarning, stacklevel=2)
        else:
            cond = 1.0
        X.setflags(write=False)
        for name, val in (("X", X), ("mean", xbar), ("covariance", S), ("active", active), ("condition_number", cond)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def _solve(self, rhs):
        try:
            return linalg.solve(self.covariance, rhs, assume_a="sym")
        except linalg.LinAlgError as exc:
            raise SingularDesignError("covariate covariance is singular") from exc

    def weights(self, x0) -> np.ndarray:
        return global_frechet_weights(self, x0)

    def weight_matrix(self, X0=None) -> np.ndarray:
        """Row ``i`` holds the weights for evaluation point ``X0[i]`` (default: the sites)."""
        X0 = self.X if X0 is None else np.atleast_2d(np.asarray(X0, dtype=float))
        if not self.active.any():
            return np.ones((X0.shape[0], self.n))
        D = self.X[:, self.active] - self.mean[self.active]
        D0 = X0[:, self.active] - self.mean[self.active]
        return 1.0 + D0 @ self._solve(D.T)


def global_frechet_weights(table: CovariateTable, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != table.p:
        raise DimensionMismatchError(f"x0 has {x0.size} entries, table has {table.p} covariates")
    return table.weight_matrix(x0[None, :])[0]


def _options_for(weights, opts: FrechetMeanOptions | None) -> FrechetMeanOptions:
    opts = opts or FrechetMeanOptions()
    if np.any(weights < 0) and opts.restarts < NEGATIVE_WEIGHT_RESTARTS:
        opts = FrechetMeanOptions(opts.max_iterations, opts.tolerance, NEGATIVE_WEIGHT_RESTARTS, opts.check_support)
    return opts


def conditional_frechet_mean(Y, table: CovariateTable, x0, opts: FrechetMeanOptions | None = None,
                             *, quadrature=None, rng=None) -> UnitVector:
    s = global_frechet_weights(table, x0)
    if s.sum() <= 0:
        raise SingularDesignError("Fréchet weights have nonpositive total")
    return frechet_mean(Y, s, _options_for(s, opts), quadrature=quadrature, rng=rng)


@dataclass(frozen=True, eq=False)
class ConditionalMeanField:
    means: list[UnitVector]
    weights: np.ndarray

    def coords(self) -> np.ndarray:
        return np.vstack([m.coords for m in self.means])


def conditional_means(Y, table: CovariateTable, X0=None, opts: FrechetMeanOptions | None = None,
                      *, quadrature=None, rng=None) -> ConditionalMeanField:
    pts, q = as_points(Y, quadrature)
    if pts.shape[0] != table.n:
        raise DimensionMismatchError(f"{pts.shape[0]} observations for {table.n} covariate rows")
    S = table.weight_matrix(X0)
    rng = rng if rng is not None else np.random.default_rng(0)
    means = []
    cache: dict[bytes, UnitVector] = {}
    for s in S:
        key = s.tobytes()
        if key not in cache:
            if s.sum() <= 0:
                raise SingularDesignError("Fréchet weights have nonpositive total")
            cache[key] = frechet_mean(pts, s, _options_for(s, opts), quadrature=q, rng=rng)
        means.append(cache[key])
    return ConditionalMeanField(means, S)


def srmsar_transports(Y, table: CovariateTable, opts: FrechetMeanOptions | None = None, *,
                      quadrature=None, rng=None):
    """``(xi, field)`` with ``xi_i = y_i (-) mu_i`` as a TransportFamily."""
    pts, q = as_points(Y, quadrature)
    field_ = conditional_means(pts, table, opts=opts, quadrature=q, rng=rng)
    xi = TransportFamily.logs(field_.coords(), pts, q)
    return xi, field_
