"""End-to-end pure (PSSAR) and regression (SRMSAR) spherical spatial autoregressions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import DEFAULT_B, BootstrapResult, bootstrap_null_test
from .family import TransportFamily
from .gmm import DEFAULT_PCA_FRACTION, SarFit, WaldResult, fit_sar, wald_statistic
from .regression import ConditionalMeanField, CovariateTable, conditional_frechet_mean, srmsar_transports
from .sphere import FrechetMeanOptions, UnitVector, as_points, frechet_mean
from .weights import RhoInterval, SpatialWeights

PSSAR = "pssar"
SRMSAR = "srmsar"


@dataclass(frozen=True, eq=False)
class ModelFit:
    """A fitted model together with the per-site base points of its transports.

    For the pure model all base points equal the Fréchet mean; for the
    regression model base point ``i`` is the conditional mean at ``x_i``.
    """

    kind: str
    points: np.ndarray
    base: np.ndarray
    sar: SarFit
    quadrature: np.ndarray | None = None
    center: UnitVector | None = None
    table: CovariateTable | None = None
    field: ConditionalMeanField | None = None
    frechet_options: FrechetMeanOptions | None = None

    @property
    def estimate(self) -> float:
        return self.sar.estimate

    @property
    def n(self) -> int:
        return self.sar.n

    @property
    def transports(self) -> TransportFamily:
        return self.sar.transports

    def wald(self) -> WaldResult:
        return wald_statistic(self.sar)

    def bootstrap(self, alpha: float = 0.05, B: int = DEFAULT_B, seed: int | None = 0) -> BootstrapResult:
        return bootstrap_null_test(self.sar.gram, self.sar.weights, self.sar.instrument, self.estimate,
                                   alpha=alpha, B=B, seed=seed, interval=self.sar.gmm.interval)

    def base_for(self, x_new=None) -> UnitVector:
        """Base point at a new site: the Fréchet mean, or the conditional mean at ``x_new``."""
        if self.kind == PSSAR:
            return self.center
        if x_new is None:
            raise ValueError("the regression model needs covariates for a new site")
        return conditional_frechet_mean(self.points, self.table, x_new, self.frechet_options,
                                        quadrature=self.quadrature)


def fit_pssar(Y, W: SpatialWeights, P=None, *, quadrature=None, opts: FrechetMeanOptions | None = None,
              pca_fraction: float | None = DEFAULT_PCA_FRACTION, interval: RhoInterval | None = None) -> ModelFit:
    pts, q = as_points(Y, quadrature)
    mu = frechet_mean(pts, opts=opts, quadrature=q)
    transports = TransportFamily.logs(mu.coords, pts, q)
    sar = fit_sar(transports, W, P, interval=interval, pca_fraction=pca_fraction)
    base = np.broadcast_to(mu.coords, pts.shape)
    return ModelFit(PSSAR, pts, base, sar, q, center=mu, frechet_options=opts)


def fit_srmsar(Y, X, W: SpatialWeights, P=None, *, quadrature=None, opts: FrechetMeanOptions | None = None,
               pca_fraction: float | None = DEFAULT_PCA_FRACTION, interval: RhoInterval | None = None,
               ridge: float = 0.0, rng=None) -> ModelFit:
    pts, q = as_points(Y, quadrature)
    table = X if isinstance(X, CovariateTable) else CovariateTable(X, ridge=ridge)
    xi, field_ = srmsar_transports(pts, table, opts, quadrature=q, rng=rng)
    sar = fit_sar(xi, W, P, interval=interval, pca_fraction=pca_fraction)
    return ModelFit(SRMSAR, pts, field_.coords(), sar, q, table=table, field=field_, frechet_options=opts)
