"""GMM estimation of the spatial parameter, residual moments and the Wald test.

The same machinery serves the pure model (transports ``y_i (-) mu_c``) and
the regression model (transports ``y_i (-) mu_i``): only the input family
changes. The moment condition ``tr{S(rho)' P S(rho) G} = 0`` is a quadratic
``a + b rho + c rho^2`` in ``rho``, so the estimator is found exactly.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import sparse, stats
from scipy.sparse.linalg import splu

from .errors import SingularDesignError, UnidentifiedError
from .family import TransportFamily
from .sphere import TransportMap
from .weights import RhoInterval, SpatialWeights, _as_csr, admissible_rho_interval, s_matrix, sparse_trace

log = logging.getLogger(__name__)

DEFAULT_PCA_FRACTION = 0.90
_IDENT_TOL = 1e-12


def gram_matrix(centered) -> np.ndarray:
    """Gram matrix ``G_jk = <q_j - q, q_k - q>`` of already-centered transports."""
    if isinstance(centered, TransportFamily):
        return centered.gram()
    return TransportFamily.from_maps(centered).gram()


@dataclass(frozen=True)
class TraceOperators:
    """Sparse matrices whose traces against ``G`` give the polynomial coefficients."""

    const: sparse.csr_matrix
    linear: sparse.csr_matrix
    quad: sparse.csr_matrix

    @classmethod
    def build(cls, W, P=None) -> TraceOperators:
        Wm = _as_csr(W)
        Pm = Wm if P is None else _as_csr(P)
        if abs(Pm.diagonal().sum()) > 1e-12 * max(1.0, abs(Pm).sum()):
            raise ValueError("the instrument matrix P must have zero trace")
        return cls(
            Pm.tocsr(),
            sparse.csr_matrix(-(Wm.T @ Pm + Pm @ Wm)),
            sparse.csr_matrix(Wm.T @ Pm @ Wm),
        )

    def coefficients(self, G) -> TracePolynomial:
        return TracePolynomial(sparse_trace(self.const, G), sparse_trace(self.linear, G), sparse_trace(self.quad, G))


@dataclass(frozen=True)
class TracePolynomial:
    a: float
    b: float
    c: float

    def __call__(self, rho):
        return self.a + self.b * rho + self.c * rho**2

    def objective(self, rho):
        return self(rho) ** 2

    def identified(self) -> bool:
        scale = abs(self.a) + abs(self.b) + abs(self.c)
        return scale > 0 and abs(self.b) + abs(self.c) > _IDENT_TOL * scale

    def real_roots(self) -> tuple[float, ...]:
        a, b, c = self.a, self.b, self.c
        scale = abs(a) + abs(b) + abs(c)
        if abs(c) <= _IDENT_TOL * scale:
            return (-a / b,) if b != 0 else ()
        disc = b * b - 4.0 * a * c
        if disc < 0:
            return ()
        sq = np.sqrt(disc)
        qq = -0.5 * (b + np.copysign(sq, b))
        r1 = qq / c
        r2 = a / qq if qq != 0 else r1
        return tuple(sorted({float(r1), float(r2)}))


@dataclass(frozen=True)
class GmmEstimate:
    estimate: float
    polynomial: TracePolynomial
    roots: tuple[float, ...]
    kind: str  # "root", "vertex" or "boundary"
    interval: RhoInterval


def solve_trace_polynomial(poly: TracePolynomial, interval: RhoInterval) -> GmmEstimate:
    """Minimize ``poly(rho)^2`` over the interval.

    An admissible root is an exact minimizer; with two of them the one of
    smaller magnitude is returned. Without one the squared polynomial is
    compared at the vertex (if inside) and both endpoints.
    """
    if not poly.identified():
        raise UnidentifiedError("GMM objective does not depend on the spatial parameter "
                                f"(a={poly.a!r}, b={poly.b!r}, c={poly.c!r})")
    roots = poly.real_roots()
    admissible = [r for r in roots if r in interval]
    if admissible:
        best = min(admissible, key=abs)
        if len(admissible) == 2:
            log.debug("two admissible roots %s; keeping %r", admissible, best)
        return GmmEstimate(best, poly, tuple(roots), "root", interval)
    cands = [(interval.lo, "boundary"), (interval.hi, "boundary")]
    if poly.c != 0:
        v = -poly.b / (2.0 * poly.c)
        if v in interval:
            cands.append((v, "vertex"))
    rho, kind = min(cands, key=lambda t: poly.objective(t[0]))
    return GmmEstimate(float(rho), poly, tuple(roots), kind, interval)


def estimate_spatial_parameter(G, W, P=None, interval: RhoInterval | None = None) -> GmmEstimate:
    """GMM estimate of the spatial parameter from a centered Gram matrix."""
    Wsw = W if isinstance(W, SpatialWeights) else SpatialWeights(_as_csr(W))
    interval = interval or admissible_rho_interval(Wsw)
    ops = TraceOperators.build(Wsw, P)
    return solve_trace_polynomial(ops.coefficients(G), interval)


def residual_transports(centered: TransportFamily, W, rho: float) -> TransportFamily:
    """``e_i = c_i - rho * sum_j w_ij c_j`` for centered transports ``c``."""
    return centered.combine(s_matrix(W, rho))


def residual_gram(G, W, rho: float) -> np.ndarray:
    """``S(rho) G S(rho)'`` without forming the residual transports."""
    Wm = _as_csr(W)
    SG = G - rho * np.asarray(Wm @ G)
    R = SG - rho * np.asarray(Wm @ SG.T).T
    return 0.5 * (R + R.T)


@dataclass(frozen=True)
class MomentEstimates:
    w1: float
    w2: float
    w3: float
    w4: float
    w5: float
    pca_rank: int | None = None


def _as_residual_gram(residuals) -> np.ndarray:
    if isinstance(residuals, np.ndarray):
        return residuals
    if isinstance(residuals, TransportFamily):
        return residuals.gram()
    return TransportFamily.from_maps(list(residuals)).gram()


def moment_estimates(residuals, pca_fraction: float | None = DEFAULT_PCA_FRACTION,
                     literal_cross_moment: bool = False) -> MomentEstimates:
    """Plug-in moments of the residual transports.

    Parameters
    ----------
    residuals : TransportFamily, sequence of TransportMap, or (n, n) Gram array
    pca_fraction : float or None
        Keep the leading eigenvalues of the residual Gram matrix that explain
        this fraction of the total variance and recompute every moment from
        the truncated Gram matrix. ``None`` disables truncation.
    literal_cross_moment : bool
        Use the unsquared cross inner products for the third moment (debug).
    """
    R = _as_residual_gram(residuals)
    n = R.shape[0]
    if n < 2:
        raise ValueError("need at least two residuals")
    rank = None
    if pca_fraction is not None:
        if not 0 < pca_fraction <= 1:
            raise ValueError("pca_fraction must lie in (0, 1]")
        vals, vecs = np.linalg.eigh(R)
        vals = np.clip(vals[::-1], 0.0, None)
        vecs = vecs[:, ::-1]
        total = vals.sum()
        if total > 0:
            cum = np.cumsum(vals) / total
            rank = int(min(np.searchsorted(cum, pca_fraction - 1e-12) + 1, vals.size))
            R = (vecs[:, :rank] * vals[:rank]) @ vecs[:, :rank].T
    sq = np.diag(R).copy()
    w1 = float(sq.mean())
    if w1 <= 0:
        raise UnidentifiedError("all residuals are zero")
    w2 = float(np.mean(sq**2))
    off = R - np.diag(np.diag(R))
    w3 = float((off.sum() if literal_cross_moment else np.sum(off**2)) / (n * (n - 1)))
    return MomentEstimates(w1, w2, w3, w3 / w1**2, w2 / w1**2, rank)


@dataclass(frozen=True, eq=False)
class SarFit:
    """Fitted spatial autoregression on a family of transports."""

    estimate: float
    gmm: GmmEstimate
    transports: TransportFamily
    centered: TransportFamily
    gram: np.ndarray
    weights: SpatialWeights
    instrument: sparse.csr_matrix
    pca_fraction: float | None = DEFAULT_PCA_FRACTION

    @property
    def n(self) -> int:
        return len(self.transports)

    @property
    def mean_transport(self) -> TransportMap:
        return self.transports.mean()

    @property
    def residuals(self) -> TransportFamily:
        return residual_transports(self.centered, self.weights, self.estimate)

    @property
    def residual_gram(self) -> np.ndarray:
        return residual_gram(self.gram, self.weights, self.estimate)

    @property
    def moments(self) -> MomentEstimates:
        return moment_estimates(self.residual_gram, self.pca_fraction)

    @property
    def objective_roots(self) -> tuple[float, ...]:
        return self.gmm.roots


def fit_sar(transports: TransportFamily, W: SpatialWeights, P=None, *,
            interval: RhoInterval | None = None, pca_fraction: float | None = DEFAULT_PCA_FRACTION) -> SarFit:
    """Center the transports, build their Gram matrix and solve the moment condition."""
    if len(transports) != W.n:
        raise ValueError(f"{len(transports)} transports for {W.n} sites")
    centered = transports.centered()
    G = centered.gram()
    Pm = W.matrix if P is None else _as_csr(P)
    est = estimate_spatial_parameter(G, W, Pm, interval)
    return SarFit(est.estimate, est, transports, centered, G, W, Pm, pca_fraction)


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    p_value: float
    trace_term: float
    cancelled_form: bool


def spatial_trace_term(W, P, rho: float) -> float:
    """``tr{(P + P') W S(rho)^{-1}}`` via a sparse LU solve."""
    Wm, Pm = _as_csr(W), _as_csr(P)
    M = sparse.csr_matrix((Pm + Pm.T) @ Wm)
    try:
        lu = splu(sparse.csc_matrix(s_matrix(Wm, rho)))
    except RuntimeError as exc:
        raise SingularDesignError(f"S(rho) is singular at rho={rho!r}") from exc
    # tr(M S^{-1}) = tr(S^{-1} M)
    X = lu.solve(M.toarray())
    return float(np.trace(X))


def wald_statistic(fit: SarFit, moments: MomentEstimates | None = None) -> WaldResult:
    """Wald statistic for ``rho = 0`` with the rate sequence cancelled.

    For a zero-diagonal instrument the statistic is
    ``rho^2 tr^2{(P+P')W S^{-1}} / (w4 tr{P(P+P')})``; otherwise the
    diagonal term ``(w5 - 2 w4 - 1) sum P_ii^2`` joins the denominator.
    """
    mom = moments or fit.moments
    P = fit.instrument
    rho = fit.estimate
    if rho == 0.0:
        return WaldResult(0.0, 1.0, float("nan"), True)
    D = spatial_trace_term(fit.weights, P, rho)
    if D == 0.0:
        raise SingularDesignError("tr{(P+P')W S^{-1}} vanishes; the Wald statistic is undefined")
    pdiag = P.diagonal()
    cancelled = not np.any(pdiag != 0)
    denom = mom.w4 * float(sparse_trace(P, (P + P.T).toarray()))
    if not cancelled:
        denom += (mom.w5 - 2.0 * mom.w4 - 1.0) * float(np.sum(pdiag**2))
    if denom <= 0:
        raise SingularDesignError("non-positive variance estimate in the Wald statistic")
    T = rho**2 * D**2 / denom
    return WaldResult(float(T), float(stats.chi2.sf(T, df=1)), D, cancelled)


def gram_from_maps(maps: Sequence[TransportMap]) -> np.ndarray:
    return TransportFamily.from_maps(maps).gram()
