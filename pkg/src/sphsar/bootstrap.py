"""Null-imposed residual bootstrap for the spatial parameter.

Under the null the centered transports are the residuals. A replicate draws
site indices with replacement, rebuilds the recentered sample and
re-estimates the spatial parameter. Because every replicate transport is an
original one, the replicate Gram matrix is a lookup into the original Gram
matrix plus a rank-two centering correction; only the entries touched by the
sparse trace operators are ever formed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, UnidentifiedError
from .family import TransportFamily
from .gmm import TraceOperators, TracePolynomial, solve_trace_polynomial
from .weights import RhoInterval, SpatialWeights, admissible_rho_interval

log = logging.getLogger(__name__)

DEFAULT_B = 500
MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    replicate_estimates: np.ndarray
    ci_lo: float
    ci_hi: float
    reject: bool
    alpha: float
    B: int
    seed: int | None
    estimate: float
    n_failed: int = 0

    def interval(self, alpha: float) -> tuple[float, float]:
        """Quantile interval from the same replicates at another level."""
        return order_statistic_interval(self.replicate_estimates, alpha)


def order_statistic(sorted_values: np.ndarray, q: float) -> float:
    """``k``-th smallest value with ``k = ceil(q B)`` (at least 1)."""
    B = sorted_values.size
    k = min(max(math.ceil(q * B - 1e-12), 1), B)
    return float(sorted_values[k - 1])


def order_statistic_interval(estimates, alpha: float) -> tuple[float, float]:
    s = np.sort(np.asarray(estimates, dtype=float))
    return order_statistic(s, alpha / 2.0), order_statistic(s, 1.0 - alpha / 2.0)


class _ReplicateTraces:
    """Trace-polynomial coefficients for resampled, recentered Gram matrices."""

    def __init__(self, G: np.ndarray, ops: TraceOperators):
        n = G.shape[0]
        pattern = (abs(ops.const) + abs(ops.linear) + abs(ops.quad)).tocoo()
        self.rows, self.cols = pattern.row, pattern.col
        # coefficient values on the union pattern, one column per operator
        self.vals = np.column_stack([
            np.asarray(op[self.rows, self.cols]).ravel() for op in (ops.const, ops.linear, ops.quad)
        ])
        self.G = G
        self.n = n
        # sum of coefficients by row and by column, for the centering correction
        self.row_sum = np.column_stack([np.asarray(op.sum(axis=1)).ravel() for op in (ops.const, ops.linear, ops.quad)])
        self.col_sum = np.column_stack([np.asarray(op.sum(axis=0)).ravel() for op in (ops.const, ops.linear, ops.quad)])
        self.total = self.row_sum.sum(axis=0)

    def __call__(self, idx: np.ndarray) -> TracePolynomial:
        # tr(M G*) = sum_{(i,j)} M_ij G*_{ji},  G*_{rc} = G[idx_r, idx_c] - g_r - g_c + gbar
        n = self.n
        counts = np.bincount(idx, minlength=n).astype(float)
        g_orig = self.G @ counts / n
        g = g_orig[idx]
        gbar = float(counts @ g_orig) / n
        base = self.G[idx[self.cols], idx[self.rows]] @ self.vals
        corr = g @ self.row_sum + g @ self.col_sum
        coef = base - corr + gbar * self.total
        return TracePolynomial(float(coef[0]), float(coef[1]), float(coef[2]))


def bootstrap_null_test(centered, W: SpatialWeights, P=None, estimate: float | None = None, *,
                        alpha: float = 0.05, B: int = DEFAULT_B, seed: int | None = 0,
                        interval: RhoInterval | None = None) -> BootstrapResult:
    """Residual bootstrap test of ``rho = 0``.

    Parameters
    ----------
    centered : TransportFamily or (n, n) Gram matrix of the centered transports
    W, P : weight and instrument matrices (``P`` defaults to ``W``)
    estimate : the statistic being tested, normally the fitted rho-hat
    alpha : level of the two-sided interval
    B : number of bootstrap replicates
    seed : seed for the index draws
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    G = centered.gram() if isinstance(centered, TransportFamily) else np.asarray(centered, dtype=float)
    n = G.shape[0]
    if n != W.n:
        raise ValueError(f"{n} transports for {W.n} sites")
    interval = interval or admissible_rho_interval(W)
    ops = TraceOperators.build(W, W.matrix if P is None else P)
    traces = _ReplicateTraces(G, ops)
    if estimate is None:
        estimate = solve_trace_polynomial(ops.coefficients(G), interval).estimate

    rng = np.random.default_rng(seed)
    draws = rng.integers(0, n, size=(B, n))
    est = np.full(B, np.nan)
    failed = 0
    for b in range(B):
        try:
            est[b] = solve_trace_polynomial(traces(draws[b]), interval).estimate
        except UnidentifiedError:
            failed += 1
    if failed > MAX_FAILURE_RATE * B:
        raise ConvergenceError(f"{failed} of {B} bootstrap replicates were unidentified")
    if failed:
        log.warning("%d of %d bootstrap replicates unidentified and dropped", failed, B)
    good = est[~np.isnan(est)]
    lo, hi = order_statistic_interval(good, alpha)
    reject = not (lo <= estimate <= hi)
    return BootstrapResult(good, lo, hi, bool(reject), alpha, B, seed, float(estimate), failed)


def bootstrap_gram(G: np.ndarray, idx) -> np.ndarray:
    """Full recentered replicate Gram matrix (reference path for tests)."""
    idx = np.asarray(idx)
    Gs = G[np.ix_(idx, idx)]
    n = idx.size
    C = np.eye(n) - np.ones((n, n)) / n
    return C @ Gs @ C
