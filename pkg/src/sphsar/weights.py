"""Spatial weight matrices, the admissible spatial-parameter interval, and S(rho) helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DimensionMismatchError

ROW_TOL = 1e-12
DEFAULT_EPS = 0.005


def _as_csr(M) -> sparse.csr_matrix:
    if isinstance(M, SpatialWeights):
        return M.matrix
    if sparse.issparse(M):
        return sparse.csr_matrix(M, dtype=float)
    return sparse.csr_matrix(np.asarray(M, dtype=float))


def row_normalize(M) -> sparse.csr_matrix:
    """Scale each nonzero row to sum to one; all-zero rows stay zero."""
    M = _as_csr(M)
    if np.any(M.data < 0):
        raise ValueError("weights must be nonnegative")
    sums = np.asarray(M.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    return sparse.csr_matrix(sparse.diags(inv) @ M)


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Row-normalized, zero-diagonal, nonnegative n x n weight matrix.

    Rows with no neighbours (islands) are kept as all-zero rows.
    """

    matrix: sparse.csr_matrix

    def __post_init__(self):
        M = sparse.csr_matrix(self.matrix, dtype=float)
        M.eliminate_zeros()
        M.sort_indices()
        n, n2 = M.shape
        if n != n2:
            raise DimensionMismatchError(f"weight matrix must be square, got {M.shape}")
        if np.any(M.data < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(M.diagonal() != 0):
            raise ValueError("weight matrix must have a zero diagonal")
        sums = np.asarray(M.sum(axis=1)).ravel()
        bad = (np.abs(sums - 1.0) > ROW_TOL) & (sums != 0)
        if np.any(bad):
            raise ValueError(f"row {int(np.argmax(bad))} sums to {sums[bad][0]!r}, expected 0 or 1")
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_raw(cls, M) -> SpatialWeights:
        """Row-normalize a nonnegative matrix, then validate."""
        return cls(row_normalize(M))

    @classmethod
    def from_triplets(cls, i, j, w, n: int, normalize: bool = True) -> SpatialWeights:
        M = sparse.csr_matrix((np.asarray(w, float), (np.asarray(i), np.asarray(j))), shape=(n, n))
        return cls.from_raw(M) if normalize else cls(M)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def empty_rows(self) -> np.ndarray:
        return np.diff(self.matrix.indptr) == 0

    @property
    def row_kind(self) -> list[str]:
        return ["empty" if e else "normalized" for e in self.empty_rows]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def subset(self, idx, renormalize: bool = True) -> SpatialWeights:
        """Restrict to the sites ``idx`` (in that order)."""
        idx = np.asarray(idx)
        M = self.matrix[idx][:, idx]
        return SpatialWeights.from_raw(M) if renormalize else SpatialWeights(M)

    def __repr__(self):
        return f"SpatialWeights(n={self.n}, nnz={self.matrix.nnz}, islands={int(self.empty_rows.sum())})"


@dataclass(frozen=True)
class RhoInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < 0 < self.hi:
            raise ValueError(f"need lo < 0 < hi, got ({self.lo}, {self.hi})")

    def __contains__(self, rho) -> bool:
        return self.lo < rho < self.hi


def knn_random_weights(n: int, k: int, rng: np.random.Generator) -> SpatialWeights:
    """Each row gets ``k`` distinct random neighbours with U(0, 1) raw weights, then row-normalized."""
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    cols = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        c = rng.choice(n - 1, size=k, replace=False)
        cols[i] = c + (c >= i)
    vals = rng.uniform(size=(n, k))
    rows = np.repeat(np.arange(n), k)
    M = sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, n))
    return SpatialWeights.from_raw(M)


_KING = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


def grid_first_order_weights(coords) -> SpatialWeights:
    """Equal weights over the 8-neighbourhood on an integer lattice."""
    coords = [tuple(int(v) for v in c) for c in np.asarray(coords).reshape(-1, 2)]
    where = {}
    for idx, c in enumerate(coords):
        if c in where:
            raise ValueError(f"duplicate lattice position {c} (sites {where[c]} and {idx})")
        where[c] = idx
    rows, cols = [], []
    for i, (x, y) in enumerate(coords):
        for dx, dy in _KING:
            j = where.get((x + dx, y + dy))
            if j is not None:
                rows.append(i)
                cols.append(j)
    n = len(coords)
    M = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return SpatialWeights.from_raw(M)


def adjacency_population_weights(adjacency, populations) -> SpatialWeights:
    """``w_ij`` proportional to ``adjacent(i, j) * sqrt(population_j)``."""
    A = _as_csr(adjacency)
    pops = np.asarray(populations, dtype=float).reshape(-1)
    n = A.shape[0]
    if A.shape != (n, n) or pops.size != n:
        raise DimensionMismatchError("adjacency and populations disagree on the number of sites")
    if np.any(pops <= 0):
        raise ValueError("populations must be positive")
    A = (A != 0).astype(float)
    if (A - A.T).nnz:
        raise ValueError("adjacency must be symmetric")
    if np.any(A.diagonal() != 0):
        raise ValueError("adjacency must have a zero diagonal")
    return SpatialWeights.from_raw(A @ sparse.diags(np.sqrt(pops)))


def admissible_rho_interval(W: SpatialWeights, eps: float = DEFAULT_EPS, method: str = "bound") -> RhoInterval:
    """Interval of spatial parameters for which ``I - rho W`` is invertible.

    ``method="bound"`` uses the row-sum bound on the spectral radius, giving
    ``(-1 + eps, 1 - eps)``. ``method="spectral"`` uses the extreme real
    eigenvalues of ``W``: ``S(rho)`` is singular only at ``rho = 1/lambda``
    for real eigenvalues ``lambda``. The result is never wider than
    ``(-1/eps, 1/eps)``.
    """
    if method == "bound":
        return RhoInterval(-1.0 + eps, 1.0 - eps)
    if method != "spectral":
        raise ValueError(f"unknown method {method!r}")
    ev = np.linalg.eigvals(W.toarray())
    real = ev[np.abs(ev.imag) < 1e-9].real
    lam_max = real.max() if real.size and real.max() > 0 else 0.0
    lam_min = real.min() if real.size and real.min() < 0 else 0.0
    hi = 1.0 / lam_max - eps if lam_max > 0 else 1.0 / eps
    lo = 1.0 / lam_min + eps if lam_min < 0 else -1.0 / eps
    return RhoInterval(max(lo, -1.0 / eps), min(hi, 1.0 / eps))


def s_matrix(W, rho: float) -> sparse.csr_matrix:
    M = _as_csr(W)
    return sparse.csr_matrix(sparse.identity(M.shape[0], format="csr") - rho * M)


def s_matrix_action(W, rho: float, X) -> np.ndarray:
    """``S(rho) X = X - rho W X``."""
    M = _as_csr(W)
    X = np.asarray(X, dtype=float)
    if X.shape[0] != M.shape[0]:
        raise DimensionMismatchError(f"W is {M.shape}, X has {X.shape[0]} rows")
    return X - rho * np.asarray(M @ X)


def sparse_trace(M, G) -> float:
    """``tr(M G)`` for sparse ``M`` and dense ``G`` in O(nnz)."""
    coo = _as_csr(M).tocoo()
    return float(np.dot(coo.data, np.asarray(G)[coo.col, coo.row]))


def trace_products(W, P, G):
    """``(tr(PG), tr(W'PG), tr(PWG), tr(W'PWG))`` with exact sparse-dense products."""
    Wm, Pm = _as_csr(W), _as_csr(P)
    G = np.asarray(G, dtype=float)
    n = Wm.shape[0]
    if Pm.shape != (n, n) or G.shape != (n, n):
        raise DimensionMismatchError("W, P and G must all be n x n")
    return (
        sparse_trace(Pm, G),
        sparse_trace(Wm.T @ Pm, G),
        sparse_trace(Pm @ Wm, G),
        sparse_trace(Wm.T @ Pm @ Wm, G),
    )
