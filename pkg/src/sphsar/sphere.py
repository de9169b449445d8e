"""Geometry of the unit sphere and the rank-2 skew-symmetric transport algebra.

A point of the sphere is stored as a coordinate vector together with
optional quadrature weights, so that the same code serves the finite sphere
S^{m-1} (all-ones weights) and a grid-discretized Hilbert sphere (Riemann
weights). A transport map is kept in factored form as a weighted sum of
atoms ``w * (zb o za - za o zb)``, where ``(h o g) v = h <g, v>``.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import AntipodalError, ConvergenceError, DimensionMismatchError

UNIT_TOL = 1e-10
ANTIPODAL_CUTOFF = 1e-6


class NonsmoothMinimumWarning(RuntimeWarning):
    """The minimizer found is a kink of the Fréchet objective, so the first-order condition cannot hold."""


class HemisphereWarning(UserWarning):
    """Data support is wider than a closed hemisphere (pairwise distance > pi/2)."""


def _check_quadrature(quadrature, dim):
    if quadrature is None:
        return None
    q = np.asarray(quadrature, dtype=float)
    if q.ndim == 0:
        q = np.full(dim, float(q))
    if q.shape != (dim,):
        raise DimensionMismatchError(f"quadrature has shape {q.shape}, expected ({dim},)")
    if np.any(q <= 0):
        raise ValueError("quadrature weights must be positive")
    return q


def same_quadrature(q1, q2) -> bool:
    if q1 is None or q2 is None:
        return q1 is None and q2 is None
    return q1.shape == q2.shape and bool(np.all(q1 == q2))


def inner(u, v, quadrature=None):
    """Quadrature inner product along the last axis (broadcasts)."""
    if quadrature is None:
        return np.sum(u * v, axis=-1)
    return np.sum(u * v * quadrature, axis=-1)


def norm(u, quadrature=None):
    return np.sqrt(np.maximum(inner(u, u, quadrature), 0.0))


@dataclass(frozen=True, eq=False)
class UnitVector:
    """A point on the unit sphere of a (discretized) Hilbert space."""

    coords: np.ndarray
    quadrature: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1)
        if c.size < 2:
            raise ValueError("a sphere point needs dimension >= 2")
        q = _check_quadrature(self.quadrature, c.size)
        sq = float(inner(c, c, q))
        if not np.isfinite(sq) or abs(sq - 1.0) > UNIT_TOL:
            raise ValueError(f"coordinates are not unit norm (squared norm {sq!r})")
        c.setflags(write=False)
        if q is not None:
            q.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "quadrature", q)

    @classmethod
    def normalized(cls, coords, quadrature=None) -> UnitVector:
        c = np.asarray(coords, dtype=float).reshape(-1)
        q = _check_quadrature(quadrature, c.size)
        nrm = float(norm(c, q))
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(c / nrm, q)

    @property
    def dim(self) -> int:
        return self.coords.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __repr__(self):
        return f"UnitVector(dim={self.dim}, coords={np.array2string(self.coords, precision=4)})"


def as_points(points, quadrature=None):
    """Normalize a point-set input to ``(array (n, m), quadrature)``.

    Accepts a sequence of :class:`UnitVector` or a 2-D array of coordinates.
    """
    if isinstance(points, np.ndarray):
        arr = np.atleast_2d(np.asarray(points, dtype=float))
        return arr, _check_quadrature(quadrature, arr.shape[1])
    points = list(points)
    if not points:
        raise ValueError("empty point set")
    if isinstance(points[0], UnitVector):
        q = points[0].quadrature
        for p in points[1:]:
            if p.dim != points[0].dim or not same_quadrature(p.quadrature, q):
                raise DimensionMismatchError("points live on different spheres")
        return np.vstack([p.coords for p in points]), q
    arr = np.atleast_2d(np.asarray(points, dtype=float))
    return arr, _check_quadrature(quadrature, arr.shape[1])


def _pair(u: UnitVector, v: UnitVector):
    if u.dim != v.dim or not same_quadrature(u.quadrature, v.quadrature):
        raise DimensionMismatchError(f"dimension mismatch: {u.dim} vs {v.dim}")


def geodesic_distance(u: UnitVector, v: UnitVector) -> float:
    """Great-circle distance ``arccos <u, v>`` in [0, pi]."""
    _pair(u, v)
    return float(np.arccos(np.clip(inner(u.coords, v.coords, u.quadrature), -1.0, 1.0)))


def log_map(base, points, quadrature=None):
    """Riemannian log at ``base`` for a batch of points; returns tangent vectors.

    Antipodal points get a zero tangent vector.
    """
    base = np.asarray(base, dtype=float)
    points = np.asarray(points, dtype=float)
    c = np.clip(inner(points, base, quadrature), -1.0, 1.0)
    resid = points - c[..., None] * base
    rn = norm(resid, quadrature)
    theta = np.arccos(c)
    scale = np.divide(theta, rn, out=np.zeros_like(rn), where=rn > 0)
    return resid * scale[..., None]


def exp_map(base, tangent, quadrature=None):
    """Riemannian exponential at ``base`` (batch over leading axes of ``tangent``)."""
    tangent = np.asarray(tangent, dtype=float)
    t = norm(tangent, quadrature)
    sinc = np.where(t > 0, np.sin(t) / np.where(t > 0, t, 1.0), 1.0)
    out = np.cos(t)[..., None] * base + sinc[..., None] * tangent
    return out / norm(out, quadrature)[..., None]


def log_atoms(base, targets, quadrature=None):
    """Canonical atoms ``(theta, za, zb)`` of ``target (-) base`` for a batch.

    ``base`` may be one point (broadcast) or one point per target. Raises
    :class:`AntipodalError` when any pair is within the antipodal cutoff.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    base = np.broadcast_to(np.asarray(base, dtype=float), targets.shape)
    c = np.clip(inner(targets, base, quadrature), -1.0, 1.0)
    theta = np.arccos(c)
    if np.any(theta > np.pi - ANTIPODAL_CUTOFF):
        bad = int(np.argmax(theta))
        raise AntipodalError(f"target {bad} is antipodal to its base (angle {theta[bad]!r})")
    resid = targets - c[:, None] * base
    rn = norm(resid, quadrature)
    zb = np.divide(resid, rn[:, None], out=np.zeros_like(resid), where=rn[:, None] > 0)
    theta = np.where(rn > 0, theta, 0.0)
    return theta, np.array(base), zb


def atom_gram(za1, zb1, za2, zb2, quadrature=None):
    """Hilbert-Schmidt Gram matrix between two atom lists (unit weights)."""
    if quadrature is not None:
        za1 = za1 * quadrature
        zb1 = zb1 * quadrature
    aa = za1 @ za2.T
    bb = zb1 @ zb2.T
    ab = za1 @ zb2.T
    ba = zb1 @ za2.T
    return 2.0 * (aa * bb - ab * ba)


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Skew-symmetric operator ``sum_k w_k (zb_k o za_k - za_k o zb_k)``."""

    weights: np.ndarray
    za: np.ndarray
    zb: np.ndarray
    quadrature: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        za = np.atleast_2d(np.array(self.za, dtype=float))
        zb = np.atleast_2d(np.array(self.zb, dtype=float))
        if za.shape != zb.shape or za.shape[0] != w.size:
            raise DimensionMismatchError("atom factors have different shapes")
        for arr in (w, za, zb):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "za", za)
        object.__setattr__(self, "zb", zb)
        if self.quadrature is not None:
            object.__setattr__(self, "quadrature", _check_quadrature(self.quadrature, za.shape[1]))

    @classmethod
    def zero(cls, dim: int, quadrature=None) -> TransportMap:
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim)), quadrature)

    @classmethod
    def atom(cls, weight, za, zb, quadrature=None) -> TransportMap:
        za = np.asarray(za, dtype=float)
        return cls(np.array([weight], dtype=float), za[None, :], np.asarray(zb, dtype=float)[None, :], quadrature)

    @property
    def dim(self) -> int:
        return self.za.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.weights.size

    def _compatible(self, other: TransportMap):
        if self.dim != other.dim or not same_quadrature(self.quadrature, other.quadrature):
            raise DimensionMismatchError(f"transport maps of dimension {self.dim} and {other.dim}")

    def __add__(self, other: TransportMap) -> TransportMap:
        self._compatible(other)
        return TransportMap(
            np.concatenate([self.weights, other.weights]),
            np.vstack([self.za, other.za]),
            np.vstack([self.zb, other.zb]),
            self.quadrature,
        )

    def __neg__(self) -> TransportMap:
        return TransportMap(-self.weights, self.za, self.zb, self.quadrature)

    def __sub__(self, other: TransportMap) -> TransportMap:
        return self + (-other)

    def __mul__(self, s) -> TransportMap:
        return TransportMap(float(s) * self.weights, self.za, self.zb, self.quadrature)

    __rmul__ = __mul__

    def apply(self, v) -> np.ndarray:
        """Action on a vector: ``sum_k w_k (zb_k <za_k, v> - za_k <zb_k, v>)``."""
        v = np.asarray(getattr(v, "coords", v), dtype=float)
        if v.shape != (self.dim,):
            raise DimensionMismatchError(f"vector of shape {v.shape} for a map of dimension {self.dim}")
        return self.weights * inner(self.za, v, self.quadrature) @ self.zb - (
            self.weights * inner(self.zb, v, self.quadrature)
        ) @ self.za

    def densify(self) -> np.ndarray:
        """Dense matrix in orthonormal coordinates ``sqrt(quadrature) * v``.

        Debug/oracle path only; costs O(m^2).
        """
        m = (self.zb.T * self.weights) @ self.za - (self.za.T * self.weights) @ self.zb
        if self.quadrature is not None:
            s = np.sqrt(self.quadrature)
            m = s[:, None] * m * s[None, :]
        return m

    def norm(self) -> float:
        return float(np.sqrt(max(hs_inner(self, self), 0.0)))

    def __repr__(self):
        return f"TransportMap(dim={self.dim}, n_atoms={self.n_atoms})"


def transport_between(base: UnitVector, target: UnitVector) -> TransportMap:
    """The map T with ``exp(T) base = target``, i.e. ``target (-) base``."""
    _pair(base, target)
    theta, za, zb = log_atoms(base.coords, target.coords[None, :], base.quadrature)
    if theta[0] == 0.0:
        return TransportMap.zero(base.dim, base.quadrature)
    return TransportMap(theta, za, zb, base.quadrature)


def apply(T: TransportMap, v) -> np.ndarray:
    return T.apply(v)


def hs_inner(T1: TransportMap, T2: TransportMap) -> float:
    """Hilbert-Schmidt inner product, expanded bilinearly over atoms."""
    T1._compatible(T2)
    if T1.n_atoms == 0 or T2.n_atoms == 0:
        return 0.0
    g = atom_gram(T1.za, T1.zb, T2.za, T2.zb, T1.quadrature)
    return float(T1.weights @ g @ T2.weights)


def _rodrigues(base, tb, t2b, theta):
    half = 0.5 * theta
    c1 = np.sin(theta) / theta
    c2 = 2.0 * np.sin(half) ** 2 / theta**2
    return base + c1 * tb + c2 * t2b


def rodrigues_exp(T: TransportMap, base: UnitVector) -> UnitVector:
    """``exp(T) base`` by the Rodrigues formula with ``theta = ||T base||``."""
    if T.dim != base.dim or not same_quadrature(T.quadrature, base.quadrature):
        raise DimensionMismatchError("transport map and base point dimensions differ")
    tb = T.apply(base.coords)
    theta = float(norm(tb, base.quadrature))
    if theta == 0.0:
        return base
    out = _rodrigues(base.coords, tb, T.apply(tb), theta)
    return UnitVector.normalized(out, base.quadrature)


@dataclass(frozen=True)
class FrechetMeanOptions:
    max_iterations: int = 200
    tolerance: float = 1e-10
    restarts: int = 1
    check_support: bool = True

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def frechet_objective(mu, points, weights, quadrature=None) -> float:
    d = np.arccos(np.clip(inner(points, mu, quadrature), -1.0, 1.0))
    return float(np.sum(weights * d**2))


def _newton_step(mu, points, weights, quadrature):
    """Riemannian Newton step for ``sum_i w_i d^2(mu, y_i) / 2``, or None if the Hessian is not positive definite.

    Uses the closed-form Hessian ``sum_i w_i [u_i u_i' + theta_i cot(theta_i) (I - mu mu' - u_i u_i')]``
    on the tangent space at ``mu`` (``u_i`` the unit log direction), in coordinates
    where the quadrature inner product is Euclidean.
    """
    sq = np.ones(mu.shape[-1]) if quadrature is None else np.sqrt(quadrature)
    x, Y = mu * sq, points * sq
    c = np.clip(Y @ x, -1.0, 1.0)
    theta = np.arccos(c)
    L = Y - c[:, None] * x
    s = np.sqrt(np.maximum(1.0 - c * c, 0.0))
    small = s < 1e-12
    if np.any(small & (c < 0)):
        return None
    ss = np.where(small, 1.0, s)
    u = np.where(small[:, None], 0.0, L / ss[:, None])
    a = np.where(small, 1.0, theta * c / ss)
    g = (weights * np.where(small, 0.0, theta / ss)) @ L
    m = x.size
    H = float(weights @ a) * (np.eye(m) - np.outer(x, x)) + (u.T * (weights * (1.0 - a))) @ u + np.outer(x, x)
    try:
        cf = cho_factor(H)
    except np.linalg.LinAlgError:
        return None
    step = cho_solve(cf, g)
    step -= (step @ x) * x
    return step / sq


def _kink_minimum(mu, points, weights, quadrature):
    """Antipode of a negatively weighted point that is a nonsmooth local minimum near ``mu``, else None.

    At ``-y_j`` the term ``w_j d^2(., y_j)`` with ``w_j < 0`` has a cone of slope
    ``2 pi |w_j|``; the point is a local minimum when that slope beats the
    gradient norm of the remaining terms.
    """
    neg = weights < 0
    if not np.any(neg):
        return None
    c = inner(points, mu, quadrature)
    j = int(np.argmin(np.where(neg, c, np.inf)))
    if c[j] > -1.0 + 1e-9:
        return None
    cand = -points[j]
    others = np.ones(weights.size, dtype=bool)
    others[j] = False
    g = weights[others] @ log_map(cand, points[others], quadrature)
    if float(norm(g, quadrature)) < 2.0 * np.pi * abs(weights[j]):
        return cand
    return None


def _tangent_descent(start, points, weights, wsum, opts, quadrature):
    mu = start
    obj = frechet_objective(mu, points, weights, quadrature)
    for _ in range(opts.max_iterations):
        kink = _kink_minimum(mu, points, weights, quadrature)
        if kink is not None:
            warnings.warn("Fréchet minimizer is the antipode of a negatively weighted point "
                          "(nonsmooth minimum; first-order condition does not apply)",
                          NonsmoothMinimumWarning, stacklevel=3)
            return kink, True
        v = (weights @ log_map(mu, points, quadrature)) / wsum
        step = float(norm(v, quadrature))
        if step < opts.tolerance:
            return mu, True
        nt = _newton_step(mu, points, weights, quadrature)
        if nt is not None and np.all(np.isfinite(nt)) and float(norm(nt, quadrature)) < np.pi / 2:
            cand = exp_map(mu, nt, quadrature)
            cobj = frechet_objective(cand, points, weights, quadrature)
            if cobj <= obj + 1e-12 * (abs(obj) + 1.0):
                mu, obj = cand, cobj
                continue
        # full tangent-average step; halve it only if the objective goes up
        # (can happen with negative weights, where the plain scheme may cycle)
        t = 1.0
        for _ in range(40):
            cand = exp_map(mu, t * v, quadrature)
            cobj = frechet_objective(cand, points, weights, quadrature)
            if cobj <= obj + 1e-12 * (abs(obj) + 1.0):
                break
            t *= 0.5
        else:
            # no descent along v at any scale: mu sits on the kink of d^2 at the
            # antipode of a negatively weighted point, a nonsmooth local minimum
            warnings.warn(f"Fréchet objective is nonsmooth at the minimizer (residual tangent norm {step:.3g})",
                          NonsmoothMinimumWarning, stacklevel=3)
            return mu, True
        mu, obj = cand, cobj
    v = (weights @ log_map(mu, points, quadrature)) / wsum
    return mu, float(norm(v, quadrature)) < opts.tolerance


def max_pairwise_distance(points, quadrature=None) -> float:
    pts = points * quadrature if quadrature is not None else points
    return float(np.arccos(np.clip((pts @ points.T).min(), -1.0, 1.0)))


def frechet_mean(points, weights=None, opts: FrechetMeanOptions | None = None, *, quadrature=None, rng=None):
    """Weighted Fréchet mean on the sphere by iterated tangent averaging.

    Parameters
    ----------
    points : sequence of UnitVector or (n, m) array
    weights : (n,) array, optional
        May contain negative entries; their sum must be nonzero.
    opts : FrechetMeanOptions
    quadrature : array, optional
        Only used when ``points`` is a bare array.
    rng : numpy Generator, optional
        Source of the extra starting points when ``opts.restarts > 1``.

    Returns
    -------
    UnitVector
        A local minimizer of ``sum_i w_i d^2(nu, y_i)``.
    """
    opts = opts or FrechetMeanOptions()
    pts, q = as_points(points, quadrature)
    n = pts.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.size != n:
        raise DimensionMismatchError(f"{w.size} weights for {n} points")
    wsum = float(w.sum())
    if wsum == 0.0:
        raise ValueError("weights sum to zero")
    if opts.check_support and n > 1 and max_pairwise_distance(pts, q) > np.pi / 2 + 1e-12:
        warnings.warn("pairwise distances exceed pi/2; the Fréchet mean may not be unique",
                      HemisphereWarning, stacklevel=2)

    ext = w @ pts
    en = float(norm(ext, q))
    starts = [ext / en if en > 1e-12 else pts[int(np.argmax(w))]]
    if opts.restarts > 1:
        rng = rng if rng is not None else np.random.default_rng(0)
        picks = rng.choice(n, size=min(opts.restarts - 1, n), replace=False)
        starts.extend(pts[picks])

    best, best_obj = None, np.inf
    for s in starts:
        mu, ok = _tangent_descent(s, pts, w, wsum, opts, q)
        if not ok:
            continue
        obj = frechet_objective(mu, pts, w, q)
        if obj < best_obj:
            best, best_obj = mu, obj
    if best is None:
        raise ConvergenceError(f"Fréchet mean did not converge in {opts.max_iterations} iterations")
    return UnitVector.normalized(best, q)


def center_transports(maps: Sequence[TransportMap]):
    """Return ``(centered maps, mean map)`` by atom concatenation."""
    maps = list(maps)
    if not maps:
        raise ValueError("no transport maps")
    n = len(maps)
    mean = maps[0] * (1.0 / n)
    for T in maps[1:]:
        mean = mean + T * (1.0 / n)
    return [T - mean for T in maps], mean
