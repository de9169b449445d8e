"""Collections of transport maps over a shared atom dictionary.

Spatial models only ever form linear combinations of per-site transports
(centering, spatial filtering ``(I - rho W)``, the equilibrium ``S^{-1}``,
neighbour averages for prediction). Holding ``n`` maps as a coefficient
matrix over one dictionary of ``K`` atoms keeps every such step a matrix
product, and the Gram matrix is ``C A C^T`` with ``A`` the K x K atom Gram.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import DimensionMismatchError
from .sphere import TransportMap, UnitVector, _rodrigues, atom_gram, inner, log_atoms, norm, same_quadrature


@dataclass(frozen=True, eq=False)
class TransportFamily:
    """Member ``i`` is ``sum_k coef[i, k] * (zb_k o za_k - za_k o zb_k)``."""

    coef: np.ndarray
    za: np.ndarray
    zb: np.ndarray
    quadrature: np.ndarray | None = None

    def __post_init__(self):
        coef = np.atleast_2d(np.asarray(self.coef, dtype=float))
        if coef.shape[1] != self.za.shape[0] or self.za.shape != self.zb.shape:
            raise DimensionMismatchError(
                f"coefficients {coef.shape} do not match a dictionary of {self.za.shape[0]} atoms"
            )
        object.__setattr__(self, "coef", coef)

    @classmethod
    def from_atoms(cls, weights, za, zb, quadrature=None) -> TransportFamily:
        """One member per atom: member ``i`` is ``weights[i]`` times atom ``i``."""
        w = np.asarray(weights, dtype=float)
        return cls(np.diag(w), np.asarray(za, dtype=float), np.asarray(zb, dtype=float), quadrature)

    @classmethod
    def logs(cls, base, targets, quadrature=None) -> TransportFamily:
        """``target_i (-) base_i`` for each target (base broadcast if single)."""
        theta, za, zb = log_atoms(getattr(base, "coords", base), targets, quadrature)
        return cls.from_atoms(theta, za, zb, quadrature)

    @classmethod
    def from_maps(cls, maps: Sequence[TransportMap]) -> TransportFamily:
        maps = list(maps)
        if not maps:
            raise ValueError("no transport maps")
        q = maps[0].quadrature
        for T in maps[1:]:
            if T.dim != maps[0].dim or not same_quadrature(T.quadrature, q):
                raise DimensionMismatchError("transport maps of different dimensions")
        sizes = [T.n_atoms for T in maps]
        coef = np.zeros((len(maps), sum(sizes)))
        start = 0
        for i, (T, k) in enumerate(zip(maps, sizes)):
            coef[i, start:start + k] = T.weights
            start += k
        dim = maps[0].dim
        za = np.vstack([T.za for T in maps]) if start else np.zeros((0, dim))
        zb = np.vstack([T.zb for T in maps]) if start else np.zeros((0, dim))
        return cls(coef, za, zb, q)

    def __len__(self) -> int:
        return self.coef.shape[0]

    @property
    def dim(self) -> int:
        return self.za.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.za.shape[0]

    def map_from_coef(self, c) -> TransportMap:
        c = np.asarray(c, dtype=float).reshape(-1)
        keep = c != 0
        return TransportMap(c[keep], self.za[keep], self.zb[keep], self.quadrature)

    def __getitem__(self, i) -> TransportMap:
        return self.map_from_coef(self.coef[i])

    def maps(self) -> list[TransportMap]:
        return [self[i] for i in range(len(self))]

    @cached_property
    def atom_gram(self) -> np.ndarray:
        return atom_gram(self.za, self.zb, self.za, self.zb, self.quadrature)

    def gram(self) -> np.ndarray:
        """Pairwise Hilbert-Schmidt inner products of the members."""
        g = self.coef @ self.atom_gram @ self.coef.T
        return 0.5 * (g + g.T)

    def norms(self) -> np.ndarray:
        sq = np.einsum("ik,ik->i", self.coef @ self.atom_gram, self.coef)
        return np.sqrt(np.maximum(sq, 0.0))

    def inner_with(self, T: TransportMap) -> np.ndarray:
        """``<member_i, T>`` for every member."""
        if T.n_atoms == 0:
            return np.zeros(len(self))
        cross = atom_gram(self.za, self.zb, T.za, T.zb, self.quadrature)
        return self.coef @ (cross @ T.weights)

    def combine(self, M) -> TransportFamily:
        """Members ``sum_j M[r, j] * member_j`` for each row ``r`` of ``M``."""
        if sparse.issparse(M):
            coef = np.asarray(M @ self.coef)
        else:
            coef = np.asarray(M, dtype=float) @ self.coef
        return TransportFamily(coef, self.za, self.zb, self.quadrature)

    def take(self, idx) -> TransportFamily:
        return TransportFamily(self.coef[np.asarray(idx)], self.za, self.zb, self.quadrature)

    def mean_coef(self) -> np.ndarray:
        return self.coef.mean(axis=0)

    def mean(self) -> TransportMap:
        return self.map_from_coef(self.mean_coef())

    def centered(self) -> TransportFamily:
        return TransportFamily(self.coef - self.mean_coef(), self.za, self.zb, self.quadrature)

    def apply(self, v) -> np.ndarray:
        """``member_i v`` for every member; returns ``(n, m)``."""
        v = np.asarray(getattr(v, "coords", v), dtype=float)
        pa = inner(self.za, v, self.quadrature)
        pb = inner(self.zb, v, self.quadrature)
        return (self.coef * pa) @ self.zb - (self.coef * pb) @ self.za

    def apply_rows(self, V) -> np.ndarray:
        """``member_i V[i]`` for every member."""
        V = np.asarray(V, dtype=float)
        zaq = self.za if self.quadrature is None else self.za * self.quadrature
        zbq = self.zb if self.quadrature is None else self.zb * self.quadrature
        pa = V @ zaq.T
        pb = V @ zbq.T
        return (self.coef * pa) @ self.zb - (self.coef * pb) @ self.za

    def exp_at(self, base) -> np.ndarray:
        """Rodrigues exponential of each member applied to ``base`` (one point or one per member)."""
        base = np.asarray(getattr(base, "coords", base), dtype=float)
        B = np.broadcast_to(base, (len(self), self.dim))
        tb = self.apply(base) if base.ndim == 1 else self.apply_rows(B)
        theta = norm(tb, self.quadrature)
        t2b = self.apply_rows(tb)
        out = np.array(B, dtype=float)
        moved = theta > 0
        th = theta[moved][:, None]
        out[moved] = _rodrigues(B[moved], tb[moved], t2b[moved], th)
        return out / norm(out, self.quadrature)[:, None]

    def exp_points(self, base) -> list[UnitVector]:
        return [UnitVector.normalized(p, self.quadrature) for p in self.exp_at(base)]
