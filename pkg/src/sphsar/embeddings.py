"""Square-root embeddings of compositions and grid densities into the unit sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import UnitVector

COMPOSITION_TOL = 1e-9
DENSITY_TOL = 1e-6
_CLIP = 1e-18


@dataclass(frozen=True, eq=False)
class Composition:
    parts: np.ndarray

    def __post_init__(self):
        p = np.array(self.parts, dtype=float).reshape(-1)
        if p.size < 2:
            raise ValueError("a composition needs at least two parts")
        if np.any(p < 0):
            raise ValueError(f"negative part at index {int(np.argmax(p < 0))}")
        if abs(p.sum() - 1.0) > COMPOSITION_TOL:
            raise ValueError(f"parts sum to {p.sum()!r}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "parts", p)


@dataclass(frozen=True, eq=False)
class GridDensity:
    values: np.ndarray
    grid_step: float

    def __post_init__(self):
        g = np.array(self.values, dtype=float).reshape(-1)
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if np.any(g < 0):
            raise ValueError(f"negative density value at index {int(np.argmax(g < 0))}")
        mass = g.sum() * self.grid_step
        if abs(mass - 1.0) > DENSITY_TOL:
            raise ValueError(f"density integrates to {mass!r}, expected 1")
        g.setflags(write=False)
        object.__setattr__(self, "values", g)


def composition_to_sphere(c) -> UnitVector:
    c = c if isinstance(c, Composition) else Composition(c)
    # sqrt of parts summing to one already has unit norm; normalize away the tolerance slack
    return UnitVector.normalized(np.sqrt(c.parts))


def sphere_to_composition(v) -> Composition:
    x = np.asarray(getattr(v, "coords", v), dtype=float)
    p = np.maximum(x**2, _CLIP)
    return Composition(p / p.sum())


def density_to_sphere(g: GridDensity) -> UnitVector:
    q = np.full(g.values.size, float(g.grid_step))
    return UnitVector.normalized(np.sqrt(g.values), q)


def sphere_to_density(v, grid_step: float | None = None) -> GridDensity:
    x = np.asarray(getattr(v, "coords", v), dtype=float)
    if grid_step is None:
        q = getattr(v, "quadrature", None)
        if q is None:
            raise ValueError("grid_step is required for a vector without quadrature")
        grid_step = float(q[0])
    g = x**2
    return GridDensity(g / (g.sum() * grid_step), grid_step)


def jensen_shannon(g1: GridDensity, g2: GridDensity) -> float:
    """Jensen-Shannon divergence on a common grid with ``0 log 0 = 0``."""
    if g1.values.shape != g2.values.shape or g1.grid_step != g2.grid_step:
        raise ValueError("densities live on different grids")
    a, b = g1.values, g2.values
    m = 0.5 * (a + b)

    def kl(p):
        pos = p > 0
        return float(np.sum(p[pos] * np.log(p[pos] / m[pos])) * g1.grid_step)

    return 0.5 * kl(a) + 0.5 * kl(b)
