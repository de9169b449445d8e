"""CSV and JSON readers and writers for observations, weights, covariates and fits."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .embeddings import Composition, GridDensity, composition_to_sphere, density_to_sphere
from .errors import DataFormatError
from .family import TransportFamily
from .sphere import UNIT_TOL, UnitVector
from .weights import SpatialWeights

KINDS = ("composition", "density", "unit-vector")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    meta = {}
    body = []
    for line in lines:
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            for part in s[1:].split(","):
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k.strip()] = v.strip()
            continue
        body.append(line)
    return meta, list(csv.reader(body))


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _numeric_table(rows, path):
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = rows[0], rows[1:]
    width = len(header) if header else len(rows[0])
    out = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(f"expected {width} fields, got {len(row)}", row=r)
        for c, val in enumerate(row):
            try:
                out[r, c] = float(val)
            except ValueError:
                name = header[c] if header else str(c)
                raise DataFormatError(f"not a number: {val!r}", row=r, column=name) from None
            if not math.isfinite(out[r, c]):
                raise DataFormatError("non-finite value", row=r, column=header[c] if header else str(c))
    return header, out


def read_observations(path, kind: str = "unit-vector", grid_step: float | None = None):
    """Read one observation per row and embed it in the sphere.

    Returns ``(points (n, m), quadrature or None)``. Density files give the
    grid step either through ``grid_step`` or a ``# grid_step=<value>`` line.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown data kind {kind!r}")
    meta, rows = _read_rows(path)
    _, X = _numeric_table(rows, path)
    if kind == "unit-vector":
        nrm = np.sqrt(np.sum(X**2, axis=1))
        bad = np.abs(nrm**2 - 1.0) > 1e-8
        if np.any(bad):
            r = int(np.argmax(bad))
            raise DataFormatError(f"row is not unit norm (norm {nrm[r]!r})", row=r)
        # rows already unit to working precision are kept bit-for-bit
        fix = np.abs(nrm**2 - 1.0) > UNIT_TOL
        X[fix] = X[fix] / nrm[fix, None]
        return X, None
    out = []
    if kind == "composition":
        for r, x in enumerate(X):
            try:
                out.append(composition_to_sphere(Composition(x)).coords)
            except ValueError as exc:
                raise DataFormatError(str(exc), row=r) from None
        return np.vstack(out), None
    step = grid_step if grid_step is not None else meta.get("grid_step")
    if step is None:
        raise DataFormatError(f"{path}: density data needs a grid step (--grid-step or '# grid_step=')")
    step = float(step)
    for r, x in enumerate(X):
        try:
            out.append(density_to_sphere(GridDensity(x, step)).coords)
        except ValueError as exc:
            raise DataFormatError(str(exc), row=r) from None
    return np.vstack(out), np.full(X.shape[1], step)


def write_points(path, points, kind: str = "unit-vector", quadrature=None, extra: dict | None = None):
    """Write points back in the data kind's own units (compositions, densities or coordinates)."""
    P = np.asarray(points, dtype=float)
    if kind == "composition":
        V = np.maximum(P**2, 1e-18)
        V /= V.sum(axis=1, keepdims=True)
    elif kind == "density":
        step = float(quadrature[0])
        V = P**2
        V /= V.sum(axis=1, keepdims=True) * step
    else:
        V = P
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["site"] + [f"x{j}" for j in range(V.shape[1])] + list(extra))
        for i, row in enumerate(V):
            wr.writerow([i] + [fmt(v) for v in row] + [fmt(extra[k][i]) for k in extra])


def read_weights(path, n: int | None = None, normalize: bool = True) -> SpatialWeights:
    """Triplet CSV ``i, j, w`` with 0-based indices (a header line is optional)."""
    _, rows = _read_rows(path)
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    ii, jj, ww = [], [], []
    for r, row in enumerate(rows):
        if len(row) != 3:
            raise DataFormatError(f"expected 3 fields (i, j, w), got {len(row)}", row=r)
        try:
            i, j, w = int(row[0]), int(row[1]), float(row[2])
        except ValueError:
            raise DataFormatError(f"bad triplet {row!r}", row=r) from None
        if i < 0 or j < 0:
            raise DataFormatError("negative index", row=r)
        ii.append(i)
        jj.append(j)
        ww.append(w)
    size = n if n is not None else (max(max(ii), max(jj)) + 1 if ii else 0)
    if ii and max(max(ii), max(jj)) >= size:
        raise DataFormatError(f"index out of range for {size} sites")
    try:
        return SpatialWeights.from_triplets(ii, jj, ww, size, normalize=normalize)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_weights(path, W: SpatialWeights):
    i, j, w = W.triplets()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["i", "j", "w"])
        for a, b, c in zip(i, j, w):
            wr.writerow([int(a), int(b), fmt(c)])


def read_covariates(path, columns=None, categorical=()):
    """Covariate matrix from a headed CSV; categorical columns are one-hot encoded.

    The reference level of each categorical column (its lexicographically
    first value) is dropped.
    """
    _, rows = _read_rows(path)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    cols = list(columns) if columns else [c for c in header]
    missing = [c for c in list(cols) + list(categorical) if c not in header]
    if missing:
        raise DataFormatError(f"{path}: unknown columns {missing}")
    blocks, names = [], []
    for c in cols:
        k = header.index(c)
        vals = [row[k] for row in body]
        if c in categorical:
            levels = sorted(set(vals))
            for lev in levels[1:]:
                blocks.append(np.array([v == lev for v in vals], dtype=float))
                names.append(f"{c}={lev}")
            continue
        arr = np.empty(len(vals))
        for r, v in enumerate(vals):
            try:
                arr[r] = float(v)
            except ValueError:
                raise DataFormatError(f"not a number: {v!r}", row=r, column=c) from None
        blocks.append(arr)
        names.append(c)
    X = np.column_stack(blocks) if blocks else np.zeros((len(body), 0))
    return X, names


# ---------------------------------------------------------------- fit reports

def family_record(fam: TransportFamily) -> dict:
    return {"coef": fam.coef.tolist(), "za": fam.za.tolist(), "zb": fam.zb.tolist(),
            "quadrature": None if fam.quadrature is None else fam.quadrature.tolist()}


def family_from_record(rec: dict) -> TransportFamily:
    q = rec.get("quadrature")
    return TransportFamily(np.asarray(rec["coef"], float), np.asarray(rec["za"], float),
                           np.asarray(rec["zb"], float), None if q is None else np.asarray(q, float))


def write_json(path, obj):
    text = json.dumps(obj, indent=2, allow_nan=True)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n")


def read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{p}: invalid JSON ({exc})") from None


def unit_vector(coords, quadrature=None) -> UnitVector:
    c = np.asarray(coords, float)
    q = None if quadrature is None else np.asarray(quadrature, float)
    sq = float(np.sum(c * c * (1.0 if q is None else q)))
    if abs(sq - 1.0) > UNIT_TOL:
        return UnitVector.normalized(c, q)
    return UnitVector(c, q)
