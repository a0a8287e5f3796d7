"""Weighted point clouds and the operations defined on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np


class MeasureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite weighted sum of Dirac masses in R^d.

    ``points`` is an (n, d) float64 array, ``weights`` an (n,) array summing
    to one. Both arrays are made read-only on construction.
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def expectation(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Integral of ``f`` (vectorised over rows) against the measure."""
        values = np.asarray(f(self.points), dtype=np.float64)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def translate(self, shift) -> "DiscreteMeasure":
        return DiscreteMeasure._trusted(self.points + np.asarray(shift, dtype=np.float64), self.weights)

    def same_as(self, other: "DiscreteMeasure", atol: float = 0.0) -> bool:
        """Equality as a weighted set of points (order-insensitive)."""
        if self.points.shape != other.points.shape:
            return False
        a = np.column_stack([self.points, self.weights])
        b = np.column_stack([other.points, other.weights])
        a = a[np.lexsort(a.T[::-1])]
        b = b[np.lexsort(b.T[::-1])]
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))

    @classmethod
    def _trusted(cls, points: np.ndarray, weights: np.ndarray) -> "DiscreteMeasure":
        points = np.array(points, dtype=np.float64)
        weights = np.array(weights, dtype=np.float64)
        points.setflags(write=False)
        weights.setflags(write=False)
        return cls(points, weights)


@dataclass(frozen=True)
class Sampler:
    """Deterministic sampler: ``sampler(n, seed)`` returns n i.i.d. draws."""

    draw: Callable[[int, np.random.Generator], np.ndarray]
    dim: int
    name: str = ""
    sigma: Optional[float] = None

    def __call__(self, n: int, seed: int) -> DiscreteMeasure:
        if n < 1:
            raise MeasureError("sample size must be >= 1")
        pts = np.asarray(self.draw(n, np.random.default_rng(seed)), dtype=np.float64).reshape(n, -1)
        if pts.shape[1] != self.dim:
            raise MeasureError(f"sampler {self.name!r} produced dimension {pts.shape[1]}, declared {self.dim}")
        return make_measure(pts)


def make_measure(points, weights: Optional[Sequence[float]] = None) -> DiscreteMeasure:
    """Build a measure, defaulting to uniform weights and renormalising given ones.

    Duplicate points are kept as separate atoms.
    """
    try:
        pts = np.asarray(points, dtype=np.float64)
    except ValueError as exc:
        raise MeasureError(f"points must share one dimension: {exc}") from None
    if pts.ndim == 1:
        # a flat list is a cloud of scalars
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise MeasureError("points must be a list of vectors")
    n, d = pts.shape
    if n == 0:
        raise MeasureError("empty support")
    if d < 1:
        raise MeasureError("points must have dimension >= 1")
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != n:
            raise MeasureError(f"got {w.shape[0]} weights for {n} points")
        if not np.all(np.isfinite(w)):
            raise MeasureError("weights must be finite")
        if np.any(w < 0):
            raise MeasureError("negative weight")
        total = w.sum()
        if total <= 0:
            raise MeasureError("all weights are zero")
        w = w / total
    return DiscreteMeasure._trusted(pts, w)


def uniform(points) -> DiscreteMeasure:
    return make_measure(points)


def pushforward(mu: DiscreteMeasure, T: Callable[[np.ndarray], np.ndarray], in_dim: Optional[int] = None) -> DiscreteMeasure:
    """Image of ``mu`` under ``T``; weights are carried over unchanged.

    ``T`` maps an (n, k) array to an (n, d) array. Pass ``in_dim`` to have the
    input dimension checked.
    """
    if in_dim is not None and in_dim != mu.dim:
        raise MeasureError(f"map expects dimension {in_dim}, measure has {mu.dim}")
    out = np.asarray(T(mu.points), dtype=np.float64)
    if out.ndim == 1:
        out = out.reshape(mu.size, -1)
    if out.shape[0] != mu.size:
        raise MeasureError("map must return one point per input point")
    return DiscreteMeasure._trusted(out, mu.weights)


def sub_gaussian_norm_estimate(mu: DiscreteMeasure, sigma: float) -> float:
    """Weighted mean of exp(|z|^2 / (2 k sigma^2)) with k the measure's dimension.

    A value <= 2 is consistent with ``mu`` being sigma-sub-Gaussian.
    """
    if not sigma > 0:
        raise MeasureError("sigma must be positive")
    sq = np.einsum("ij,ij->i", mu.points, mu.points)
    return float(mu.weights @ np.exp(sq / (2.0 * mu.dim * sigma**2)))


# --- CSV point clouds -------------------------------------------------------

def write_csv(mu: DiscreteMeasure, path, with_weights: bool = False) -> None:
    """Write one point per row. Weights, if requested, go in a final ``weight``
    column under an ``x0,x1,...,weight`` header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if with_weights:
            writer.writerow([f"x{i}" for i in range(mu.dim)] + ["weight"])
            for p, w in zip(mu.points, mu.weights):
                writer.writerow([repr(float(c)) for c in p] + [repr(float(w))])
        else:
            for p in mu.points:
                writer.writerow([repr(float(c)) for c in p])


def read_csv(path) -> DiscreteMeasure:
    path = Path(path)
    rows = []
    header = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header is None and not rows and not _is_numeric(row[0]):
                header = [c.strip() for c in row]
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise MeasureError(f"{path}:{lineno}: non-numeric entry") from None
            width = len(header) if header else len(rows[0])
            if len(rows[-1]) != width:
                raise MeasureError(f"{path}:{lineno}: expected {width} columns, got {len(rows[-1])}")
    if not rows:
        raise MeasureError(f"{path}: no points")
    data = np.asarray(rows, dtype=np.float64)
    if header and header[-1] == "weight":
        return make_measure(data[:, :-1], data[:, -1])
    return make_measure(data)


def _is_numeric(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
