"""Geometry kernel: convex compact sets as point hulls inflated by a ball.

A set is represented as ``co{points} + radius * B`` with ``B`` the closed
Euclidean unit ball.  This representation is closed under Minkowski sums and
under outer hulls of unions, which is all the set arithmetic the rest of the
package needs.  Support values are exact for the stored representation;
Hausdorff distance and membership are exact in one dimension and
direction-sampled in higher dimensions.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

__all__ = [
    "ConvexCompactSet",
    "DimensionMismatchError",
    "unit_directions",
    "minkowski_sum",
    "hull_union",
    "hull_union_many",
    "hausdorff",
    "contains",
    "DEFAULT_DIRECTIONS",
    "HULL_MERGE_ANGLE",
]

#: default number of sampled support directions for n >= 2
DEFAULT_DIRECTIONS = 256

#: angular resolution used when merging hulls of unequal ball radii (2-D)
HULL_MERGE_ANGLE = math.pi / 32

#: point count above which intermediate hulls are pruned to their vertices
_PRUNE_THRESHOLD = 96


class DimensionMismatchError(ValueError):
    """Operands of a set operation live in different dimensions."""


@lru_cache(maxsize=64)
def _directions_cached(dimension: int, count: int) -> np.ndarray:
    if dimension < 1:
        raise ValueError(f"dimension must be >= 1, got {dimension}")
    if dimension == 1:
        dirs = np.array([[-1.0], [1.0]])
    elif dimension == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    elif dimension == 3:
        # Fibonacci sphere
        k = np.arange(count, dtype=float)
        z = 1.0 - 2.0 * (k + 0.5) / count
        phi = k * (np.pi * (3.0 - np.sqrt(5.0)))
        rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        dirs = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    else:
        # deterministic low-discrepancy fallback: fixed-seed Gaussian directions
        rng = np.random.default_rng(20240817)
        raw = rng.standard_normal((count, dimension))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        norms[norms < 1e-12] = 1.0
        dirs = raw / norms
    dirs.setflags(write=False)
    return dirs


def unit_directions(dimension: int, count: int = DEFAULT_DIRECTIONS) -> np.ndarray:
    """Deterministic unit direction samples.

    One dimension returns exactly {-1, +1}; two dimensions a uniform circle;
    three a Fibonacci sphere; higher dimensions a fixed-seed normalized
    Gaussian cloud.  The array is cached and read-only.
    """
    return _directions_cached(int(dimension), int(count))


class ConvexCompactSet:
    """Nonempty convex compact set ``co{points} + radius * unit ball``."""

    __slots__ = ("points", "radius")

    def __init__(self, points, radius: float = 0.0):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError(f"points must be a nonempty (k, n) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        radius = float(radius)
        if not math.isfinite(radius) or radius < 0.0:
            raise ValueError(f"radius must be finite and >= 0, got {radius}")
        pts.setflags(write=False)
        self.points = pts
        self.radius = radius

    # ------------------------------------------------------------------ #
    @classmethod
    def singleton(cls, point) -> "ConvexCompactSet":
        return cls(np.asarray(point, dtype=float).reshape(1, -1), 0.0)

    @classmethod
    def ball(cls, center, radius: float) -> "ConvexCompactSet":
        return cls(np.asarray(center, dtype=float).reshape(1, -1), radius)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "ConvexCompactSet":
        if hi < lo:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        return cls(np.array([[float(lo)], [float(hi)]]), 0.0)

    # ------------------------------------------------------------------ #
    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def support(self, direction) -> float:
        """Exact support value ``max_p <p, d> + radius * |d|``."""
        d = np.asarray(direction, dtype=float).reshape(-1)
        if d.shape[0] != self.dimension:
            raise DimensionMismatchError(
                f"direction has dimension {d.shape[0]}, set has {self.dimension}"
            )
        return float((self.points @ d).max() + self.radius * np.linalg.norm(d))

    def support_many(self, directions: np.ndarray) -> np.ndarray:
        """Support values for each row of ``directions``."""
        D = np.asarray(directions, dtype=float)
        if D.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"directions have dimension {D.shape[1]}, set has {self.dimension}"
            )
        vals = (D @ self.points.T).max(axis=1)
        if self.radius > 0.0:
            vals = vals + self.radius * np.linalg.norm(D, axis=1)
        return vals

    def extreme_point(self, direction) -> np.ndarray:
        """A maximizer of ``<., d>`` over the set (hull vertex plus ball offset)."""
        d = np.asarray(direction, dtype=float).reshape(-1)
        idx = int(np.argmax(self.points @ d))
        p = self.points[idx].copy()
        norm = np.linalg.norm(d)
        if self.radius > 0.0 and norm > 1e-300:
            p = p + self.radius * d / norm
        return p

    def inflate(self, margin: float) -> "ConvexCompactSet":
        if margin == 0.0:
            return self
        return ConvexCompactSet(self.points, self.radius + float(margin))

    def translate(self, shift) -> "ConvexCompactSet":
        v = np.asarray(shift, dtype=float).reshape(1, -1)
        return ConvexCompactSet(self.points + v, self.radius)

    def scale(self, factor: float) -> "ConvexCompactSet":
        f = float(factor)
        return ConvexCompactSet(self.points * f, self.radius * abs(f))

    def interval_bounds(self) -> tuple[float, float]:
        """(lo, hi) endpoints; exact, only defined in one dimension."""
        if self.dimension != 1:
            raise DimensionMismatchError("interval_bounds is only defined for 1-D sets")
        col = self.points[:, 0]
        return float(col.min() - self.radius), float(col.max() + self.radius)

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"ConvexCompactSet({self.points.shape[0]} pts, n={self.dimension}, r={self.radius:g})"


# ---------------------------------------------------------------------- #
def _prune(points: np.ndarray) -> np.ndarray:
    """Drop points interior to the hull.  Exact: support values are unchanged."""
    points = np.unique(points, axis=0)
    n = points.shape[1]
    if n == 1:
        return np.array([[points[:, 0].min()], [points[:, 0].max()]])
    if points.shape[0] <= n + 1:
        return points
    try:
        hull = ConvexHull(points)
    except QhullError:
        # degenerate (e.g. collinear) input: keep everything rather than risk
        # dropping a true extreme point under joggling
        return points
    return points[np.sort(hull.vertices)]


def _check_same_dimension(sets: Sequence[ConvexCompactSet]):
    dims = {s.dimension for s in sets}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed dimensions {sorted(dims)}")


def minkowski_sum(a: ConvexCompactSet, b: ConvexCompactSet) -> ConvexCompactSet:
    """Exact Minkowski sum: pairwise point sums, radii added."""
    _check_same_dimension((a, b))
    pts = (a.points[:, None, :] + b.points[None, :, :]).reshape(-1, a.dimension)
    if pts.shape[0] > _PRUNE_THRESHOLD:
        pts = _prune(pts)
    return ConvexCompactSet(pts, a.radius + b.radius)


def _boundary_ring(dimension: int, angle: float) -> np.ndarray:
    if dimension == 1:
        return unit_directions(1)
    if dimension == 2:
        count = max(4, int(math.ceil(2.0 * math.pi / angle)))
        return unit_directions(2, count)
    return unit_directions(dimension, DEFAULT_DIRECTIONS)


def hull_union_many(sets: Sequence[ConvexCompactSet], *, angle: float = HULL_MERGE_ANGLE) -> ConvexCompactSet:
    """Outer approximation of ``co(union of sets)``.

    With equal radii the result is exact (point lists concatenate).  With
    unequal radii, each smaller-radius operand is replaced by points on its
    boundary at the given angular resolution and the result carries the
    largest radius; this keeps the result a superset of every operand since
    the radius step exceeds the sampled-ring deficit r*(1 - cos(angle/2)).
    """
    sets = list(sets)
    if not sets:
        raise ValueError("hull_union_many needs at least one set")
    if len(sets) == 1:
        return sets[0]
    _check_same_dimension(sets)
    rmax = max(s.radius for s in sets)
    parts = []
    ring = None
    for s in sets:
        if s.radius == rmax or s.radius == 0.0:
            parts.append(s.points)
        else:
            if ring is None:
                ring = _boundary_ring(s.dimension, angle)
            pts = (s.points[:, None, :] + s.radius * ring[None, :, :]).reshape(-1, s.dimension)
            parts.append(pts)
    pts = np.vstack(parts)
    if pts.shape[0] > _PRUNE_THRESHOLD:
        pts = _prune(pts)
    return ConvexCompactSet(pts, rmax)


def hull_union(a: ConvexCompactSet, b: ConvexCompactSet, *, angle: float = HULL_MERGE_ANGLE) -> ConvexCompactSet:
    """Outer approximation of ``co(A u B)``; see :func:`hull_union_many`."""
    return hull_union_many([a, b], angle=angle)


def hausdorff(a: ConvexCompactSet, b: ConvexCompactSet, *, directions: int = DEFAULT_DIRECTIONS) -> float:
    """Hausdorff distance.

    Exact in one dimension (interval endpoint arithmetic); otherwise the max
    absolute support difference over sampled directions, which for convex
    compact operands underestimates by at most the direction sampling error.
    """
    _check_same_dimension((a, b))
    if a.dimension == 1:
        alo, ahi = a.interval_bounds()
        blo, bhi = b.interval_bounds()
        return max(abs(alo - blo), abs(ahi - bhi))
    dirs = unit_directions(a.dimension, directions)
    return float(np.abs(a.support_many(dirs) - b.support_many(dirs)).max())


def contains(s: ConvexCompactSet, x, tol: float = 0.0, *, directions: int = DEFAULT_DIRECTIONS) -> bool:
    """Membership test ``x in S`` up to ``tol``.

    Exact in one dimension.  In higher dimensions the test checks the
    sampled support inequalities, so it can only err on the inclusive side
    (an outer test).
    """
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != s.dimension:
        raise DimensionMismatchError(f"point has dimension {v.shape[0]}, set has {s.dimension}")
    if s.dimension == 1:
        lo, hi = s.interval_bounds()
        return bool(lo - tol <= v[0] <= hi + tol)
    dirs = unit_directions(s.dimension, directions)
    return bool(np.all(dirs @ v <= s.support_many(dirs) + tol))
