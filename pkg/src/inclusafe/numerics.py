"""Small shared numeric helpers: box grids and threshold bisection."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

__all__ = ["box_array", "grid_axes", "box_grid", "largest_feasible", "scale_box"]


def box_array(box) -> np.ndarray:
    """Validate and return a domain box as an (n, 2) array of [lo, hi] rows."""
    b = np.asarray(box, dtype=float)
    if b.ndim == 1 and b.shape[0] == 2:
        b = b.reshape(1, 2)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError(f"box must be an (n, 2) array, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("box bounds must be finite")
    if np.any(b[:, 1] <= b[:, 0]):
        raise ValueError("box upper bounds must exceed lower bounds")
    return b


def scale_box(box, factor: float) -> np.ndarray:
    """Shrink or grow a box about its center."""
    b = box_array(box)
    center = b.mean(axis=1, keepdims=True)
    half = (b[:, 1:] - b[:, :1]) / 2.0 * float(factor)
    return np.hstack([center - half, center + half])


def grid_axes(box, resolution) -> list[np.ndarray]:
    b = box_array(box)
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (b.shape[0],))
    if np.any(res < 2):
        raise ValueError("grid resolution must be >= 2 per axis")
    return [np.linspace(b[i, 0], b[i, 1], int(res[i])) for i in range(b.shape[0])]


def box_grid(box, resolution) -> np.ndarray:
    """All lattice nodes of the box grid as an (N, n) array, C-ordered."""
    axes = grid_axes(box, resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


def largest_feasible(
    violation: Callable[[float], Optional[object]],
    hi: float,
    *,
    rel_tol: float = 1e-3,
    probe_frac: float = 1e-3,
) -> tuple[float, Optional[object]]:
    """Largest value in (0, hi] for which ``violation`` returns None.

    ``violation(t)`` returns None when t is feasible, otherwise a witness
    object.  The feasible region is assumed to be an interval containing 0.
    Returns ``(0.0, witness)`` when even the probe value ``hi * probe_frac``
    fails; otherwise bisects down to relative tolerance and returns the last
    known-feasible value (sound side) with witness None.
    """
    hi = float(hi)
    if hi <= 0.0:
        raise ValueError("bracket upper end must be positive")
    probe = hi * probe_frac
    w = violation(probe)
    if w is not None:
        return 0.0, w
    if violation(hi) is None:
        return hi, None
    lo, high = probe, hi
    while high - lo > rel_tol * high:
        mid = 0.5 * (lo + high)
        if violation(mid) is None:
            lo = mid
        else:
            high = mid
    return lo, None
