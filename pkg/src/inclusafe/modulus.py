"""Factored continuity moduli for set-valued maps.

A modulus pair splits a bound on how far the image of a map can spread when
its argument is inflated by a ball into a step factor (a nondecreasing
function of the inflation radius, zero at zero) and a state factor (a
function of the evaluation point, at least one everywhere):

    F(x + delta*B)  inside  F(x) + step_gain(delta) * state_gain(x) * B.

The construction tabulates the extra image spread beyond the spread at the
origin on a logarithmic grid, splits its log into two one-variable
envelopes, and exponentiates.  All sampling is deterministic; the result is
intentionally conservative (validity is checked by ``verify_modulus``, not
tightness).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .convexset import ConvexCompactSet, hausdorff, hull_union_many, unit_directions
from .numerics import box_array
from .svmap import unit_ball_lattice

__all__ = [
    "ModulusPair",
    "ModulusReport",
    "ModulusBuildError",
    "TabulatedFn",
    "local_gap",
    "beta",
    "build_modulus",
    "verify_modulus",
]

#: log-value standing in for log(0) on the tabulated grid
LOG_FLOOR = -1e6


class ModulusBuildError(RuntimeError):
    """The tabulated pipeline could not be completed."""


@dataclass(frozen=True)
class TabulatedFn:
    """Piecewise-linear function given by sample arrays (clamped beyond)."""

    xs: np.ndarray
    ys: np.ndarray

    def __call__(self, x: float) -> float:
        return float(np.interp(x, self.xs, self.ys))

    def to_dict(self) -> dict:
        return {"xs": [float(v) for v in self.xs], "ys": [float(v) for v in self.ys]}

    @classmethod
    def from_dict(cls, d: dict) -> "TabulatedFn":
        return cls(np.asarray(d["xs"], dtype=float), np.asarray(d["ys"], dtype=float))


def _ball_hull(f_map, center, radius: float, density: int) -> ConvexCompactSet:
    """Hull of images over an inscribed lattice of the ball center + radius*B."""
    center = np.asarray(center, dtype=float).reshape(-1)
    if radius <= 0.0:
        return f_map.image(center)
    offsets = unit_ball_lattice(center.shape[0], density) * radius
    return hull_union_many([f_map.image(center + u) for u in offsets])


def local_gap(
    f_map,
    y,
    s: float,
    *,
    density: int = 9,
    directions: int = 64,
    _origin_term: Optional[float] = None,
) -> float:
    """Extra image spread at y beyond the spread at the origin.

    ``|F(y + s*B) - F(y)|_H - |F(s*B) - F(0)|_H`` with both Hausdorff
    distances computed on argument-ball lattice hulls.  Zero for s = 0.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    s = float(s)
    if s < 0.0:
        raise ValueError("ball radius s must be >= 0")
    if s == 0.0:
        return 0.0
    kw = {"directions": directions} if y.shape[0] > 1 else {}
    spread = hausdorff(_ball_hull(f_map, y, s, density), f_map.image(y), **kw)
    if _origin_term is None:
        origin = np.zeros_like(y)
        _origin_term = hausdorff(_ball_hull(f_map, origin, s, density), f_map.image(origin), **kw)
    return spread - _origin_term


def beta(
    f_map,
    r: float,
    delta: float,
    *,
    density: int = 9,
    rings: int = 8,
    directions: int = 64,
) -> float:
    """Max of :func:`local_gap` over sampled |y| <= r, s <= delta.

    Exactly zero when either argument is zero (the origin sample y = 0 is
    always included, so the value is never negative).
    """
    r, delta = float(r), float(delta)
    if r < 0.0 or delta < 0.0:
        raise ValueError("beta arguments must be >= 0")
    if r == 0.0 or delta == 0.0:
        return 0.0
    n = f_map.dimension
    ring = unit_directions(n, 2 if n == 1 else 16)
    mags = np.linspace(0.0, r, rings + 1)[1:]
    svals = np.linspace(0.0, delta, rings + 1)[1:]
    origin = np.zeros(n)
    hskw = {"directions": directions} if n > 1 else {}
    f0 = f_map.image(origin)
    best = 0.0
    for s in svals:
        origin_term = hausdorff(_ball_hull(f_map, origin, s, density), f0, **hskw)
        for m in mags:
            for d in ring:
                g = local_gap(
                    f_map, m * d, s, density=density, directions=directions,
                    _origin_term=origin_term,
                )
                best = max(best, g)
    return best


class ModulusPair:
    """Factored spread bound: ``step_gain(delta) * state_gain(x)``."""

    def __init__(
        self,
        step_fn: Callable[[float], float],
        state_fn: Callable[[np.ndarray], float],
        *,
        degenerate: bool = False,
        tables: Optional[dict] = None,
        flags: Optional[dict] = None,
    ):
        self._step = step_fn
        self._state = state_fn
        self.degenerate = bool(degenerate)
        self.tables = tables or {}
        self.flags = flags or {}

    def step_gain(self, delta: float) -> float:
        d = float(delta)
        if d < 0.0:
            raise ValueError("inflation radius must be >= 0")
        if d == 0.0:
            return 0.0
        return float(self._step(d))

    def state_gain(self, x) -> float:
        return float(self._state(np.asarray(x, dtype=float).reshape(-1)))

    def bound(self, x, delta: float) -> float:
        return self.step_gain(delta) * self.state_gain(x)

    @classmethod
    def from_callables(cls, step_fn, state_fn, **kw) -> "ModulusPair":
        return cls(step_fn, state_fn, **kw)

    # ------------------------------------------------------------------ #
    def to_tables(self) -> dict:
        if not self.tables:
            raise ValueError("this modulus pair carries no serialized tables")
        return self.tables

    @classmethod
    def from_tables(cls, tables: dict) -> "ModulusPair":
        """Rebuild evaluators from serialized tables.

        The reloaded pair evaluates the direct spread term by linear
        interpolation of its table (the built pair evaluates it on demand
        against the map, which is exact at the sampled radii).
        """
        kind = tables.get("kind")
        direct = TabulatedFn.from_dict(tables["direct"])
        if kind == "degenerate":
            return cls(direct, lambda x: 1.0, degenerate=True, tables=tables,
                       flags=dict(tables.get("flags", {})))
        if kind != "built":
            raise ValueError(f"cannot rebuild modulus of kind {kind!r}")
        env = TabulatedFn.from_dict(tables["envelope"])
        cutoff = math.exp(-float(tables["log_range"]))

        def growth(s: float) -> float:
            if s <= cutoff:
                return 0.0
            return math.exp(env(math.log(s)))

        def step_fn(d: float) -> float:
            return max(growth(d), direct(d))

        def state_fn(x) -> float:
            return growth(float(np.linalg.norm(x))) + 1.0

        return cls(step_fn, state_fn, degenerate=False, tables=tables,
                   flags=dict(tables.get("flags", {})))


def _bilinear(grid: np.ndarray, values: np.ndarray):
    """Clamped bilinear interpolation on a square log-grid."""
    lo, hi = float(grid[0]), float(grid[-1])
    step = float(grid[1] - grid[0])
    m = len(grid)

    def interp(a: float, b: float) -> float:
        a = min(max(a, lo), hi)
        b = min(max(b, lo), hi)
        ia = min(int((a - lo) / step), m - 2)
        ib = min(int((b - lo) / step), m - 2)
        ta = (a - (lo + ia * step)) / step
        tb = (b - (lo + ib * step)) / step
        v00 = values[ia, ib]
        v10 = values[ia + 1, ib]
        v01 = values[ia, ib + 1]
        v11 = values[ia + 1, ib + 1]
        return float(
            (1 - ta) * (1 - tb) * v00
            + ta * (1 - tb) * v10
            + (1 - ta) * tb * v01
            + ta * tb * v11
        )

    return interp


def build_modulus(
    f_map,
    *,
    log_range: float = 20.0,
    log_step: Optional[float] = None,
    density: Optional[int] = None,
    ring_count: Optional[int] = None,
    directions: int = 64,
    root_tol: float = 1e-6,
) -> ModulusPair:
    """Construct a factored spread bound for the map by grid tabulation.

    Pipeline: tabulate the extra spread (cumulative max over nested rings,
    so the grid is monotone in both arguments by construction), rescale so
    the unit-cell value has positive log when possible, locate the radius
    where the unit-step spread crosses one, split the log-spread into two
    one-variable envelopes, and exponentiate.  Maps whose extra spread
    vanishes on the whole grid take a degenerate path: the step factor is
    the origin spread itself and the state factor is one.
    """
    n = f_map.dimension
    if log_step is None:
        log_step = 0.5 if n == 1 else 1.0
    if density is None:
        density = 9 if n == 1 else 5
    if ring_count is None:
        ring_count = 2 if n == 1 else 8

    steps = log_range / log_step
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError("log_range must be an integer multiple of log_step")
    count = 2 * int(round(steps)) + 1
    grid = np.linspace(-log_range, log_range, count)
    radii = np.exp(grid)
    flags: dict = {}

    ring = unit_directions(n, 2 if n == 1 else ring_count)
    kw = {"density": density, "directions": directions}
    origin = np.zeros(n)

    # direct spread term |F(s*B) - F(0)|_H per grid radius
    hskw = {"directions": directions} if n > 1 else {}
    f0 = f_map.image(origin)
    direct_vals = np.array(
        [hausdorff(_ball_hull(f_map, origin, s, density), f0, **hskw) for s in radii]
    )

    # raw extra spread at ring radius i, step radius j
    raw = np.zeros((count, count))
    for i, r in enumerate(radii):
        for k, d in enumerate(ring):
            y = r * d
            fy = f_map.image(y)
            for j, s in enumerate(radii):
                spread = hausdorff(_ball_hull(f_map, y, s, density), fy, **hskw)
                g = spread - direct_vals[j]
                if g > raw[i, j]:
                    raw[i, j] = g

    # nested-ring cumulative max: monotone in both arguments, >= 0 since the
    # origin ring contributes zero
    M = np.maximum.accumulate(np.maximum.accumulate(np.maximum(raw, 0.0), axis=0), axis=1)

    direct_scale = 1.0 + float(direct_vals.max())
    direct_tab = TabulatedFn(
        np.concatenate([[0.0], radii]), np.concatenate([[0.0], direct_vals])
    )

    def direct_fn(d: float) -> float:
        return hausdorff(_ball_hull(f_map, origin, d, density), f0, **hskw)

    if M.max() <= 1e-10 * direct_scale:
        tables = {
            "kind": "degenerate",
            "log_range": float(log_range),
            "direct": direct_tab.to_dict(),
            "flags": {"degenerate": True},
        }
        return ModulusPair(
            direct_fn, lambda x: 1.0, degenerate=True, tables=tables,
            flags={"degenerate": True},
        )

    # rescale so the unit-cell log value is positive when possible
    i0 = count // 2  # grid index of log radius 0
    scale = 1.0
    beta_unit = M[i0, i0]
    if beta_unit <= 1.0 and beta_unit > 0.0:
        scale = 2.0 / beta_unit
        M = M * scale
        flags["rescaled"] = scale

    C = np.where(M > 0.0, np.log(np.where(M > 0.0, M, 1.0)), LOG_FLOOR)
    c_at = _bilinear(grid, C)
    A = float(log_range)

    # onset: largest log radius where the unit-step log spread is still <= 0
    f_lo, f_hi = c_at(-A, 0.0), c_at(A, 0.0)
    if f_lo > 0.0:
        onset = -A
        flags["onset_clamped_low"] = True
    elif f_hi <= 0.0:
        onset = A
        flags["onset_clamped_high"] = True
    else:
        lo, hi = -A, A
        while hi - lo > root_tol:
            mid = 0.5 * (lo + hi)
            if c_at(mid, 0.0) <= 0.0:
                lo = mid
            else:
                hi = mid
        onset = lo

    # root table: for a <= onset, the radius where c(a, b) = -b
    def onset_root(a: float) -> float:
        def q(b):
            return c_at(a, b) + b

        hi_b = 2.0 * A
        if q(hi_b) < 0.0:
            flags["root_clamped"] = True
            return hi_b
        lo_b, hb = -A, hi_b
        if q(lo_b) > 0.0:
            return 0.0
        while hb - lo_b > root_tol:
            mid = 0.5 * (lo_b + hb)
            if q(mid) <= 0.0:
                lo_b = mid
            else:
                hb = mid
        return max(lo_b, 0.0)

    mask = grid <= onset + 1e-12
    root_xs = grid[mask]
    root_ys = np.array([onset_root(a) for a in root_xs])
    for i in range(1, len(root_ys)):  # enforce the nonincreasing shape
        root_ys[i] = min(root_ys[i], root_ys[i - 1])
    root_tab = TabulatedFn(root_xs, root_ys) if len(root_xs) else TabulatedFn(
        np.array([-A]), np.array([0.0])
    )

    # split the log spread into envelopes attributed to the evaluation radius
    # (arg_exp) and to the step radius (step_exp)
    c_diag_onset = c_at(onset, onset)
    arg_exp = np.empty(count)
    for i, a in enumerate(grid):
        if a <= onset:
            arg_exp[i] = -0.5 * root_tab(a)
        else:
            arg_exp[i] = c_at(a, a) - c_diag_onset + (a - onset)

    step_exp = np.empty(count)
    endpoint_warn = False
    for j in range(count):
        cand = C[:, j] - arg_exp
        step_exp[j] = float(cand.max())
        if step_exp[j] - max(cand[0], cand[-1]) < 10.0 and step_exp[j] > LOG_FLOOR / 2:
            endpoint_warn = True
    if endpoint_warn:
        flags["sup_endpoint_warning"] = True

    envelope = np.maximum(arg_exp, step_exp)
    env_tab = TabulatedFn(grid, envelope)
    cutoff = math.exp(-A)

    def growth(s: float) -> float:
        if s <= cutoff:
            return 0.0
        return math.exp(env_tab(math.log(s)))

    def step_fn(d: float) -> float:
        return max(growth(d), direct_fn(d))

    def state_fn(x) -> float:
        return growth(float(np.linalg.norm(x))) + 1.0

    tables = {
        "kind": "built",
        "log_range": float(log_range),
        "grid": [float(v) for v in grid],
        "log_gap": [[float(v) for v in row] for row in C],
        "onset": float(onset),
        "scale": float(scale),
        "onset_root": root_tab.to_dict(),
        "arg_exponent": TabulatedFn(grid, arg_exp).to_dict(),
        "step_exponent": TabulatedFn(grid, step_exp).to_dict(),
        "envelope": env_tab.to_dict(),
        "direct": direct_tab.to_dict(),
        "flags": dict(flags),
    }
    return ModulusPair(step_fn, state_fn, degenerate=False, tables=tables, flags=flags)


@dataclass
class ModulusReport:
    """Outcome of a sampled containment verification."""

    passed: bool
    min_slack: float
    worst: Optional[dict] = None
    samples: int = 0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_slack": self.min_slack,
            "worst": self.worst,
            "samples": self.samples,
        }


def verify_modulus(
    f_map,
    pair: ModulusPair,
    box,
    *,
    samples: int = 1000,
    delta_max: float = 1.0,
    seed: int = 0,
    density: int = 9,
    directions: int = 64,
    pass_tol: float = 1e-9,
) -> ModulusReport:
    """Sampled containment check F(x + delta*B) in F(x) + bound * B.

    Draws (x, delta) pairs from the box and (0, delta_max], compares sampled
    support values of the inflated-argument hull against the base image plus
    the modulus bound, and records the worst slack.
    """
    b = box_array(box)
    n = b.shape[0]
    rng = np.random.default_rng(seed)
    dirs = unit_directions(n, directions if n > 1 else 2)
    min_slack = math.inf
    worst = None
    for _ in range(samples):
        x = rng.uniform(b[:, 0], b[:, 1])
        delta = float(rng.uniform(0.0, delta_max))
        big = _ball_hull(f_map, x, delta, density)
        base = f_map.image(x)
        bound = pair.bound(x, delta)
        slack = float((base.support_many(dirs) + bound - big.support_many(dirs)).min())
        if slack < min_slack:
            min_slack = slack
            worst = {"x": [float(v) for v in x], "delta": delta, "slack": slack}
    return ModulusReport(
        passed=bool(min_slack >= -pass_tol),
        min_slack=float(min_slack),
        worst=worst,
        samples=samples,
    )
