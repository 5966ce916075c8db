"""Sampled barrier-condition checks and perturbation-margin synthesis.

Every check evaluates a decrease condition for the candidate B against the
(possibly perturbed) dynamics on a sampled region derived from the numeric
boundary of K = {B <= 0}: either the boundary representatives themselves, an
outer collar (outside K only), or a two-sided collar.  Verdicts are
"pass-numeric" (sampled condition held at tolerance; no formal claim),
"fail" (violating sample found; witness recorded), or "inconclusive"
(positive margin that shrinks markedly on nested domain boxes).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .barrier import (
    BarrierCandidate,
    BoundaryGrid,
    SafetyScenario,
    UnsupportedSmoothnessError,
    boundary_extract,
    clarke_gradient,
    collar_width,
    proximal_subdifferential,
)
from .convexset import ConvexCompactSet
from .numerics import largest_feasible
from .reports import FAIL, INCONCLUSIVE, PASS, CheckReport
from .svmap import PerturbedSystem, SetValuedMap

__all__ = [
    "CheckReport",
    "MarginSynthesis",
    "PreconditionError",
    "DegenerateGradientError",
    "check_nominal",
    "check_robust_strict",
    "check_clarke",
    "check_uniform_unweighted",
    "check_uniform_weighted",
    "synthesize_margin",
]


class PreconditionError(ValueError):
    """A check's structural precondition fails on the sampled grid."""


class DegenerateGradientError(ValueError):
    """Gradient norm vanishes where a normalized quotient is required."""


_COLLAR_FRACTIONS = (1.0, 0.75, 0.5, 0.25, 0.1, 0.01, 1e-3)


def _provider(scenario: SafetyScenario, system):
    if system is not None:
        return system
    return scenario.dynamics


def _slack(scenario: SafetyScenario) -> float:
    return scenario.tolerances.interface_slack


class _MinTracker:
    """Running minimum with lexicographic witness tie-breaking."""

    def __init__(self):
        self.value = math.inf
        self.point = None
        self.velocity = None
        self.count = 0

    def update(self, value, point, velocity=None):
        self.count += 1
        pt = tuple(float(v) for v in np.asarray(point).reshape(-1))
        vel = tuple(float(v) for v in np.asarray(velocity).reshape(-1)) if velocity is not None else None
        if value < self.value or (value == self.value and self.point is not None and pt < self.point):
            self.value = value
            self.point = pt
            self.velocity = vel


def _outward_normal(bar: BarrierCandidate, x) -> Optional[np.ndarray]:
    try:
        g = bar.gradient_at(x)
    except Exception:
        return None
    norm = float(np.linalg.norm(g))
    if norm < 1e-12:
        return None
    return g / norm


def _collar_points(scenario: SafetyScenario, grid: BoundaryGrid, *, sides: str) -> list[np.ndarray]:
    """Points near the boundary: offsets along the outward normal.

    sides="outer" keeps only points with B > 0 (outside K); sides="both"
    keeps both signs and includes the representatives themselves.
    """
    width = collar_width(scenario, grid)
    floor = max(10.0 * _slack(scenario), 1e-12)
    offsets = [width * f for f in _COLLAR_FRACTIONS if width * f >= floor]
    if not offsets:
        offsets = [max(width, floor)]
    bar = scenario.barrier
    pts = []
    for rep in grid.representatives:
        nu = _outward_normal(bar, rep)
        if nu is None:
            continue
        if sides == "both":
            pts.append(np.asarray(rep, dtype=float))
        signs = (1.0,) if sides == "outer" else (1.0, -1.0)
        for sgn in signs:
            for t in offsets:
                x = rep + sgn * t * nu
                b = bar.value_at(x)
                if sides == "outer" and b <= 0.0:
                    continue
                pts.append(x)
    return pts


# ---------------------------------------------------------------------- #
def check_nominal(scenario: SafetyScenario, grid: BoundaryGrid, *, system=None) -> CheckReport:
    """Non-strict decrease outside K: max <grad B(x), F(x)> <= 0 on an outer
    collar around the boundary.  Margin is min over samples of
    -support(F(x), grad B(x))."""
    tol = scenario.tolerances
    provider = _provider(scenario, system)
    samples = _collar_points(scenario, grid, sides="outer")
    if not samples:
        raise PreconditionError("empty outer collar; no usable boundary normals")
    track = _MinTracker()
    for x in samples:
        g = scenario.barrier.gradient_at(x)
        img = provider.image(x, _slack(scenario))
        track.update(-img.support(g), x, img.extreme_point(g))
    ok = track.value >= -tol.tol
    return CheckReport(
        check_id="nominal-nonincrease",
        verdict=PASS if ok else FAIL,
        margin=track.value,
        witness=None if ok else track.point,
        witness_velocity=None if ok else track.velocity,
        samples=track.count,
        tolerances={"tol": tol.tol, "collar_width": collar_width(scenario, grid)},
        flags={"region": "outer-collar"},
    )


def check_robust_strict(scenario: SafetyScenario, grid: BoundaryGrid, *, system=None) -> CheckReport:
    """Strict decrease on the boundary: max <grad B(x), F(x)> < 0 for every
    boundary representative."""
    tol = scenario.tolerances
    provider = _provider(scenario, system)
    track = _MinTracker()
    for rep in grid.representatives:
        g = scenario.barrier.gradient_at(rep)
        img = provider.image(rep, _slack(scenario))
        track.update(-img.support(g), rep, img.extreme_point(g))
    ok = track.value > tol.tol_strict
    return CheckReport(
        check_id="robust-strict",
        verdict=PASS if ok else FAIL,
        margin=track.value,
        witness=None if ok else track.point,
        witness_velocity=None if ok else track.velocity,
        samples=track.count,
        tolerances={"tol_strict": tol.tol_strict},
        flags={"region": "boundary"},
    )


def _clarke_vertices(scenario: SafetyScenario, x, radius, samples) -> np.ndarray:
    tol = scenario.tolerances
    if radius is None:
        radius = tol.clarke_radius_scale * (1.0 + float(np.linalg.norm(x)))
    if samples is None:
        samples = tol.clarke_samples
    bar = scenario.barrier
    if bar.is_c1:
        return bar.gradient_at(x).reshape(1, -1)
    return clarke_gradient(bar, x, radius, samples).points


def check_clarke(
    scenario: SafetyScenario,
    grid: BoundaryGrid,
    radius: Optional[float] = None,
    samples: Optional[int] = None,
    *,
    system=None,
) -> CheckReport:
    """Strict decrease against every sampled generalized-gradient vertex on
    the boundary: <zeta, eta> < 0 for zeta in the sampled Clarke hull and
    eta in F(x)."""
    tol = scenario.tolerances
    provider = _provider(scenario, system)
    track = _MinTracker()
    for rep in grid.representatives:
        zetas = _clarke_vertices(scenario, rep, radius, samples)
        img = provider.image(rep, _slack(scenario))
        for z in zetas:
            track.update(-img.support(z), rep, img.extreme_point(z))
    ok = track.value > tol.tol_strict
    return CheckReport(
        check_id="clarke-strict",
        verdict=PASS if ok else FAIL,
        margin=track.value,
        witness=None if ok else track.point,
        witness_velocity=None if ok else track.velocity,
        samples=track.count,
        tolerances={"tol_strict": tol.tol_strict},
        flags={"region": "boundary", "gradient": "clarke-vertices"},
    )


def _normalized_quotient(img: ConvexCompactSet, zeta: np.ndarray) -> float:
    norm = float(np.linalg.norm(zeta))
    if norm < 1e-12:
        raise DegenerateGradientError("gradient norm below 1e-12 in normalized check")
    return -img.support(zeta) / norm


def check_uniform_unweighted(scenario: SafetyScenario, grid: BoundaryGrid, *, system=None) -> CheckReport:
    """Normalized strict decrease on the boundary:
    min over boundary of (-max <grad B, F>) / |grad B| must be positive.
    A positive value witnesses a uniform decrease rate on the sampled set."""
    tol = scenario.tolerances
    provider = _provider(scenario, system)
    track = _MinTracker()
    for rep in grid.representatives:
        g = scenario.barrier.gradient_at(rep)
        img = provider.image(rep, _slack(scenario))
        track.update(_normalized_quotient(img, g), rep, img.extreme_point(g))
    ok = track.value > tol.tol_strict
    return CheckReport(
        check_id="uniform-plain",
        verdict=PASS if ok else FAIL,
        margin=track.value,
        witness=None if ok else track.point,
        witness_velocity=None if ok else track.velocity,
        samples=track.count,
        tolerances={"tol_strict": tol.tol_strict},
        flags={"region": "boundary", "normalized": True},
    )


_WEIGHTED_VARIANTS = ("C1", "C2", "C3", "C4")


def _require_variant_smoothness(bar: BarrierCandidate, variant: str):
    if variant == "C1" and not bar.is_c1:
        raise UnsupportedSmoothnessError("variant C1 needs a C1/C2 candidate")
    if variant == "C2" and bar.smoothness not in ("C2", "C1", "lipschitz"):
        raise UnsupportedSmoothnessError("variant C2 needs a Lipschitz candidate")
    if variant in ("C3", "C4"):
        # proximal shortcut: gradient singleton, computable for C2 candidates
        # (or declared-semicontinuous candidates that still carry a gradient)
        if not (bar.smoothness == "C2" or (bar.smoothness in ("lsc", "usc") and bar.gradient is not None)):
            raise UnsupportedSmoothnessError(
                f"variant {variant} needs a C2 candidate (proximal shortcut), got {bar.smoothness!r}"
            )


def check_uniform_weighted(
    scenario: SafetyScenario,
    grid: BoundaryGrid,
    modulus,
    variant: str = "C1",
    *,
    system=None,
    radius: Optional[float] = None,
    samples: Optional[int] = None,
    nested_scales: Sequence[float] = (0.25, 0.5),
) -> CheckReport:
    """Normalized strict decrease weighted by the state growth factor.

    The unweighted quotient at each sample is divided by (1 + state_gain(x))
    where state_gain comes from a factored continuity modulus of F.  Variants
    select the sample region and gradient object: C1 gradient on the
    boundary, C2 Clarke vertices on the boundary, C3 proximal singleton on a
    two-sided collar, C4 proximal singleton of -B with reversed velocity sign
    on a two-sided collar (requires sampled separation of cl(K) from the
    unsafe set).

    Because the true region may be unbounded, the infimum is also evaluated
    on nested shrunken boxes; a margin that keeps shrinking as the box grows
    is reported as inconclusive rather than pass.
    """
    if variant not in _WEIGHTED_VARIANTS:
        raise ValueError(f"variant must be one of {_WEIGHTED_VARIANTS}, got {variant!r}")
    tol = scenario.tolerances
    _require_variant_smoothness(scenario.barrier, variant)

    if variant == "C4":
        _check_separation(scenario, grid)

    def sigma_on(scn: SafetyScenario, g: BoundaryGrid) -> _MinTracker:
        provider = _provider(scn, system)
        bar = scn.barrier
        track = _MinTracker()
        if variant in ("C1", "C2"):
            region = [np.asarray(r, float) for r in g.representatives]
        else:
            region = _collar_points(scn, g, sides="both")
        for x in region:
            img = provider.image(x, _slack(scn))
            weight = 1.0 + float(modulus.state_gain(x))
            if variant == "C1":
                zetas = [bar.gradient_at(x)]
                flip = False
            elif variant == "C2":
                zetas = _clarke_vertices(scn, x, radius, samples)
                flip = False
            elif variant == "C3":
                zetas = [proximal_subdifferential(bar, x).points[0]] if bar.smoothness == "C2" else [bar.gradient_at(x)]
                flip = False
            else:  # C4: zeta in proximal of -B; require <zeta, F> > 0
                zetas = [-(bar.gradient_at(x))]
                flip = True
            for z in zetas:
                if flip:
                    val = _normalized_quotient(img, -np.asarray(z, float))
                    vel = img.extreme_point(-np.asarray(z, float))
                else:
                    val = _normalized_quotient(img, np.asarray(z, float))
                    vel = img.extreme_point(np.asarray(z, float))
                track.update(val / weight, x, vel)
        return track

    full = sigma_on(scenario, grid)
    trend = []
    for s in nested_scales:
        try:
            scn_s = scenario.scaled(s)
            grid_s = boundary_extract(scn_s)
        except Exception:
            continue
        t = sigma_on(scn_s, grid_s)
        if t.count:
            trend.append([float(s), float(t.value)])
    trend.append([1.0, float(full.value)])

    if full.value <= tol.tol_strict:
        verdict = FAIL
    elif any(v > 0 and full.value < 0.5 * v for _, v in trend[:-1]):
        verdict = INCONCLUSIVE
    else:
        verdict = PASS
    return CheckReport(
        check_id=f"uniform-weighted-{variant.lower()}",
        verdict=verdict,
        margin=full.value,
        witness=None if verdict == PASS else full.point,
        witness_velocity=None if verdict == PASS else full.velocity,
        samples=full.count,
        tolerances={"tol_strict": tol.tol_strict},
        flags={"region": "boundary" if variant in ("C1", "C2") else "two-sided-collar",
               "variant": variant},
        trend=trend,
        notes=(["margin shrinks under box growth; infimum over the unbounded "
                "region is not numerically bounded away from zero"]
               if verdict == INCONCLUSIVE else []),
    )


def _check_separation(scenario: SafetyScenario, grid: BoundaryGrid):
    """Sampled proxy for cl(K) and the unsafe set being separated: no unsafe
    grid sample may lie in K or within one boundary-cell diameter of it."""
    reps = grid.representatives
    bar = scenario.barrier
    for x in scenario.unsafe_samples():
        if bar.value_at(x) <= 0.0:
            raise PreconditionError(
                f"unsafe sample {x.tolist()} lies in K = {{B <= 0}}"
            )
        d = float(np.min(np.linalg.norm(reps - x.reshape(1, -1), axis=1)))
        if d <= grid.diameter:
            raise PreconditionError(
                "sampled unsafe set touches cl(K): unsafe sample "
                f"{x.tolist()} is within one boundary-cell diameter ({grid.diameter:g}) "
                "of the boundary"
            )


# ---------------------------------------------------------------------- #
@dataclass
class MarginSynthesis:
    """Per-cell perturbation radii and their minimum over the boundary."""

    cell_margins: list
    eps_star: float
    verdict: str
    witness: Optional[tuple] = None
    witness_cell: Optional[int] = None
    flags: dict = field(default_factory=dict)
    cells: list = field(default_factory=list, repr=False)

    def eps_at(self, x) -> float:
        """Pointwise margin: min of the cell radii over cells containing x."""
        vals = [
            self.cell_margins[i]
            for i, c in enumerate(self.cells)
            if c.contains_point(x, 1e-12)
        ]
        if not vals:
            raise ValueError(f"point {np.asarray(x).tolist()} lies in no boundary cell")
        return min(vals)

    def to_dict(self) -> dict:
        return {
            "cell_margins": [float(v) for v in self.cell_margins],
            "eps_star": float(self.eps_star),
            "verdict": self.verdict,
            "witness": list(self.witness) if self.witness is not None else None,
            "witness_cell": self.witness_cell,
            "flags": dict(self.flags),
        }


def synthesize_margin(
    scenario: SafetyScenario,
    grid: BoundaryGrid,
    bracket: float = 1.0,
    *,
    density: int = 9,
    radius: Optional[float] = None,
    samples: Optional[int] = None,
    rel_tol: float = 1e-3,
) -> MarginSynthesis:
    """Largest constant perturbation radius per boundary cell.

    For each cell, bisects the largest delta such that every representative x
    and every sampled gradient vertex zeta satisfy
    max <zeta, co{F(x + delta*B)} + delta*B> < 0.  The overall margin is the
    minimum over cells; a cell that fails even the probe radius yields 0 and
    an overall fail verdict with that cell's witness.
    """
    tol = scenario.tolerances
    base = scenario.dynamics
    if isinstance(base, PerturbedSystem):
        base = base.base
    margins = []
    witness = None
    witness_cell = None
    for ci, cell in enumerate(grid.cells):
        reps = [np.asarray(r, float) for r in cell.representatives]
        zeta_sets = [_clarke_vertices(scenario, r, radius, samples) for r in reps]

        def violation(delta):
            strong = PerturbedSystem(base, delta, "strong", density)
            for r, zetas in zip(reps, zeta_sets):
                img = strong.image(r, _slack(scenario))
                for z in zetas:
                    if -img.support(z) <= tol.tol_strict:
                        return (tuple(r), tuple(img.extreme_point(z)))
            return None

        delta, w = largest_feasible(violation, float(bracket), rel_tol=rel_tol)
        margins.append(delta)
        if delta == 0.0 and witness is None:
            witness = w[0]
            witness_cell = ci

    eps_star = min(margins) if margins else 0.0
    box = scenario.box
    # cells at the first/last grid column overhang the box by half a spacing;
    # reaching the box edge means the boundary may continue outside the domain
    touches = any(
        np.any(c.lower <= box[:, 0] + 1e-12) or np.any(c.upper >= box[:, 1] - 1e-12)
        for c in grid.cells
    )
    return MarginSynthesis(
        cell_margins=margins,
        eps_star=float(eps_star),
        verdict=PASS if eps_star > 0.0 else FAIL,
        witness=witness,
        witness_cell=witness_cell,
        flags={
            "bracket": float(bracket),
            "density": density,
            "boundary_touches_box": bool(touches),
        },
        cells=list(grid.cells),
    )
