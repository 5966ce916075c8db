from __future__ import annotations

import numpy as np
import pytest

import oracles
from inclusafe import (
    ConvexCompactSet,
    NoMatchingPieceError,
    PerturbedSystem,
    SetValuedMap,
    affine_piece,
    constant_piece,
    continuity_margin,
    graph_inflation_margin,
    polynomial_piece,
    unit_ball_lattice,
    unit_directions,
)


def _example1_map():
    return SetValuedMap(1, [
        constant_piece(lambda x: x[0] <= 0.0, [[2.0]], label="left"),
        constant_piece(lambda x: x[0] == 0.0, [[-1.0], [2.0]], label="interface"),
        constant_piece(lambda x: x[0] >= 0.0, [[-1.0]], label="right"),
    ])


# ----------------------------------------------------------------------- #
# piece dispatch
def test_piecewise_dispatch_matches_oracle():
    f = _example1_map()
    for x in (-3.0, -0.5, 0.0, 0.25, 1.0):
        lo, hi = f.image(np.array([x])).interval_bounds()
        assert (lo, hi) == oracles.example1_image(x)


def test_matching_indices_and_slack():
    f = _example1_map()
    assert f.matching(np.array([-1.0])) == [0]
    assert f.matching(np.array([0.0])) == [0, 1, 2]
    assert f.matching(np.array([1.0])) == [2]
    # a point just off the interface picks up the left piece with slack; the
    # measure-zero equality piece needs an exact hit, but the hull is the same
    assert f.matching(np.array([1e-8])) == [2]
    assert f.matching(np.array([1e-8]), slack=1e-6) == [0, 2]
    lo, hi = f.image(np.array([1e-8]), slack=1e-6).interval_bounds()
    assert (lo, hi) == (-1.0, 2.0)


def test_no_matching_piece_raises():
    f = SetValuedMap(1, [constant_piece(lambda x: x[0] > 1.0, [[0.0]])])
    with pytest.raises(NoMatchingPieceError):
        f.image(np.array([0.0]))


def test_map_needs_pieces_and_dimension():
    with pytest.raises(ValueError):
        SetValuedMap(1, [])
    with pytest.raises(ValueError):
        SetValuedMap(0, [constant_piece(lambda x: True, [[0.0]])])


def test_affine_and_polynomial_pieces():
    aff = SetValuedMap(2, [affine_piece(lambda x: True, [[0.0, 1.0], [-1.0, 0.0]], [1.0, 0.0], radius=0.5)])
    img = aff.image(np.array([2.0, 3.0]))
    assert np.allclose(img.points, [[4.0, -2.0]])
    assert img.radius == 0.5

    poly = SetValuedMap(2, [polynomial_piece(lambda x: True, ["x1*x2", "x1 - x2"], 2)])
    img = poly.image(np.array([3.0, -2.0]))
    assert np.allclose(img.points, [[-6.0, 5.0]])


def test_from_config_rejects_unknown_kind():
    with pytest.raises(ValueError):
        SetValuedMap.from_config(1, [{"when": "True", "image": {"kind": "spline"}}])


def test_from_config_roundtrip_matches_direct():
    cfg = [
        {"when": "x1 <= 0", "image": {"kind": "constant", "points": [[2.0]]}},
        {"when": "x1 == 0", "image": {"kind": "constant", "points": [[-1.0], [2.0]]}},
        {"when": "x1 >= 0", "image": {"kind": "constant", "points": [[-1.0]]}},
    ]
    f = SetValuedMap.from_config(1, cfg)
    g = _example1_map()
    for x in np.linspace(-3, 1, 23):
        assert f.image(np.array([x])).interval_bounds() == g.image(np.array([x])).interval_bounds()


# ----------------------------------------------------------------------- #
# unit ball lattice
def test_unit_ball_lattice_includes_exact_axis_extremes():
    for n in (1, 2):
        lat = unit_ball_lattice(n, 9)
        assert np.all(np.linalg.norm(lat, axis=1) <= 1.0 + 1e-12)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            assert any(np.array_equal(p, e) for p in lat)
            assert any(np.array_equal(p, -e) for p in lat)
        assert any(np.array_equal(p, np.zeros(n)) for p in lat)


def test_unit_ball_lattice_nesting():
    # density 17 halves the axis step of density 9, so the coarse lattice
    # scaled by 1/2 sits inside the fine lattice scaled by 1 (exactly)
    for n in (1, 2):
        coarse = unit_ball_lattice(n, 9)
        fine = {tuple(p) for p in unit_ball_lattice(n, 17)}
        for p in coarse:
            assert tuple(p / 2.0) in fine


def test_unit_ball_lattice_validation():
    with pytest.raises(ValueError):
        unit_ball_lattice(1, 0)


# ----------------------------------------------------------------------- #
# perturbed systems
def test_perturbed_mode_validation():
    f = _example1_map()
    with pytest.raises(ValueError):
        PerturbedSystem(f, 0.1, "fuzzy")
    with pytest.raises(ValueError):
        PerturbedSystem(f, 0.1, "strong", density=0)
    sys_bad = PerturbedSystem(f, 0.0, "image")
    with pytest.raises(ValueError):
        sys_bad.image(np.array([0.0]))


def test_image_mode_matches_oracle():
    f = _example1_map()
    sys1 = PerturbedSystem(f, 1.0, "image")
    for x in (-3.0, 1.0, 0.0, -0.5, 0.25):
        got = sys1.image(np.array([x])).interval_bounds()
        assert got == oracles.example1_image_inflated(x, 1.0)


def test_strong_mode_matches_oracle():
    f = _example1_map()
    sys_half = PerturbedSystem(f, 0.5, "strong", density=9)
    for x in (-1.0, 0.0, 1.0, -0.5, 0.5, 0.2, -0.2, 0.75):
        got = sys_half.image(np.array([x])).interval_bounds()
        assert got == oracles.example1_image_strong(x, 0.5)


def test_state_dependent_margin():
    f = SetValuedMap(1, [constant_piece(lambda x: True, [[0.0]])])
    sys_var = PerturbedSystem(f, lambda x: 0.1 + abs(float(x[0])), "image")
    lo, hi = sys_var.image(np.array([2.0])).interval_bounds()
    assert (lo, hi) == (-2.1, 2.1)


def test_sense_margin_decouples_argument_ball():
    ident = SetValuedMap(1, [affine_piece(lambda x: True, [[1.0]], [0.0])])
    sys_sa = PerturbedSystem(ident, margin=0.25, mode="strong", density=9, sense_margin=0.5)
    lo, hi = sys_sa.image(np.array([1.0])).interval_bounds()
    # co{F(x + 0.5B)} = [x-0.5, x+0.5], then +0.25 actuation ball
    assert (lo, hi) == (0.25, 1.75)
    assert sys_sa.sense_margin_at(np.array([1.0])) == 0.5
    assert sys_sa.margin_at(np.array([1.0])) == 0.25


def test_nesting_chain_plain_image_strong():
    # F(x) <= image-mode <= strong-mode in the support-function order
    f = _example1_map()
    eps = 0.3
    img = PerturbedSystem(f, eps, "image")
    strong = PerturbedSystem(f, eps, "strong", density=9)
    rng = np.random.default_rng(5)
    for _ in range(200):
        x = np.array([float(rng.uniform(-3, 1))])
        s0 = f.image(x)
        s1 = img.image(x)
        s2 = strong.image(x)
        for d in (np.array([1.0]), np.array([-1.0])):
            assert s0.support(d) <= s1.support(d) + 1e-12
            assert s1.support(d) <= s2.support(d) + 1e-12


def test_strong_mode_monotone_in_eps_with_nested_lattices():
    # eps2 = 2*eps1 with density 17 refines the density-9 eps1 lattice, so
    # the images must nest exactly
    f = _example1_map()
    rng = np.random.default_rng(9)
    for _ in range(100):
        x = np.array([float(rng.uniform(-2, 2))])
        eps1 = float(rng.uniform(0.05, 0.4))
        s1 = PerturbedSystem(f, eps1, "strong", density=9).image(x)
        s2 = PerturbedSystem(f, 2.0 * eps1, "strong", density=17).image(x)
        for d in (np.array([1.0]), np.array([-1.0])):
            assert s1.support(d) <= s2.support(d) + 1e-12


def test_mode_none_passthrough():
    f = _example1_map()
    sysn = PerturbedSystem(f)
    x = np.array([0.5])
    assert sysn.image(x).interval_bounds() == f.image(x).interval_bounds()
    assert sysn.dimension == 1


# ----------------------------------------------------------------------- #
# graph and continuity margins
def test_graph_inflation_margin_zero_map():
    zero = SetValuedMap(1, [constant_piece(lambda x: True, [[0.0]])])
    assert float(graph_inflation_margin(zero, 1.0, [[-2, 2]], 2.0)) == pytest.approx(1.0, abs=0.01)
    assert float(graph_inflation_margin(zero, 0.1, [[-2, 2]], 2.0)) == pytest.approx(0.1, abs=0.002)


def test_graph_inflation_margin_identity_map():
    # identity graph: need |v - u| <= 2*eps over |(u,v)| <= delta, so sqrt(2)
    ident = SetValuedMap(1, [affine_piece(lambda x: True, [[1.0]], [0.0])])
    res = graph_inflation_margin(ident, 1.0, [[-2, 2]], 3.0)
    assert float(res) == pytest.approx(np.sqrt(2.0), abs=0.01)
    assert res.witness is None


def test_graph_inflation_margin_zero_with_witness():
    # an unsatisfiable target: margin callable that vanishes somewhere is
    # not allowed, so force failure with a huge probe instead
    zero = SetValuedMap(1, [constant_piece(lambda x: True, [[0.0]])])
    res = graph_inflation_margin(zero, 0.001, [[-2, 2]], 1000.0)
    assert float(res) == 0.0
    assert res.witness is not None


def test_continuity_margin_values():
    ident = SetValuedMap(1, [affine_piece(lambda x: True, [[1.0]], [0.0])])
    twox = SetValuedMap(1, [affine_piece(lambda x: True, [[2.0]], [0.0])])
    const = SetValuedMap(1, [constant_piece(lambda x: True, [[3.0]])])
    assert continuity_margin(ident, 1.0, [0.0], 5.0) == pytest.approx(1.0, abs=0.01)
    assert continuity_margin(twox, 1.0, [0.0], 5.0) == pytest.approx(0.5, abs=0.01)
    # constant maps never spread: the bracket cap is returned as-is
    assert continuity_margin(const, 1.0, [0.0], 5.0) == 5.0


def test_continuity_margin_scales_with_target():
    twox = SetValuedMap(1, [affine_piece(lambda x: True, [[2.0]], [0.0])])
    d1 = continuity_margin(twox, 0.5, [0.0], 5.0)
    d2 = continuity_margin(twox, 1.0, [0.0], 5.0)
    assert d1 == pytest.approx(0.25, abs=0.01)
    assert d2 == pytest.approx(2 * d1, rel=0.02)


def test_strong_image_support_against_dense_reference():
    # 2-D sanity: inscribed-lattice hull support is within the analytic bound
    # for the planar drift field used by the corpus
    f = SetValuedMap(2, [polynomial_piece(lambda x: True, ["0", "-1 + x1**2*x2"], 2)])
    eps = 0.04
    strong = PerturbedSystem(f, eps, "strong", density=9)
    x = np.array([5.0, 0.0])
    img = strong.image(x)
    dirs = unit_directions(2, 64)
    # analytic outer bound: v1 = 0, v2 in [-1 + min(x1+u)^2*(x2+w), ...] + eps
    lo2 = -1.0 + min((5.0 + u) ** 2 * w for u in (-eps, 0, eps) for w in (-eps, 0, eps))
    hi2 = -1.0 + max((5.0 + u) ** 2 * w for u in (-eps, 0, eps) for w in (-eps, 0, eps))
    for d in dirs:
        outer = ConvexCompactSet([[0.0, lo2], [0.0, hi2]], eps + 1e-9)
        assert img.support(d) <= outer.support(d) + 1e-9
    # the hinted selection vector (0, eps) is feasible in the sampled image
    from inclusafe import contains
    assert contains(img, [0.0, eps], 1e-9)
