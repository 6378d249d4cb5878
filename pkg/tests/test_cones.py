import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsfactors.cones import (BoundedRatioCone, CylinderSpace, DirectSumCone, MetricCone, MetricTable,
                                NonnegCone, _monolithic_distance, birkhoff_check, cone_membership,
                                direct_sum_distance, dual_pairing_distance, hilbert_distance, hilbert_nonneg,
                                hilbert_nonneg_rows, m_and_M, metric_direct_sum, nonneg_image_diameter,
                                regularity_cone_bound, sample_members)
from gibbsfactors.errors import InputError
from gibbsfactors.sft import Sft

SPACE = CylinderSpace(Sft.full(3), 3)
TABLE = MetricTable.of([2.0, 1.0, 0.5])


def _alpha_search(x, y, cone_member, lo, hi, increasing):
    """Bisection for the boundary of {a : cone_member(a)} on [lo, hi]."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cone_member(mid) == increasing:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _order_theta(x, y, member):
    """Theta = log(M/m) from m = sup{a: x - a y in C}, M = inf{b: b y - x in C} via grid + bisection."""
    grid = np.geomspace(1e-6, 1e6, 400)
    ok_m = [a for a in grid if member(x - a * y)]
    ok_M = [b for b in grid if member(b * y - x)]
    step = grid[1] / grid[0]
    a0 = max(ok_m)
    b0 = min(ok_M)
    m = _alpha_search(x, y, lambda a: not member(x - a * y), a0, a0 * step, True)
    M = _alpha_search(x, y, lambda b: member(b * y - x), b0 / step, b0, True)
    return math.log(M / m)


def test_metric_table_validation():
    with pytest.raises(InputError):
        MetricTable.of([1.0, 2.0])
    with pytest.raises(InputError):
        MetricTable.of([])
    with pytest.raises(InputError):
        TABLE.lookup(np.array([3]))
    assert TABLE.scaled(0.5).values == (1.0, 0.5, 0.25)


def test_direct_sum_requires_disjoint_supports():
    with pytest.raises(InputError):
        DirectSumCone((MetricCone(0, TABLE), BoundedRatioCone(0, 1.0)))


def test_hilbert_nonneg_frozen():
    assert hilbert_nonneg([1, 2], [2, 1]) == pytest.approx(math.log(4))
    assert hilbert_nonneg([1, 0], [1, 1]) == math.inf
    assert hilbert_nonneg([0, 0], [0, 0]) == 0.0
    rows = hilbert_nonneg_rows(np.array([[1, 2], [1, 0]]), np.array([[2, 1], [1, 1]]))
    assert rows[0] == pytest.approx(math.log(4)) and rows[1] == math.inf


def test_membership_frozen():
    idx, _ = SPACE.cylinder(0)
    f = np.zeros(SPACE.dim)
    f[idx] = 1.0
    assert cone_membership(SPACE, f, MetricCone(0, TABLE)).member
    g = f.copy()
    g[idx[0]] = math.exp(0.6)  # words 000 and 001 agree on two places: allowed ratio e^0.5
    mem = cone_membership(SPACE, g, MetricCone(0, TABLE))
    assert not mem.member and mem.excess == pytest.approx(0.1)
    h = f.copy()
    h[idx[-1]] = 0.0
    assert not cone_membership(SPACE, h, MetricCone(0, TABLE)).member
    off = f.copy()
    off[-1] = 1.0
    assert not cone_membership(SPACE, off, MetricCone(0, TABLE)).member


def test_single_word_cylinder_distance_zero():
    space = CylinderSpace(Sft.full(2), 1)
    cone = MetricCone(0, MetricTable.of([1.0]))
    assert hilbert_distance(space, np.array([2.0, 0.0]), np.array([5.0, 0.0]), cone) == 0.0


def test_incomparable_is_infinite():
    cone = metric_direct_sum([0, 1], TABLE)
    f = np.zeros(SPACE.dim)
    f[SPACE.mask([0])] = 1.0
    g = np.zeros(SPACE.dim)
    g[SPACE.mask([0, 1])] = 1.0
    assert hilbert_distance(SPACE, f, g, cone) == math.inf


def test_nonneg_theta_matches_order_definition():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y = rng.uniform(0.1, 3, 6), rng.uniform(0.1, 3, 6)
        theta = _order_theta(x, y, lambda v: bool((v >= 0).all()))
        assert hilbert_nonneg(x, y) == pytest.approx(theta, abs=1e-8)


def test_metric_theta_matches_order_definition():
    rng = np.random.default_rng(2)
    cone = MetricCone(1, TABLE)
    fs = sample_members(SPACE, cone, rng, 20)
    for f, g in zip(fs[::2], fs[1::2]):
        theta = _order_theta(f, g, lambda v: cone_membership(SPACE, v, cone, tol=0.0).member)
        assert hilbert_distance(SPACE, f, g, cone) == pytest.approx(theta, abs=1e-8)


def test_m_and_M_bracket_ratios():
    rng = np.random.default_rng(3)
    cone = MetricCone(2, TABLE)
    f, g = sample_members(SPACE, cone, rng, 2)
    m, M = m_and_M(SPACE, g, f, cone)
    idx, _ = SPACE.cylinder(2)
    r = g[idx] / f[idx]
    assert m <= r.min() + 1e-15 and M >= r.max() - 1e-15
    assert cone_membership(SPACE, g - m * f, cone, tol=1e-9).member
    assert cone_membership(SPACE, M * f - g, cone, tol=1e-9).member


def test_nonneg_image_diameter_positive_matrix():
    mat = np.array([[1.0, 2.0], [3.0, 1.0]])
    assert nonneg_image_diameter(mat) == pytest.approx(math.log(6))


CONES = [NonnegCone(), MetricCone(0, TABLE), BoundedRatioCone(1, 1.5),
         DirectSumCone((MetricCone(0, TABLE), BoundedRatioCone(1, 1.0), NonnegCone((2,))))]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.integers(0, 100_000))
def test_projective_metric_laws(kind, seed):
    rng = np.random.default_rng(seed)
    cone = CONES[kind]
    f, g, h = sample_members(SPACE, cone, rng, 3)
    d = lambda a, b: hilbert_distance(SPACE, a, b, cone)
    assert d(f, g) >= -1e-12
    assert d(f, f) == pytest.approx(0.0, abs=1e-10)
    assert d(f, g) == pytest.approx(d(g, f), abs=1e-10)
    assert d(f, h) <= d(f, g) + d(g, h) + 1e-10
    assert d(3.7 * f, 0.2 * g) == pytest.approx(d(f, g), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_direct_sum_two_paths(seed):
    rng = np.random.default_rng(seed)
    cone = CONES[3]
    f, g = sample_members(SPACE, cone, rng, 2)
    comps = [(f * SPACE.mask(c.symbols if isinstance(c, NonnegCone) else [c.symbol]),
              g * SPACE.mask(c.symbols if isinstance(c, NonnegCone) else [c.symbol]), c)
             for c in cone.components]
    assert direct_sum_distance(SPACE, [(b, a, c) for a, b, c in comps]) == pytest.approx(
        _monolithic_distance(SPACE, g, f, cone), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_dual_pairing_matches_ratio_formula(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0.01, 5, 7), rng.uniform(0.01, 5, 7)
    assert dual_pairing_distance(x, y) == pytest.approx(hilbert_nonneg(x, y), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 6))
def test_birkhoff_random_positive_matrices(seed, n):
    rng = np.random.default_rng(seed)
    space = CylinderSpace(Sft.full(n), 1)
    mat = rng.uniform(0.01, 1, size=(n, n))
    rep = birkhoff_check(mat, space, NonnegCone(), space, NonnegCone(), 20, rng)
    assert rep.violations == 0 and rep.delta_source == "exact"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_regularity_cone_bound(seed):
    rng = np.random.default_rng(seed)
    cone = MetricCone(0, TABLE)
    f, g = sample_members(SPACE, MetricCone(0, TABLE.scaled(0.5)), rng, 2)
    assert regularity_cone_bound(SPACE, g, f, 0.5, cone).holds


def test_regularity_bound_rejects_nonmembers():
    f = np.zeros(SPACE.dim)
    f[SPACE.mask([0])] = np.linspace(1, 10, 9)
    with pytest.raises(InputError):
        regularity_cone_bound(SPACE, f, f, 0.5, MetricCone(0, TABLE))
