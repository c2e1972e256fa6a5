import math

import numpy as np
import pytest

from bykov.errors import CapExceeded, NoTangencyFound
from bykov.strips import (IntersectionKind as IK, classify_intersection, delta_interval, horizontal_strip,
                          horseshoe_strip, min_regular_index)

E = math.exp(-2 * math.pi / 3)


@pytest.fixture(scope="module")
def intervals(model):
    return {a: delta_interval(a, 0.5, model) for a in (2, 3, 4)}


def test_first_strip_heights(model):
    s = horizontal_strip(1, model)
    assert s.h == pytest.approx(math.exp((math.pi + 0.2 - 2 * math.pi) / 3), rel=1e-15)
    assert s.m == pytest.approx(math.exp(-(3 * math.pi + 0.2) / 3), rel=1e-15)
    assert s.h == pytest.approx(0.3751119, rel=1e-6)
    assert s.m == pytest.approx(0.0404269, rel=1e-5)
    assert horizontal_strip(2, model).h / s.h == pytest.approx(E, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 5, 12, 30])
def test_closed_form_extremes_match_numeric(model, n):
    s = horizontal_strip(n, model)
    lo, hi = s.window
    # dense sampling of the computed boundaries, window ends included
    grid = np.linspace(lo, hi, 100001)
    assert math.exp(float(np.max(s.log_u2(grid)))) == pytest.approx(s.h, rel=1e-9)
    assert math.exp(float(np.min(s.log_u1(grid)))) == pytest.approx(s.m, rel=1e-9)
    xs = np.linspace(lo, hi, 500)
    assert np.all(s.u1(xs) < s.u2(xs)) and np.all(np.diff(s.u1(xs)) > 0)


def test_neighbouring_strips_are_disjoint(model):
    for n in range(1, 10):
        lower, upper = horizontal_strip(n, model), horizontal_strip(n + 1, model)
        xs = np.linspace(*lower.window, 1001)
        assert np.all(upper.u2(xs) < lower.u1(xs))
    # the height ranges do overlap for this geometry, since pi + 4 tau > pi
    assert horizontal_strip(2, model).h > horizontal_strip(1, model).m


def test_global_image_top(model):
    for n in (1, 2, 7):
        hs = horseshoe_strip(n, 0.1, model)
        top, at = hs.eta_upper_max()
        assert top == pytest.approx(horizontal_strip(n, model).h ** 4, rel=1e-10)
        assert at == pytest.approx(-math.pi / 2 - 0.1)


def test_horseshoe_example(model):
    hs = horseshoe_strip(2, 0.1, model)
    assert hs.is_horseshoe
    assert hs.eta_upper_max()[0] == pytest.approx(4.553e-6, rel=1e-3)
    assert hs.arch_max == pytest.approx(0.1, abs=1e-5)
    for roots in hs.legs.values():
        assert len(roots) == 2
        for r in roots:
            assert math.pi / 2 < abs(r) + 1e-12 <= math.pi / 2 + 0.1 + 1e-12 or abs(abs(r) - math.pi / 2) < 1e-4


def test_horseshoe_degenerate(model):
    hs = horseshoe_strip(2, 0.0, model)
    assert not hs.is_horseshoe


def test_arch_max_tends_to_amplitude(model):
    vals = [horseshoe_strip(n, 0.1, model).arch_max for n in range(3, 9)]
    assert all(abs(v - 0.1) < 1e-4 for v in vals)
    assert np.all(np.diff(vals) <= 1e-10)


def test_classification_examples(model):
    c = classify_intersection(2, 2, 0.1, model)
    assert c.value is IK.Regular and c.components == 2 and all(c.predicates)
    assert classify_intersection(2, 2, 0.002, model).value is IK.Empty
    assert classify_intersection(2, 2, 0.015, model).value is IK.Irregular


def test_classification_monotone_with_two_transitions(model, intervals):
    di = intervals[2]
    grid = np.geomspace(0.1, 0.002, 200)
    kinds = [classify_intersection(2, 2, float(l), model).value for l in grid]
    order = {IK.Regular: 0, IK.Irregular: 1, IK.Empty: 2}
    ranks = [order[k] for k in kinds]
    assert ranks == sorted(ranks)
    switches = [i for i in range(199) if ranks[i] != ranks[i + 1]]
    assert len(switches) == 2
    assert grid[switches[0] + 1] <= di.d <= grid[switches[0]]
    assert grid[switches[1] + 1] <= di.c <= grid[switches[1]]


def test_min_regular_index(model):
    assert min_regular_index(0.1, model) == 2
    assert min_regular_index(0.1 * E, model) == 3
    with pytest.raises(ValueError):
        min_regular_index(0.95, model)
    with pytest.raises(CapExceeded):
        min_regular_index(1e-6, model, search_cap=3)


def test_delta_intervals(model, intervals):
    d2 = intervals[2]
    assert 0.002 < d2.c < d2.d < 0.1
    assert [k for _, k in d2.probes] == ["Regular", "Irregular", "Empty"]
    for a in (2, 3):
        assert intervals[a + 1].d < intervals[a].c
        assert intervals[a + 1].d / intervals[a].d == pytest.approx(E, rel=0.05)


def test_delta_witnesses_are_tangencies(model, intervals):
    di = intervals[3]
    H = horizontal_strip(3, model)
    x, lam = di.witness_d
    S = horseshoe_strip(3, lam, model)
    f = lambda t: float(S.lower(t) - H.u2(t))  # noqa: E731
    h = 1e-6
    assert abs(f(x)) < 1e-12
    assert abs((f(x + h) - f(x - h)) / (2 * h)) < 1e-6


def test_below_destruction_other_strips_still_cross(model, intervals):
    c2 = intervals[2].c
    lam = c2 * 0.95
    assert classify_intersection(2, 2, lam, model).value is IK.Empty
    b = 3
    assert classify_intersection(b, 2, lam, model).value is IK.Regular
    assert classify_intersection(b, b, lam, model).value is IK.Regular


def test_delta_needs_regular_seed(model):
    with pytest.raises(NoTangencyFound):
        delta_interval(2, 0.005, model)
