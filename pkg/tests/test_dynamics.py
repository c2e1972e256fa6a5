import math

import mpmath as mp
import numpy as np
import pytest

from bykov.dynamics import (GAP, PointType, Termination, covering_check, entropy_proxy, escape_statistics,
                            fixed_points, itinerary_consistent, iterate_orbit, saddle_node_closed_form,
                            track_bifurcations)
from bykov.errors import NoSolution
from bykov.maps import return_jacobian
from bykov.params import Model, SectionGeometry
from bykov.sections import CylPoint, Section, lift_normalize
from bykov.strips import delta_interval, horizontal_strip

E = math.exp(-2 * math.pi / 3)


def sn(m):
    y = math.exp(-2 * math.pi * m / 3)
    return y - y ** 4


@pytest.fixture(scope="module")
def branch1(model):
    return track_bifurcations(1, 0.05, 0.5, model)


def test_orbit_against_high_precision(model):
    mp.mp.dps = 40
    rec = iterate_orbit(CylPoint(Section.InV, 0.0, E), 0.1, model, max_iters=10)
    x, y = mp.mpf(0), mp.exp(-2 * mp.pi / 3)
    for p in rec.points[1:]:
        X = x - 3 * mp.log(y)
        x, y = X, y ** 4 + mp.mpf("0.1") * mp.cos(X)
        if y <= 0:
            break
        assert p.x == pytest.approx(lift_normalize(float(x)), abs=1e-12)
        assert p.y == pytest.approx(float(y), rel=1e-12)
    assert rec.points[1].y == pytest.approx(0.10022996569563625, rel=1e-12)
    assert rec.points[2].x == pytest.approx(0.6177, abs=1e-3)
    assert all(p.y > 0 for p in rec.points[:3])
    assert rec.termination is Termination.EscapedLower


def test_orbit_terminations(model):
    assert iterate_orbit(CylPoint(Section.InV, 0.0, math.exp(-1)), 0.1, model).termination is Termination.EscapedLower
    rec = iterate_orbit(CylPoint(Section.InV, 0.3, 1.0), 0.1, model)
    assert rec.itinerary[0] == GAP and rec.termination is Termination.LeftNeighborhood
    rec = iterate_orbit(CylPoint(Section.InV, 0.3, 0.5), 0.0, model, max_iters=50)
    assert rec.termination is Termination.OnStableManifold


def test_itineraries_consistent_and_labels_valid(model):
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(2, 5))
        s = horizontal_strip(n, model)
        x = float(rng.uniform(*s.window))
        y = float(np.exp(rng.uniform(s.log_u1(x), s.log_u2(x))))
        rec = iterate_orbit(CylPoint(Section.InV, x, y), 0.1, model, max_iters=20)
        assert len(rec.itinerary) == len(rec.points)
        for p, lab in zip(rec.points, rec.itinerary):
            if lab != GAP:
                assert horizontal_strip(lab, model).contains(p.x, p.y)
        assert itinerary_consistent(rec, 0.1, model)


def test_fixed_points_branch_one(model):
    pts = fixed_points(0.13, 1, model)
    y = E
    x = math.acos((y - y ** 4) / 0.13)
    assert [p.x for p in pts] == pytest.approx([-x, x], abs=1e-12)
    assert x == pytest.approx(0.331676, abs=1e-6)
    assert [p.type for p in pts] == [PointType.Sink, PointType.Saddle]
    for p in pts:
        assert p.y == pytest.approx(y, rel=1e-10)
        assert p.residual <= 1e-10
        mu = np.prod(p.multipliers)
        assert abs(mu) == pytest.approx(4 * y ** 3, rel=1e-8) and p.det == pytest.approx(4 * y ** 3, rel=1e-8)


def test_fixed_points_at_and_below_fold(model):
    lam = saddle_node_closed_form(1, model)
    assert lam == pytest.approx(sn(1), rel=1e-14)
    pts = fixed_points(lam, 1, model)
    assert len(pts) == 1 and pts[0].x == pytest.approx(0.0, abs=1e-6)
    assert pts[0].type is PointType.NonHyperbolic
    with pytest.raises(NoSolution):
        fixed_points(0.12, 1, model)


def test_fixed_points_with_rotated_wall_map():
    m = Model.build(geom=SectionGeometry(delta_offset=0.05))
    for p in fixed_points(0.2, 1, m):
        assert p.residual <= 1e-10
        J = return_jacobian(CylPoint(Section.InV, p.x, p.y), 0.2, m)
        assert J.det == pytest.approx(4 * p.y ** 3, rel=1e-12)


def test_saddle_nodes_match_closed_form(model):
    for m in (1, 2, 3):
        lam = sn(m)
        ev = [e for e in track_bifurcations(m, lam * 0.5, lam * 2, model) if e.kind == "saddle_node"]
        assert len(ev) == 1
        assert ev[0].lam == pytest.approx(lam, rel=1e-9)
    assert sn(3) / sn(2) == pytest.approx(E, rel=0.01)


def test_flip_and_period_two_sink(model, branch1):
    flips = [e for e in branch1 if e.kind == "flip"]
    assert len(flips) == 1
    f = flips[0]
    assert f.det < 1
    J = return_jacobian(CylPoint(Section.InV, f.x, f.y), f.lam, model)
    assert np.min(np.abs(np.linalg.eigvals(J.matrix) + 1)) < 1e-6
    stable = [o for o in f.detail["period2"] if o["stable"]]
    assert stable and all(abs(u) < 1 for u in stable[0]["multipliers"])


def test_covering(model):
    assert covering_check((2, 3), 0.1, model).passed
    rep = covering_check((1, 2), 0.1, model)
    assert not rep.passed and all(1 in (p.source, p.target) for p in rep.failures)
    d = delta_interval(2, 0.5, model)
    assert not covering_check((2,), 0.5 * (d.c + d.d), model).passed


def test_entropy_proxy(model):
    v = entropy_proxy(0.1, 3, model)
    assert v >= math.log(4)
    d = delta_interval(2, 0.5, model)
    above = entropy_proxy(d.d * 2, 3, model, start=2)
    below = entropy_proxy(d.c / 2, 3, model, start=2)
    assert below < above
    assert entropy_proxy(0.85, 0, model) == pytest.approx(math.log(2))


def test_escape_statistics(model):
    a = escape_statistics(0.1, 20, 3000, 11, model)
    b = escape_statistics(0.1, 20, 3000, 11, model, jobs=2)
    assert a.tobytes() == b.tobytes()
    assert a[0] == 1.0 and np.all(np.diff(a) <= 0)
    assert escape_statistics(0.1, 0, 10, 1, model).tolist() == [1.0]
    zero = escape_statistics(1e-300, 3, 500, 2, model)
    assert zero[1] == 1.0
