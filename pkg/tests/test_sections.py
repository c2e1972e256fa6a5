import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bykov.errors import OutOfDomain
from bykov.sections import (CylPoint, Helix, RegionFlag, SampledCurve, Section, classify_region, csv_text,
                            lift_normalize)


def test_lift_normalize_examples():
    assert lift_normalize(2 * math.pi) == pytest.approx(0.0, abs=1e-15)
    assert lift_normalize(6.74497) == pytest.approx(6.74497 - 2 * math.pi, abs=1e-12)
    assert lift_normalize(math.pi) == math.pi
    assert lift_normalize(-math.pi) == math.pi
    arr = lift_normalize(np.array([-math.pi, math.pi, 3 * math.pi, 0.5]))
    assert np.allclose(arr, [math.pi, math.pi, math.pi, 0.5])


@given(st.floats(-1e4, 1e4))
def test_lift_normalize_properties(x):
    r = lift_normalize(x)
    assert -math.pi < r <= math.pi
    assert lift_normalize(r) == r
    k = (x - r) / (2 * math.pi)
    assert abs(k - round(k)) * 2 * math.pi < 1e-12 * max(1.0, abs(x))


def test_region_examples(model):
    fam = model.family
    assert classify_region(CylPoint(Section.OutW, math.pi, 0.05), 0.1, fam) is RegionFlag.Wminus
    assert classify_region(CylPoint(Section.OutW, 0.0, 0.05), 0.1, fam) is RegionFlag.Wplus
    assert classify_region(CylPoint(Section.OutW, math.pi, 0.1), 0.1, fam) is RegionFlag.OnBoundary
    with pytest.raises(OutOfDomain):
        classify_region(CylPoint(Section.OutW, 0.0, 0.0), 0.1, fam)


@given(x=st.floats(-10, 10), y=st.floats(1e-6, 0.99))
def test_region_periodic(model, x, y):
    a = classify_region(CylPoint(Section.OutW, x, y), 0.2, model.family)
    b = classify_region(CylPoint(Section.OutW, x + 2 * math.pi, y), 0.2, model.family)
    assert a is b


def test_point_validation():
    with pytest.raises(OutOfDomain):
        CylPoint(Section.InV, 0.0, 1.5)
    with pytest.raises(OutOfDomain):
        CylPoint(Section.InV, 0.0, 0.5, log_y=0.0)
    p = CylPoint.from_log(Section.InV, 0.0, -800.0)
    assert p.y == 0.0 and p.ell == -800.0


def test_curve_checks_and_csv():
    xs = np.linspace(0, 1, 5)
    c = SampledCurve(Section.InV, xs, xs * (1 - xs))
    assert c.is_graph and c.self_intersections() == 0
    text = csv_text(c)
    assert text.splitlines()[0] == "section,x_lift,y,log_y"
    assert len(text.splitlines()) == 6
    bow = SampledCurve(Section.InV, [0, 1, 1, 0], [0, 1, 0, 1])
    assert not bow.is_graph and bow.self_intersections() == 1
    h = Helix(Section.OutW, np.array([3.0, 2.0, 3.0]), np.array([0.1, 0.2, 0.1]), folds=[1])
    buf = io.StringIO()
    h.to_csv(buf)
    assert buf.getvalue().splitlines()[2].endswith(",1")
