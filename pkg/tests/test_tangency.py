import math

import numpy as np
import pytest

from bykov.errors import ContinuumOfConnections, MaxEventsReached
from bykov.tangency import (TruncationOptions, _critical_value, count_pulse_connections, find_tangencies,
                            pulse_curves)

X_FOLD = math.atan(-1 / 3)


def dense_root_count(lam, lift_cut):
    """Sign changes of g along the image of the hump, sampled directly from the closed forms."""
    u = np.geomspace(1e-16, math.pi / 2, 2_000_000)
    total = 0
    for side in (-1, 1):
        x = side * (math.pi / 2 - u)
        y = lam * np.sin(u)
        X = x - 3 * np.log(y)
        g = y ** 4 + lam * np.cos(X)
        g = g[X <= lift_cut]
        total += int(np.sum(np.sign(g[:-1]) * np.sign(g[1:]) < 0))
    return total


@pytest.fixture(scope="module")
def events(model):
    return find_tangencies(0.5, 1e-4, model, pulse=1, verify=True)


def test_level_zero_is_the_hump(model):
    (lvl,) = pulse_curves(0.1, 0, model)
    assert len(lvl.segments) == 1
    seg = lvl.segments[0]
    assert np.all(seg.curve.ys > 0)
    assert np.allclose(seg.curve.ys, 0.1 * np.cos(seg.curve.xs), rtol=1e-12)


def test_level_one(model):
    lv0, lv1 = pulse_curves(0.1, 1, model)
    assert (max(lv0.segments[0].curve.ys)) ** 4 == pytest.approx(1e-4, rel=1e-6)
    assert len(lv1.segments) >= 1
    for s in lv1.segments:
        assert np.all(s.curve.ys > 0)


def test_degenerate_parameter(model):
    levels = pulse_curves(0.0, 2, model)
    assert all(lv.degenerate and len(lv.segments) == 1 for lv in levels)
    with pytest.raises(ContinuumOfConnections):
        count_pulse_connections(0.0, 1, model)
    assert count_pulse_connections(0.3, 0, model).count == 2


@pytest.mark.parametrize("lam", [0.3, 0.1, 0.05])
def test_one_pulse_count_matches_dense_sampling(model, lam):
    cc = count_pulse_connections(lam, 1, model)
    # the default truncation keeps both tails up to the last arc centre below 30 pi
    assert cc.count == dense_root_count(lam, 30 * math.pi)
    assert all(abs(s) >= 1e-8 for s in cc.slopes)
    count, locs = cc
    assert count == len(locs)


def test_two_pulse_count_grows(model):
    assert count_pulse_connections(0.1, 2, model).count > count_pulse_connections(0.1, 1, model).count


def test_events_sorted_and_resolved(events):
    assert len(events) >= 4
    lams = [e.lam for e in events]
    assert lams == sorted(lams, reverse=True)
    for e in events:
        assert e.residuals[0] <= 1e-10 and e.residuals[1] <= 1e-8
        assert e.count_jump == 2
        assert e.bracket[0] <= e.lam <= e.bracket[1]
    ys = [e.location.y for e in events]
    assert all(a > b for a, b in zip(ys, ys[1:]))


def test_pair_appears_above_event(model, events):
    e = events[0]
    above = count_pulse_connections(e.lam * (1 + 1e-6), 1, model).count
    below = count_pulse_connections(e.lam * (1 - 1e-6), 1, model).count
    assert above - below == 2


def test_fold_preimage_is_parameter_free(model, events):
    opts = TruncationOptions()
    for e in events:
        f = _critical_value(model, e.lam, 1, e.label, e.fold_index, opts)
        assert f.x0 == pytest.approx(X_FOLD, abs=1e-8)


def test_alternate_events_are_a_full_turn_apart(events):
    lams = np.array([e.lam for e in events])
    assert lams[2:] / lams[:-2] == pytest.approx(math.exp(-2 * math.pi / 3), rel=0.01)
    lifts = np.array([e.location.x for e in events])
    assert np.diff(lifts) == pytest.approx(math.pi, abs=0.01)


def test_json_record(events):
    rec = events[0].as_json()
    assert list(rec) == ["type", "pulse", "lambda", "x", "y", "residual_g", "residual_gp"]


def test_event_cap(model):
    with pytest.raises(MaxEventsReached) as info:
        find_tangencies(0.5, 0.01, model, pulse=1, max_events=1)
    assert len(info.value.events) == 1


def test_bad_ranges(model):
    with pytest.raises(ValueError):
        find_tangencies(0.1, 0.2, model)
    with pytest.raises(ValueError):
        find_tangencies(0.1, 0.01, model, pulse=0)
