"""Helices: images of positive graphs under the global map and its inverse."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import EmptyRange, NoBracket, NonPositive, NotAGraph
from .params import DerivedConstants
from .sections import Helix, SampledCurve, Section

TWO_PI = 2.0 * math.pi


def _log_heights(curve: SampledCurve) -> np.ndarray:
    if curve.log_ys is not None:
        return curve.log_ys
    return np.log(curve.ys)


def _check_positive_graph(curve: SampledCurve) -> None:
    if curve.xs.size < 3:
        raise NotAGraph("need at least three samples")
    if not curve.is_graph:
        raise NotAGraph("sample lifts must be strictly increasing")
    if curve.log_ys is None and np.any(curve.ys <= 0):
        raise NonPositive("graph samples must be strictly positive")
    ell = _log_heights(curve)
    top = np.max(ell)
    if not (ell[0] < top and ell[-1] < top):
        raise NotAGraph("graph must rise from its left end and fall to its right end")


def _strict_extrema(xs: np.ndarray) -> list[int]:
    d = np.diff(xs)
    s = np.sign(d)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0] + 1
    return [int(i) for i in idx]


def _make_helix(section: Section, X: np.ndarray, ellY: np.ndarray) -> Helix:
    i = int(np.argmax(ellY))
    return Helix(
        section=section,
        xs=X,
        ys=np.exp(ellY),
        folds=_strict_extrema(X),
        max_height=float(np.exp(ellY[i])),
        max_height_at=float(X[i]),
    )


def image_helix(curve: SampledCurve, dc: DerivedConstants) -> Helix:
    """Forward image of a positive graph on the incoming wall of ``v``.

    The lift tends to ``+inf`` at both ends and the maximum height is ``M**delta``.
    """
    _check_positive_graph(curve)
    ell = _log_heights(curve)
    X = curve.xs - dc.K * ell
    return _make_helix(Section.OutW, X, dc.delta * ell)


def preimage_helix(curve: SampledCurve, dc: DerivedConstants) -> Helix:
    """Backward image of a positive graph on the outgoing wall of ``w``.

    The lift tends to ``-inf`` at both ends and the maximum height is ``M**(1/delta)``.
    """
    _check_positive_graph(curve)
    ellY = _log_heights(curve)
    ell = ellY / dc.delta
    return _make_helix(Section.InV, curve.xs + dc.K * ell, ell)


def fold_points(h: Callable, dh: Callable, window: tuple[float, float], K: float,
                n_grid: int = 4096, max_refinements: int = 6, tol: float = 1e-12) -> list[float]:
    """Roots of ``h - K h'`` on the open window, sorted increasingly.

    For folds of a backward image pass ``K = -K_model / delta``.  The grid is
    doubled up to ``max_refinements`` times before giving up with ``NoBracket``.
    """
    a, b = window

    def g(x):
        return h(x) - K * dh(x)

    n = n_grid
    for _ in range(max_refinements + 1):
        xs = np.linspace(a, b, n + 2)[1:-1]
        gs = np.asarray(g(xs), dtype=float)
        roots = [float(x) for x, v in zip(xs, gs) if v == 0.0]
        sc = np.nonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) < 0)[0]
        for i in sc:
            r = brentq(lambda t: float(g(t)), xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            roots.append(_polish(g, r, xs[i], xs[i + 1]))
        if roots:
            roots = sorted(roots)
            bad = [r for r in roots if abs(float(g(r))) > tol * max(1.0, abs(float(h(r))))]
            if bad:
                raise NoBracket(f"fold residual too large at {bad[0]}")
            return roots
        n *= 2
    raise NoBracket("no sign change of h - K h' found; refine the window or grid")


def _polish(g, r: float, lo: float, hi: float) -> float:
    """A couple of secant steps that never leave the bracket."""
    best, gbest = r, abs(float(g(r)))
    step = max(abs(r), 1.0) * 1e-8
    for _ in range(2):
        g0 = float(g(best))
        slope = (float(g(best + step)) - float(g(best - step))) / (2 * step)
        if slope == 0.0 or g0 == 0.0:
            break
        cand = best - g0 / slope
        if not lo <= cand <= hi:
            break
        gc = abs(float(g(cand)))
        if gc < gbest:
            best, gbest = cand, gc
        else:
            break
    return best


def winding_count(hx: Helix, y_min: float) -> int:
    """Complete turns made by the longer tail from the top of the helix down to ``y_min``."""
    if not (y_min > 0 and y_min <= hx.max_height):
        raise EmptyRange(f"y_min={y_min} must lie in (0, max_height={hx.max_height}]")
    ys = np.asarray(hx.ys, dtype=float)
    xs = np.asarray(hx.xs, dtype=float)
    top = int(np.argmax(ys))
    best = 0.0
    for direction in (1, -1):
        idx = np.arange(top, ys.size) if direction == 1 else np.arange(top, -1, -1)
        keep = ys[idx] >= y_min
        stop = int(np.argmin(keep)) if not keep.all() else idx.size
        last = idx[stop - 1]
        lift = xs[last]
        if stop < idx.size:
            nxt = idx[stop]
            # interpolate linearly in ln y to hit y_min exactly
            l0, l1 = math.log(ys[last]), math.log(ys[nxt]) if ys[nxt] > 0 else -math.inf
            if math.isfinite(l1) and l0 != l1:
                t = (math.log(y_min) - l0) / (l1 - l0)
                lift = xs[last] + t * (xs[nxt] - xs[last])
        best = max(best, abs(lift - xs[top]))
    return int(math.floor(best / TWO_PI + 1e-12))
