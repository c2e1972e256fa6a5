"""Multi-pulse curves, connection counting and tangency localisation.

Every level-``k`` curve is parametrised by the abscissa ``x0`` of its ancestor
point on the hump of ``h_w`` (level 0).  A point of level ``k`` is obtained by
applying the first return ``k`` times, and tangent vectors are pushed through
the analytic Jacobians alongside, so that slopes stay exact even where the
curves are exponentially thin.

On the image helix of a level-``k`` segment the function

    g = Y - h_v(X)

is positive in the region above the graph of ``h_v``.  Its simple roots are the
``(k+1)``-pulse connections, and its positive runs are the windows whose
wall-map images form the next level.

Tangencies are found by following the folds (local minima of the lift) of
every helix.  Near a fold, ``g`` has a single critical point; a tangency is a
parameter value where the critical value changes sign.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ContinuumOfConnections,
    MaxEventsReached,
    ResolutionExhausted,
    TangentRoot,
)
from .maps import log_sub
from .parallel import pmap
from .params import Model
from .sections import CylPoint, SampledCurve, Section, lift_normalize

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
EPS = np.finfo(float).eps
G_TOL = 1e-10
GP_TOL = 1e-8


@dataclass(frozen=True)
class TruncationOptions:
    """How much of the infinite helices is kept."""

    floor: float = 1e-14
    span: float = 40 * math.pi
    interior: int = 256
    x_step: float = 0.35
    tangent_tol: float = 1e-8


DEFAULT_OPTS = TruncationOptions()


# ---------------------------------------------------------------- tracing


@dataclass
class Trace:
    x0: np.ndarray
    x: np.ndarray        # level-k abscissa on the incoming wall, normalised
    ell: np.ndarray      # ln of the level-k height
    X: np.ndarray        # lift of the image helix on the outgoing wall
    ellY: np.ndarray     # ln of the helix height
    tX: np.ndarray       # unit tangent of the helix, oriented by increasing x0
    tY: np.ndarray
    ok: np.ndarray       # every intermediate point stayed in the upper half
    g: np.ndarray
    dg: np.ndarray


def _hump(model: Model, lam: float, x0: np.ndarray) -> np.ndarray:
    """``h_w(x0)`` evaluated from the nearer zero so that tiny heights keep full precision."""
    g = model.geom
    fam = model.family
    u_right = g.P_v_1 - x0
    u_left = x0 - g.P_v_2
    right = fam.h_w_from_zero(1, -u_right, lam)
    left = fam.h_w_from_zero(2, u_left, lam)
    return np.where(u_right < u_left, right, left)


def trace(model: Model, lam: float, x0, level: int) -> Trace:
    """Push hump points ``x0`` through ``level`` returns and one more global map."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    fam = model.family
    K, d = model.dc.K, model.dc.delta
    off = model.geom.delta_offset
    with np.errstate(all="ignore"):
        y = _hump(model, lam, x0)
        ok = y > 0
        ell = np.log(np.where(ok, y, 1.0))
        x = x0.copy()
        tx = np.ones_like(x0)
        ty = np.asarray(fam.dh_w(x0, lam), dtype=float) * np.ones_like(x0)
        for _ in range(level):
            X = x - K * ell
            ellY = d * ell
            yk = np.exp(ell)
            dX = tx - K * ty / yk
            dY = d * np.exp(ellY - ell) * ty
            hp = fam.dh_v(X, lam)
            ny = dY - hp * dX
            nx = dX
            nrm = np.hypot(nx, ny)
            tx, ty = nx / nrm, ny / nrm
            hv = fam.h_v(X, lam)
            ynew, ellnew = log_sub(ellY, hv)
            ok &= ynew > 0
            ell = np.where(ok, ellnew, 0.0)
            x = lift_normalize(X + off)
        X = x - K * ell
        ellY = d * ell
        yk = np.exp(ell)
        dX = tx - K * ty / yk
        dY = d * np.exp(ellY - ell) * ty
        nrm = np.hypot(dX, dY)
        tX, tY = dX / nrm, dY / nrm
        g = np.exp(ellY) - fam.h_v(X, lam)
        # derivative along the level-k curve, per unit of its own arclength
        dg = dY - fam.dh_v(X, lam) * dX
    return Trace(x0=x0, x=x, ell=ell, X=X, ellY=ellY, tX=tX, tY=tY, ok=ok, g=g, dg=dg)


def _scalar(model, lam, level, attr):
    def f(t):
        return float(getattr(trace(model, lam, t, level), attr)[0])
    return f


def _sample_window(a: float, b: float, opts: TruncationOptions, K: float) -> np.ndarray:
    """Geometric toward both ends (where the helix winds), uniform in the middle."""
    w = b - a
    half = 0.5 * w
    dmin = max(4 * EPS * max(abs(a), abs(b), 1e-300), w * 1e-18)
    q = math.exp(opts.x_step / K)
    if dmin < half:
        n = int(math.ceil(math.log(half / dmin) / math.log(q))) + 1
        d = np.geomspace(dmin, half, n)
    else:
        d = np.array([half])
    mid = np.linspace(a, b, opts.interior + 2)[1:-1]
    xs = np.concatenate([a + d, b - d, mid])
    xs = xs[(xs > a) & (xs < b)]
    return np.unique(xs)


# ---------------------------------------------------------------- segments


@dataclass(frozen=True)
class Segment:
    """A W-plus window of a helix, labelled by its path of (branch, turn) choices."""

    level: int
    label: tuple
    a: float
    b: float
    lift_window: tuple[float, float] = (math.nan, math.nan)


@dataclass
class Fold:
    x0: float
    X: float
    Y: float
    crit: float | None = None
    c: float | None = None
    Xc: float = math.nan
    Yc: float = math.nan


@dataclass
class SegmentScan:
    seg: Segment
    trace: Trace
    lo: int
    hi: int
    roots: list[tuple[float, float, float, float]]   # (x0, X, Y, unit slope of g)
    children: list[Segment]
    folds: list[Fold]
    truncated: int = 0
    pruned: int = 0

    @property
    def valid(self) -> slice:
        return slice(self.lo, self.hi + 1)


def _valid_range(tr: Trace, opts: TruncationOptions, center: float) -> tuple[int, int]:
    """Contiguous sample range kept after the floor, the lift cut and snapping to arc centres."""
    good = tr.ok & (tr.ell >= math.log(opts.floor)) & (tr.X <= center + opts.span) & np.isfinite(tr.X)
    if not good.any():
        return 1, 0
    Xg = np.where(good, tr.X, np.inf)
    i0 = int(np.argmin(Xg))
    n = tr.X.size
    ends = []
    for step in (-1, 1):
        j = i0
        while 0 <= j + step < n and good[j + step]:
            j += step
        # cut where the tail last passes an arc centre, so no root sits at the cut
        lim = center + TWO_PI * math.floor((tr.X[j] - center) / TWO_PI)
        k = i0
        while k != j and tr.X[k + step] <= lim:
            k += step
        ends.append(k)
    return ends[0], ends[1]


def _refine_root(fn, lo, hi):
    return brentq(fn, lo, hi, xtol=4 * EPS * max(abs(lo), abs(hi)), rtol=4 * EPS, maxiter=200)


def scan_segment(model: Model, lam: float, seg: Segment, opts: TruncationOptions = DEFAULT_OPTS,
                 want_folds: bool = True) -> SegmentScan:
    K = model.dc.K
    center = model.geom.arc_center
    xs = _sample_window(seg.a, seg.b, opts, K)
    tr = trace(model, lam, xs, seg.level)
    lo, hi = _valid_range(tr, opts, center)
    roots: list[tuple[float, float, float, float]] = []
    children: list[Segment] = []
    folds: list[Fold] = []
    truncated = pruned = 0
    if hi < lo:
        return SegmentScan(seg, tr, lo, hi, roots, children, folds)
    g = tr.g[lo:hi + 1]
    X = tr.X[lo:hi + 1]
    x0s = xs[lo:hi + 1]
    gfun = _scalar(model, lam, seg.level, "g")
    folds = _folds(model, lam, seg, tr, lo, hi)
    cuts = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        cuts.append(_refine_root(gfun, x0s[i], x0s[i + 1]))
    # a pair of roots born at a fold can hide inside one sample cell
    for f in folds:
        if f.crit is None or not x0s[0] < f.crit < x0s[-1]:
            continue
        i = int(np.searchsorted(x0s, f.crit)) - 1
        if g[i] * g[i + 1] > 0 and f.c * g[i] < 0:
            cuts.append(_refine_root(gfun, x0s[i], f.crit))
            cuts.append(_refine_root(gfun, f.crit, x0s[i + 1]))
    cuts.sort()
    for r in cuts:
        t = trace(model, lam, r, seg.level)
        roots.append((r, float(t.X[0]), float(np.exp(t.ellY[0])), float(t.dg[0])))
    # fold with minimal lift splits the helix into branches
    x_fold = float(x0s[int(np.argmin(X))])
    positive = g[0] > 0
    for k in range(len(cuts)):
        positive = not positive  # sign just right of cut k
        if not positive or k + 1 == len(cuts):
            continue
        ra, rb = cuts[k], cuts[k + 1]
        inside = g[(x0s > ra) & (x0s < rb)]
        top = float(inside.max()) if inside.size else float(gfun(0.5 * (ra + rb)))
        if top < opts.floor:
            pruned += 1
            continue
        Xa, Xb = roots[k][1], roots[k + 1][1]
        turn = int(round((0.5 * (Xa + Xb) - center) / TWO_PI))
        branch = "L" if rb <= x_fold else ("R" if ra >= x_fold else "F")
        children.append(Segment(seg.level + 1, seg.label + ((branch, turn),), ra, rb, (Xa, Xb)))
    if g[0] > 0:
        truncated += 1
    if g[-1] > 0 and cuts:
        truncated += 1
    if not want_folds:
        folds = []
    return SegmentScan(seg, tr, lo, hi, roots, children, folds, truncated, pruned)


def _folds(model, lam, seg, tr: Trace, lo: int, hi: int) -> list[Fold]:
    """Local minima of the lift and the critical point of ``g`` next to each."""
    out = []
    tX = tr.tX[lo:hi + 1]
    x0s = tr.x0[lo:hi + 1]
    X = tr.X[lo:hi + 1]
    dg = tr.dg[lo:hi + 1]
    tfun = _scalar(model, lam, seg.level, "tX")
    dgfun = _scalar(model, lam, seg.level, "dg")
    idx = np.nonzero((tX[:-1] < 0) & (tX[1:] > 0))[0]
    for i in idx:
        xf = _refine_root(tfun, x0s[i], x0s[i + 1])
        tf = trace(model, lam, xf, seg.level)
        fold = Fold(x0=xf, X=float(tf.X[0]), Y=float(np.exp(tf.ellY[0])))
        # nearest sign change of dg within a quarter turn of the fold
        best = None
        for step in (-1, 1):
            j = i if step == -1 else i + 1
            while 0 < j < len(x0s) - 1 and abs(X[j] - fold.X) < 0.5 * math.pi:
                k = j + step
                if np.sign(dg[j]) * np.sign(dg[k]) < 0:
                    a_, b_ = sorted((x0s[j], x0s[k]))
                    if best is None or abs(a_ - xf) < abs(best[0] - xf):
                        best = (a_, b_)
                    break
                j = k
        # the fold may sit inside the bracketing cell itself
        if np.sign(dg[i]) * np.sign(dg[i + 1]) < 0:
            best = (x0s[i], x0s[i + 1])
        if best is not None:
            try:
                xc = _refine_root(dgfun, *best)
            except ValueError:
                xc = None
            if xc is not None:
                tc = trace(model, lam, xc, seg.level)
                fold.crit = xc
                fold.c = float(tc.g[0])
                fold.Xc = float(tc.X[0])
                fold.Yc = float(np.exp(tc.ellY[0]))
        out.append(fold)
    return out


def root_segment(model: Model) -> Segment:
    g = model.geom
    return Segment(0, (), g.P_v_2, g.P_v_1)


def build_levels(model: Model, lam: float, depth: int, opts: TruncationOptions = DEFAULT_OPTS):
    """Scans of every segment at levels ``0..depth``."""
    levels = [[scan_segment(model, lam, root_segment(model), opts, want_folds=depth == 0)]]
    for k in range(1, depth + 1):
        segs = [c for s in levels[-1] for c in s.children]
        levels.append([scan_segment(model, lam, s, opts, want_folds=k == depth) for s in segs])
    return levels


# ---------------------------------------------------------------- public: curves and counts


@dataclass
class PulseSegment:
    label: tuple
    window: tuple[float, float]
    lift_window: tuple[float, float]
    curve: SampledCurve
    max_height: float


@dataclass
class PulseCurve:
    level: int
    segments: list[PulseSegment]
    truncated: int = 0
    pruned: int = 0
    degenerate: bool = False


def _segment_curve(scan: SegmentScan) -> SampledCurve:
    tr = scan.trace
    sl = scan.valid
    xs = np.unwrap(tr.x[sl]) if scan.seg.level > 0 else tr.x[sl]
    return SampledCurve(Section.InV, xs, np.exp(tr.ell[sl]), log_ys=tr.ell[sl])


def pulse_curves(lam: float, depth: int, model: Model, opts: TruncationOptions = DEFAULT_OPTS) -> list[PulseCurve]:
    """Level-0..depth curves on the incoming wall of ``v``."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if lam == 0:
        lo, hi = model.geom.P_v_2, model.geom.P_v_1
        xs = np.linspace(lo, hi, 65)
        curve = SampledCurve(Section.InV, xs, np.zeros_like(xs))
        return [PulseCurve(k, [PulseSegment((), (lo, hi), (lo, hi), curve, 0.0)], degenerate=True)
                for k in range(depth + 1)]
    if not 0 < lam < model.family.lambda_star:
        raise ValueError(f"lambda={lam} outside (0, lambda_star)")
    levels = build_levels(model, lam, depth, opts)
    out = []
    for k, scans in enumerate(levels):
        segs = []
        for s in scans:
            if s.hi < s.lo:
                continue
            c = _segment_curve(s)
            segs.append(PulseSegment(s.seg.label, (s.seg.a, s.seg.b), s.seg.lift_window, c, float(np.max(c.ys))))
        prev = levels[k - 1] if k else []
        out.append(PulseCurve(k, segs, truncated=sum(p.truncated for p in prev), pruned=sum(p.pruned for p in prev)))
    return out


@dataclass
class ConnectionCount:
    count: int
    locations: list[CylPoint]
    slopes: list[float]
    truncated: int = 0
    pruned: int = 0

    def __iter__(self):
        # allows ``count, locations = count_pulse_connections(...)``
        return iter((self.count, self.locations))


def count_pulse_connections(lam: float, n: int, model: Model, opts: TruncationOptions = DEFAULT_OPTS,
                            raise_on_tangent: bool = True) -> ConnectionCount:
    """Transverse ``n``-pulse connections: simple roots of ``g`` on the level-``n-1`` helices."""
    g = model.geom
    if n == 0:
        pts = [CylPoint(Section.OutW, g.P_w_1, 0.0), CylPoint(Section.OutW, g.P_w_2, 0.0)]
        return ConnectionCount(2, pts, [math.nan, math.nan])
    if lam == 0:
        raise ContinuumOfConnections("at lambda = 0 the connections form a continuum")
    levels = build_levels(model, lam, n - 1, opts)
    locs, slopes = [], []
    for s in levels[-1]:
        for r, X, Y, sl in s.roots:
            if raise_on_tangent and abs(sl) < opts.tangent_tol:
                raise TangentRoot(f"near-tangent root at x0={r} (|g'|={abs(sl):.3g})", r, sl)
            locs.append(CylPoint(Section.OutW, X, min(Y, 1.0)))
            slopes.append(sl)
    trunc = sum(s.truncated for lv in levels for s in lv)
    pruned = sum(s.pruned for lv in levels for s in lv)
    return ConnectionCount(len(locs), locs, slopes, trunc, pruned)


# ---------------------------------------------------------------- tangencies


@dataclass(frozen=True)
class TangencyEvent:
    pulse: int
    lam: float
    location: CylPoint
    residuals: tuple[float, float]
    bracket: tuple[float, float]
    label: tuple = ()
    fold_index: int = 0
    x0: float = math.nan
    count_jump: int | None = None

    def as_json(self) -> dict:
        return {"type": "tangency", "pulse": self.pulse, "lambda": self.lam,
                "x": self.location.x, "y": self.location.y,
                "residual_g": self.residuals[0], "residual_gp": self.residuals[1]}


def _fold_snapshot(args):
    model, lam, pulse, opts = args
    levels = build_levels(model, lam, pulse - 1, opts)
    return {s.seg.label: [(f.c, f.x0) for f in s.folds] for s in levels[-1]}


def _scan_path(model, lam, label, opts):
    """Scan only the chain of segments leading to ``label``."""
    seg = root_segment(model)
    for depth in range(len(label)):
        scan = scan_segment(model, lam, seg, opts, want_folds=False)
        nxt = [c for c in scan.children if c.label == label[:depth + 1]]
        if not nxt:
            return None
        seg = nxt[0]
    return scan_segment(model, lam, seg, opts, want_folds=True)


def _critical_value(model, lam, pulse, label, index, opts):
    s = _scan_path(model, lam, label, opts)
    if s is not None and index < len(s.folds) and s.folds[index].c is not None:
        return s.folds[index]
    return None


class _Lost(Exception):
    pass


def _refine_bracket(args):
    model, pulse, label, index, lam_lo, lam_hi, opts = args

    def c(lam):
        f = _critical_value(model, lam, pulse, label, index, opts)
        if f is None:
            raise _Lost
        return f.c

    try:
        lam = brentq(c, lam_lo, lam_hi, xtol=1e-15 * lam_lo, rtol=4 * EPS, maxiter=200)
    except (_Lost, ValueError):
        return None
    f = _critical_value(model, lam, pulse, label, index, opts)
    if f is None:
        return None
    t = trace(model, lam, f.crit, pulse - 1)
    res = (abs(float(t.g[0])), abs(float(t.dg[0])))
    loc = CylPoint(Section.OutW, float(t.X[0]), float(np.exp(t.ellY[0])), float(t.ellY[0]))
    return TangencyEvent(pulse, float(lam), loc, res, (lam_lo, lam_hi), label, index, float(f.crit))


def lambda_grid(lam_hi: float, lam_lo: float, ratio: float = 0.98) -> np.ndarray:
    n = int(math.ceil(math.log(lam_lo / lam_hi) / math.log(ratio)))
    grid = lam_hi * ratio ** np.arange(n + 1)
    grid[-1] = lam_lo
    return grid


def find_tangencies(lam_hi: float, lam_lo: float, model: Model, pulse: int = 1, max_events: int | None = None,
                    ratio: float = 0.98, opts: TruncationOptions = DEFAULT_OPTS, jobs: int = 1,
                    verify: bool = False, verify_eps: float = 1e-7) -> list[TangencyEvent]:
    """Tangencies between level-``pulse-1`` helices and the graph of ``h_v`` in ``[lam_lo, lam_hi]``.

    Events come sorted by decreasing lambda, then increasing lift.  With
    ``verify`` each event also records the jump in the connection count across it.
    """
    if pulse < 1:
        raise ValueError("pulse must be >= 1")
    if not 0 < lam_lo < lam_hi < model.family.lambda_star:
        raise ValueError("need 0 < lam_lo < lam_hi < lambda_star")
    grid = lambda_grid(lam_hi, lam_lo, ratio)
    snaps = pmap(_fold_snapshot, [(model, float(l), pulse, opts) for l in grid], jobs)
    tasks = []
    for (la, sa), (lb, sb) in zip(zip(grid, snaps), zip(grid[1:], snaps[1:])):
        for label in sorted(set(sa) & set(sb)):
            for i, ((ca, _), (cb, _)) in enumerate(zip(sa[label], sb[label])):
                if ca is not None and cb is not None and ca * cb < 0:
                    tasks.append((model, pulse, label, i, float(lb), float(la), opts))
    results = pmap(_refine_bracket, tasks, jobs)
    # unresolved brackets and events missing the residual tolerances are dropped
    events = [r for r in results if r is not None and r.residuals[0] <= G_TOL and r.residuals[1] <= GP_TOL]
    lost = len(results) - len(events)
    if tasks and not events:
        raise ResolutionExhausted(f"all {len(tasks)} brackets failed to refine")
    if lost:
        log.warning("%d tangency brackets could not be refined", lost)
    events.sort(key=lambda e: (-e.lam, e.location.x))
    if verify:
        events = [_verify(model, e, verify_eps, opts) for e in events]
    if max_events is not None and len(events) > max_events:
        raise MaxEventsReached(f"more than {max_events} events", events[:max_events])
    return events


def _verify(model, e: TangencyEvent, eps: float, opts) -> TangencyEvent:
    above = count_pulse_connections(e.lam * (1 + eps), e.pulse, model, opts, raise_on_tangent=False).count
    below = count_pulse_connections(e.lam * (1 - eps), e.pulse, model, opts, raise_on_tangent=False).count
    return TangencyEvent(e.pulse, e.lam, e.location, e.residuals, e.bracket, e.label, e.fold_index, e.x0, above - below)
