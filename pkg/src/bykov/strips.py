"""Horizontal strips, their arch-shaped return images, and how the two intersect.

Every boundary here is an explicit exponential (minus the wall-map graph), so
crossing questions reduce to sign counts of smooth scalar functions on the strip
window.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import CapExceeded, NoTangencyFound, OrderingViolated
from .params import Model

TWO_PI = 2.0 * math.pi
_GRID = 2049


@dataclass(frozen=True)
class Strip:
    """Horizontal strip ``H_n`` on the incoming wall of ``v``; does not depend on lambda."""

    n: int
    K: float
    P_w_1: float
    P_w_2: float
    P_v_1: float
    P_v_2: float
    tau: float

    @property
    def window(self) -> tuple[float, float]:
        return (self.P_v_2 - self.tau, self.P_v_1 + self.tau)

    def log_u1(self, x):
        return (np.asarray(x, dtype=float) - self.P_w_1 - self.tau - TWO_PI * self.n) / self.K

    def log_u2(self, x):
        return (np.asarray(x, dtype=float) - self.P_w_2 + self.tau - TWO_PI * self.n) / self.K

    def u1(self, x):
        return np.exp(self.log_u1(x))

    def u2(self, x):
        return np.exp(self.log_u2(x))

    @property
    def log_h(self) -> float:
        return (self.P_v_1 - self.P_w_2 + 2 * self.tau - TWO_PI * self.n) / self.K

    @property
    def log_m(self) -> float:
        return (self.P_v_2 - self.P_w_1 - 2 * self.tau - TWO_PI * self.n) / self.K

    @property
    def h(self) -> float:
        return math.exp(self.log_h)

    @property
    def m(self) -> float:
        return math.exp(self.log_m)

    def contains(self, x: float, y: float) -> bool:
        lo, hi = self.window
        return lo <= x <= hi and float(self.u1(x)) <= y <= float(self.u2(x))

    def area(self) -> float:
        lo, hi = self.window
        # both boundaries are K * d/dx of themselves
        return self.K * (float(self.u2(hi) - self.u2(lo)) - float(self.u1(hi) - self.u1(lo)))


def horizontal_strip(n: int, model: Model) -> Strip:
    if n < 1:
        raise ValueError("strip index must be >= 1")
    g = model.geom
    return Strip(n=n, K=model.dc.K, P_w_1=g.P_w_1, P_w_2=g.P_w_2, P_v_1=g.P_v_1, P_v_2=g.P_v_2, tau=g.tau)


def strip_index(x: float, ell: float, model: Model) -> int | None:
    """Index ``n`` of the horizontal strip containing ``(x, e**ell)``, or ``None``."""
    g = model.geom
    lo, hi = g.window_v
    if not lo <= x <= hi or ell > 0:
        return None
    X = x - model.dc.K * ell
    n = math.ceil((X - g.P_w_1 - g.tau) / TWO_PI)
    if n >= 1 and X - TWO_PI * n >= g.P_w_2 - g.tau:
        return n
    return None


@dataclass
class HorseshoeStrip:
    """Return image of ``H_n`` bounded by two arches over the strip window."""

    n: int
    lam: float
    model: Model
    legs: dict = field(default_factory=dict)
    arch_max: float = 0.0
    arch_max_at: float = 0.0
    is_horseshoe: bool = False

    @property
    def window(self) -> tuple[float, float]:
        return self.model.geom.window_v

    def _exp_part(self, x, a):
        m = self.model
        z = np.asarray(x, dtype=float) - m.geom.delta_offset
        return np.exp(m.dc.delta * (a - z - TWO_PI * self.n) / m.dc.K)

    def _boundary(self, x, a):
        m = self.model
        z = np.asarray(x, dtype=float) - m.geom.delta_offset
        return self._exp_part(x, a) - m.family.h_v(z, self.lam)

    def _dboundary(self, x, a, order: int = 1):
        m = self.model
        z = np.asarray(x, dtype=float) - m.geom.delta_offset
        c = -m.dc.delta / m.dc.K
        if order == 1:
            return c * self._exp_part(x, a) - m.family.dh_v(z, self.lam)
        return c * c * self._exp_part(x, a) - m.family.d2h_v(z, self.lam)

    @property
    def a_lower(self) -> float:
        return self.model.geom.P_v_2 - self.model.geom.tau

    @property
    def a_upper(self) -> float:
        return self.model.geom.P_v_1 + self.model.geom.tau

    def lower(self, x):
        return self._boundary(x, self.a_lower)

    def upper(self, x):
        return self._boundary(x, self.a_upper)

    def eta_upper_max(self) -> tuple[float, float]:
        """Top of the strip before the wall map: ``(height, lift)``."""
        g = self.model.geom
        X = g.P_w_2 - g.tau
        return float(self._exp_part(X + g.delta_offset, self.a_upper)), X


def _roots(f, lo: float, hi: float, n: int = _GRID) -> list[float]:
    xs = np.linspace(lo, hi, n)
    vs = np.asarray(f(xs), dtype=float)
    out = [float(x) for x, v in zip(xs, vs) if v == 0.0]
    for i in np.nonzero(np.sign(vs[:-1]) * np.sign(vs[1:]) < 0)[0]:
        out.append(brentq(lambda t: float(f(t)), xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return sorted(out)


def _maximize(f, lo: float, hi: float, n: int = _GRID) -> tuple[float, float]:
    xs = np.linspace(lo, hi, n)
    vs = np.asarray(f(xs), dtype=float)
    i = int(np.argmax(vs))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    res = minimize_scalar(lambda t: -float(f(t)), bounds=(a, b), method="bounded", options={"xatol": 1e-13})
    if -res.fun >= vs[i]:
        return float(res.x), float(-res.fun)
    return float(xs[i]), float(vs[i])


def horseshoe_strip(n: int, lam: float, model: Model) -> HorseshoeStrip:
    if n < 1:
        raise ValueError("strip index must be >= 1")
    hs = HorseshoeStrip(n=n, lam=float(lam), model=model)
    lo, hi = hs.window
    hs.legs = {"lower": _roots(hs.lower, lo, hi), "upper": _roots(hs.upper, lo, hi)}
    hs.arch_max_at, hs.arch_max = _maximize(hs.lower, lo, hi)
    ends_negative = all(float(b(e)) < 0 for b in (hs.lower, hs.upper) for e in (lo, hi))
    hs.is_horseshoe = lam > 0 and ends_negative and all(len(v) == 2 for v in hs.legs.values())
    return hs


class IntersectionKind(enum.Enum):
    Empty = "Empty"
    Irregular = "Irregular"
    Regular = "Regular"


@dataclass(frozen=True)
class IntersectionClass:
    value: IntersectionKind
    components: int = 0
    predicates: tuple[bool, bool, bool, bool] = (False, False, False, False)
    intervals: tuple[tuple[float, float], ...] = ()


def _goes_across(diff, lo: float, hi: float) -> bool:
    if not (float(diff(lo)) < 0 and float(diff(hi)) < 0):
        return False
    return _maximize(diff, lo, hi)[1] > 0


def _overlap_runs(f1, f2, lo: float, hi: float, n: int = _GRID) -> list[tuple[float, float]]:
    """Maximal subintervals where both ``f1 >= 0`` and ``f2 >= 0``.

    Runs are delimited by the roots of each function separately, so a run
    narrower than the grid spacing is still found as long as each function
    crosses zero transversally.
    """
    cuts = sorted({lo, hi, *_roots(f1, lo, hi, n), *_roots(f2, lo, hi, n)})
    runs: list[list[float]] = []
    for a, b in zip(cuts, cuts[1:]):
        mid = 0.5 * (a + b)
        if min(float(f1(mid)), float(f2(mid))) >= 0:
            if runs and runs[-1][1] == a:
                runs[-1][1] = b
            else:
                runs.append([a, b])
    if not runs:
        # a touching pair of roots can hide between grid points
        x, v = _maximize(lambda t: np.minimum(f1(t), f2(t)), lo, hi, n)
        return [(x, x)] if v >= 0 else []
    return [(float(a), float(b)) for a, b in runs]


def classify_intersection(n: int, m: int, lam: float, model: Model) -> IntersectionClass:
    """Classify ``H_n`` against the return image of ``H_m``.

    ``n`` indexes the horizontal strip and ``m`` the strip whose image is the
    horseshoe.  Regular means both arches cross both horizontal boundaries.
    """
    H = horizontal_strip(n, model)
    S = HorseshoeStrip(n=m, lam=float(lam), model=model)
    lo, hi = H.window
    preds = (
        _goes_across(lambda x: S.lower(x) - H.u1(x), lo, hi),
        _goes_across(lambda x: S.lower(x) - H.u2(x), lo, hi),
        _goes_across(lambda x: S.upper(x) - H.u1(x), lo, hi),
        _goes_across(lambda x: S.upper(x) - H.u2(x), lo, hi),
    )
    overlap = _overlap_runs(lambda x: S.upper(x) - H.u1(x), lambda x: H.u2(x) - S.lower(x), lo, hi)
    if not overlap:
        return IntersectionClass(IntersectionKind.Empty, 0, preds, ())
    kind = IntersectionKind.Regular if all(preds) else IntersectionKind.Irregular
    return IntersectionClass(kind, len(overlap), preds, tuple(overlap))


def min_regular_index(lam: float, model: Model, search_cap: int = 60) -> int:
    """Least ``N`` whose block ``{N, N+1, N+2}`` is pairwise Regular."""
    if not 0 < lam < model.family.lambda_star:
        raise ValueError(f"lambda={lam} outside (0, lambda_star)")
    cache: dict[tuple[int, int], bool] = {}

    def ok(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = classify_intersection(a, b, lam, model).value is IntersectionKind.Regular
        return cache[(a, b)]

    for N in range(1, search_cap + 1):
        block = range(N, N + 3)
        if all(ok(a, b) for a in block for b in block):
            return N
    raise CapExceeded(f"no regular block found up to N={search_cap}")


@dataclass(frozen=True)
class DeltaInterval:
    a: int
    c: float
    d: float
    witness_c: tuple[float, float]
    witness_d: tuple[float, float]
    probes: tuple[tuple[float, str], ...] = ()


def _tangency_system(model: Model, a: int, which: str):
    """``F`` and derivatives for the boundary pair that defines ``c`` or ``d``."""
    H = horizontal_strip(a, model)
    fam = model.family
    off = model.geom.delta_offset
    K = model.dc.K

    def parts(x, lam):
        S = HorseshoeStrip(n=a, lam=lam, model=model)
        if which == "d":
            arch = S.a_lower
            u, du, d2u = H.u2(x), H.u2(x) / K, H.u2(x) / K ** 2
        else:
            arch = S.a_upper
            u, du, d2u = H.u1(x), H.u1(x) / K, H.u1(x) / K ** 2
        z = x - off
        F = S._boundary(x, arch) - u
        Fx = S._dboundary(x, arch, 1) - du
        Fxx = S._dboundary(x, arch, 2) - d2u
        Fl = -fam.dh_v_dlam(z, lam)
        Fxl = -fam.d2h_v_dxdlam(z, lam)
        return F, Fx, Fxx, Fl, Fxl

    def G(lam):
        lo, hi = H.window
        return _maximize(lambda x: parts(x, lam)[0], lo, hi)

    return parts, G


def _newton_polish(parts, x: float, lam: float, iters: int = 30) -> tuple[float, float]:
    for _ in range(iters):
        F, Fx, Fxx, Fl, Fxl = (float(v) for v in parts(x, lam))
        r = math.hypot(F, Fx)
        if r < 1e-17:
            break
        J = np.array([[Fx, Fl], [Fxx, Fxl]])
        try:
            step = np.linalg.solve(J, [-F, -Fx])
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-4:
            xn, ln = x + t * step[0], lam + t * step[1]
            if ln > 0:
                Fn, Fxn = parts(xn, ln)[:2]
                if math.hypot(float(Fn), float(Fxn)) < r:
                    x, lam = xn, ln
                    break
            t *= 0.5
        else:
            break
    return x, lam


def delta_interval(a: int, lam_seed_hi: float, model: Model, ratio: float = 0.9,
                   lam_floor_factor: float = 1e-8) -> DeltaInterval:
    """Parameter interval ``[c, d]`` over which the suspended horseshoe on ``H_a`` is destroyed.

    Above ``d`` the image of ``H_a`` crosses ``H_a`` regularly; at ``d`` its lower
    arch becomes tangent to the top of ``H_a`` and at ``c`` its upper arch
    becomes tangent to the bottom of ``H_a``.
    """
    if classify_intersection(a, a, lam_seed_hi, model).value is not IntersectionKind.Regular:
        raise NoTangencyFound(f"strip {a} is not regular at the seed lambda={lam_seed_hi}")
    witnesses = {}
    for which in ("d", "c"):
        parts, G = _tangency_system(model, a, which)
        hi = lam_seed_hi
        g_hi = G(hi)[1]
        if g_hi <= 0:
            raise NoTangencyFound(f"{which}: boundary already below at the seed")
        lo = hi * ratio
        while G(lo)[1] > 0:
            hi, lo = lo, lo * ratio
            if lo < lam_seed_hi * lam_floor_factor:
                raise NoTangencyFound(f"{which}: no sign change above {lo}")
        lam = brentq(lambda t: G(t)[1], lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=300)
        x = G(lam)[0]
        xw, lw = _newton_polish(parts, x, lam)
        witnesses[which] = (float(xw), float(lw))
    c, d = float(witnesses["c"][1]), float(witnesses["d"][1])
    if not 0 < c < d:
        raise OrderingViolated(f"expected 0 < c < d, got c={c}, d={d}")
    span = d - c
    probes = ((d + 0.25 * span, IntersectionKind.Regular), (0.5 * (c + d), IntersectionKind.Irregular),
              (c - 0.25 * min(span, c), IntersectionKind.Empty))
    seen = []
    for lam, expected in probes:
        got = classify_intersection(a, a, lam, model).value
        seen.append((lam, got.value))
        if got is not expected:
            raise OrderingViolated(f"probe lambda={lam}: expected {expected.value}, got {got.value}")
    return DeltaInterval(a=a, c=c, d=d, witness_c=witnesses["c"], witness_d=witnesses["d"], probes=tuple(seen))
