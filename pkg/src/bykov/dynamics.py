"""Orbits of the first-return map, its fixed points and their bifurcations,
covering relations between strips, and two coarse global indicators
(an entropy proxy and Monte Carlo escape rates)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSolution, OutOfDomain
from .maps import return_jacobian, return_step
from .parallel import pmap
from .params import Model
from .sections import CylPoint, Section, lift_normalize
from .strips import (
    IntersectionKind,
    _roots,
    classify_intersection,
    horizontal_strip,
    HorseshoeStrip,
    min_regular_index,
    strip_index,
)

TWO_PI = 2.0 * math.pi
FLOOR = 1e-300
LOG_FLOOR = math.log(FLOOR)


class Termination(enum.Enum):
    MaxIters = "MaxIters"
    EscapedLower = "EscapedLower"
    OnStableManifold = "OnStableManifold"
    LeftNeighborhood = "LeftNeighborhood"


GAP = "gap"


@dataclass
class OrbitRecord:
    points: list[CylPoint]
    itinerary: list
    termination: Termination


def _label(x: float, ell: float, model: Model):
    n = strip_index(x, ell, model)
    return GAP if n is None else n


def iterate_orbit(p0: CylPoint, lam: float, model: Model, max_iters: int = 100) -> OrbitRecord:
    """Apply the first return until the orbit leaves the upper half or ``max_iters`` is hit.

    Points are stored with normalised lifts; each carries its strip label.
    """
    if p0.y <= 0:
        raise OutOfDomain("orbit must start in the upper half")
    if p0.y > 1:
        raise OutOfDomain("orbit must start inside the modeled neighborhood")
    x, ell = lift_normalize(p0.x), p0.ell
    points = [CylPoint(Section.InV, x, p0.y, ell)]
    labels = [_label(x, ell, model)]
    term = Termination.MaxIters
    for _ in range(max_iters):
        X, _, y_new, ell_new = (float(v) for v in return_step(x, ell, lam, model))
        x = lift_normalize(X + model.geom.delta_offset)
        if y_new > 1:
            term = Termination.LeftNeighborhood
            break
        if y_new < -1:
            term = Termination.EscapedLower
            break
        if abs(y_new) <= FLOOR or (y_new > 0 and ell_new < LOG_FLOOR):
            term = Termination.OnStableManifold
            break
        if y_new < 0:
            points.append(CylPoint(Section.InV, x, y_new))
            labels.append(GAP)
            term = Termination.EscapedLower
            break
        ell = ell_new
        points.append(CylPoint(Section.InV, x, math.exp(ell), ell))
        labels.append(_label(x, ell, model))
    return OrbitRecord(points=points, itinerary=labels, termination=term)


def itinerary_consistent(rec: OrbitRecord, lam: float, model: Model) -> bool:
    """No labelled transition ``n -> m`` may contradict an empty strip intersection."""
    seen: dict[tuple[int, int], bool] = {}
    for a, b in zip(rec.itinerary, rec.itinerary[1:]):
        if a == GAP or b == GAP:
            continue
        if (a, b) not in seen:
            seen[(a, b)] = classify_intersection(b, a, lam, model).value is not IntersectionKind.Empty
        if not seen[(a, b)]:
            return False
    return True


# ---------------------------------------------------------------- fixed points


class PointType(enum.Enum):
    Sink = "Sink"
    Saddle = "Saddle"
    Source = "Source"
    NonHyperbolic = "NonHyperbolic"


@dataclass(frozen=True)
class FixedPointInfo:
    m: int
    x: float
    y: float
    multipliers: tuple[complex, complex]
    type: PointType
    det: float
    residual: float


def branch_height(m: int, model: Model) -> float:
    """Height shared by all fixed points whose lift advances by ``2 pi m``."""
    return math.exp((model.geom.delta_offset - TWO_PI * m) / model.dc.K)


def classify_multipliers(mu, tol: float = 1e-9) -> PointType:
    mods = np.abs(np.asarray(mu))
    if np.any(np.abs(mods - 1.0) <= tol):
        return PointType.NonHyperbolic
    if np.all(mods < 1):
        return PointType.Sink
    if np.all(mods > 1):
        return PointType.Source
    return PointType.Saddle


def _fixed_residual(x: float, y: float, lam: float, model: Model) -> float:
    X, _, y_new, _ = (float(v) for v in return_step(x, math.log(y), lam, model))
    dx = lift_normalize(X + model.geom.delta_offset - x)
    return math.hypot(dx, y_new - y)


def _describe(m: int, x: float, y: float, lam: float, model: Model) -> FixedPointInfo:
    jac = return_jacobian(CylPoint(Section.InV, x, y), lam, model)
    mu = np.linalg.eigvals(jac.matrix)
    return FixedPointInfo(m=m, x=x, y=y, multipliers=(complex(mu[0]), complex(mu[1])),
                          type=classify_multipliers(mu), det=jac.det,
                          residual=_fixed_residual(x, y, lam, model))


def _branch_roots(lam: float, m: int, model: Model, n_grid: int = 4096) -> list[float]:
    """Solutions ``z = x - offset`` of ``h_v(z) = y_m**delta - y_m`` over one period."""
    fam = model.family
    y = branch_height(m, model)
    c = y ** model.dc.delta - y
    lo = -math.pi
    f = lambda z: fam.h_v(z, lam) - c  # noqa: E731
    df = lambda z: fam.dh_v(z, lam)  # noqa: E731
    roots = _roots(f, lo, lo + TWO_PI, n_grid)
    tol = 1e-12 * max(abs(c), lam)
    for zc in _roots(df, lo, lo + TWO_PI, n_grid):
        if abs(float(f(zc))) <= tol:
            roots = [r for r in roots if abs(r - zc) > 1e-5] + [zc]
    return sorted(set(roots))


def fixed_points(lam: float, m: int, model: Model) -> list[FixedPointInfo]:
    """Fixed points on branch ``m`` (the lift advances by exactly ``2 pi m`` per return)."""
    if m < 1:
        raise ValueError("branch index must be >= 1")
    y = branch_height(m, model)
    if y >= 1:
        raise NoSolution(f"branch {m} height {y} is outside the neighborhood")
    zs = _branch_roots(lam, m, model)
    if not zs:
        raise NoSolution(f"no fixed point on branch {m} at lambda={lam}")
    out = [_describe(m, lift_normalize(z + model.geom.delta_offset), y, lam, model) for z in zs]
    return sorted(out, key=lambda f: f.x)


def saddle_node_closed_form(m: int, model: Model) -> float:
    """Saddle-node parameter of branch ``m`` for families with unit amplitude shape."""
    y = branch_height(m, model)
    return (y - y ** model.dc.delta) / model.family.M_w(1.0)


# ---------------------------------------------------------------- continuation


@dataclass(frozen=True)
class BifurcationEvent:
    kind: str
    m: int
    lam: float
    x: float
    y: float
    det: float
    detail: dict = field(default_factory=dict)


class _Branch:
    """``F(z, lam) = h_v(z, lam) - c`` with ``z = x - offset`` along branch ``m``."""

    def __init__(self, m: int, model: Model):
        self.m = m
        self.model = model
        self.fam = model.family
        self.y = branch_height(m, model)
        self.c = self.y ** model.dc.delta - self.y
        self.dety = model.dc.delta * self.y ** (model.dc.delta - 1)

    def F(self, z, lam):
        return float(self.fam.h_v(z, lam)) - self.c

    def grad(self, z, lam):
        return float(self.fam.dh_v(z, lam)), float(self.fam.dh_v_dlam(z, lam))

    def hess(self, z, lam):
        return float(self.fam.d2h_v(z, lam)), float(self.fam.d2h_v_dxdlam(z, lam))

    def flip_fn(self, z, lam):
        """``det(J + I)`` at the fixed point; zero when a multiplier equals -1."""
        K = self.model.dc.K
        return 2.0 + 2.0 * self.dety + K * float(self.fam.dh_v(z, lam)) / self.y

    def solve_z(self, z, lam, iters: int = 50) -> float:
        for _ in range(iters):
            f = self.F(z, lam)
            fz = self.grad(z, lam)[0]
            if fz == 0:
                break
            step = f / fz
            z -= step
            if abs(step) < 1e-16 * max(1.0, abs(z)):
                break
        return z

    def correct(self, z, lam, tz, tl, z0, l0, ds, iters: int = 30):
        """Newton on ``F = 0`` plus the pseudo-arclength constraint."""
        for _ in range(iters):
            f = self.F(z, lam)
            g = (z - z0) * tz + (lam - l0) * tl - ds
            fz, fl = self.grad(z, lam)
            J = np.array([[fz, fl], [tz, tl]])
            try:
                dz, dl = np.linalg.solve(J, [-f, -g])
            except np.linalg.LinAlgError:
                return None
            z, lam = z + dz, lam + dl
            if abs(dz) + abs(dl) < 1e-15:
                break
        if abs(self.F(z, lam)) > 1e-12:
            return None
        return z, lam

    def fold_newton(self, z, lam, iters: int = 50):
        """Solve ``F = 0, F_z = 0`` for the saddle-node point."""
        for _ in range(iters):
            f = self.F(z, lam)
            fz, fl = self.grad(z, lam)
            fzz, fzl = self.hess(z, lam)
            J = np.array([[fz, fl], [fzz, fzl]])
            dz, dl = np.linalg.solve(J, [-f, -fz])
            z, lam = z + dz, lam + dl
            if abs(dz) + abs(dl) < 1e-16:
                break
        return z, lam


def _tangent(br: _Branch, z, lam, prev=None):
    fz, fl = br.grad(z, lam)
    t = np.array([-fl, fz])
    t /= np.linalg.norm(t)
    if prev is not None and np.dot(t, prev) < 0:
        t = -t
    return t


def _continue(br: _Branch, z, lam, direction: float, lam_lo: float, lam_hi: float,
              ds: float, max_steps: int):
    pts = [(z, lam)]
    t = _tangent(br, z, lam) * direction
    for _ in range(max_steps):
        step = ds
        while True:
            res = br.correct(z + step * t[0], lam + step * t[1], t[0], t[1], z, lam, step)
            if res is not None:
                break
            step *= 0.5
            if step < 1e-10:
                return pts
        z, lam = res
        t = _tangent(br, z, lam, t)
        pts.append((z, lam))
        if not lam_lo <= lam <= lam_hi or abs(z) > 4 * math.pi:
            break
    return pts


def _period2(lam: float, seed: np.ndarray, model: Model, iters: int = 60):
    """Newton on ``R^2(p) = p`` (lifts compared mod 2 pi); returns ``(p0, p1)`` or ``None``."""
    off = model.geom.delta_offset

    def step(p):
        X, _, y_new, ell_new = (float(v) for v in return_step(p[0], math.log(p[1]), lam, model))
        return np.array([X + off, y_new])

    def jac(p):
        return return_jacobian(CylPoint(Section.InV, float(p[0]), float(p[1])), lam, model).matrix

    p = seed.astype(float).copy()
    for _ in range(iters):
        if not 0 < p[1] < 1:
            return None
        p1 = step(p)
        if not 0 < p1[1] < 1:
            return None
        p2 = step(p1)
        G = np.array([lift_normalize(p2[0] - p[0]), p2[1] - p[1]])
        J = jac(p1) @ jac(p) - np.eye(2)
        try:
            d = np.linalg.solve(J, -G)
        except np.linalg.LinAlgError:
            return None
        p = p + d
        if np.linalg.norm(d) < 1e-15:
            break
    p1 = step(p)
    p2 = step(p1)
    res = math.hypot(lift_normalize(p2[0] - p[0]), p2[1] - p[1])
    if res > 1e-10:
        return None
    return np.array([lift_normalize(p[0]), p[1]]), np.array([lift_normalize(p1[0]), p1[1]])


def period_two_orbit(lam: float, fixed: FixedPointInfo, model: Model):
    """Search for a genuine period-2 orbit born at ``fixed``; returns a dict or ``None``."""
    jac = return_jacobian(CylPoint(Section.InV, fixed.x, fixed.y), lam, model).matrix
    w, V = np.linalg.eig(jac)
    k = int(np.argmin(np.abs(w + 1)))
    v = np.real(V[:, k])
    v /= np.linalg.norm(v)
    base = np.array([fixed.x, fixed.y])
    for eps in (1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5):
        for sgn in (1.0, -1.0):
            seed = base + sgn * eps * v * np.array([1.0, fixed.y])
            out = _period2(lam, seed, model)
            if out is None:
                continue
            p0, p1 = out
            if math.hypot(lift_normalize(p1[0] - p0[0]), p1[1] - p0[1]) < 1e-8:
                continue  # collapsed onto the fixed point
            J2 = (return_jacobian(CylPoint(Section.InV, float(p1[0]), float(p1[1])), lam, model).matrix
                  @ return_jacobian(CylPoint(Section.InV, float(p0[0]), float(p0[1])), lam, model).matrix)
            mu = np.linalg.eigvals(J2)
            return {"lambda": lam, "p0": (float(p0[0]), float(p0[1])), "p1": (float(p1[0]), float(p1[1])),
                    "multipliers": [complex(u) for u in mu], "stable": bool(np.all(np.abs(mu) < 1))}
    return None


def track_bifurcations(m: int, lam_lo: float, lam_hi: float, model: Model, ds: float = 0.01,
                       max_steps: int = 20000, probe_offsets=(1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2)) -> list[BifurcationEvent]:
    """Continue branch-``m`` fixed points over ``[lam_lo, lam_hi]``.

    Emits ``saddle_node`` events where two fixed points coalesce and ``flip``
    events where a multiplier crosses -1.  At a flip with contracting
    determinant the nascent period-2 orbit is searched on both sides.
    """
    if not 0 < lam_lo < lam_hi:
        raise ValueError("need 0 < lam_lo < lam_hi")
    br = _Branch(m, model)
    grid = np.geomspace(lam_hi, lam_lo, 400)
    starts = []
    for lam in grid:
        zs = _branch_roots(float(lam), m, model)
        if zs:
            starts = [(z, float(lam)) for z in zs]
            break
    events: list[BifurcationEvent] = []
    visited: list[np.ndarray] = []
    for z0, l0 in starts:
        if any(np.min(np.abs(path[:, 0] - z0) + np.abs(path[:, 1] - l0)) < 1e-6 for path in visited):
            continue
        for direction in (1.0, -1.0):
            pts = np.array(_continue(br, z0, l0, direction, lam_lo, lam_hi, ds, max_steps))
            visited.append(pts)
            events.extend(_scan_path(br, pts, lam_lo, lam_hi))
    # the same fold/flip may be seen from both directions of a path
    uniq: list[BifurcationEvent] = []
    for e in sorted(events, key=lambda e: (-e.lam, e.x)):
        if not any(u.kind == e.kind and abs(u.lam - e.lam) <= 1e-12 * e.lam and abs(u.x - e.x) < 1e-6 for u in uniq):
            uniq.append(e)
    out = []
    for e in uniq:
        if e.kind == "flip" and e.det < 1:
            z = e.x - model.geom.delta_offset
            found = []
            for off in probe_offsets:
                for lam_p in (e.lam * (1 + off), e.lam * (1 - off)):
                    if not lam_lo <= lam_p <= lam_hi:
                        continue
                    zp = br.solve_z(z, lam_p)
                    fp = _describe(m, lift_normalize(zp + model.geom.delta_offset), br.y, lam_p, model)
                    orb = period_two_orbit(lam_p, fp, model)
                    if orb is not None:
                        found.append(orb)
                if any(o["stable"] for o in found):
                    break
            detail = dict(e.detail)
            detail["period2"] = found
            e = BifurcationEvent(e.kind, e.m, e.lam, e.x, e.y, e.det, detail)
        out.append(e)
    return out


def _scan_path(br: _Branch, pts: np.ndarray, lam_lo: float, lam_hi: float) -> list[BifurcationEvent]:
    model = br.model
    off = model.geom.delta_offset
    events = []
    if len(pts) < 2:
        return events
    tl = np.diff(pts[:, 1])
    for i in range(1, len(tl)):
        if tl[i - 1] * tl[i] < 0:
            z, lam = br.fold_newton(pts[i, 0], pts[i, 1])
            if lam_lo <= lam <= lam_hi:
                events.append(BifurcationEvent("saddle_node", br.m, float(lam), float(lift_normalize(z + off)), br.y, br.dety))
    phi = np.array([br.flip_fn(z, lam) for z, lam in pts])
    for i in np.nonzero(np.sign(phi[:-1]) * np.sign(phi[1:]) < 0)[0]:
        (za, la), (zb, lb) = pts[i], pts[i + 1]
        if not (lam_lo <= la <= lam_hi and lam_lo <= lb <= lam_hi):
            continue

        def phi_at(lam, za=za, zb=zb, la=la, lb=lb):
            t = (lam - la) / (lb - la) if lb != la else 0.0
            z = br.solve_z(za + t * (zb - za), lam)
            return br.flip_fn(z, lam), z

        lo, hi = (la, lb) if la < lb else (lb, la)
        f_lo = phi_at(lo)[0]
        for _ in range(200):
            if hi - lo <= 1e-15 * hi:
                break
            mid = 0.5 * (lo + hi)
            f_mid = phi_at(mid)[0]
            if np.sign(f_mid) == np.sign(f_lo):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        lam = 0.5 * (lo + hi)
        z = phi_at(lam)[1]
        x = float(lift_normalize(z + off))
        info = _describe(br.m, x, br.y, lam, model)
        events.append(BifurcationEvent("flip", br.m, float(lam), x, br.y, br.dety,
                                       {"bracket_width": hi - lo,
                                        "multipliers": [complex(u) for u in info.multipliers]}))
    return events


# ---------------------------------------------------------------- covering


@dataclass(frozen=True)
class PairCover:
    source: int
    target: int
    kind: str
    components: int
    ok: bool
    reason: str = ""


@dataclass
class CoverReport:
    lam: float
    strips: tuple[int, ...]
    pairs: list[PairCover]

    @property
    def passed(self) -> bool:
        return all(p.ok for p in self.pairs)

    @property
    def failures(self) -> list[PairCover]:
        return [p for p in self.pairs if not p.ok]

    @property
    def alphabet(self) -> int:
        """Symbols of the certified shift (0 when any pair fails)."""
        if not self.passed:
            return 0
        per_source: dict[int, int] = {}
        for p in self.pairs:
            per_source[p.source] = per_source.get(p.source, 0) + p.components
        return min(per_source.values()) if per_source else 0


def _pair_cover(source: int, target: int, lam: float, model: Model) -> PairCover:
    cls = classify_intersection(target, source, lam, model)
    kind = cls.value.value
    if cls.value is not IntersectionKind.Regular:
        return PairCover(source, target, kind, cls.components, False, f"intersection is {kind}")
    if cls.components != 2:
        return PairCover(source, target, kind, cls.components, False, f"{cls.components} components")
    H = horizontal_strip(target, model)
    S = HorseshoeStrip(n=source, lam=lam, model=model)
    lo, hi = H.window
    roots = {}
    for bname, b in (("L", S.lower), ("U", S.upper)):
        for uname, u in (("1", H.u1), ("2", H.u2)):
            r = _roots(lambda x, b=b, u=u: b(x) - u(x), lo, hi)
            if len(r) != 2:
                return PairCover(source, target, kind, 2, False, f"{bname}-u{uname} has {len(r)} crossings")
            roots[bname + uname] = r
    # ascending on the left leg, descending on the right leg
    left = roots["U1"][0] < roots["U2"][0] and roots["L1"][0] < roots["L2"][0]
    right = roots["U2"][1] < roots["U1"][1] and roots["L2"][1] < roots["L1"][1]
    if not (left and right):
        return PairCover(source, target, kind, 2, False, "legs do not cross monotonically")
    comps = cls.intervals
    for (a, b), leg in zip(comps, (0, 1)):
        inside = all(a - 1e-12 <= roots[k][leg] <= b + 1e-12 for k in ("U1" if leg == 0 else "L1", "L2" if leg == 0 else "U2"))
        if not inside:
            return PairCover(source, target, kind, 2, False, "component does not span the strip")
    return PairCover(source, target, kind, 2, True)


def covering_check(strips, lam: float, model: Model) -> CoverReport:
    """Check every ordered pair ``(n, m)``: each piece of ``R(H_n) & H_m`` crosses ``H_m`` fully."""
    S = tuple(int(s) for s in strips)
    pairs = [_pair_cover(n, m, lam, model) for n in S for m in S]
    return CoverReport(lam=lam, strips=S, pairs=pairs)


def entropy_proxy(lam: float, cap: int, model: Model, start: int | None = None) -> float:
    """``ln(2k)`` for a greedy pairwise-covering subset of ``k`` strips from ``start..start+cap``.

    ``start`` defaults to the regular-block index at ``lam``.
    """
    if cap < 0:
        raise ValueError("cap must be >= 0")
    if start is None:
        start = min_regular_index(lam, model)
    chosen: list[int] = []
    memo: dict[tuple[int, int], bool] = {}

    def ok(a, b):
        if (a, b) not in memo:
            memo[(a, b)] = _pair_cover(a, b, lam, model).ok
        return memo[(a, b)]

    for s in range(start, start + cap + 1):
        if ok(s, s) and all(ok(s, t) and ok(t, s) for t in chosen):
            chosen.append(s)
    k = len(chosen)
    return math.log(2 * k) if k else 0.0


# ---------------------------------------------------------------- escape


def _sample_chunk(args):
    lam, T, count, seed_seq, model, cap = args
    rng = np.random.default_rng(seed_seq)
    strips = [horizontal_strip(n, model) for n in range(1, cap + 1)]
    areas = np.array([s.area() for s in strips])
    which = rng.choice(cap, size=count, p=areas / areas.sum())
    u = rng.random(count)
    v = rng.random(count)
    lo, hi = model.geom.window_v
    K = model.dc.K
    # density in x is proportional to exp(x / K) on every strip
    x = K * np.log(np.exp(lo / K) + u * (np.exp(hi / K) - np.exp(lo / K)))
    n = which + 1
    log_u1 = (x - model.geom.P_w_1 - model.geom.tau - TWO_PI * n) / K
    log_u2 = (x - model.geom.P_w_2 + model.geom.tau - TWO_PI * n) / K
    y = np.exp(log_u1) + v * (np.exp(log_u2) - np.exp(log_u1))
    ell = np.log(y)
    alive = np.ones(count, dtype=bool)
    counts = np.zeros(T + 1, dtype=np.int64)
    counts[0] = count
    off = model.geom.delta_offset
    for t in range(1, T + 1):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        X, _, y_new, ell_new = return_step(x[idx], ell[idx], lam, model)
        ok = (y_new > 0) & (y_new <= 1) & np.isfinite(ell_new) & (ell_new >= LOG_FLOOR)
        alive[idx[~ok]] = False
        x[idx] = lift_normalize(X + off)
        ell[idx] = np.where(ok, ell_new, ell[idx])
        counts[t] = int(alive.sum())
    return counts


def escape_statistics(lam: float, T: int, sample_count: int, seed: int, model: Model, cap: int = 8,
                      chunk: int = 1024, jobs: int = 1) -> np.ndarray:
    """Fraction of orbits started uniformly in ``H_1 .. H_cap`` still in the upper half after ``t`` returns.

    Each fixed-size chunk draws from its own stream spawned from ``seed``, so the
    result does not depend on ``jobs``.
    """
    if T < 0 or sample_count < 1:
        raise ValueError("need T >= 0 and sample_count >= 1")
    n_chunks = -(-sample_count // chunk)
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(chunk, sample_count - i * chunk) for i in range(n_chunks)]
    tasks = [(lam, T, sz, sq, model, cap) for sz, sq in zip(sizes, seqs)]
    counts = sum(pmap(_sample_chunk, tasks, jobs))
    return counts / float(sample_count)
