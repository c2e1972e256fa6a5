"""Eigenvalue data, cross-section geometry and the symmetry-breaking family.

The model is fixed by four positive rates (contraction ``C`` and expansion
``E`` at each saddle-focus), the angular positions of the connection points on
the outgoing walls, a strip margin ``tau`` and a rigid rotation ``delta_offset``
of the wall map.  The symmetry-breaking family is always of the form

    h_v(x, lam) = lam * s(x),        h_w(x, lam) = -h_v(x - delta_offset, lam)

for a 2*pi-periodic shape ``s`` whose zeros sit at ``P_w_1`` (upward crossing)
and ``P_w_2`` (downward crossing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import (
    EigenvalueOrder,
    GeometryError,
    NonFocus,
    SignConvention,
    StabilityViolated,
    ZeroMismatch,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SaddleParams:
    C_v: float = 2.0
    E_v: float = 1.0
    C_w: float = 2.0
    E_w: float = 1.0
    alpha_v: float = 1.0
    alpha_w: float = 1.0


@dataclass(frozen=True)
class DerivedConstants:
    delta_v: float
    delta_w: float
    delta: float
    K: float
    E_v: float = 1.0
    E_w: float = 1.0


def validate_params(params: SaddleParams) -> DerivedConstants:
    """Check the standing hypotheses and derive the return-map constants.

    Raises
    ------
    EigenvalueOrder
        If a contraction rate does not exceed its expansion rate.
    StabilityViolated
        If ``C_v * C_w <= E_v * E_w``.
    NonFocus
        If either rotation rate is zero.
    """
    vals = [params.C_v, params.E_v, params.C_w, params.E_w, params.alpha_v, params.alpha_w]
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("saddle parameters must be finite")
    if params.E_v <= 0 or params.E_w <= 0:
        raise EigenvalueOrder("expansion rates must be positive: need E_v > 0 and E_w > 0")
    problems = []
    if params.C_v <= params.E_v:
        problems.append((EigenvalueOrder, f"need C_v > E_v, got C_v={params.C_v}, E_v={params.E_v}"))
    if params.C_v * params.C_w <= params.E_v * params.E_w:
        problems.append((StabilityViolated,
                         f"need C_v*C_w > E_v*E_w, got {params.C_v * params.C_w} <= {params.E_v * params.E_w}"))
    if params.C_w <= params.E_w:
        problems.append((EigenvalueOrder, f"need C_w > E_w, got C_w={params.C_w}, E_w={params.E_w}"))
    if problems:
        # the first violation picks the error class; the message lists them all
        raise problems[0][0]("; ".join(msg for _, msg in problems))
    if params.alpha_v == 0 or params.alpha_w == 0:
        raise NonFocus("rotation rates alpha_v, alpha_w must be nonzero")
    dv = params.C_v / params.E_v
    dw = params.C_w / params.E_w
    K = (params.C_v + params.E_w) / (params.E_v * params.E_w)
    return DerivedConstants(delta_v=dv, delta_w=dw, delta=dv * dw, K=K, E_v=params.E_v, E_w=params.E_w)


@dataclass(frozen=True)
class SectionGeometry:
    """Connection points on the outgoing walls and the strip margin.

    The incoming-wall zeros are not free: the wall map forces
    ``P_v_j = P_w_j + delta_offset``.
    """

    P_w_1: float = math.pi / 2
    P_w_2: float = -math.pi / 2
    tau: float = 0.1
    delta_offset: float = 0.0

    @property
    def P_v_1(self) -> float:
        return self.P_w_1 + self.delta_offset

    @property
    def P_v_2(self) -> float:
        return self.P_w_2 + self.delta_offset

    @property
    def window_v(self) -> tuple[float, float]:
        return (self.P_v_2 - self.tau, self.P_v_1 + self.tau)

    @property
    def window_w(self) -> tuple[float, float]:
        return (self.P_w_2 - self.tau, self.P_w_1 + self.tau)

    @property
    def arc_center(self) -> float:
        """Middle of the arc between the two outgoing-wall zeros."""
        return 0.5 * (self.P_w_1 + self.P_w_2)

    def validate(self) -> None:
        if not all(math.isfinite(v) for v in (self.P_w_1, self.P_w_2, self.tau, self.delta_offset)):
            raise GeometryError("geometry values must be finite")
        if self.tau <= 0:
            raise GeometryError("tau must be positive")
        if not self.P_w_2 < self.P_w_1 < self.P_w_2 + TWO_PI:
            raise GeometryError("need P_w_2 < P_w_1 with span below 2*pi")
        for name, (lo, hi) in (("w", self.window_w), ("v", self.window_v)):
            if not (-math.pi < lo < hi <= math.pi):
                raise GeometryError(
                    f"window for {name} must satisfy -pi < P_{name}_2 - tau < P_{name}_1 + tau <= pi;"
                    f" got ({lo}, {hi})"
                )


# ---------------------------------------------------------------- shapes


class CosineShape:
    """``s(x) = -cos x``: zeros at -pi/2 (downward) and pi/2 (upward)."""

    name = "cosine"
    zeros = (math.pi / 2, -math.pi / 2)

    def s(self, x):
        return -np.cos(x)

    def ds(self, x):
        return np.sin(x)

    def d2s(self, x):
        return np.cos(x)

    def from_zero(self, j: int, u):
        """``s(zeros[j-1] + u)`` without cancellation for small ``u``."""
        return np.sin(u) if j == 1 else -np.sin(u)

    def dfrom_zero(self, j: int, u):
        return np.cos(u) if j == 1 else -np.cos(u)


class TabulatedShape:
    """Periodic cubic spline through samples ``(x_i, s_i)`` on one period."""

    name = "tabulated"

    def __init__(self, xs: Sequence[float], ss: Sequence[float], zeros: tuple[float, float]):
        xs = np.asarray(xs, dtype=float)
        ss = np.asarray(ss, dtype=float)
        order = np.argsort(xs)
        xs, ss = xs[order], ss[order]
        if xs.size < 4:
            raise ValueError("need at least 4 samples for a tabulated shape")
        if xs[-1] - xs[0] >= TWO_PI:
            raise ValueError("samples must lie within one period")
        xs = np.append(xs, xs[0] + TWO_PI)
        ss = np.append(ss, ss[0])
        self._x0 = xs[0]
        self._spline = CubicSpline(xs, ss, bc_type="periodic")
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        self.zeros = zeros

    def _wrap(self, x):
        return self._x0 + np.mod(np.asarray(x, dtype=float) - self._x0, TWO_PI)

    def s(self, x):
        return self._spline(self._wrap(x))

    def ds(self, x):
        return self._d1(self._wrap(x))

    def d2s(self, x):
        return self._d2(self._wrap(x))

    def from_zero(self, j: int, u):
        return self.s(self.zeros[j - 1] + np.asarray(u))

    def dfrom_zero(self, j: int, u):
        return self.ds(self.zeros[j - 1] + np.asarray(u))


def _shape_extremum(shape, sign: float, lo: float, hi: float) -> float:
    """Location of the max of ``sign * s`` on ``[lo, hi]``."""
    grid = np.linspace(lo, hi, 4097)
    vals = sign * shape.s(grid)
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: -sign * float(shape.s(t)), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-13})
    return float(res.x)


# ---------------------------------------------------------------- family


@dataclass(frozen=True)
class UnfoldingFamily:
    """Evaluators for the two invariant-manifold graphs.

    ``h_v`` lives on the outgoing wall of ``w`` and is positive on the arc
    ``(P_w_1, P_w_2 + 2*pi)``; ``h_w`` lives on the incoming wall of ``v`` and
    is positive on ``(P_v_2, P_v_1)``.
    """

    shape: object
    geom: SectionGeometry
    lambda_star: float = 0.9
    _xv: float = field(default=0.0, repr=False)
    _sv_max: float = field(default=1.0, repr=False)
    _xw: float = field(default=0.0, repr=False)
    _sw_max: float = field(default=1.0, repr=False)

    @property
    def name(self) -> str:
        return self.shape.name

    # h_v and derivatives
    def h_v(self, x, lam):
        return lam * self.shape.s(x)

    def dh_v(self, x, lam):
        return lam * self.shape.ds(x)

    def d2h_v(self, x, lam):
        return lam * self.shape.d2s(x)

    def dh_v_dlam(self, x, lam):
        return self.shape.s(x)

    def d2h_v_dxdlam(self, x, lam):
        return self.shape.ds(x)

    # h_w
    def h_w(self, x, lam):
        return -lam * self.shape.s(np.asarray(x) - self.geom.delta_offset)

    def dh_w(self, x, lam):
        return -lam * self.shape.ds(np.asarray(x) - self.geom.delta_offset)

    def h_w_from_zero(self, j: int, u, lam):
        """``h_w(P_v_j + u)`` evaluated from the offset ``u`` to keep tiny values exact."""
        return -lam * self.shape.from_zero(j, u)

    def dh_w_from_zero(self, j: int, u, lam):
        return -lam * self.shape.dfrom_zero(j, u)

    # amplitudes
    def M_v(self, lam):
        return lam * self._sv_max

    def M_w(self, lam):
        return lam * self._sw_max

    def x_v(self, lam=None) -> float:
        return self._xv

    def x_w(self, lam=None) -> float:
        return self._xw + self.geom.delta_offset


def build_unfolding(geom: SectionGeometry, shape="cosine", lambda_star: float = 0.9,
                    zero_tol: float = 1e-9) -> UnfoldingFamily:
    """Build the family for ``shape``.

    ``shape`` is ``"cosine"`` or a pair ``(xs, ss)`` of samples of one period of
    ``s``.  Tabulated samples must vanish at ``P_w_1``/``P_w_2`` with an upward
    crossing at ``P_w_1`` and a downward crossing at ``P_w_2``.
    """
    geom.validate()
    if not lambda_star > 0:
        raise ValueError("lambda_star must be positive")
    if isinstance(shape, str):
        if shape != "cosine":
            raise ValueError(f"unknown family {shape!r}")
        shp = CosineShape()
        if abs(geom.P_w_1 - math.pi / 2) > zero_tol or abs(geom.P_w_2 + math.pi / 2) > zero_tol:
            raise ZeroMismatch("the cosine family vanishes at P_w_1 = pi/2 and P_w_2 = -pi/2")
    else:
        xs, ss = shape
        shp = TabulatedShape(xs, ss, (geom.P_w_1, geom.P_w_2))
        scale = float(np.max(np.abs(ss)))
        for j, p in enumerate((geom.P_w_1, geom.P_w_2), start=1):
            if abs(float(shp.s(p))) > zero_tol * max(scale, 1.0):
                raise ZeroMismatch(f"tabulated shape does not vanish at P_w_{j}={p}")
        if not float(shp.ds(geom.P_w_1)) > 0:
            raise SignConvention("need an upward crossing (positive slope) at P_w_1")
        if not float(shp.ds(geom.P_w_2)) < 0:
            raise SignConvention("need a downward crossing (negative slope) at P_w_2")
        # sign on each arc
        inner = np.linspace(geom.P_w_2, geom.P_w_1, 513)[1:-1]
        outer = np.linspace(geom.P_w_1, geom.P_w_2 + TWO_PI, 513)[1:-1]
        if np.any(shp.s(inner) >= 0) or np.any(shp.s(outer) <= 0):
            raise SignConvention("shape must be negative on (P_w_2, P_w_1) and positive elsewhere")
    if isinstance(shp, CosineShape):
        xv, xw = math.pi, 0.0
    else:
        xv = _shape_extremum(shp, 1.0, geom.P_w_1, geom.P_w_2 + TWO_PI)
        xw = _shape_extremum(shp, -1.0, geom.P_w_2, geom.P_w_1)
    return UnfoldingFamily(
        shape=shp,
        geom=geom,
        lambda_star=float(lambda_star),
        _xv=xv,
        _sv_max=float(shp.s(xv)),
        _xw=xw,
        _sw_max=float(-shp.s(xw)),
    )


@dataclass
class ClassCReport:
    checked: int
    violations: list[tuple[float, float, float]]

    @property
    def passed(self) -> bool:
        return not self.violations


def check_class_C(fam, dc: DerivedConstants, grid: Sequence[float]) -> ClassCReport:
    """Check ``M_w(lam)**delta < M_v(lam)`` on every grid point.

    ``fam`` only needs ``M_v`` and ``M_w`` callables (and optionally
    ``lambda_star``).  Violations are returned as ``(lam, lhs, rhs)`` triples.
    """
    bound = getattr(fam, "lambda_star", math.inf)
    violations = []
    for lam in grid:
        lam = float(lam)
        if not 0 < lam <= bound:
            raise ValueError(f"grid point {lam} outside (0, lambda_star]")
        lhs = float(fam.M_w(lam)) ** dc.delta
        rhs = float(fam.M_v(lam))
        if not lhs < rhs:
            violations.append((lam, lhs, rhs))
    return ClassCReport(checked=len(grid), violations=violations)


@dataclass(frozen=True)
class Model:
    """Everything the maps need, bundled: rates, derived constants, geometry, family."""

    params: SaddleParams
    dc: DerivedConstants
    geom: SectionGeometry
    family: UnfoldingFamily

    @property
    def K(self) -> float:
        return self.dc.K

    @property
    def delta(self) -> float:
        return self.dc.delta

    @classmethod
    def build(cls, params: SaddleParams | None = None, geom: SectionGeometry | None = None,
              shape="cosine", lambda_star: float = 0.9) -> "Model":
        params = params or SaddleParams()
        geom = geom or SectionGeometry()
        dc = validate_params(params)
        fam = build_unfolding(geom, shape, lambda_star)
        return cls(params=params, dc=dc, geom=geom, family=fam)

    @classmethod
    def default(cls) -> "Model":
        return cls.build()

