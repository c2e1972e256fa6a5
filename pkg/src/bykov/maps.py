"""Local saddle passages, the global map, the wall map and the first return.

Heights are handled through ``ell = ln y`` wherever possible: the global map
is affine in ``(x, ell)`` so deep points never underflow before the wall map.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveHeight, NonPositiveRadius, OutOfDomain
from .params import DerivedConstants, Model
from .sections import CylPoint, Section


class Landing(enum.Enum):
    UpperHalf = "UpperHalf"
    LowerHalf = "LowerHalf"
    OnStableManifold = "OnStableManifold"


def _check_height(y: float) -> None:
    if not y > 0:
        raise NonPositiveHeight(f"height must be positive, got {y}")
    if y > 1:
        raise OutOfDomain(f"height {y} exceeds 1 (outside the modeled neighborhood)")


def phi_v(x: float, y: float, dc: DerivedConstants) -> tuple[float, float]:
    """Passage near ``v``: incoming height ``y`` to outgoing radius and angle."""
    _check_height(y)
    return y ** dc.delta_v, -math.log(y) / dc.E_v + x


def phi_w(r: float, phi: float, dc: DerivedConstants) -> tuple[float, float]:
    """Passage near ``w``: incoming radius and angle to outgoing lift and height."""
    if not r > 0:
        raise NonPositiveRadius(f"radius must be positive, got {r}")
    if r > 1:
        raise OutOfDomain(f"radius {r} exceeds 1")
    return -math.log(r) / dc.E_w + phi, r ** dc.delta_w


def eta(x: float, y: float, dc: DerivedConstants) -> tuple[float, float]:
    _check_height(y)
    X, ellY = eta_log(x, math.log(y), dc)
    return X, math.exp(ellY)


def eta_log(x, ell, dc: DerivedConstants):
    """The global map in log-height coordinates: ``(x, ell) -> (x - K ell, delta ell)``."""
    return x - dc.K * ell, dc.delta * ell


def eta_inv(X: float, Y: float, dc: DerivedConstants) -> tuple[float, float]:
    _check_height(Y)
    x, ell = eta_inv_log(X, math.log(Y), dc)
    return x, math.exp(ell)


def eta_inv_log(X, ellY, dc: DerivedConstants):
    ell = ellY / dc.delta
    return X + dc.K * ell, ell


def psi_wv(x: float, y: float, lam: float, model: Model) -> CylPoint:
    """Wall map from the outgoing wall of ``w`` to the incoming wall of ``v``."""
    fam = model.family
    return CylPoint(Section.InV, x + model.geom.delta_offset, y - float(fam.h_v(x, lam)))


def log_sub(ellY, hv):
    """``ln(exp(ellY) - hv)`` where positive, computed without overflow loss.

    Returns ``(value, ln value)``; the log is ``nan`` where the value is not positive.
    """
    ellY = np.asarray(ellY, dtype=float)
    hv = np.asarray(hv, dtype=float)
    Y = np.exp(ellY)
    val = Y - hv
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = hv < 0
        lg = np.where(neg, np.logaddexp(ellY, np.log(np.where(neg, -hv, 1.0))),
                      np.where(hv == 0, ellY, np.log(np.where(val > 0, val, 1.0))))
        lg = np.where((val > 0) | neg | (hv == 0), lg, np.nan)
    return val, lg


def return_step(x, ell, lam: float, model: Model):
    """One return in log coordinates, vectorised.

    Returns ``(X, ellY, y_new, ell_new)`` where ``X`` is the unnormalised lift
    on the outgoing wall of ``w`` and ``ell_new`` is ``nan`` when ``y_new <= 0``.
    """
    X, ellY = eta_log(np.asarray(x, dtype=float), np.asarray(ell, dtype=float), model.dc)
    hv = model.family.h_v(X, lam)
    y_new, ell_new = log_sub(ellY, hv)
    return X, ellY, y_new, ell_new


@dataclass(frozen=True)
class ReturnResult:
    point: CylPoint
    landed: Landing
    intermediate: CylPoint


def return_map(p: CylPoint, lam: float, model: Model, atol: float = 1e-300) -> ReturnResult:
    """First return to the incoming wall of ``v``.

    The returned point keeps the unnormalised lift ``x - K ln y + delta_offset``.
    """
    if p.y <= 0:
        raise NonPositiveHeight(f"return map needs y > 0, got {p.y}")
    if p.y > 1:
        raise OutOfDomain(f"height {p.y} exceeds 1")
    X, ellY, y_new, ell_new = return_step(p.x, p.ell, lam, model)
    X, ellY, y_new, ell_new = float(X), float(ellY), float(y_new), float(ell_new)
    if abs(y_new) <= atol:
        landed = Landing.OnStableManifold
    elif y_new < 0:
        landed = Landing.LowerHalf
    else:
        landed = Landing.UpperHalf
    if abs(y_new) > 1:
        raise OutOfDomain(f"return height {y_new} leaves the modeled neighborhood")
    log_y = ell_new if math.isfinite(ell_new) else None
    point = CylPoint(Section.InV, X + model.geom.delta_offset, y_new, log_y)
    inter = CylPoint(Section.OutW, X, math.exp(ellY), ellY)
    return ReturnResult(point=point, landed=landed, intermediate=inter)


@dataclass(frozen=True)
class JacobianResult:
    matrix: np.ndarray
    det: float
    det_matrix: float


def return_jacobian(p: CylPoint, lam: float, model: Model) -> JacobianResult:
    """Analytic derivative of the first return at ``p``."""
    if p.y <= 0:
        raise NonPositiveHeight(f"Jacobian needs y > 0, got {p.y}")
    K, d = model.dc.K, model.dc.delta
    y = p.y
    X = p.x - K * p.ell
    hp = float(model.family.dh_v(X, lam))
    dy = d * math.exp((d - 1.0) * p.ell)
    # chain rule: wall map after the global map
    d_eta = np.array([[1.0, -K / y], [0.0, dy]])
    d_wall = np.array([[1.0, 0.0], [-hp, 1.0]])
    J = np.array([[1.0, -K / y], [-hp, dy + K * hp / y]])
    return JacobianResult(matrix=J, det=dy, det_matrix=float(np.linalg.det(d_wall) * np.linalg.det(d_eta)))
