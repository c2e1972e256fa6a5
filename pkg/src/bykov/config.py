"""Flat ``key=value`` configuration files.

Blank lines and ``#`` comments are ignored.  Recognised keys and defaults::

    c_v=2  e_v=1  c_w=2  e_w=1  alpha_v=1  alpha_w=1
    p_w_1=pi/2  p_w_2=-pi/2  tau=0.1  delta_offset=0
    family=cosine  lambda_star=0.9

``family`` is either ``cosine`` or ``table:<path>``, where the file holds two
numeric columns ``x, s(x)`` sampling one period of the shape function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BykovError, InvariantViolation, ParseError, UnknownKey
from .params import Model, SaddleParams, SectionGeometry

DEFAULTS: dict[str, object] = {
    "c_v": 2.0,
    "e_v": 1.0,
    "c_w": 2.0,
    "e_w": 1.0,
    "alpha_v": 1.0,
    "alpha_w": 1.0,
    "p_w_1": math.pi / 2,
    "p_w_2": -math.pi / 2,
    "tau": 0.1,
    "delta_offset": 0.0,
    "family": "cosine",
    "lambda_star": 0.9,
}


@dataclass(frozen=True)
class Config:
    values: dict
    model: Model


def _number(text: str, key: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{key}: expected a number, got {text!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"{key}: value must be finite", line)
    return v


def _load_table(location: str, base: Path | None, line: int):
    path = Path(location)
    if base is not None and not path.is_absolute():
        path = base / path
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseError(f"family table {path}: {exc}", line) from None
    if data.shape[1] != 2:
        raise ParseError(f"family table {path} must have two columns", line)
    return data[:, 0], data[:, 1]


def parse_config(source: str | Path | None = None, text: str | None = None) -> Config:
    """Parse a configuration file (``source``) or inline ``text`` into a validated model."""
    base = None
    if text is None:
        if source is None:
            text = ""
        else:
            p = Path(source)
            try:
                text = p.read_text()
            except OSError as exc:
                raise ParseError(f"cannot read {p}: {exc}") from None
            base = p.parent
    values = dict(DEFAULTS)
    seen: dict[str, int] = {}
    family_line = 0
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected key=value, got {body!r}", no)
        key, val = (s.strip() for s in body.split("=", 1))
        key = key.lower()
        if not key:
            raise ParseError("empty key", no)
        if key not in DEFAULTS:
            raise UnknownKey(f"line {no}: unknown key {key!r}")
        if key in seen:
            raise ParseError(f"duplicate key {key!r} (first on line {seen[key]})", no)
        seen[key] = no
        if key == "family":
            if val != "cosine" and not val.startswith("table:"):
                raise ParseError(f"family must be 'cosine' or 'table:<path>', got {val!r}", no)
            values[key] = val
            family_line = no
        else:
            values[key] = _number(val, key, no)
    shape = "cosine"
    if values["family"] != "cosine":
        shape = _load_table(str(values["family"])[len("table:"):], base, family_line)
    params = SaddleParams(C_v=values["c_v"], E_v=values["e_v"], C_w=values["c_w"], E_w=values["e_w"],
                          alpha_v=values["alpha_v"], alpha_w=values["alpha_w"])
    geom = SectionGeometry(P_w_1=values["p_w_1"], P_w_2=values["p_w_2"], tau=values["tau"],
                           delta_offset=values["delta_offset"])
    try:
        geom.validate()
        model = Model.build(params, geom, shape, values["lambda_star"])
    except (BykovError, ValueError) as exc:
        raise InvariantViolation(str(exc)) from exc
    return Config(values=values, model=model)
