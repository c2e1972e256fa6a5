"""Points, curves and helices on the four cylinder walls."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import OutOfDomain

TWO_PI = 2.0 * math.pi


class Section(enum.Enum):
    InV = "InV"
    OutV = "OutV"
    InW = "InW"
    OutW = "OutW"


class RegionFlag(enum.Enum):
    Wplus = "Wplus"
    Wminus = "Wminus"
    OnBoundary = "OnBoundary"


def lift_normalize(x):
    """Reduce an angular lift to its representative in ``(-pi, pi]``.

    Works on scalars and numpy arrays.
    """
    if np.ndim(x) == 0:
        r = math.remainder(float(x), TWO_PI)
        return math.pi if r <= -math.pi else r
    arr = np.asarray(x, dtype=float)
    r = np.remainder(arr + math.pi, TWO_PI) - math.pi
    # remainder lands in [-pi, pi); move the left end to +pi
    return np.where(r <= -math.pi, math.pi, r)


@dataclass(frozen=True)
class CylPoint:
    section: Section
    x: float
    y: float
    log_y: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise OutOfDomain("coordinates must be finite")
        if not -1.0 <= self.y <= 1.0:
            raise OutOfDomain(f"y={self.y} outside [-1, 1]")
        if self.log_y is not None:
            if self.y < 0:
                raise OutOfDomain("log_y given for a point with y < 0")
            if not math.isclose(math.exp(self.log_y), self.y, rel_tol=1e-12, abs_tol=1e-300):
                raise OutOfDomain("log_y inconsistent with y")

    @classmethod
    def from_log(cls, section: Section, x: float, log_y: float) -> "CylPoint":
        return cls(section, x, math.exp(log_y), log_y)

    @property
    def ell(self) -> float:
        """``ln y``, taken from the stored log when available."""
        if self.log_y is not None:
            return self.log_y
        if self.y <= 0:
            raise OutOfDomain("ln y undefined for y <= 0")
        return math.log(self.y)

    def normalized(self) -> "CylPoint":
        return CylPoint(self.section, lift_normalize(self.x), self.y, self.log_y)


def classify_region(p: CylPoint, lam: float, fam, atol: float = 1e-12) -> RegionFlag:
    """Locate a point of the outgoing wall of ``w`` relative to the graph of ``h_v``."""
    if not 0.0 < p.y < 1.0:
        raise OutOfDomain(f"y={p.y} outside (0, 1)")
    hv = float(fam.h_v(p.x, lam))
    if abs(p.y - hv) <= atol:
        return RegionFlag.OnBoundary
    return RegionFlag.Wminus if p.y < hv else RegionFlag.Wplus


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    """Vectorised proper-intersection test for segment batches."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


@dataclass
class SampledCurve:
    section: Section
    xs: np.ndarray
    ys: np.ndarray
    closed: bool = False
    log_ys: np.ndarray | None = None

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1:
            raise ValueError("xs and ys must be 1-D arrays of equal length")
        if self.log_ys is not None:
            self.log_ys = np.asarray(self.log_ys, dtype=float)

    def __len__(self) -> int:
        return self.xs.size

    @property
    def is_graph(self) -> bool:
        return bool(np.all(np.diff(self.xs) > 0))

    def self_intersections(self, chunk: int = 512) -> int:
        """Number of proper crossings between non-adjacent sample segments."""
        pts = np.column_stack([self.xs, self.ys])
        a, b = pts[:-1], pts[1:]
        n = a.shape[0]
        count = 0
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            i = np.arange(start, stop)[:, None]
            j = np.arange(n)[None, :]
            mask = j > i + 1
            hit = _segments_cross(a[start:stop, None, :], b[start:stop, None, :], a[None, :, :], b[None, :, :])
            count += int(np.count_nonzero(hit & mask))
        return count

    def to_csv(self, dest: str | Path | TextIO) -> None:
        rows = []
        logs = self.log_ys if self.log_ys is not None else np.where(self.ys > 0, np.log(np.where(self.ys > 0, self.ys, 1.0)), np.nan)
        for x, y, ly in zip(self.xs, self.ys, logs):
            rows.append((self.section.value, repr(float(x)), repr(float(y)), "" if not np.isfinite(ly) else repr(float(ly))))
        _write_csv(dest, ("section", "x_lift", "y", "log_y"), rows)


@dataclass
class Helix:
    section: Section
    xs: np.ndarray
    ys: np.ndarray
    folds: list[int] = field(default_factory=list)
    max_height: float = 0.0
    max_height_at: float = 0.0

    def fold_points(self) -> list[tuple[float, float]]:
        return [(float(self.xs[i]), float(self.ys[i])) for i in self.folds]

    def to_csv(self, dest: str | Path | TextIO) -> None:
        fold_set = set(self.folds)
        rows = [(repr(float(x)), repr(float(y)), int(i in fold_set)) for i, (x, y) in enumerate(zip(self.xs, self.ys))]
        _write_csv(dest, ("lift", "y", "is_fold"), rows)


def _write_csv(dest, header: Iterable[str], rows) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            _write_csv(fh, header, rows)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def csv_text(obj) -> str:
    buf = io.StringIO()
    obj.to_csv(buf)
    return buf.getvalue()
