"""Log-log line fits shared by the quadrature, geometry and exponent modules."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InsufficientSample

MIN_FIT_POINTS = 8


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares line y = slope * x + intercept.

    ``window`` is the (min, max) of the abscissa actually used.  ``stderr``
    is the standard error of the slope (0 for exact or shortcut fits).
    """

    slope: float
    intercept: float
    r_squared: float
    window: tuple
    point_count: int
    stderr: float = 0.0
    low_confidence: bool = False
    note: str = ""

    @property
    def value(self) -> float:
        return self.slope

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_line(x, y, *, min_points: int = 2, r2_floor: float = 0.9, note: str = "") -> ExponentFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(x) < max(min_points, 2) or np.ptp(x) == 0:
        raise InsufficientSample(f"need at least {max(min_points, 2)} distinct abscissae for a fit, got {len(x)}")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    dof = len(x) - 2
    stderr = float(np.sqrt(ss_res / dof / sxx)) if dof > 0 else 0.0
    return ExponentFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        window=(float(x.min()), float(x.max())),
        point_count=int(len(x)),
        stderr=stderr,
        low_confidence=r2 < r2_floor,
        note=note,
    )


def trim_levels(levels, coarse: int = 2, fine: int = 2):
    """Drop the ``coarse`` first and ``fine`` last entries of an ordered level list."""
    levels = list(levels)
    if len(levels) <= coarse + fine:
        return levels[:0]
    return levels[coarse:len(levels) - fine]
