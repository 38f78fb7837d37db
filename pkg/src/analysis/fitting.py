"""Log-log power-law fits shared by the DFA and structure-function routes."""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.analysis.errors import DegenerateSeriesError, InsufficientRangeError


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of log value against log scale over a closed range."""

    q: float
    fit_range: Tuple[float, float]
    slope: float
    intercept: float
    residual: float
    n_points: int

    def to_dict(self) -> dict:
        return {
            "q": float(self.q),
            "fit_range": [float(self.fit_range[0]), float(self.fit_range[1])],
            "slope": float(self.slope),
            "intercept": float(self.intercept),
            "residual": float(self.residual),
            "n_points": int(self.n_points),
        }


def loglog_fit(
    scales: Sequence[float],
    values: Sequence[float],
    q: float,
    fit_range: Tuple[float, float],
) -> ScalingFit:
    """Fit log(values) = intercept + slope * log(scales) inside fit_range."""
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = float(fit_range[0]), float(fit_range[1])
    if not lo < hi:
        raise InsufficientRangeError(f"fit range [{lo}, {hi}] is empty")

    inside = (scales >= lo) & (scales <= hi)
    if inside.sum() < 3:
        raise InsufficientRangeError(
            f"fit range [{lo}, {hi}] holds {int(inside.sum())} grid points, need at least 3"
        )
    selected = values[inside]
    if np.any(selected <= 0) or not np.all(np.isfinite(selected)):
        raise DegenerateSeriesError("power-law fit needs strictly positive, finite values")

    log_s = np.log(scales[inside])
    log_v = np.log(selected)
    slope, intercept = np.polyfit(log_s, log_v, 1)
    residual = np.sqrt(np.mean((log_v - (intercept + slope * log_s)) ** 2))
    if not np.isfinite(slope):
        raise DegenerateSeriesError("power-law fit produced a non-finite slope")

    return ScalingFit(
        q=float(q),
        fit_range=(float(scales[inside].min()), float(scales[inside].max())),
        slope=float(slope),
        intercept=float(intercept),
        residual=float(residual),
        n_points=int(inside.sum()),
    )
