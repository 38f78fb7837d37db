"""Kramers-Moyal coefficients of the increments, taken in scale.

The increment at the smallest lag tau and at the next lag s are paired
sample by sample, and the conditional moments of the scale step are
estimated with a Nadaraya-Watson regression under an Epanechnikov kernel.
The scale step is estimated in both directions: forward (conditioned on
dx_tau) and reverse (conditioned on dx_s, the direction in which the KM
equation in scale runs). Their drift slopes combine into H.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import KM_MIN_OCCUPANCY
from src.analysis.core_series import IncrementSeries, TimeSeries, _frozen_array, make_increments
from src.analysis.errors import (
    InsufficientDataError,
    InvalidArgumentError,
    InvalidConfigError,
    OneSidedSupportError,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 101
DEFAULT_GRID_SPAN = 4.0
DEFAULT_MIN_OCCUPANCY = KM_MIN_OCCUPANCY
MIN_USABLE_BINS = 5


@dataclass(frozen=True, eq=False)
class IncrementEnsemble:
    lags: Tuple[int, ...]
    increments: Dict[int, IncrementSeries]
    sample_interval: pd.Timedelta
    parent_label: str = ""

    def pair(self, tau: int, s: int) -> Tuple[np.ndarray, np.ndarray]:
        """dx_tau(t) and dx_s(t) over the times where both exist."""
        small, large = self.increments[tau].values, self.increments[s].values
        n = large.size
        return small[:n], large


@dataclass(frozen=True, eq=False)
class KMCoefficientField:
    """Kernel estimates of D_1 and D_2 on a symmetric grid of increment values.

    The reverse drift is the conditional mean of dx_tau - dx_s given dx_s;
    fields without it (analytic ones) carry None.
    """

    grid: np.ndarray
    drift: np.ndarray
    diffusion: Optional[np.ndarray]
    counts: np.ndarray
    drift_stderr: np.ndarray
    bandwidth: float
    tau: int
    s: int
    reverse_drift: Optional[np.ndarray] = None
    reverse_counts: Optional[np.ndarray] = None
    min_occupancy: float = DEFAULT_MIN_OCCUPANCY

    @property
    def usable(self) -> np.ndarray:
        return self.counts >= self.min_occupancy

    @property
    def reverse_usable(self) -> Optional[np.ndarray]:
        if self.reverse_counts is None:
            return None
        return self.reverse_counts >= self.min_occupancy

    def to_rows(self):
        missing = np.full(self.grid.size, np.nan)
        diffusion = self.diffusion if self.diffusion is not None else missing
        reverse = self.reverse_drift if self.reverse_drift is not None else missing
        for i in range(self.grid.size):
            yield {
                "dx": float(self.grid[i]),
                "D1": float(self.drift[i]),
                "D2": float(diffusion[i]),
                "count": float(self.counts[i]),
                "reverse_drift": float(reverse[i]),
            }


@dataclass(frozen=True)
class KMHurstFit:
    H: float
    tau: int
    drift_slope: float
    reverse_slope: Optional[float]
    residual: float
    usable_bins: int
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "tau": self.tau,
            "drift_slope": self.drift_slope,
            "reverse_slope": self.reverse_slope,
            "residual": self.residual,
            "usable_bins": self.usable_bins,
            **self.diagnostics,
        }


@dataclass(frozen=True)
class MultifractalFit:
    b: float
    raw_b: float
    offset: float
    residual: float
    usable_bins: int

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "raw_b": self.raw_b,
            "offset": self.offset,
            "residual": self.residual,
            "usable_bins": self.usable_bins,
        }


def build_ensemble(x: TimeSeries, lags: Sequence[int]) -> IncrementEnsemble:
    lags = tuple(sorted({int(lag) for lag in lags}))
    if not lags or lags[0] != 1:
        raise InvalidConfigError("the ensemble must include the smallest lag of 1 sample")
    if lags[-1] >= len(x) / 4:
        raise InvalidConfigError(f"largest lag {lags[-1]} must be below a quarter of the length {len(x)}")
    return IncrementEnsemble(
        lags=lags,
        increments={lag: make_increments(x, lag) for lag in lags},
        sample_interval=x.sample_interval,
        parent_label=x.label,
    )


def silverman_bandwidth(sample: np.ndarray) -> float:
    return 1.06 * float(np.std(sample)) * sample.size ** (-1.0 / 5.0)


def km_grid(sample: np.ndarray, grid_size: int = DEFAULT_GRID_SIZE, span: float = DEFAULT_GRID_SPAN) -> np.ndarray:
    """Grid of grid_size points over +-span standard deviations, mirrored about 0."""
    half = np.linspace(0.0, span * float(np.std(sample)), grid_size // 2 + 1)
    return np.concatenate([-half[:0:-1], half])


def epanechnikov(u: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u ** 2), 0.0)


def _kernel_moments(
    condition: np.ndarray, response: np.ndarray, grid: np.ndarray, bandwidth: float, max_order: int
):
    """Nadaraya-Watson conditional moments of response given condition.

    Returns per grid point the kernel mass, the moments of order
    1..max_order and the standard error of the first moment.
    """
    order = np.argsort(condition, kind="stable")
    condition, response = condition[order], response[order]
    lower = np.searchsorted(condition, grid - bandwidth, side="left")
    upper = np.searchsorted(condition, grid + bandwidth, side="right")

    mass = np.zeros(grid.size)
    moments = np.full((max_order, grid.size), np.nan)
    stderr = np.full(grid.size, np.nan)
    for i, point in enumerate(grid):
        window = slice(lower[i], upper[i])
        weights = epanechnikov((condition[window] - point) / bandwidth)
        total = weights.sum()
        mass[i] = total
        if total <= 0:
            continue
        values = response[window]
        for m in range(1, max_order + 1):
            moments[m - 1, i] = np.dot(weights, values ** m) / total
        stderr[i] = math.sqrt(np.dot(weights ** 2, (values - moments[0, i]) ** 2)) / total
    return mass, moments, stderr


def estimate_km(
    ens: IncrementEnsemble,
    order: int = 2,
    bandwidth: Union[float, str] = "auto",
    grid_size: int = DEFAULT_GRID_SIZE,
    min_occupancy: float = DEFAULT_MIN_OCCUPANCY,
) -> KMCoefficientField:
    """D_m(dx, tau) for m <= order between the two smallest lags.

    D_2 is the conditional variance of the scale step over 2 (s - tau); it
    matches the raw second moment in the s -> tau limit and is free of the
    squared-drift term a finite step adds.
    """
    if order not in (1, 2):
        raise InvalidConfigError(f"order must be 1 or 2, got {order}")
    if len(ens.lags) < 2 or ens.lags[0] != 1:
        raise InvalidConfigError("estimation needs lag 1 and at least one larger lag")
    if grid_size < 11 or grid_size % 2 == 0:
        raise InvalidConfigError(f"grid_size must be odd and >= 11, got {grid_size}")

    tau, s = ens.lags[0], ens.lags[1]
    small, large = ens.pair(tau, s)
    step = large - small

    if bandwidth == "auto":
        bandwidth = silverman_bandwidth(small)
    elif isinstance(bandwidth, str):
        raise InvalidConfigError(f"bandwidth must be positive or 'auto', got {bandwidth!r}")
    bandwidth = float(bandwidth)
    if not bandwidth > 0:
        raise InvalidConfigError(f"bandwidth must be positive, got {bandwidth}")

    grid = km_grid(small, grid_size)
    mass, moments, stderr = _kernel_moments(small, step, grid, bandwidth, order)

    # Reverse step, conditioned on dx_s; same relative smoothing on the wider distribution.
    spread = float(np.std(large)) / float(np.std(small)) if np.std(small) > 0 else 1.0
    reverse_mass, reverse_moments, _ = _kernel_moments(large, -step, grid, bandwidth * spread, 1)

    usable = mass >= min_occupancy
    if not usable.any():
        raise InsufficientDataError(
            f"no grid bin reaches {min_occupancy} kernel-weighted points (bandwidth {bandwidth:.4g})"
        )

    width = float(s - tau)
    drift = moments[0] / width
    diffusion = None
    if order == 2:
        diffusion = np.maximum(moments[1] - moments[0] ** 2, 0.0) / (2.0 * width)

    logger.debug(
        "KM field for %s: %d/%d usable bins, bandwidth %.4g",
        ens.parent_label,
        int(usable.sum()),
        grid.size,
        bandwidth,
    )
    return KMCoefficientField(
        grid=_frozen_array(grid),
        drift=_frozen_array(drift),
        diffusion=None if diffusion is None else _frozen_array(diffusion),
        counts=_frozen_array(mass),
        drift_stderr=_frozen_array(stderr / width),
        reverse_drift=_frozen_array(reverse_moments[0] / width),
        reverse_counts=_frozen_array(reverse_mass),
        bandwidth=bandwidth,
        tau=int(tau),
        s=int(s),
        min_occupancy=float(min_occupancy),
    )


def self_similar_slopes(H: float, tau: int = 1, s: int = 2) -> Tuple[float, float]:
    """Forward and reverse drift slopes of a self-similar Gaussian process.

    Both follow from the increment covariance
    C = (tau^2H + s^2H - (s - tau)^2H) / 2 and are per unit scale step.
    """
    if not 0.0 < H < 1.5:
        raise InvalidArgumentError(f"H must lie in (0, 1.5), got {H}")
    covariance = 0.5 * (tau ** (2 * H) + s ** (2 * H) - (s - tau) ** (2 * H))
    width = float(s - tau)
    return (covariance / tau ** (2 * H) - 1.0) / width, (covariance / s ** (2 * H) - 1.0) / width


def exact_field(
    grid: Sequence[float],
    drift_slope: float = 0.0,
    b: float = 0.0,
    diffusion_level: float = 0.0,
    tau: int = 1,
    s: int = 2,
    reverse_slope: Optional[float] = None,
    count: float = 1e6,
) -> KMCoefficientField:
    """Noise-free field: D_1 = drift_slope * dx, D_2 = b * dx^2 / tau + diffusion_level.

    Every bin carries `count` points. Pass reverse_slope (for instance from
    self_similar_slopes) to get a two-direction field.
    """
    grid = np.asarray(grid, dtype=float)
    counts = _frozen_array(np.full(grid.size, float(count)))
    reverse = None if reverse_slope is None else _frozen_array(reverse_slope * grid)
    return KMCoefficientField(
        grid=_frozen_array(grid),
        drift=_frozen_array(drift_slope * grid),
        diffusion=_frozen_array(b * grid ** 2 / tau + diffusion_level),
        counts=counts,
        drift_stderr=_frozen_array(np.zeros(grid.size)),
        bandwidth=float(np.diff(grid).mean()) if grid.size > 1 else 1.0,
        tau=int(tau),
        s=int(s),
        reverse_drift=reverse,
        reverse_counts=None if reverse is None else counts,
        min_occupancy=1.0,
    )


def _weighted_line(x: np.ndarray, y: np.ndarray, weights: np.ndarray) -> Tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1, w=np.sqrt(weights))
    residual = float(np.sqrt(np.average((y - (intercept + slope * x)) ** 2, weights=weights)))
    return float(slope), float(intercept), residual


def _drift_slope(grid, drift, counts, usable, direction: str) -> Tuple[float, float, float, int]:
    usable = usable & np.isfinite(drift)
    n_usable = int(usable.sum())
    if n_usable < MIN_USABLE_BINS:
        raise InsufficientDataError(f"{direction} drift has {n_usable} usable bins, need {MIN_USABLE_BINS}")
    support = grid[usable]
    if not (support.min() < 0 < support.max()):
        raise OneSidedSupportError(f"{direction} drift bins cover only one sign of dx")
    slope, intercept, residual = _weighted_line(support, drift[usable], counts[usable])
    return slope, intercept, residual, n_usable


def hurst_from_drift(field: KMCoefficientField) -> KMHurstFit:
    """H from the drift slopes.

    With both directions, beta = 1 + a_f (s - tau) and beta' = 1 + a_r (s - tau)
    and H = ln(beta / beta') / (2 ln(s / tau)). A field with the forward
    drift only is read as D_1 = -H dx / tau, so H = -slope * tau.
    """
    forward, intercept, residual, n_usable = _drift_slope(
        field.grid, field.drift, field.counts, field.usable, "forward"
    )
    diagnostics = {"drift_intercept": intercept}
    if field.reverse_drift is None:
        return KMHurstFit(
            H=float(-forward * field.tau),
            tau=field.tau,
            drift_slope=forward,
            reverse_slope=None,
            residual=residual,
            usable_bins=n_usable,
            diagnostics=diagnostics,
        )

    width = float(field.s - field.tau)
    reverse, _, _, _ = _drift_slope(
        field.grid, field.reverse_drift, field.reverse_counts, field.reverse_usable, "reverse"
    )
    beta, beta_reverse = 1.0 + forward * width, 1.0 + reverse * width
    if beta <= 0 or beta_reverse <= 0:
        raise InsufficientDataError(
            f"scale-step slopes give non-positive transport ({beta:.4g}, {beta_reverse:.4g})"
        )
    H = math.log(beta / beta_reverse) / (2.0 * math.log(field.s / field.tau))
    diagnostics.update(beta=beta, beta_reverse=beta_reverse)
    return KMHurstFit(
        H=float(H),
        tau=field.tau,
        drift_slope=forward,
        reverse_slope=reverse,
        residual=residual,
        usable_bins=n_usable,
        diagnostics=diagnostics,
    )


def multifractal_b(field: KMCoefficientField) -> MultifractalFit:
    """b from D_2 = b dx^2 / tau + c, clamped at zero."""
    if field.diffusion is None:
        raise InvalidConfigError("field was estimated without D_2; use order=2")
    usable = field.usable & np.isfinite(field.diffusion)
    n_usable = int(usable.sum())
    if n_usable < MIN_USABLE_BINS:
        raise InsufficientDataError(f"D_2 has {n_usable} usable bins, need {MIN_USABLE_BINS}")

    regressor = field.grid[usable] ** 2 / field.tau
    target = field.diffusion[usable]
    raw_b, offset, residual = _weighted_line(regressor, target, field.counts[usable])
    if raw_b < 0:
        logger.debug("negative curvature %.3g clamped to 0", raw_b)
    return MultifractalFit(
        b=max(raw_b, 0.0),
        raw_b=raw_b,
        offset=offset,
        residual=residual,
        usable_bins=n_usable,
    )


def xi_from_km(H: float, b: float, orders: Sequence[float]) -> np.ndarray:
    """xi(n) = n H - b n (n - 1)."""
    if b < 0:
        raise InvalidArgumentError(f"b must be non-negative, got {b}")
    orders = np.asarray(orders, dtype=float)
    return orders * H - b * orders * (orders - 1.0)
