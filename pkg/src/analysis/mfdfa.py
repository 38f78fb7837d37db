"""Multifractal detrended fluctuation analysis.

The series is integrated into a profile, cut into snippets of size tau,
each snippet is detrended with a degree-m polynomial and the residual
variances are averaged under powers q/2. The growth of F_q(tau) with tau
gives the generalized Hurst exponents h(q); h(2) is the Hurst exponent.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import SNIPPET_COUNT
from src.analysis.core_series import TimeSeries, _frozen_array
from src.analysis.errors import (
    DegenerateVarianceError,
    InsufficientRangeError,
    InvalidArgumentError,
    InvalidConfigError,
)
from src.analysis.fitting import ScalingFit, loglog_fit

logger = logging.getLogger(__name__)

DEFAULT_Q_ORDERS = (-4.0, -2.0, 0.0, 2.0, 4.0)
DEFAULT_SNIPPET_COUNT = SNIPPET_COUNT
# K_m(tau) is taken as 1 from here on; the white-noise deviation is O(1/tau^2).
_CORRECTION_REFERENCE = 1024


@dataclass(frozen=True)
class ScaleBand:
    """Range of snippet sizes (in samples) fitted together, with its DFA order."""

    name: str
    tau_min: int
    tau_max: int
    detrend_order: int = 1

    def __post_init__(self):
        if int(self.tau_min) >= int(self.tau_max):
            raise InvalidConfigError(
                f"band {self.name!r}: tau_min {self.tau_min} must be below tau_max {self.tau_max}"
            )
        if int(self.detrend_order) < 1:
            raise InvalidConfigError(f"band {self.name!r}: detrend order must be >= 1")
        if int(self.tau_min) < int(self.detrend_order) + 2:
            raise InvalidConfigError(
                f"band {self.name!r}: tau_min {self.tau_min} too small for DFA{self.detrend_order}"
            )
        object.__setattr__(self, "tau_min", int(self.tau_min))
        object.__setattr__(self, "tau_max", int(self.tau_max))
        object.__setattr__(self, "detrend_order", int(self.detrend_order))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tau_min": self.tau_min,
            "tau_max": self.tau_max,
            "detrend_order": self.detrend_order,
        }


@dataclass(frozen=True)
class MfdfaConfig:
    snippet_sizes: Tuple[int, ...]
    q_orders: Tuple[float, ...] = DEFAULT_Q_ORDERS
    detrend_order: int = 1
    bidirectional: bool = True
    small_scale_correction: bool = True

    def __post_init__(self):
        sizes = tuple(int(size) for size in self.snippet_sizes)
        q_orders = tuple(float(q) for q in self.q_orders)
        if len(sizes) == 0:
            raise InvalidConfigError("at least one snippet size is required")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise InvalidConfigError("snippet sizes must be strictly increasing")
        if int(self.detrend_order) < 1:
            raise InvalidConfigError("detrend order must be >= 1")
        if sizes[0] < int(self.detrend_order) + 2:
            raise InvalidConfigError(
                f"smallest snippet {sizes[0]} must be >= {int(self.detrend_order) + 2} for DFA{self.detrend_order}"
            )
        if len(q_orders) == 0:
            raise InvalidConfigError("at least one q order is required")
        if len(set(q_orders)) != len(q_orders):
            raise InvalidConfigError(f"q orders must be distinct, got {q_orders}")
        object.__setattr__(self, "snippet_sizes", sizes)
        object.__setattr__(self, "q_orders", q_orders)
        object.__setattr__(self, "detrend_order", int(self.detrend_order))

    def validate_for(self, length: int) -> None:
        if self.snippet_sizes[-1] > length / 4:
            raise InvalidConfigError(
                f"largest snippet {self.snippet_sizes[-1]} exceeds a quarter of the series length {length}"
            )

    @classmethod
    def for_length(
        cls,
        length: int,
        detrend_order: int = 1,
        q_orders: Sequence[float] = DEFAULT_Q_ORDERS,
        count: int = DEFAULT_SNIPPET_COUNT,
        **kwargs,
    ) -> "MfdfaConfig":
        return cls(
            snippet_sizes=tuple(default_snippet_sizes(length, detrend_order, count)),
            q_orders=tuple(q_orders),
            detrend_order=detrend_order,
            **kwargs,
        )


@dataclass(frozen=True, eq=False)
class FluctuationSurface:
    """F_q(tau): one row per q order, one column per snippet size."""

    snippet_sizes: np.ndarray
    q_orders: np.ndarray
    values: np.ndarray
    detrend_order: int
    series_label: str = ""
    corrected: bool = False

    def row(self, q: float) -> np.ndarray:
        rows = np.flatnonzero(np.isclose(self.q_orders, float(q)))
        if rows.size == 0:
            raise InvalidArgumentError(f"q = {q} is not part of this surface")
        return self.values[rows[0]]


@dataclass(frozen=True)
class HurstDistribution:
    """Box-whisker summary of h(2) fitted over every sub-window of a band."""

    estimates: Tuple[float, ...]
    windows: Tuple[Tuple[int, int], ...]
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    mean: float
    std: float
    outliers: Tuple[float, ...]
    scale_band: ScaleBand

    def to_dict(self) -> dict:
        return {
            "band": self.scale_band.to_dict(),
            "n_windows": len(self.estimates),
            "mean": self.mean,
            "std": self.std,
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "outliers": list(self.outliers),
        }


@dataclass(frozen=True, eq=False)
class MultifractalSpectrum:
    q: np.ndarray
    h: np.ndarray
    mass_exponents: np.ndarray
    alpha: np.ndarray
    f_alpha: np.ndarray

    @property
    def width(self) -> float:
        return float(np.max(self.alpha) - np.min(self.alpha))


def default_snippet_sizes(length: int, detrend_order: int = 1, count: int = DEFAULT_SNIPPET_COUNT) -> List[int]:
    """Geometric grid from max(m + 2, 4) to length / 4."""
    lo = max(detrend_order + 2, 4)
    hi = length // 4
    if hi <= lo:
        raise InvalidConfigError(f"series of length {length} is too short for DFA{detrend_order}")
    grid = np.unique(np.round(np.geomspace(lo, hi, count)).astype(int))
    return [int(size) for size in grid]


def band_snippet_sizes(band: ScaleBand) -> List[int]:
    return list(range(band.tau_min, band.tau_max + 1))


def default_bands(sample_interval) -> List[ScaleBand]:
    """Hourly (< 12 h, DFA1) and daily (12 h - 48 h, DFA2) bands in samples."""
    interval = pd.Timedelta(sample_interval)
    per_hour = pd.Timedelta(hours=1) / interval
    twelve_hours = int(round(12 * per_hour))
    two_days = int(round(48 * per_hour))
    hourly_low = max(3, int(round(per_hour)))
    return [
        ScaleBand("hourly", hourly_low, twelve_hours, detrend_order=1),
        ScaleBand("daily", twelve_hours, two_days, detrend_order=2),
    ]


def profile(x: TimeSeries) -> TimeSeries:
    """Cumulative sum of the mean-subtracted series."""
    if len(x) < 4:
        raise InvalidArgumentError(f"profile needs at least 4 samples, got {len(x)}")
    return x.with_values(np.cumsum(x.values - np.mean(x.values)))


def segment_variances(
    p: Union[TimeSeries, np.ndarray], tau: int, m: int = 1, bidirectional: bool = True
) -> np.ndarray:
    """Mean squared residual of a degree-m polynomial fit in every snippet.

    When the length is not a multiple of tau and bidirectional is set the
    profile is cut again from its end, doubling the snippet count.
    """
    values = p.values if isinstance(p, TimeSeries) else np.asarray(p, dtype=float)
    tau, m = int(tau), int(m)
    n = values.size
    if tau < m + 2:
        raise InvalidConfigError(f"snippet size {tau} too small for a degree-{m} fit")
    if tau > n:
        raise InvalidConfigError(f"snippet size {tau} exceeds profile length {n}")

    n_snippets = n // tau
    snippets = values[: n_snippets * tau].reshape(n_snippets, tau)
    if bidirectional and n % tau:
        tail = values[n - n_snippets * tau :].reshape(n_snippets, tau)
        snippets = np.vstack([snippets, tail])

    design = np.vander(np.linspace(-1.0, 1.0, tau), m + 1)
    coefficients, *_ = np.linalg.lstsq(design, snippets.T, rcond=None)
    residuals = snippets.T - design @ coefficients
    return np.mean(residuals ** 2, axis=0)


def fluctuation_function(
    variances_by_tau: Mapping[int, Sequence[float]],
    q_orders: Sequence[float],
    detrend_order: int = 1,
    series_label: str = "",
) -> FluctuationSurface:
    """F_q(tau) = (mean v^(q/2))^(1/q); q = 0 takes the logarithmic average."""
    sizes = sorted(int(tau) for tau in variances_by_tau)
    q_orders = [float(q) for q in q_orders]
    surface = np.empty((len(q_orders), len(sizes)))

    for j, tau in enumerate(sizes):
        variances = np.asarray(variances_by_tau[tau], dtype=float)
        if variances.size == 0:
            raise InvalidArgumentError(f"no snippet variances for tau = {tau}")
        if np.any(variances < 0):
            raise InvalidArgumentError(f"negative snippet variance at tau = {tau}")
        has_zero = np.any(variances == 0)
        for i, q in enumerate(q_orders):
            if q <= 0 and has_zero:
                raise DegenerateVarianceError(
                    f"zero snippet variance at tau = {tau} cannot be averaged with q = {q}"
                )
            if q == 0:
                surface[i, j] = np.exp(0.5 * np.mean(np.log(variances)))
            else:
                surface[i, j] = np.mean(variances ** (q / 2.0)) ** (1.0 / q)
            if not surface[i, j] > 0 or not np.isfinite(surface[i, j]):
                raise DegenerateVarianceError(
                    f"fluctuation function is not positive at tau = {tau}, q = {q}"
                )

    return FluctuationSurface(
        snippet_sizes=_frozen_array(sizes, dtype=int),
        q_orders=_frozen_array(q_orders),
        values=_frozen_array(surface),
        detrend_order=int(detrend_order),
        series_label=series_label,
    )


@lru_cache(maxsize=None)
def _white_noise_variance(tau: int, m: int) -> float:
    """Expected DFAm snippet variance of an integrated unit white noise."""
    design = np.vander(np.linspace(-1.0, 1.0, tau), m + 1)
    walk = np.tril(np.ones((tau, tau)))
    coefficients, *_ = np.linalg.lstsq(design, walk, rcond=None)
    residual = walk - design @ coefficients
    return float(np.sum(residual ** 2)) / tau


def small_scale_factor(tau: int, m: int) -> float:
    """K_m(tau): white-noise F^2(tau)/tau relative to its large-tau value."""
    if tau >= _CORRECTION_REFERENCE:
        return 1.0
    reference = _white_noise_variance(_CORRECTION_REFERENCE, m) / _CORRECTION_REFERENCE
    return (_white_noise_variance(int(tau), int(m)) / tau) / reference


def mfdfa(x: TimeSeries, config: MfdfaConfig) -> FluctuationSurface:
    """Profile, segment and average: the full fluctuation surface of x."""
    config.validate_for(len(x))
    path = profile(x)
    variances = {
        tau: segment_variances(path, tau, config.detrend_order, config.bidirectional)
        for tau in config.snippet_sizes
    }
    surface = fluctuation_function(variances, config.q_orders, config.detrend_order, x.label)
    if not config.small_scale_correction:
        return surface

    factors = np.array([small_scale_factor(tau, config.detrend_order) for tau in surface.snippet_sizes])
    logger.debug("DFA%d small-scale factors: %s", config.detrend_order, np.round(factors, 4))
    return FluctuationSurface(
        snippet_sizes=surface.snippet_sizes,
        q_orders=surface.q_orders,
        values=_frozen_array(surface.values / np.sqrt(factors)),
        detrend_order=surface.detrend_order,
        series_label=surface.series_label,
        corrected=True,
    )


def fit_scaling(surface: FluctuationSurface, q: float, fit_range: Tuple[float, float]) -> ScalingFit:
    """log F_q against log tau; for q = 2 the slope is the Hurst exponent."""
    return loglog_fit(surface.snippet_sizes, surface.row(q), q=q, fit_range=fit_range)


def generalized_hurst(surface: FluctuationSurface, fit_range: Tuple[float, float]) -> Dict[float, ScalingFit]:
    return {float(q): fit_scaling(surface, q, fit_range) for q in surface.q_orders}


def multifractal_spectrum(surface: FluctuationSurface, fit_range: Tuple[float, float]) -> MultifractalSpectrum:
    """Mass exponents and the singularity spectrum f(alpha) from h(q)."""
    if surface.q_orders.size < 2:
        raise InvalidArgumentError("a singularity spectrum needs at least two q orders")
    order = np.argsort(surface.q_orders)
    q = surface.q_orders[order]
    h = np.array([fit_scaling(surface, value, fit_range).slope for value in q])
    mass_exponents = q * h - 1.0

    dh_dq = np.diff(h) / np.diff(q)
    alpha = h[:-1] + q[:-1] * dh_dq
    f_alpha = q[:-1] * (alpha - h[:-1]) + 1.0
    return MultifractalSpectrum(
        q=_frozen_array(q),
        h=_frozen_array(h),
        mass_exponents=_frozen_array(mass_exponents),
        alpha=_frozen_array(alpha),
        f_alpha=_frozen_array(f_alpha),
    )


def _box_statistics(estimates: np.ndarray) -> dict:
    q1, median, q3 = np.percentile(estimates, [25, 50, 75])
    spread = q3 - q1
    low_fence, high_fence = q1 - 1.5 * spread, q3 + 1.5 * spread
    inside = estimates[(estimates >= low_fence) & (estimates <= high_fence)]
    return {
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "whisker_low": float(min(q1, inside.min())) if inside.size else float(q1),
        "whisker_high": float(max(q3, inside.max())) if inside.size else float(q3),
        "outliers": tuple(float(v) for v in estimates[(estimates < low_fence) | (estimates > high_fence)]),
    }


def hurst_distribution(
    surface: FluctuationSurface,
    scale_band: Union[ScaleBand, Tuple[int, int]],
    min_window_points: int = 3,
) -> HurstDistribution:
    """h(2) over every contiguous sub-window of the band's grid points."""
    if not isinstance(scale_band, ScaleBand):
        lo, hi = scale_band
        scale_band = ScaleBand("custom", int(lo), int(hi), detrend_order=max(1, surface.detrend_order))
    if min_window_points < 3:
        raise InvalidArgumentError("sub-windows need at least 3 points")

    sizes = surface.snippet_sizes
    in_band = sizes[(sizes >= scale_band.tau_min) & (sizes <= scale_band.tau_max)]
    if in_band.size < min_window_points + 1:
        raise InsufficientRangeError(
            f"band {scale_band.name!r} holds {in_band.size} snippet sizes, need {min_window_points + 1}"
        )

    estimates, windows = [], []
    for start in range(in_band.size):
        for stop in range(start + min_window_points - 1, in_band.size):
            window = (int(in_band[start]), int(in_band[stop]))
            estimates.append(fit_scaling(surface, 2.0, window).slope)
            windows.append(window)

    estimates = np.asarray(estimates)
    box = _box_statistics(estimates)
    return HurstDistribution(
        estimates=tuple(float(v) for v in estimates),
        windows=tuple(windows),
        mean=float(np.mean(estimates)),
        std=float(np.std(estimates, ddof=1)) if estimates.size > 1 else 0.0,
        scale_band=scale_band,
        **box,
    )
