"""Series types and the model-free increment statistics.

Increments, structure functions and the increment autocovariance are the
basic objects every estimator in this package works from.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.analysis.errors import (
    DegenerateSeriesError,
    InvalidArgumentError,
    InvalidLagError,
)
from src.analysis.fitting import ScalingFit, loglog_fit

logger = logging.getLogger(__name__)

EPS_NUM = 1e-9


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


def _as_utc(timestamp) -> pd.Timestamp:
    timestamp = pd.Timestamp(timestamp)
    if timestamp.tzinfo is None:
        return timestamp.tz_localize("UTC")
    return timestamp.tz_convert("UTC")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled scalar series, gap-free, anchored in UTC."""

    values: np.ndarray
    start_time: pd.Timestamp
    sample_interval: pd.Timedelta
    label: str = ""

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1 or values.size < 2:
            raise InvalidArgumentError("a time series needs at least 2 values")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError(
                "series contains missing or non-finite values; resolve gaps at ingestion"
            )
        interval = pd.Timedelta(self.sample_interval)
        if interval <= pd.Timedelta(0):
            raise InvalidArgumentError("sample_interval must be positive")

        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_time", _as_utc(self.start_time))
        object.__setattr__(self, "sample_interval", interval)

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_time(self) -> pd.Timestamp:
        return self.start_time + (len(self) - 1) * self.sample_interval

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_time, periods=len(self), freq=self.sample_interval)

    def with_values(self, values, label: Optional[str] = None) -> "TimeSeries":
        """Same grid, new values."""
        return TimeSeries(
            values=values,
            start_time=self.start_time,
            sample_interval=self.sample_interval,
            label=self.label if label is None else label,
        )


@dataclass(frozen=True, eq=False)
class IncrementSeries:
    values: np.ndarray
    lag: int
    parent_label: str
    sample_interval: pd.Timedelta

    def __post_init__(self):
        if int(self.lag) < 1:
            raise InvalidLagError(f"lag must be >= 1, got {self.lag}")
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "lag", int(self.lag))
        object.__setattr__(self, "sample_interval", pd.Timedelta(self.sample_interval))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class StructureFunctionTable:
    """S_n(tau) = <dx_tau^n>, one row per order, one column per lag."""

    lags: np.ndarray
    orders: np.ndarray
    moments: np.ndarray

    def moment(self, order: int) -> np.ndarray:
        rows = np.flatnonzero(self.orders == int(order))
        if rows.size == 0:
            raise InvalidArgumentError(f"order {order} not in table")
        return self.moments[rows[0]]


@dataclass(frozen=True, eq=False)
class AutocovarianceSequence:
    lags: np.ndarray
    values: np.ndarray
    normalized: bool
    mean_used: float
    sample_interval: pd.Timedelta
    divisor: str = "n"

    @property
    def lag_minutes(self) -> np.ndarray:
        return self.lags * (self.sample_interval / pd.Timedelta(minutes=1))


def _check_lag(lag, length: int) -> int:
    if isinstance(lag, bool) or int(lag) != lag:
        raise InvalidLagError(f"lag must be an integer, got {lag!r}")
    lag = int(lag)
    if lag < 1:
        raise InvalidLagError(f"lag must be >= 1, got {lag}; zero lag gives degenerate increments")
    if lag >= length:
        raise InvalidLagError(f"lag {lag} must be smaller than the series length {length}")
    return lag


def make_increments(x: TimeSeries, lag: int) -> IncrementSeries:
    """dx_lag(t) = x(t + lag) - x(t)."""
    lag = _check_lag(lag, len(x))
    values = x.values[lag:] - x.values[:-lag]
    return IncrementSeries(
        values=values,
        lag=lag,
        parent_label=x.label,
        sample_interval=x.sample_interval,
    )


def structure_function(
    x: TimeSeries, lags: Sequence[int], orders: Sequence[int]
) -> StructureFunctionTable:
    """Signed sample moments of the increments for every (order, lag) pair."""
    if len(lags) == 0 or len(orders) == 0:
        raise InvalidArgumentError("structure_function needs at least one lag and one order")
    lags = np.array([_check_lag(lag, len(x)) for lag in lags], dtype=int)
    for order in orders:
        if isinstance(order, bool) or int(order) != order or int(order) < 1:
            raise InvalidArgumentError(f"orders must be positive integers, got {order!r}")
    orders = np.array([int(order) for order in orders], dtype=int)

    moments = np.empty((orders.size, lags.size))
    for j, lag in enumerate(lags):
        increments = x.values[lag:] - x.values[:-lag]
        for i, order in enumerate(orders):
            moments[i, j] = np.mean(increments ** order)

    return StructureFunctionTable(
        lags=_frozen_array(lags, dtype=int),
        orders=_frozen_array(orders, dtype=int),
        moments=_frozen_array(moments),
    )


def fit_structure_exponents(
    table: StructureFunctionTable, fit_range: Tuple[float, float]
) -> List[ScalingFit]:
    """xi(n) and log C_n per order; odd orders are fitted on |S_n|."""
    fits = []
    for order, row in zip(table.orders, table.moments):
        fits.append(loglog_fit(table.lags, np.abs(row), q=int(order), fit_range=fit_range))
    return fits


def autocovariance(
    inc: IncrementSeries, max_lag: int, normalize: bool = True, divisor: str = "n"
) -> AutocovarianceSequence:
    """Autocovariance of the increments around their full-sample mean.

    Every lag divides by N (divisor="n"), which keeps |rho(k)| <= 1;
    divisor="n-k" averages each lag over its own N - k products instead.
    """
    n = len(inc)
    if isinstance(max_lag, bool) or int(max_lag) != max_lag or int(max_lag) < 1:
        raise InvalidArgumentError(f"max_lag must be a positive integer, got {max_lag!r}")
    max_lag = int(max_lag)
    if max_lag >= n / 2:
        raise InvalidArgumentError(f"max_lag {max_lag} must be below half the series length ({n})")
    if divisor not in ("n-k", "n"):
        raise InvalidArgumentError(f"divisor must be 'n-k' or 'n', got {divisor!r}")

    mu = float(np.mean(inc.values))
    centered = inc.values - mu
    values = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        total = np.dot(centered[: n - k], centered[k:])
        values[k] = total / (n - k if divisor == "n-k" else n)

    if normalize:
        if values[0] <= 0.0:
            raise DegenerateSeriesError(
                f"increments of {inc.parent_label or 'series'} are constant; cannot normalize"
            )
        values = values / values[0]
        values[0] = 1.0

    return AutocovarianceSequence(
        lags=_frozen_array(np.arange(max_lag + 1), dtype=int),
        values=_frozen_array(values),
        normalized=bool(normalize),
        mean_used=mu,
        sample_interval=inc.sample_interval,
        divisor=divisor,
    )
