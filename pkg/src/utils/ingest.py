"""Load market-price CSV files onto a uniform UTC grid.

Short gaps are interpolated and long ones rejected. Duplicate timestamps
(DST fall-back) are averaged. Everything that changes the data is logged
and counted in the IngestReport.
"""
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from config import MAX_FILL
from src.analysis.core_series import TimeSeries, _as_utc
from src.analysis.errors import (
    InvalidConfigError,
    OrderingError,
    ParseError,
    RangeError,
    UnfillableGapError,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_FILL = MAX_FILL
_OFFSET_PATTERN = r"(?:Z|[+-]\d{2}:?\d{2})$"


@dataclass(frozen=True)
class IngestSchema:
    timestamp_column: str = "timestamp_utc"
    price_column: str = "price"
    timestamp_format: str = "iso"
    delimiter: str = ","
    decimal: str = "."
    timezone: str = "UTC"
    sample_interval: Optional[str] = None

    def __post_init__(self):
        if self.delimiter == self.decimal:
            raise InvalidConfigError("delimiter and decimal separator must differ")
        if self.timestamp_format not in ("iso", "epoch"):
            raise InvalidConfigError(f"timestamp_format must be 'iso' or 'epoch', got {self.timestamp_format!r}")
        if self.sample_interval is not None and pd.Timedelta(self.sample_interval) <= pd.Timedelta(0):
            raise InvalidConfigError("sample_interval must be positive")

    @classmethod
    def default(cls) -> "IngestSchema":
        """The re-export schema written by export_csv."""
        return cls()

    @classmethod
    def from_dict(cls, data: Mapping) -> "IngestSchema":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfigError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class GapPolicy:
    max_fill: int = DEFAULT_MAX_FILL
    method: str = "linear"

    def __post_init__(self):
        if int(self.max_fill) < 0:
            raise InvalidConfigError("max_fill must be non-negative")
        if self.method != "linear":
            raise InvalidConfigError(f"only linear gap filling is supported, got {self.method!r}")


@dataclass
class IngestReport:
    """What ingestion changed.

    dst_rows counts every row that took part in a repeated instant (fall-back
    hour, naive or offset-aware) or fell into a skipped local hour.
    """

    path: str
    rows_read: int = 0
    gaps: List[Dict] = field(default_factory=list)
    duplicates_resolved: int = 0
    dst_rows: int = 0
    rows_outside_window: int = 0
    length: int = 0
    start_time: str = ""
    end_time: str = ""
    sample_interval: str = ""

    @property
    def filled_samples(self) -> int:
        return sum(gap["missing"] for gap in self.gaps)

    def to_dict(self) -> dict:
        return asdict(self)


def _read_frame(path: str, schema: IngestSchema) -> pd.DataFrame:
    if not os.path.exists(path):
        raise ParseError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, sep=schema.delimiter, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"cannot parse {path}: {e}")
    missing = {schema.timestamp_column, schema.price_column} - set(frame.columns)
    if missing:
        raise ParseError(f"missing columns {sorted(missing)} in header", line=1)
    if len(frame) < 2:
        raise ParseError(f"{path} needs at least 2 data rows, found {len(frame)}")
    return frame


def _first_bad_line(mask: pd.Series) -> int:
    # header is line 1
    return int(np.flatnonzero(mask.to_numpy())[0]) + 2


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_prices(raw: pd.Series, schema: IngestSchema) -> np.ndarray:
    """Prices parsed with float() so export_csv's repr decimals round-trip exactly."""
    text = raw.str.strip()
    if schema.decimal != ".":
        text = text.str.replace(schema.decimal, ".", regex=False)
    prices = text.map(_to_float).to_numpy(dtype=float)
    bad = ~np.isfinite(prices)
    if bad.any():
        line = _first_bad_line(pd.Series(bad))
        raise ParseError(f"unparseable price {raw.iloc[line - 2]!r}", line=line)
    return prices


def _parse_timestamps(raw: pd.Series, schema: IngestSchema) -> Tuple[pd.Series, Optional[bool]]:
    """Parsed timestamps and whether they carry an offset (None for epoch input)."""
    text = raw.str.strip()
    if schema.timestamp_format == "epoch":
        seconds = pd.to_numeric(text, errors="coerce")
        if seconds.isna().any():
            line = _first_bad_line(seconds.isna())
            raise ParseError(f"unparseable epoch timestamp {raw.iloc[line - 2]!r}", line=line)
        return pd.to_datetime(seconds, unit="s", utc=True), None

    aware = text.str.contains(_OFFSET_PATTERN, regex=True)
    if aware.any() and not aware.all():
        line = _first_bad_line(~aware)
        raise ParseError("file mixes offset-aware and naive timestamps", line=line)

    if aware.all():
        stamps = pd.to_datetime(text, format="ISO8601", utc=True, errors="coerce")
    else:
        stamps = pd.to_datetime(text, format="ISO8601", errors="coerce")
    if stamps.isna().any():
        line = _first_bad_line(stamps.isna())
        raise ParseError(f"unparseable timestamp {raw.iloc[line - 2]!r}", line=line)
    return stamps, bool(aware.all())


def _localize(stamps: pd.Series, prices: np.ndarray, timezone: str, report: IngestReport):
    """Naive wall-clock times in `timezone` to UTC.

    Repeated wall-clock hours are averaged first; skipped ones (spring
    forward) become gaps on the UTC grid.
    """
    if timezone == "UTC":
        return stamps.dt.tz_localize("UTC"), prices

    frame = pd.DataFrame({"stamp": stamps, "price": prices})
    grouped = frame.groupby("stamp", sort=False)["price"]
    sizes = grouped.size()
    repeated = sizes[sizes > 1]

    for stamp, count in repeated.items():
        logger.warning("%s: %d rows share wall-clock time %s; averaged", report.path, count, stamp)
    report.duplicates_resolved += int((repeated - 1).sum())
    report.dst_rows += int(repeated.sum())
    merged = grouped.mean()

    try:
        ambiguous = np.ones(len(merged), dtype=bool)
        local = merged.index.tz_localize(timezone, ambiguous=ambiguous, nonexistent="NaT")
    except (KeyError, ValueError) as e:
        raise InvalidConfigError(f"cannot localize timestamps to {timezone!r}: {e}")
    valid = ~local.isna()
    if not valid.all():
        skipped = int((~valid).sum())
        logger.warning("%s: %d rows fall in a skipped local hour; dropped", report.path, skipped)
        report.dst_rows += skipped
    return pd.Series(local[valid].tz_convert("UTC")), merged.to_numpy()[valid]


def _infer_interval(index: pd.DatetimeIndex) -> pd.Timedelta:
    """Smallest positive step; gaps only ever widen a step."""
    steps = index[1:] - index[:-1]
    positive = steps[steps > pd.Timedelta(0)]
    if len(positive) == 0:
        raise OrderingError("cannot infer a sample interval: all timestamps coincide")
    return pd.Timedelta(positive.min())


def _window(merged: pd.Series, start, end, report: IngestReport) -> pd.Series:
    """Rows with start <= t < end; either bound may be open."""
    lower = _as_utc(start) if start is not None else merged.index[0]
    upper = _as_utc(end) if end is not None else merged.index[-1] + pd.Timedelta(1, "ns")
    if not lower < upper:
        raise RangeError(f"window start {lower} must be before end {upper}")
    inside = (merged.index >= lower) & (merged.index < upper)
    report.rows_outside_window = int((~inside).sum())
    if inside.sum() < 2:
        raise RangeError(f"window [{lower}, {upper}) holds fewer than 2 rows of {report.path}")
    logger.info("%s: kept %d rows in [%s, %s)", report.path, int(inside.sum()), lower, upper)
    return merged[inside]


def load_csv(
    path: str,
    schema: Optional[IngestSchema] = None,
    gap_policy: Optional[GapPolicy] = None,
    start=None,
    end=None,
) -> Tuple[TimeSeries, IngestReport]:
    """Read a price CSV into a gap-free TimeSeries on a uniform UTC grid.

    With `start`/`end` only rows in [start, end) are kept before gaps are
    checked, so an outage outside the window does not stop the load.
    """
    schema = schema or IngestSchema.default()
    gap_policy = gap_policy or GapPolicy()
    report = IngestReport(path=str(path))

    frame = _read_frame(path, schema)
    report.rows_read = len(frame)
    prices = _parse_prices(frame[schema.price_column], schema)
    stamps, aware = _parse_timestamps(frame[schema.timestamp_column], schema)
    if aware is False:
        stamps, prices = _localize(stamps, prices, schema.timezone, report)
    stamps = pd.Series(pd.DatetimeIndex(stamps).tz_convert("UTC"))

    steps = stamps.diff().iloc[1:]
    backwards = steps < pd.Timedelta(0)
    if backwards.any():
        position = int(np.flatnonzero(backwards.to_numpy())[0]) + 1
        raise OrderingError(f"timestamps go backwards at {stamps.iloc[position].isoformat()}")

    # Same UTC instant more than once; treated like a repeated DST hour
    frame = pd.DataFrame({"stamp": stamps.to_numpy(), "price": prices})
    counts = frame.groupby("stamp")["price"].size()
    for stamp, count in counts[counts > 1].items():
        logger.warning("%s: %d rows at %s; averaged", report.path, count, pd.Timestamp(stamp).isoformat())
        report.duplicates_resolved += int(count - 1)
        report.dst_rows += int(count)
    merged = frame.groupby("stamp")["price"].mean()
    merged.index = pd.DatetimeIndex(merged.index).tz_convert("UTC")
    if start is not None or end is not None:
        merged = _window(merged, start, end, report)
    if len(merged) < 2:
        raise ParseError(f"{path} has fewer than 2 distinct timestamps")

    index = pd.DatetimeIndex(merged.index)
    interval = pd.Timedelta(schema.sample_interval) if schema.sample_interval else _infer_interval(index)
    offsets = (index - index[0]) / interval
    positions = np.rint(offsets.to_numpy()).astype(np.int64)
    off_grid = np.abs(offsets.to_numpy() - positions) > 1e-9
    if off_grid.any():
        raise OrderingError(
            f"timestamp {index[int(np.flatnonzero(off_grid)[0])].isoformat()} is off the {interval} grid"
        )

    values = merged.to_numpy(dtype=float)
    for left, right, after in zip(positions[:-1], positions[1:], index[:-1]):
        missing = int(right - left - 1)
        if missing <= 0:
            continue
        if missing > gap_policy.max_fill:
            raise UnfillableGapError(
                f"gap of {missing} samples after {after.isoformat()} exceeds max_fill={gap_policy.max_fill}; "
                "restrict the load to a window (start/end) around it"
            )
        logger.warning("%s: interpolated %d missing samples after %s", report.path, missing, after.isoformat())
        report.gaps.append({"after": after.isoformat(), "missing": missing, "method": gap_policy.method})

    grid = np.arange(positions[-1] + 1)
    filled = np.interp(grid, positions, values)

    series = TimeSeries(
        values=filled,
        start_time=index[0],
        sample_interval=interval,
        label=os.path.splitext(os.path.basename(str(path)))[0],
    )
    report.length = len(series)
    report.start_time = series.start_time.isoformat()
    report.end_time = series.end_time.isoformat()
    report.sample_interval = str(interval)
    logger.info("loaded %s: %d rows -> %d samples", path, report.rows_read, report.length)
    return series, report


def export_csv(x: TimeSeries, path: str) -> str:
    """timestamp_utc,price with ISO-8601 UTC stamps and round-trip decimals, written atomically."""
    frame = pd.DataFrame(
        {
            "timestamp_utc": [stamp.isoformat() for stamp in x.timestamps()],
            "price": [repr(float(value)) for value in x.values],
        }
    )
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
            frame.to_csv(f, index=False)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    return path


def slice_series(x: TimeSeries, start, end) -> TimeSeries:
    """Samples with start <= t < end; bounds snap up to the next grid point."""
    start, end = _as_utc(start), _as_utc(end)
    if not start < end:
        raise RangeError(f"slice start {start} must be before end {end}")
    stop_limit = x.end_time + x.sample_interval
    if start < x.start_time or end > stop_limit:
        raise RangeError(f"slice [{start}, {end}) is outside the series span [{x.start_time}, {stop_limit})")

    first = int(np.ceil((start - x.start_time) / x.sample_interval))
    stop = int(np.ceil((end - x.start_time) / x.sample_interval))
    if stop - first < 2:
        raise RangeError(f"slice [{start}, {end}) holds fewer than 2 samples")
    return TimeSeries(
        values=x.values[first:stop],
        start_time=x.start_time + first * x.sample_interval,
        sample_interval=x.sample_interval,
        label=x.label,
    )
