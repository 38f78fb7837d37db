"""Analysis documents: one JSON file describing series, bands and estimator settings."""
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Tuple, Union

import pandas as pd

from config import KM_MIN_OCCUPANCY, OUTPUT_DIR
from src.analysis.errors import ConfigError
from src.analysis.mfdfa import DEFAULT_Q_ORDERS, ScaleBand
from src.utils.ingest import GapPolicy, IngestSchema
from src.utils.synthgen import GeneratorSpec

REQUIRED_KEYS = ("series", "mfdfa", "km", "autocovariance", "output_dir")
_LABEL_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")


def _check_keys(section: str, data, allowed, required=()):
    if not isinstance(data, Mapping):
        raise ConfigError(f"'{section}' must be an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    missing = [key for key in required if key not in data]
    if missing:
        raise ConfigError(f"missing keys in '{section}': {missing}")


@dataclass(frozen=True)
class CsvSource:
    path: str
    schema: IngestSchema = field(default_factory=IngestSchema.default)
    gap_policy: GapPolicy = field(default_factory=GapPolicy)
    start: Optional[str] = None
    end: Optional[str] = None


@dataclass(frozen=True)
class SeriesConfig:
    label: str
    csv: Optional[CsvSource] = None
    generator: Optional[GeneratorSpec] = None
    bands: Union[str, Tuple[ScaleBand, ...]] = "auto"

    @property
    def seed(self) -> Optional[int]:
        return None if self.generator is None else int(self.generator.seed)


@dataclass(frozen=True)
class MfdfaSettings:
    q_orders: Tuple[float, ...] = DEFAULT_Q_ORDERS
    bidirectional: bool = True
    small_scale_correction: bool = True
    min_window_points: int = 3


@dataclass(frozen=True)
class KmSettings:
    lags: Tuple[int, ...] = (1, 2)
    bandwidth: Union[float, str] = "auto"
    grid_size: int = 101
    min_occupancy: float = KM_MIN_OCCUPANCY


@dataclass(frozen=True)
class AutocovarianceSettings:
    max_lag: int = 96
    divisor: str = "n"
    normalize: bool = True


@dataclass(frozen=True)
class AnalysisConfig:
    series: Tuple[SeriesConfig, ...]
    mfdfa: MfdfaSettings
    km: KmSettings
    autocovariance: AutocovarianceSettings
    output_dir: str
    raw: Mapping = field(default_factory=dict, compare=False, repr=False)

    @property
    def config_hash(self) -> str:
        """sha256 of the document without output_dir, which never changes results."""
        content = {key: value for key, value in self.raw.items() if key != "output_dir"}
        canonical = json.dumps(content, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_output_dir(self, output_dir: str) -> "AnalysisConfig":
        raw = dict(self.raw, output_dir=output_dir)
        return AnalysisConfig(self.series, self.mfdfa, self.km, self.autocovariance, output_dir, raw)


def _parse_bands(label: str, bands) -> Union[str, Tuple[ScaleBand, ...]]:
    if bands == "auto":
        return "auto"
    if not isinstance(bands, list) or not bands:
        raise ConfigError(f"series '{label}': bands must be 'auto' or a non-empty list")
    parsed = []
    for band in bands:
        _check_keys(f"{label}.bands", band, ("name", "tau_min", "tau_max", "detrend_order"),
                    required=("name", "tau_min", "tau_max"))
        parsed.append(ScaleBand(**band))
    names = [band.name for band in parsed]
    if len(set(names)) != len(names):
        raise ConfigError(f"series '{label}': band names must be unique")
    return tuple(parsed)


def _parse_bound(label: str, key: str, value) -> Optional[pd.Timestamp]:
    if value is None:
        return None
    try:
        stamp = pd.Timestamp(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"series '{label}': csv {key} {value!r} is not a timestamp") from e
    if stamp.tzinfo is None:
        raise ConfigError(f"series '{label}': csv {key} {value!r} needs a UTC offset")
    return stamp


def _parse_source(label: str, source, base_dir: str):
    _check_keys(f"{label}.source", source, ("csv", "generator"))
    if len(source) != 1:
        raise ConfigError(f"series '{label}': source needs exactly one of 'csv' or 'generator'")
    if "generator" in source:
        spec = dict(source["generator"])
        spec.setdefault("label", label)
        return None, GeneratorSpec.from_dict(spec)

    csv = source["csv"]
    _check_keys(f"{label}.source.csv", csv, ("path", "schema", "gap_policy", "start", "end"), required=("path",))
    path = csv["path"]
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    bounds = {key: _parse_bound(label, key, csv.get(key)) for key in ("start", "end")}
    if None not in bounds.values() and not bounds["start"] < bounds["end"]:
        raise ConfigError(f"series '{label}': csv start must be before end")
    return (
        CsvSource(
            path=path,
            schema=IngestSchema.from_dict(csv.get("schema", {})),
            gap_policy=GapPolicy(**csv.get("gap_policy", {})),
            start=csv.get("start"),
            end=csv.get("end"),
        ),
        None,
    )


def _parse_series(entries, base_dir: str) -> Tuple[SeriesConfig, ...]:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'series' must be a non-empty list")
    parsed, labels = [], set()
    for entry in entries:
        _check_keys("series[]", entry, ("label", "source", "bands"), required=("label", "source"))
        label = entry["label"]
        if not isinstance(label, str) or not _LABEL_PATTERN.match(label):
            raise ConfigError(f"series label {label!r} must be a non-empty [A-Za-z0-9_.-] string")
        if label in labels:
            raise ConfigError(f"duplicate series label {label!r}")
        labels.add(label)
        csv, generator = _parse_source(label, entry["source"], base_dir)
        parsed.append(
            SeriesConfig(label=label, csv=csv, generator=generator, bands=_parse_bands(label, entry.get("bands", "auto")))
        )
    return tuple(parsed)


def parse_config(data, base_dir: str = ".") -> AnalysisConfig:
    """Validate a decoded analysis document; every failure is a ConfigError."""
    _check_keys("config", data, REQUIRED_KEYS, required=REQUIRED_KEYS)
    try:
        series = _parse_series(data["series"], base_dir)

        _check_keys("mfdfa", data["mfdfa"], ("q_orders", "bidirectional", "small_scale_correction", "min_window_points"))
        mfdfa = MfdfaSettings(**{key: tuple(value) if key == "q_orders" else value for key, value in data["mfdfa"].items()})
        q_orders = [float(q) for q in mfdfa.q_orders]
        if 2.0 not in q_orders:
            raise ConfigError("mfdfa.q_orders must include q = 2")
        if len(set(q_orders)) != len(q_orders):
            raise ConfigError("mfdfa.q_orders must not repeat an order")

        _check_keys("km", data["km"], ("lags", "bandwidth", "grid_size", "min_occupancy"))
        km = KmSettings(**{key: tuple(value) if key == "lags" else value for key, value in data["km"].items()})
        if 1 not in km.lags or len(km.lags) < 2:
            raise ConfigError("km.lags must contain 1 and at least one larger lag")
        if km.bandwidth != "auto" and not (isinstance(km.bandwidth, (int, float)) and km.bandwidth > 0):
            raise ConfigError("km.bandwidth must be 'auto' or a positive number")

        _check_keys("autocovariance", data["autocovariance"], ("max_lag", "divisor", "normalize"))
        autocov = AutocovarianceSettings(**data["autocovariance"])
        if int(autocov.max_lag) < 1 or autocov.divisor not in ("n-k", "n"):
            raise ConfigError("autocovariance needs max_lag >= 1 and divisor 'n-k' or 'n'")

        output_dir = data["output_dir"] or OUTPUT_DIR
        if not isinstance(output_dir, str):
            raise ConfigError("'output_dir' must be a string")
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e

    return AnalysisConfig(
        series=series, mfdfa=mfdfa, km=km, autocovariance=autocov, output_dir=output_dir, raw=data
    )


def load_config(path: str) -> AnalysisConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)))


def default_config(series: List[dict], output_dir: str = OUTPUT_DIR) -> AnalysisConfig:
    """Config with default estimator settings around the given series entries."""
    return parse_config(
        {
            "series": series,
            "mfdfa": {},
            "km": {},
            "autocovariance": {},
            "output_dir": output_dir,
        }
    )
