"""Shared fixtures: series factories and CSV writers."""
import numpy as np
import pandas as pd
import pytest

from src.analysis.core_series import TimeSeries
from src.utils.synthgen import GeneratorSpec, generate

START = pd.Timestamp("2024-01-01T00:00:00+00:00")


@pytest.fixture
def make_series():
    def _make(values, interval="1h", label="test", start=START):
        return TimeSeries(
            values=np.asarray(values, dtype=float),
            start_time=start,
            sample_interval=pd.Timedelta(interval),
            label=label,
        )

    return _make


@pytest.fixture
def synthetic():
    def _synthetic(kind, length, seed=0, **kwargs):
        return generate(GeneratorSpec(kind=kind, length=length, seed=seed, **kwargs))

    return _synthetic


@pytest.fixture
def write_prices(tmp_path):
    """Write raw CSV lines (header included) and return the path."""

    def _write(lines, name="prices.csv"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)

    return _write
