"""End-to-end persistence analysis of configured price series.

Each series runs through increment autocovariance, per-band MFDFA Hurst
distributions and the Kramers-Moyal drift fit; the results are assembled
into one report and the plot-data tables.
"""
import asyncio
import logging
import math
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import MAX_WORKERS
from src.analysis.core_series import TimeSeries, autocovariance, make_increments
from src.analysis.errors import HurstError
from src.analysis.km_scale import (
    KMCoefficientField,
    build_ensemble,
    estimate_km,
    hurst_from_drift,
    multifractal_b,
    xi_from_km,
)
from src.analysis.mfdfa import (
    FluctuationSurface,
    MfdfaConfig,
    band_snippet_sizes,
    default_bands,
    generalized_hurst,
    hurst_distribution,
    mfdfa,
    multifractal_spectrum,
    profile,
)
from src.pipeline.config import AnalysisConfig, SeriesConfig
from src.utils.artifact_store import ArtifactStore
from src.utils.ingest import load_csv
from src.utils.synthgen import generate

logger = logging.getLogger(__name__)

DISCREPANCY_THRESHOLD = 0.15
MEMORYLESS_TOLERANCE = 0.02
XI_ORDERS = (1, 2, 3, 4)


def regime(H: float) -> str:
    if abs(H - 0.5) <= MEMORYLESS_TOLERANCE:
        return "memoryless"
    return "persistent" if H > 0.5 else "anti-persistent"


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(key): _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_clean(item) for item in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class HurstAnalyzer:
    def __init__(self, config: AnalysisConfig, max_workers: int = MAX_WORKERS):
        self.config = config
        self.max_workers = max(1, int(max_workers))
        self.store = ArtifactStore(config.output_dir)

    def load_series(self, source: SeriesConfig):
        """The TimeSeries for a source plus its ingest report (None for generators)."""
        if source.generator is not None:
            series = generate(source.generator)
            return series.with_values(series.values, label=source.label), None
        csv = source.csv
        series, report = load_csv(csv.path, csv.schema, csv.gap_policy, start=csv.start, end=csv.end)
        return series.with_values(series.values, label=source.label), report.to_dict()

    def _band_result(self, x: TimeSeries, band) -> Tuple[Dict[str, Any], FluctuationSurface]:
        settings = self.config.mfdfa
        mfdfa_config = MfdfaConfig(
            snippet_sizes=tuple(band_snippet_sizes(band)),
            q_orders=settings.q_orders,
            detrend_order=band.detrend_order,
            bidirectional=settings.bidirectional,
            small_scale_correction=settings.small_scale_correction,
        )
        surface = mfdfa(x, mfdfa_config)
        distribution = hurst_distribution(surface, band, settings.min_window_points)
        fit_range = (band.tau_min, band.tau_max)
        # f(alpha) needs a derivative in q
        width = multifractal_spectrum(surface, fit_range).width if surface.q_orders.size >= 2 else None
        result = {
            "band": band.name,
            "tau_min": band.tau_min,
            "tau_max": band.tau_max,
            "tau_min_minutes": band.tau_min * (x.sample_interval / pd.Timedelta(minutes=1)),
            "tau_max_minutes": band.tau_max * (x.sample_interval / pd.Timedelta(minutes=1)),
            "detrend_order": band.detrend_order,
            "H_mean": distribution.mean,
            "H_std": distribution.std,
            "box": {key: value for key, value in distribution.to_dict().items() if key != "band"},
            "regime": regime(distribution.mean),
            "h_q": {f"{q:g}": fit.slope for q, fit in generalized_hurst(surface, fit_range).items()},
            "spectrum_width": width,
            "H_KM": None,
            "discrepancy": None,
        }
        return result, surface

    def _km_result(self, x: TimeSeries) -> Tuple[Dict[str, Any], KMCoefficientField]:
        settings = self.config.km
        ensemble = build_ensemble(profile(x), settings.lags)
        field = estimate_km(
            ensemble,
            order=2,
            bandwidth=settings.bandwidth,
            grid_size=settings.grid_size,
            min_occupancy=settings.min_occupancy,
        )
        fit = hurst_from_drift(field)
        curvature = multifractal_b(field)
        xi = xi_from_km(fit.H, curvature.b, XI_ORDERS)
        result = {
            "success": True,
            "H": fit.H,
            "fit": fit.to_dict(),
            "b": curvature.b,
            "b_fit": curvature.to_dict(),
            "bandwidth": field.bandwidth,
            "xi": {str(n): value for n, value in zip(XI_ORDERS, xi)},
        }
        return result, field

    def analyze_series(self, source: SeriesConfig) -> Dict[str, Any]:
        """Run every stage on one series; failures become a {"success": False} record."""
        try:
            x, ingest_report = self.load_series(source)
            logger.info("analysing %s (%d samples, %s)", source.label, len(x), x.sample_interval)

            settings = self.config.autocovariance
            acov = autocovariance(
                make_increments(x, 1), settings.max_lag, normalize=settings.normalize, divisor=settings.divisor
            )
            bands = default_bands(x.sample_interval) if source.bands == "auto" else list(source.bands)

            band_results, surfaces = [], {}
            for band in bands:
                result, surface = self._band_result(x, band)
                band_results.append(result)
                surfaces[band.name] = surface

            # KM only resolves the smallest lags, so it is attached to the finest band
            try:
                km, field = self._km_result(x)
            except HurstError as e:
                logger.warning("KM fit failed for %s: %s", source.label, e)
                km, field = {"success": False, "error": str(e), "error_type": type(e).__name__}, None

            finest = min(band_results, key=lambda item: item["tau_min"])
            if km["success"]:
                finest["H_KM"] = km["H"]
                finest["discrepancy"] = abs(km["H"] - finest["H_mean"]) > DISCREPANCY_THRESHOLD

            return {
                "success": True,
                "label": source.label,
                "seed": source.seed,
                "n_samples": len(x),
                "start_time": x.start_time.isoformat(),
                "sample_interval": str(x.sample_interval),
                "ingest": ingest_report,
                "autocovariance": {
                    "lag_1": float(acov.values[1]),
                    "max_lag": int(acov.lags[-1]),
                    "divisor": acov.divisor,
                    "normalized": acov.normalized,
                    "mean_increment": acov.mean_used,
                },
                "bands": band_results,
                "km": km,
                "_artifacts": {"autocovariance": acov, "surfaces": surfaces, "field": field},
            }

        except HurstError as e:
            logger.error("series %s failed: %s", source.label, e)
            return {
                "success": False,
                "label": source.label,
                "error": str(e),
                "error_type": type(e).__name__,
            }

    def build_report(self, results: List[Dict[str, Any]], generated_at: Optional[str] = None) -> Dict[str, Any]:
        series = [
            {key: value for key, value in result.items() if key != "_artifacts"}
            for result in results
            if result["success"]
        ]
        failures = [
            {"label": result["label"], "error": result["error"], "error_type": result["error_type"]}
            for result in results
            if not result["success"]
        ]
        provenance = {
            "config_hash": self.config.config_hash,
            "versions": {"numpy": np.__version__, "pandas": pd.__version__},
            "seeds": {source.label: source.seed for source in self.config.series},
            "generated_at": generated_at or datetime.now(timezone.utc).isoformat(),
        }
        return _clean({"series": series, "failures": failures, "provenance": provenance})

    def emit_plotdata(self, results: List[Dict[str, Any]]) -> List[str]:
        """Write the columnar plot tables for every successful series."""
        paths = []
        for result in results:
            if not result["success"]:
                continue
            label, artifacts = result["label"], result["_artifacts"]

            acov = artifacts["autocovariance"]
            paths.append(
                self.store.write_table(
                    f"autocov_{label}.tsv",
                    pd.DataFrame({"lag": acov.lags, "lag_minutes": acov.lag_minutes, "value": acov.values}),
                )
            )

            boxes = pd.DataFrame(
                [
                    {
                        "band": band["band"],
                        "detrend_order": band["detrend_order"],
                        **{key: band["box"][key] for key in ("n_windows", "whisker_low", "q1", "median", "q3", "whisker_high", "mean", "std")},
                    }
                    for band in result["bands"]
                ]
            )
            paths.append(self.store.write_table(f"boxes_{label}.tsv", boxes))

            for band_name, surface in artifacts["surfaces"].items():
                table = {"tau": surface.snippet_sizes, "log_tau": np.log(surface.snippet_sizes)}
                for q, row in zip(surface.q_orders, surface.values):
                    table[f"log_F_q{q:g}"] = np.log(row)
                paths.append(self.store.write_table(f"surface_{label}_{band_name}.tsv", pd.DataFrame(table)))

            field = artifacts["field"]
            if field is not None:
                paths.append(
                    self.store.write_table(
                        f"km_{label}.tsv",
                        pd.DataFrame(list(field.to_rows())),
                        columns=["dx", "D1", "D2", "count", "reverse_drift"],
                    )
                )
        return paths

    async def run(self, generated_at: Optional[str] = None) -> Dict[str, Any]:
        """Analyse all series concurrently, then write the report and plot data."""
        semaphore = asyncio.Semaphore(self.max_workers)

        async def bounded(source: SeriesConfig):
            async with semaphore:
                return await asyncio.to_thread(self.analyze_series, source)

        results = await asyncio.gather(*(bounded(source) for source in self.config.series))
        report = self.build_report(list(results), generated_at)
        self.emit_plotdata(list(results))
        report_path = self.store.save_report(report)
        logger.info("report written to %s", report_path)
        return report

    def run_sync(self, generated_at: Optional[str] = None) -> Dict[str, Any]:
        """Synchronous version of run"""
        return asyncio.run(self.run(generated_at))


def run_analysis(config: AnalysisConfig, generated_at: Optional[str] = None) -> Dict[str, Any]:
    return HurstAnalyzer(config).run_sync(generated_at)


def exit_status(report: Dict[str, Any]) -> int:
    """0 when every series succeeded, 1 otherwise."""
    return 0 if not report["failures"] else 1
