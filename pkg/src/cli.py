"""Command-line surface: analyze, generate, ingest-check."""
import argparse
import logging
import sys
from typing import List, Optional

from config import LOG_LEVEL
from src.analysis.errors import ConfigError, HurstError
from src.pipeline.config import load_config
from src.pipeline.core import HurstAnalyzer, exit_status
from src.utils.ingest import load_csv
from src.utils.synthgen import GENERATOR_KINDS, GeneratorSpec, generate, write_csv

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _format_h(value) -> str:
    return "   -  " if value is None else f"{value:6.3f}"


def print_report(report: dict) -> None:
    """Table layout: one row per series x band, mean +- std, KM beside the finest band."""
    print(f"{'series':<20} {'band':<8} {'H_MFDFA':>16} {'regime':<16} {'H_KM':>6}  flag")
    print("-" * 78)
    for series in report["series"]:
        for band in series["bands"]:
            flag = "!" if band["discrepancy"] else ""
            h_mfdfa = f"{band['H_mean']:.3f} ± {band['H_std']:.3f}"
            print(
                f"{series['label']:<20} {band['band']:<8} {h_mfdfa:>16} {band['regime']:<16} "
                f"{_format_h(band['H_KM'])}  {flag}"
            )
        km = series["km"]
        if km["success"]:
            xi = ", ".join(f"ξ({n})={value:.3f}" for n, value in km["xi"].items())
            print(f"{'':<20} b = {km['b']:.4f}; {xi}")
        else:
            print(f"{'':<20} KM: {km['error']}")
        print(f"{'':<20} lag-1 increment autocovariance {series['autocovariance']['lag_1']:+.3f}")
    for failure in report["failures"]:
        print(f"❌ {failure['label']}: {failure['error_type']}: {failure['error']}")


def cmd_analyze(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as e:
        print(f"❌ Invalid config: {e}")
        return EXIT_CONFIG
    if args.out:
        config = config.with_output_dir(args.out)

    print(f"📊 Analysing {len(config.series)} series -> {config.output_dir}")
    try:
        report = HurstAnalyzer(config).run_sync()
    except OSError as e:
        print(f"❌ Cannot write results: {e}")
        return EXIT_PARTIAL

    print_report(report)
    status = exit_status(report)
    if status == EXIT_OK:
        print(f"✅ All {len(report['series'])} series analysed")
    else:
        print(f"❌ {len(report['failures'])} of {len(config.series)} series failed")
    return status


def cmd_generate(args) -> int:
    try:
        spec = GeneratorSpec(
            kind=args.kind,
            length=args.length,
            seed=args.seed,
            H=args.hurst,
            sigma=args.sigma,
            level=args.level,
            period=args.period,
            contamination=args.contamination,
            sample_interval=args.interval,
            start=args.start,
        )
        series = generate(spec)
    except HurstError as e:
        print(f"❌ {e}")
        return EXIT_CONFIG
    path = write_csv(series, args.out)
    print(f"✅ Generated {spec.kind} series: {len(series)} samples -> {path}")
    return EXIT_OK


def cmd_ingest_check(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as e:
        print(f"❌ Invalid config: {e}")
        return EXIT_CONFIG

    failed = 0
    for source in config.series:
        if source.csv is None:
            print(f"  - {source.label}: generator source, nothing to load")
            continue
        try:
            csv = source.csv
            series, report = load_csv(csv.path, csv.schema, csv.gap_policy, start=csv.start, end=csv.end)
        except HurstError as e:
            failed += 1
            print(f"❌ {source.label}: {type(e).__name__}: {e}")
            continue
        print(
            f"✅ {source.label}: {report.rows_read} rows -> {report.length} samples every {report.sample_interval} "
            f"({report.start_time} .. {report.end_time}); {len(report.gaps)} gaps filled "
            f"({report.filled_samples} samples), {report.duplicates_resolved} duplicates averaged, "
            f"{report.dst_rows} DST rows, {report.rows_outside_window} rows outside the window"
        )
    return EXIT_PARTIAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hurst", description="Persistence analysis of electricity price series")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="run the configured analysis")
    analyze.add_argument("--config", required=True)
    analyze.add_argument("--out", help="output directory (overrides output_dir)")
    analyze.set_defaults(func=cmd_analyze)

    gen = sub.add_parser("generate", help="write a synthetic series in the ingestion CSV schema")
    gen.add_argument("--kind", required=True, choices=GENERATOR_KINDS)
    gen.add_argument("--hurst", type=float, default=0.5)
    gen.add_argument("--length", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--sigma", type=float, default=1.0)
    gen.add_argument("--level", type=float, default=0.0)
    gen.add_argument("--period", type=int, default=4)
    gen.add_argument("--contamination", type=float, default=0.0)
    gen.add_argument("--interval", default="1h")
    gen.add_argument("--start", default="2024-01-01T00:00:00+00:00")
    gen.set_defaults(func=cmd_generate)

    check = sub.add_parser("ingest-check", help="load every CSV source and print its ingest report")
    check.add_argument("--config", required=True)
    check.set_defaults(func=cmd_ingest_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
