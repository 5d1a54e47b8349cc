"""Command-line experiment runner.

Exit codes: 0 success, 1 configuration error, 2 run-time invariant violation,
3 expired-event drop fraction above the configured threshold.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics
from .scenario import (
    ConfigError,
    InvariantViolation,
    load_config,
    run_scenario,
    sweep_aggregation,
    validate_config,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_DROPS = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulsefabric",
        description="Discrete-event simulator of inter-chip spike routing over a torus fabric",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write its report")
    run.add_argument("--config", required=True, help="scenario JSON file")
    run.add_argument("--seed", type=int, default=1, help="random seed (default 1)")
    run.add_argument("--duration", type=int, default=None, help="override run duration in ns")
    run.add_argument("--out", default="out", help="output directory (default ./out)")

    sweep = sub.add_parser("sweep", help="sweep a parameter across values, one run each")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", default="bucket_capacity", help="only 'bucket_capacity' is supported")
    sweep.add_argument("--values", required=True, help="comma-separated list, e.g. 1,2,4,8,16")
    sweep.add_argument("--seed", type=int, default=1)
    sweep.add_argument("--out", default="out")

    validate = sub.add_parser("validate", help="validate a scenario file without running it")
    validate.add_argument("--config", required=True)
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.duration is not None:
        data = config.to_dict()
        data["duration_ns"] = args.duration
        from .scenario import parse_config

        config = parse_config(data)
    report = run_scenario(config, args.seed, Path(args.out))
    latency = report["latency"]
    print(
        f"run ok: {latency.get('count', 0)} deliveries, "
        f"mean latency {latency.get('mean_ns', 0.0):.1f} ns, "
        f"expired-drop fraction {report['drop_fraction_expired']:.4f}"
    )
    print(f"report written to {Path(args.out) / 'report.json'}")
    threshold = config.drop_threshold
    if threshold is not None and report["drop_fraction_expired"] > threshold:
        print(f"drop threshold exceeded: {report['drop_fraction_expired']:.4f} > {threshold:.4f}",
              file=sys.stderr)
        return EXIT_DROPS
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    if args.param != "bucket_capacity":
        raise ConfigError([f"sweep --param: unsupported parameter {args.param!r}"])
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError([f"sweep --values: {exc}"]) from exc
    config = load_config(args.config)
    rows = sweep_aggregation(config, values, args.seed, Path(args.out))
    for row in rows:
        print(
            f"capacity {row['bucket_capacity']:>3}: overhead {row['header_overhead_ratio']:.4f}, "
            f"expired-tx {row['dropped_expired_tx']}, mean latency {row['mean_latency_ns']:.1f} ns"
        )
    print(f"sweep table written to {Path(args.out) / 'sweep.csv'}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    config = validate_config(args.config)
    print(f"{args.config}: ok ({len(config.nodes)} nodes, {config.duration_ns} ns)")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        for diagnostic in exc.diagnostics:
            print(f"config error: {diagnostic}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        if exc.report is not None and getattr(args, "out", None):
            metrics.write_report(exc.report, Path(args.out))
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
