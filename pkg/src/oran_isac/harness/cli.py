"""Command-line entry point: run, compare, validate."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .compare import (PLACEMENT_COLUMNS, SIGNAL_COLUMNS, compare_placements,
                      compare_signal_types)
from .config import ConfigError, parse_scenario
from .engine import ScenarioRuntimeError, run_scenario
from .report import FORMATS, ReportError, emit_reports, write_table

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _formats(text: str) -> list[str]:
    out = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in out if f not in FORMATS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"formats must be a subset of {','.join(FORMATS)}")
    return out


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oran-isac", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario and write reports")
    run.add_argument("scenario")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=_seed)
    run.add_argument("--format", type=_formats, default=list(FORMATS))
    cmp_ = sub.add_parser("compare", help="placement or signal-type comparison table")
    cmp_.add_argument("what", choices=("placements", "signals"))
    cmp_.add_argument("scenario")
    cmp_.add_argument("--out", required=True)
    cmp_.add_argument("--workers", type=int, default=1)
    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = parse_scenario(args.scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "validate":
            print(f"{args.scenario}: ok ({scenario.scenario_id})")
        elif args.command == "run":
            report = run_scenario(scenario, seed=args.seed)
            for path in emit_reports(report, args.out, args.format):
                print(path)
        else:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            if args.what == "placements":
                rows = compare_placements(scenario, workers=args.workers)
                path = write_table(rows, out / "placements.csv", PLACEMENT_COLUMNS)
            else:
                rows = compare_signal_types(scenario, workers=args.workers)
                path = write_table(rows, out / "signals.csv", SIGNAL_COLUMNS)
            print(path)
    except (ScenarioRuntimeError, ReportError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
