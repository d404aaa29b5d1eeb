"""Command line entry point: ``treeberg run`` and ``treeberg plotdata``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .reports import PreflightError, emit_plotdata, run_experiment

log = logging.getLogger("treeberg")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treeberg", description="Bergman projection experiments on radial trees.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the suites of a config file")
    run.add_argument("--config", required=True, help="JSON experiment config")
    run.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes over grid points")
    run.add_argument("--out", help="output directory (overrides the config's 'out'; default 'reports')")

    plot = sub.add_parser("plotdata", help="merge suite CSVs into one long table")
    plot.add_argument("--in", dest="inp", required=True, help="directory written by 'treeberg run'")
    plot.add_argument("--out", required=True, help="output CSV file")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "run":
        if args.parallel < 1:
            print("error: --parallel must be at least 1", file=sys.stderr)
            return 2
        try:
            config = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        out = args.out or config.out or "reports"
        try:
            status, summaries = run_experiment(config, out, args.parallel)
        except PreflightError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        for s in summaries:
            mark = "pass" if s.passed else "FAIL"
            head = "-" if s.max_ratio is None else f"{s.max_ratio:.6g}"
            print(f"{s.suite:10s} {mark}  max_ratio={head}  rows={s.rows}  {s.runtime:.1f}s")
        return status

    try:
        n = emit_plotdata(args.inp, args.out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {n} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
