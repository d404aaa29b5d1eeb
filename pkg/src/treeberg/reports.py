"""Sweep orchestration and report files.

``run_experiment`` evaluates every requested suite on every grid point and
writes ``<suite>.csv`` plus ``summary.json``.  CSV output is a function of the
configuration alone: grid points are merged in grid order whatever the
worker count, floats are written with ``repr`` (shortest round-trip form) and
no timestamps or paths appear in CSV files.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig
from .suites import COLUMNS, LAYOUT, MAX_LABEL, GridPoint, SuiteResult, run_suite_point
from .tree import BranchingError, TreeSizeError, build_tree
from .weights import weight_from_config

log = logging.getLogger("treeberg")

SUMMARY_FILE = "summary.json"
PLOT_COLUMNS = ("suite", "spec", "alpha", "depth", "series", "metric", "value")


class PreflightError(ValueError):
    pass


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def grid_points(config: ExperimentConfig) -> list[GridPoint]:
    return [GridPoint(idx, spec.to_config(), alpha, depth, config.normalized, config.size_cap) for idx, spec, alpha, depth in config.grid()]


def preflight(config: ExperimentConfig) -> list[GridPoint]:
    """Build every tree once so size-cap and weight errors surface before any work."""
    points = grid_points(config)
    for pt in points:
        try:
            tree = build_tree(pt.branching, pt.depth, pt.size_cap)
        except (TreeSizeError, BranchingError) as exc:
            raise PreflightError(f"trees[{pt.index[0]}] depth {pt.depth}: {exc}") from None
        for i, cfg in enumerate(config.suites.get("weights", {}).get("weights", [])):
            try:
                weight_from_config(tree, cfg)
            except ValueError as exc:
                raise PreflightError(f"suites.weights.weights[{i}] on {pt.branching.label} depth {pt.depth}: {exc}") from None
    return points


def _task(args) -> SuiteResult:
    suite, point, params, tol = args
    return run_suite_point(suite, point, params, tol)


@dataclass
class SuiteSummary:
    suite: str
    passed: bool
    max_ratio: float | None
    metrics: dict
    tolerances: dict
    runtime: float
    rows: int
    failures: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "pass": self.passed,
            "max_ratio": self.max_ratio,
            "metrics": self.metrics,
            "tolerances": self.tolerances,
            "runtime": round(self.runtime, 3),
            "rows": self.rows,
            "failures": self.failures,
            "meta": self.meta,
        }


def _metrics(suite: str, rows: list[dict]) -> dict:
    """Max over the grid of every numeric column (per case for long-form suites)."""
    out: dict = {}
    lay = LAYOUT[suite]
    for r in rows:
        if lay["metric"] is not None:
            name = ":".join([*(str(r[c]) for c in lay["series"]), str(r[lay["metric"]])])
            items = [(name, r[lay["value"]])]
        else:
            items = [(c, r[c]) for c in COLUMNS[suite][3:]]
        for k, v in items:
            if isinstance(v, (int, float)) and not isinstance(v, bool) and not (isinstance(v, float) and math.isnan(v)):
                out[k] = max(out.get(k, v), v)
    return dict(sorted(out.items()))


def _headline(suite: str, rows: list[dict]) -> float | None:
    """The suite's ``max_ratio``: the largest error or empirical constant over the grid."""
    if suite == "basis":
        vals = [max(r["gram_max_offdiag"], r["gram_max_diag_dev"]) for r in rows]
    elif suite == "kernels":
        vals = [r["value"] for r in rows if r["kernel"] == "bergman" and r["case"] in ("hormander", "size")]
    elif suite == "cz":
        vals = [max(r["good_l1"], r["bad_l1"], r["good_l2"], r["good_bmo"]) for r in rows]
    elif suite == "sparse":
        vals = [r["max_ratio"] for r in rows]
    elif suite == "weights":
        vals = [r["ratio"] for r in rows]
    else:
        vals = [r["ratio"] for r in rows if r["candidate_id"] == MAX_LABEL]
    return max(vals) if vals else None


def _merge_meta(meta: dict, extra: dict):
    for k, v in extra.items():
        if isinstance(v, list):
            meta.setdefault(k, []).extend(v)
        elif isinstance(v, (int, float)):
            meta[k] = max(meta.get(k, v), v)
        else:
            meta[k] = v


def run_experiment(config: ExperimentConfig, out_dir, parallel: int = 1) -> tuple[int, list[SuiteSummary]]:
    """Run every suite; returns ``(exit_status, summaries)``.

    The exit status is 1 when a hard invariant failed, 0 otherwise.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = preflight(config)
    summaries = []
    pool = ProcessPoolExecutor(max_workers=parallel) if parallel > 1 else None
    try:
        for suite, params in config.suites.items():
            t0 = time.perf_counter()
            tasks = [(suite, pt, params, config.tolerances) for pt in points]
            log.info("suite %s: %d grid points", suite, len(tasks))
            results = list(pool.map(_task, tasks)) if pool else [_task(t) for t in tasks]
            rows, failures, meta = [], [], {}
            for r in results:
                rows.extend(r.rows)
                failures.extend(r.failures)
                _merge_meta(meta, r.meta)
            write_csv(out / f"{suite}.csv", COLUMNS[suite], rows)
            metrics = _metrics(suite, rows)
            summaries.append(
                SuiteSummary(
                    suite,
                    not failures,
                    _headline(suite, rows),
                    metrics,
                    dict(config.tolerances),
                    time.perf_counter() - t0,
                    len(rows),
                    failures,
                    meta,
                )
            )
            for f in failures:
                log.error("%s: %s", suite, f)
    finally:
        if pool:
            pool.shutdown()
    status = 0 if all(s.passed for s in summaries) else 1
    doc = {"exit_status": status, "config": config.to_dict(), "suites": [s.to_dict() for s in summaries]}
    (out / SUMMARY_FILE).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return status, summaries


# plot data -----------------------------------------------------------------------


def _long_rows(suite: str, rows: list[dict]):
    lay = LAYOUT[suite]
    for r in rows:
        series = "|".join(r[c] for c in lay["series"])
        base = {"suite": suite, "spec": r["spec"], "alpha": r["alpha"], "depth": r["depth"], "series": series}
        if lay["metric"] is not None:
            if r[lay["value"]] != "":
                yield {**base, "metric": r[lay["metric"]], "value": r[lay["value"]]}
            continue
        for c in COLUMNS[suite][3:]:
            if c in lay["series"] or r[c] == "":
                continue
            try:
                float(r[c])
            except ValueError:
                continue
            yield {**base, "metric": c, "value": r[c]}


def emit_plotdata(in_dir, out_file) -> int:
    """Collect every suite CSV in ``in_dir`` into one long table; returns the row count."""
    src = Path(in_dir)
    if not src.is_dir():
        raise FileNotFoundError(f"report directory {src} does not exist")
    files = [(s, src / f"{s}.csv") for s in COLUMNS if (src / f"{s}.csv").is_file()]
    if not files:
        raise FileNotFoundError(f"no suite reports found in {src}")
    rows = []
    for suite, path in files:
        with path.open(newline="") as fh:
            rows.extend(_long_rows(suite, list(csv.DictReader(fh))))
    write_csv(Path(out_file), PLOT_COLUMNS, rows)
    return len(rows)
