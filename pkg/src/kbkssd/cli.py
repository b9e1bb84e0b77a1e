"""Command-line entry point.

Data goes to stdout as JSON or CSV; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence, TextIO

from kbkssd import evalfit, groundtruth, sensitivity
from kbkssd.core import (ConfigError, DetectorConfig, SeriesError, default_config,
                         discover_series, import_forked_json, load_config, load_dataset,
                         load_series)
from kbkssd.kssd import MonitorState
from kbkssd.pipeline import DetectionFailure, detect, detect_batch, outcomes_csv, read_outcomes


class CliError(Exception):
    pass


def _config(args: argparse.Namespace) -> DetectorConfig:
    path = getattr(args, "config", None) or os.environ.get("SSD_CONFIG")
    return load_config(path) if path else default_config()


def _dump(obj: Any, out: TextIO) -> None:
    out.write(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _write(text: str, path: str | None, out: TextIO) -> None:
    if path:
        Path(path).write_text(text, newline="")
    else:
        out.write(text)


def cmd_detect(args: argparse.Namespace, out: TextIO) -> None:
    cfg = _config(args)
    if args.fork is not None:
        series = import_forked_json(args.file, args.fork)
    else:
        series = load_series(args.file, args.format)
    _dump(detect(series, cfg).to_dict(with_windows=args.windows), out)


def cmd_monitor(args: argparse.Namespace, out: TextIO) -> None:
    state = MonitorState(_config(args))
    for lineno, line in enumerate(sys.stdin, start=1):
        token = line.strip()
        if not token:
            continue
        try:
            value = float(token)
        except ValueError:
            raise CliError(f"stdin line {lineno}: not a number: {token!r}") from None
        try:
            status = state.push(value)
        except ValueError as exc:
            raise CliError(f"stdin line {lineno}: {exc}") from None
        out.write(f"{status}\n")
        out.flush()


def cmd_batch(args: argparse.Namespace, out: TextIO) -> None:
    cfg = _config(args)
    paths = discover_series(args.dir)
    series = []
    failures = []
    for p in paths:
        try:
            series.append(load_series(p))
        except SeriesError as exc:
            failures.append((p.stem, str(exc)))
    entries = list(detect_batch(series, cfg, workers=args.workers))
    for sid, msg in failures:
        entries.append(DetectionFailure(sid, msg))
        print(f"batch: skipped {sid}: {msg}", file=sys.stderr)
    entries.sort(key=lambda e: e.series_id)
    Path(args.out).write_text(outcomes_csv(entries), newline="")
    steady = sum(1 for e in entries if getattr(e, "steady", False))
    print(f"batch: {len(entries)} series, {steady} steady -> {args.out}", file=sys.stderr)


def cmd_fit(args: argparse.Namespace, out: TextIO) -> None:
    dataset = load_dataset(args.dataset)
    labels = groundtruth.read_labels(args.labels)
    grid = evalfit.load_grid(args.grid)
    result = evalfit.grid_fit(dataset, labels, grid, base=_config(args))
    print(f"fit: evaluated {len(result.trials)} configurations", file=sys.stderr)
    if args.trials_csv:
        names = sorted(grid)
        lines = [",".join(names + ["objective", "unsteady"])]
        for t in result.trials:
            lines.append(",".join([str(getattr(t.config, n)) for n in names]
                                  + [str(t.objective), str(t.unsteady)]))
        Path(args.trials_csv).write_text("\r\n".join(lines) + "\r\n", newline="")
    _dump({"configurations": len(result.trials), "objective": result.objective,
           "unsteady": result.unsteady, "best": result.best.to_dict()}, out)


def cmd_sobol(args: argparse.Namespace, out: TextIO) -> None:
    dataset = load_dataset(args.dataset)
    labels = groundtruth.read_labels(args.labels)
    bounds = sensitivity.load_bounds(args.bounds)
    if args.samples < 2:
        raise CliError("--samples must be at least 2")
    total = sensitivity.evaluation_count(bounds.d, args.samples, args.second_order)
    print(f"sobol: {total} model evaluations (d={bounds.d}, n_base={args.samples}, "
          f"second_order={args.second_order})", file=sys.stderr)
    _, _, result = sensitivity.run_sobol(
        dataset, labels, bounds, args.samples, args.second_order, args.seed,
        args.resamples, args.level, base=_config(args))
    if args.csv:
        Path(args.csv).write_text(sensitivity.result_csv(result), newline="")
    _dump({"evaluations": total, "n_base": args.samples, "second_order": args.second_order,
           "seed": args.seed, **result.to_dict()}, out)


def cmd_aggregate(args: argparse.Namespace, out: TextIO) -> None:
    judgments = groundtruth.read_judgments(args.judgments)
    records = [groundtruth.build_record(j, args.eps, args.min_pts) for j in judgments]
    _write(groundtruth.write_labels(records), args.out, out)


def _method_report(preds, labels) -> dict[str, Any]:
    conf = evalfit.confusion_counts(preds, labels)
    rows = evalfit.error_rows(preds, labels)
    report = None
    if len(rows) >= 2:
        report = evalfit.error_report([r.raw_error for r in rows], [r.kind for r in rows]).to_dict()
    return {"confusion": conf._asdict(), "paired": len(rows), "errors": report}


def cmd_evaluate(args: argparse.Namespace, out: TextIO) -> None:
    labels = groundtruth.read_labels(args.labels)
    preds = read_outcomes(args.pred)
    doc: dict[str, Any] = {"method": _method_report(preds, labels)}
    if args.rows_csv:
        Path(args.rows_csv).write_text(evalfit.rows_csv(evalfit.error_rows(preds, labels)),
                                       newline="")
    if args.baseline:
        base = read_outcomes(args.baseline)
        doc["baseline"] = _method_report(base, labels)
        ours = {r.series_id: r.raw_error for r in evalfit.error_rows(preds, labels)}
        theirs = {r.series_id: r.raw_error for r in evalfit.error_rows(base, labels)}
        common = sorted(set(ours) & set(theirs))
        if len(common) >= 2:
            tests = evalfit.compare_errors([ours[k] for k in common], [theirs[k] for k in common])
            doc["tests"] = [_finite(t.to_dict()) for t in tests]
    _dump(doc, out)


def _finite(d: dict[str, Any]) -> dict[str, Any]:
    return {k: None if isinstance(v, float) and not math.isfinite(v) else v for k, v in d.items()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbkssd", description="Steady-state detection for performance time series.")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = sub.add_parser("detect", help="classify one series")
    p.add_argument("file")
    p.add_argument("--config")
    p.add_argument("--fork", type=int, help="select a fork from a JSON array of arrays")
    p.add_argument("--format", choices=["json", "csv"], help="input format (default: suffix)")
    p.add_argument("--windows", action="store_true", help="include per-window reports")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("monitor", help="online Kelly test over numbers read from stdin")
    p.add_argument("--config")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("batch", help="detect every series in a directory")
    p.add_argument("dir")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("fit", help="grid-search calibration")
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--config", help="base configuration for parameters outside the grid")
    p.add_argument("--trials-csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sobol", help="variance-based sensitivity analysis")
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--bounds", required=True)
    p.add_argument("--samples", type=int, required=True, help="base sample count n_base")
    p.add_argument("--second-order", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resamples", type=int, default=100)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--config")
    p.add_argument("--csv", help="also write a plot-ready index table")
    p.set_defaults(func=cmd_sobol)

    p = sub.add_parser("aggregate", help="build ground-truth labels from judgments")
    p.add_argument("--judgments", required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--min-pts", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("evaluate", help="score predictions against labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--baseline", help="second prediction set to compare against")
    p.add_argument("--rows-csv")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        args.func(args, out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 4
    except SeriesError as exc:
        print(f"error: invalid series: {exc}", file=sys.stderr)
        return 5
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
