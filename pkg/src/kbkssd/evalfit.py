"""Scoring detector output against ground truth, and grid-search calibration."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import special, stats

from kbkssd.core import (CONFIG_FIELDS, ConfigError, DetectionOutcome, DetectorConfig,
                         TimeSeries, config_from_mapping, default_config, tomllib)
from kbkssd.groundtruth import GroundTruthRecord
from kbkssd.pipeline import DatasetRunner


class Confusion(NamedTuple):
    agree: int
    false_pos: int
    false_neg: int


@dataclass(frozen=True)
class ErrorRow:
    series_id: str
    gt_ssi: int
    pred_ssi: int
    kind: str | None

    @property
    def raw_error(self) -> int:
        return self.gt_ssi - self.pred_ssi

    @property
    def abs_error(self) -> int:
        return abs(self.raw_error)


@dataclass(frozen=True)
class ErrorReport:
    count: int
    mean: float
    std: float
    interval95: tuple[float, float]
    skewness: float
    mean_abs: float
    std_abs: float
    total_manhattan: float
    subtotal_clustered: float
    subtotal_scattered: float

    def to_dict(self) -> dict[str, Any]:
        out = self.__dict__.copy()
        out["interval95"] = list(self.interval95)
        return out


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    p_value: float
    p_adjusted: float | None = None
    degenerate: bool = False

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def _pair(preds: Sequence[DetectionOutcome],
          labels: Sequence[GroundTruthRecord]) -> list[tuple[DetectionOutcome, GroundTruthRecord]]:
    by_id = {r.series_id: r for r in labels}
    pred_ids = {p.series_id for p in preds}
    missing = [p.series_id for p in preds if p.series_id not in by_id]
    extra = [r.series_id for r in labels if r.series_id not in pred_ids]
    if missing or extra:
        raise ValueError(
            "predictions and labels do not match: "
            f"unlabelled {missing[:5]}, unpredicted {extra[:5]}")
    return [(p, by_id[p.series_id]) for p in preds]


def confusion_counts(preds: Sequence[DetectionOutcome],
                     labels: Sequence[GroundTruthRecord]) -> Confusion:
    agree = fp = fn = 0
    for p, g in _pair(preds, labels):
        if p.steady == g.steady:
            agree += 1
        elif p.steady:
            fp += 1
        else:
            fn += 1
    return Confusion(agree, fp, fn)


def error_rows(preds: Sequence[DetectionOutcome],
               labels: Sequence[GroundTruthRecord]) -> list[ErrorRow]:
    """Series that are steady both in the labels and in the predictions."""
    return [ErrorRow(p.series_id, g.ssi, p.ssi, g.label_kind)  # type: ignore[arg-type]
            for p, g in _pair(preds, labels) if p.steady and g.steady]


def raw_errors(preds: Sequence[DetectionOutcome],
               labels: Sequence[GroundTruthRecord]) -> list[int]:
    """``label.ssi - pred.ssi``; positive means the detector fired early."""
    return [r.raw_error for r in error_rows(preds, labels)]


def interval95(mean: float, std: float) -> tuple[float, float]:
    return (mean - 2.0 * std, mean + 2.0 * std)


def skewness(values: Sequence[float]) -> float:
    """Fisher-Pearson g1 = m3 / m2**1.5 with population moments; 0 without spread."""
    x = np.asarray(values, dtype=np.float64)
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        return 0.0
    return float(np.mean(d ** 3)) / m2 ** 1.5


def error_report(errors: Sequence[float], kinds: Sequence[str | None]) -> ErrorReport:
    if len(errors) < 2:
        raise ValueError("an error report needs at least two errors")
    if len(kinds) != len(errors):
        raise ValueError("errors and kinds must have the same length")
    e = np.asarray(errors, dtype=np.float64)
    a = np.abs(e)
    mean = float(e.mean())
    std = float(e.std(ddof=1))
    kinds_arr = np.asarray([k or "" for k in kinds])
    clustered = float(a[kinds_arr == "clustered"].sum())
    scattered = float(a[kinds_arr != "clustered"].sum())
    return ErrorReport(
        count=int(e.size), mean=mean, std=std, interval95=interval95(mean, std),
        skewness=skewness(e), mean_abs=float(a.mean()), std_abs=float(a.std(ddof=1)),
        total_manhattan=clustered + scattered, subtotal_clustered=clustered,
        subtotal_scattered=scattered)


def sign_test(diffs: Sequence[float]) -> TestResult:
    """Exact two-sided sign test; zero differences are dropped."""
    d = np.asarray(diffs, dtype=np.float64)
    pos = int((d > 0).sum())
    neg = int((d < 0).sum())
    n = pos + neg
    if n == 0:
        raise ValueError("sign test needs at least one nonzero difference")
    tail = sum(math.comb(n, i) for i in range(min(pos, neg) + 1))
    p = min(Fraction(1), Fraction(2 * tail, 2 ** n))
    return TestResult("sign", pos / n, float(p))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sample Kolmogorov-Smirnov with the asymptotic Kolmogorov p-value."""
    xa = np.sort(np.asarray(a, dtype=np.float64))
    xb = np.sort(np.asarray(b, dtype=np.float64))
    if xa.size == 0 or xb.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([xa, xb])
    cdf_a = np.searchsorted(xa, grid, side="right") / xa.size
    cdf_b = np.searchsorted(xb, grid, side="right") / xb.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    m, n = xa.size, xb.size
    p = float(special.kolmogorov(math.sqrt(m * n / (m + n)) * d))
    return TestResult("ks", d, min(1.0, max(0.0, p)))


def levene_bf(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Brown-Forsythe (median-centred Levene) test for two groups."""
    groups = [np.asarray(g, dtype=np.float64) for g in (a, b)]
    if any(g.size < 2 for g in groups):
        raise ValueError("each group needs at least two values")
    z = [np.abs(g - np.median(g)) for g in groups]
    grand = np.concatenate(z).mean()
    ssb = sum(g.size * (g.mean() - grand) ** 2 for g in z)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in z)
    df_w = sum(g.size for g in z) - 2
    if ssw == 0.0:
        if ssb == 0.0:
            return TestResult("levene", 0.0, 1.0)
        return TestResult("levene", math.inf, 0.0, degenerate=True)
    w = float(ssb / (ssw / df_w))
    return TestResult("levene", w, float(stats.f.sf(w, 1, df_w)))


def bh_adjust(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjustment, returned in input order."""
    p = np.asarray(p_values, dtype=np.float64)
    if ((p < 0) | (p > 1) | np.isnan(p)).any():
        raise ValueError("p-values must lie in [0, 1]")
    n = p.size
    if n == 0:
        return []
    order = np.argsort(p, kind="stable")
    scaled = p[order] * n / np.arange(1, n + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(n)
    # p * n / n can round one ulp below p
    out[order] = np.clip(adjusted, p[order], 1.0)
    return out.tolist()


def adjust_results(results: Sequence[TestResult]) -> list[TestResult]:
    adjusted = bh_adjust([r.p_value for r in results])
    return [replace(r, p_adjusted=q) for r, q in zip(results, adjusted)]


def compare_errors(errors_a: Sequence[float], errors_b: Sequence[float]) -> list[TestResult]:
    """Sign, KS and Levene tests between two paired raw-error samples, BH-adjusted."""
    if len(errors_a) != len(errors_b):
        raise ValueError("paired error samples must have equal length")
    diffs = np.asarray(errors_a, dtype=np.float64) - np.asarray(errors_b, dtype=np.float64)
    results = []
    if np.any(diffs != 0):
        results.append(sign_test(diffs))
    results.append(ks_two_sample(errors_a, errors_b))
    results.append(levene_bf(errors_a, errors_b))
    return adjust_results(results)


# -- calibration ----------------------------------------------------------


@dataclass(frozen=True)
class Trial:
    config: DetectorConfig
    objective: int
    unsteady: int


@dataclass(frozen=True)
class GridFitResult:
    best: DetectorConfig
    objective: int
    unsteady: int
    trials: list[Trial]

    def __iter__(self):
        return iter((self.best, self.objective))


def manhattan(outcomes: Sequence[DetectionOutcome],
              labels: Sequence[GroundTruthRecord]) -> tuple[int, int]:
    """Total ``|pred - gt|`` over series steady in both, plus the unsteady-predicted count."""
    total = unsteady = 0
    for p, g in zip(outcomes, labels):
        if not g.steady:
            continue
        if p.steady:
            total += abs(p.ssi - g.ssi)  # type: ignore[operator]
        else:
            unsteady += 1
    return total, unsteady


def expand_grid(grid: Mapping[str, Sequence[Any]],
                base: DetectorConfig | None = None) -> list[tuple[tuple[Any, ...], DetectorConfig]]:
    """Cartesian product of ``grid`` as ``(sort key, config)`` pairs.

    The sort key lists the values in alphabetical parameter-name order and is
    the final tie-break of :func:`grid_fit`.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must name at least one parameter, each with values")
    unknown = sorted(set(grid) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown grid parameters: {', '.join(unknown)}")
    names = sorted(grid)
    base = base or default_config()
    return [(combo, config_from_mapping(dict(zip(names, combo)), base))
            for combo in itertools.product(*(list(grid[k]) for k in names))]


def _align(dataset: Sequence[TimeSeries],
           labels: Sequence[GroundTruthRecord]) -> list[GroundTruthRecord]:
    by_id = {r.series_id: r for r in labels}
    missing = [s.id for s in dataset if s.id not in by_id]
    if missing:
        raise ValueError(f"no label for series {missing[:5]}")
    return [by_id[s.id] for s in dataset]


def grid_fit(dataset: Sequence[TimeSeries], labels: Sequence[GroundTruthRecord],
             grid: Mapping[str, Sequence[Any]], base: DetectorConfig | None = None) -> GridFitResult:
    """Exhaustive search minimising the Manhattan distance to the labels.

    Only series labelled steady take part; among them, those the detector
    calls unsteady are left out of the distance. Ties prefer fewer unsteady
    calls, then the lexicographically smallest parameter values.
    """
    aligned = _align(dataset, labels)
    keep = [i for i, g in enumerate(aligned) if g.steady]
    kept_labels = [aligned[i] for i in keep]
    runner = DatasetRunner(dataset)
    trials = []
    best_key = None
    best = None
    for combo, cfg in expand_grid(grid, base):
        total, unsteady = manhattan(runner.run(cfg, keep), kept_labels)
        trials.append(Trial(cfg, total, unsteady))
        key = (total, unsteady, combo)
        if best_key is None or key < best_key:
            best_key, best = key, trials[-1]
    assert best is not None
    return GridFitResult(best.config, best.objective, best.unsteady, trials)


def load_grid(path: str | Path) -> dict[str, list[Any]]:
    """Grid file: flat TOML or JSON mapping parameter name to a value list."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"grid file not found: {path}")
    try:
        data = json.loads(path.read_text()) if path.suffix.lower() == ".json" \
            else tomllib.loads(path.read_text())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: malformed grid: {exc}") from exc
    if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
        raise ConfigError(f"{path}: grid must map parameter names to value lists")
    return data


ROW_COLUMNS = ["id", "gt_ssi", "pred_ssi", "raw_error", "abs_error", "kind"]


def rows_csv(rows: Sequence[ErrorRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(ROW_COLUMNS)
    for r in rows:
        writer.writerow([r.series_id, r.gt_ssi, r.pred_ssi, r.raw_error, r.abs_error, r.kind or ""])
    return buf.getvalue()
