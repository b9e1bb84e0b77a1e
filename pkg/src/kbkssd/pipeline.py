"""The full detector: smoothing, step detection, then a Kelly window scan."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from kbkssd.core import DetectionOutcome, DetectorConfig, TimeSeries
from kbkssd.kssd import scan_windows
from kbkssd.smoothing import smooth_values
from kbkssd.stepdetect import detect_step


@dataclass(frozen=True)
class DetectionFailure:
    """Batch entry for a series whose detection raised."""

    series_id: str
    error: str


def detect_values(series_id: str, values: np.ndarray, cfg: DetectorConfig,
                  smoothed: np.ndarray | None = None) -> DetectionOutcome:
    """:func:`detect` on a raw array; ``smoothed`` may be supplied when cached."""
    if smoothed is None:
        smoothed, _ = smooth_values(values, cfg.outlier_win_size, cfg.lower_pct, cfg.upper_pct)
    n = smoothed.size
    step = detect_step(smoothed, cfg)
    step_index = step.index if step is not None else None
    scan_start = step_index or 0
    width = cfg.prob_win_size
    starts = np.arange(scan_start, n - width + 1, cfg.scan_stride)
    reports = scan_windows(smoothed, width, starts, cfg.t_crit, cfg.prob_threshold,
                           cfg.deviation)
    if reports and reports[-1].steady:
        return DetectionOutcome(series_id, True, reports[-1].start, step_index, reports, cfg)
    if starts.size == 0:
        note = (f"only {n - scan_start} samples after index {scan_start}; "
                f"a full window needs {width}")
    else:
        note = f"no steady window among {len(reports)} evaluated"
    return DetectionOutcome(series_id, False, None, step_index, reports, cfg, note)


def detect(series: TimeSeries, cfg: DetectorConfig) -> DetectionOutcome:
    """Classify a series and locate its steady-state start.

    The steady-state index is the start of the first window, at or after the
    detected step (or index 0 without one), whose Kelly likelihood reaches
    ``prob_threshold``. Indices refer to the original series.
    """
    return detect_values(series.id, series.samples, cfg)


def _detect_entry(args: tuple[TimeSeries, DetectorConfig]) -> DetectionOutcome | DetectionFailure:
    series, cfg = args
    try:
        return detect(series, cfg)
    except Exception as exc:  # noqa: BLE001 - reported per entry
        return DetectionFailure(series.id, f"{type(exc).__name__}: {exc}")


def detect_batch(inputs: Iterable[TimeSeries], cfg: DetectorConfig,
                 workers: int | None = None) -> list[DetectionOutcome | DetectionFailure]:
    """Run :func:`detect` on every series, preserving input order.

    A failing series yields a :class:`DetectionFailure` entry instead of
    aborting the batch. ``workers > 1`` fans out over processes.
    """
    jobs = [(s, cfg) for s in inputs]
    if workers is None or workers <= 1 or len(jobs) < 2:
        return [_detect_entry(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_detect_entry, jobs))


class DatasetRunner:
    """Runs many configurations over one dataset, reusing smoothed series.

    Smoothing depends only on the outlier window and percentiles, which most
    grid or Sobol designs vary far less than the other parameters.
    """

    def __init__(self, dataset: Iterable[TimeSeries]):
        self.dataset = list(dataset)
        self._smoothed: dict[tuple[int, int, float, float], np.ndarray] = {}

    def smoothed(self, i: int, cfg: DetectorConfig) -> np.ndarray:
        key = (i, cfg.outlier_win_size, cfg.lower_pct, cfg.upper_pct)
        if key not in self._smoothed:
            self._smoothed[key], _ = smooth_values(
                self.dataset[i].samples, cfg.outlier_win_size, cfg.lower_pct, cfg.upper_pct)
        return self._smoothed[key]

    def run(self, cfg: DetectorConfig, subset: Iterable[int] | None = None) -> list[DetectionOutcome]:
        idx = range(len(self.dataset)) if subset is None else subset
        return [detect_values(self.dataset[i].id, self.dataset[i].samples, cfg,
                              smoothed=self.smoothed(i, cfg)) for i in idx]


OUTCOME_COLUMNS = ["series_id", "steady", "ssi", "step_index", "error"]


def outcomes_csv(entries: Sequence[DetectionOutcome | DetectionFailure]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(OUTCOME_COLUMNS)
    for e in entries:
        if isinstance(e, DetectionFailure):
            writer.writerow([e.series_id, "", "", "", e.error])
            continue
        writer.writerow([e.series_id, int(e.steady), "" if e.ssi is None else e.ssi,
                         "" if e.step_index is None else e.step_index, ""])
    return buf.getvalue()


def read_outcomes(path: str | Path) -> list[DetectionOutcome]:
    """Read a batch CSV back; rows that recorded an error are rejected."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"predictions file not found: {path}")
    out = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in OUTCOME_COLUMNS[:3] if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {', '.join(missing)}")
        for line, row in enumerate(reader, start=2):
            if (row.get("error") or "").strip():
                raise ValueError(f"{path}:{line}: series {row['series_id']} has no prediction")
            if row["steady"].strip() not in ("0", "1"):
                raise ValueError(f"{path}:{line}: steady must be 0 or 1")
            ssi = row["ssi"].strip()
            step = (row.get("step_index") or "").strip()
            out.append(DetectionOutcome(row["series_id"], row["steady"].strip() == "1",
                                        int(ssi) if ssi else None,
                                        int(step) if step else None))
    return out
