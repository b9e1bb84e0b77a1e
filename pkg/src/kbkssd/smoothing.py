"""Block-median outlier replacement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kbkssd.core import TimeSeries

# Percentiles of one or two samples are degenerate; such blocks are left as-is.
MIN_BLOCK = 3


@dataclass(frozen=True)
class SmoothingReport:
    replaced_indices: list[int]
    subset_count: int


def smooth_values(values: np.ndarray, win: int, lower_pct: float,
                  upper_pct: float) -> tuple[np.ndarray, list[int]]:
    """Array form of :func:`smooth`; returns the new array and replaced indices."""
    if win < 1:
        raise ValueError("win must be at least 1")
    if not 0.0 < lower_pct < upper_pct < 100.0:
        raise ValueError("need 0 < lower_pct < upper_pct < 100")
    values = np.asarray(values, dtype=np.float64)
    out = values.copy()
    replaced: list[int] = []
    for start in range(0, values.size, win):
        block = values[start:start + win]
        if block.size < MIN_BLOCK:
            continue
        lo, hi = np.percentile(block, [lower_pct, upper_pct])
        mask = (block < lo) | (block > hi)
        if mask.any():
            hits = np.flatnonzero(mask)
            out[start + hits] = np.median(block)
            replaced.extend(int(start + i) for i in hits)
    return out, replaced


def smooth(series: TimeSeries, win: int, lower_pct: float,
           upper_pct: float) -> tuple[TimeSeries, SmoothingReport]:
    """Replace per-block percentile outliers with the block median.

    The series is cut into consecutive disjoint blocks of ``win`` samples (the
    last one may be shorter). Inside a block, samples strictly below the
    ``lower_pct`` or strictly above the ``upper_pct`` percentile (linear
    interpolation) take the block median. Length and indexing are preserved.
    """
    values, replaced = smooth_values(series.samples, win, lower_pct, upper_pct)
    blocks = -(-len(series) // win)
    return series.with_samples(values), SmoothingReport(replaced, blocks)
