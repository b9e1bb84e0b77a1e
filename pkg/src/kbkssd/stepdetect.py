"""Step-down detection by convolution with balanced +1/-1 kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from kbkssd.core import DetectorConfig

# Both median windows around a candidate need at least this many samples.
MIN_SIDE = 5


@dataclass(frozen=True)
class StepKernel:
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.size < 2 or w.sum() != 0 or not np.isin(w, (-1.0, 0.0, 1.0)).all():
            raise ValueError("a step kernel needs at least two weights from {+1, 0, -1} summing to 0")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True)
class StepCandidate:
    index: int
    conv_min: float
    kernel_kind: Literal["large", "short"]
    significant: bool
    median_before: float
    median_after: float


def build_step_kernel(size: int) -> StepKernel:
    """``size // 2`` ones, a zero when ``size`` is odd, then ``size // 2`` minus ones."""
    if size < 2:
        raise ValueError(f"kernel size must be at least 2, got {size}")
    half = size // 2
    weights = np.concatenate([np.ones(half), np.zeros(size % 2), -np.ones(half)])
    return StepKernel(weights)


def convolve_full(series: Sequence[float] | np.ndarray, kernel: StepKernel) -> np.ndarray:
    """Full discrete convolution with zero padding; length ``n + n_k - 1``."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot convolve an empty series")
    return np.convolve(x, kernel.weights, mode="full")


def locate_candidate(series: Sequence[float] | np.ndarray, kernel: StepKernel,
                     guard: int) -> tuple[int, float] | None:
    """Series index of the convolution minimum, searched in ``[guard, n - guard)``.

    Output position ``k`` maps to series index ``k - n_k // 2 + 1``: with the
    kernel's +1 half over the newest samples, that is the first sample after a
    step-down. Ties go to the smallest index.
    """
    if guard < 1:
        raise ValueError("guard must be at least 1")
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if guard >= n - guard:
        return None
    conv = convolve_full(x, kernel)
    offset = kernel.size // 2 - 1
    window = conv[guard + offset:n - guard + offset]
    pos = int(np.argmin(window))
    return guard + pos, float(window[pos])


def is_significant(series: Sequence[float] | np.ndarray, index: int, win: int,
                   rel_threshold: float) -> tuple[bool, float, float]:
    """Compare the medians of up to ``win`` samples either side of ``index``."""
    x = np.asarray(series, dtype=np.float64)
    if not 0 < index < x.size:
        raise ValueError(f"index {index} must lie strictly inside the series")
    before = x[max(0, index - win):index]
    after = x[index:min(x.size, index + win)]
    med_before = float(np.median(before))
    med_after = float(np.median(after))
    enough = before.size >= MIN_SIDE and after.size >= MIN_SIDE
    significant = enough and (med_before - med_after) > rel_threshold * abs(med_before)
    return bool(significant), med_before, med_after


def short_guard(kernel_size: int) -> int:
    # keep the short kernel fully inside the series and leave room for both medians
    return max(MIN_SIDE, kernel_size - kernel_size // 2)


def _candidate(search: np.ndarray, raw: np.ndarray, kernel: StepKernel, guard: int,
               kind: str, cfg: DetectorConfig, reject_edges: bool) -> StepCandidate | None:
    found = locate_candidate(search, kernel, guard)
    if found is None:
        return None
    index, conv_min = found
    if reject_edges and index in (guard, raw.size - guard - 1):
        return None
    ok, before, after = is_significant(raw, index, cfg.step_win_size, cfg.step_rel_threshold)
    return StepCandidate(index, conv_min, kind, ok, before, after)  # type: ignore[arg-type]


def detect_step(series: Sequence[float] | np.ndarray, cfg: DetectorConfig) -> StepCandidate | None:
    """Find the warm-up termination step, if a significant one exists.

    The large kernel spans the whole series (largest even size <= n) and is
    applied to the mean-centred series: zero padding then contributes no level
    bias at partially overlapping positions. Its search excludes
    ``step_win_size`` samples at both ends, and a minimum pinned to either end
    of that range is discarded, since the true minimum lies beyond it. The short
    kernel searches almost the whole series so tail steps stay reachable. The
    large candidate wins when significant, else the short one.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if n < 2 * cfg.step_win_size or n < 2:
        return None
    large = build_step_kernel(n - n % 2)
    centred = x - x.mean()
    cand = _candidate(centred, x, large, cfg.step_win_size, "large", cfg, reject_edges=True)
    if cand is not None and cand.significant:
        return cand
    short = build_step_kernel(cfg.short_kernel_size)
    cand = _candidate(x, x, short, short_guard(short.size), "short", cfg, reject_edges=False)
    if cand is not None and cand.significant:
        return cand
    return None

