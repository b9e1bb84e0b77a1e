"""Kelly's windowed steady-state test, batch and online."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from kbkssd.core import DetectorConfig, default_config


@dataclass(frozen=True)
class WindowStats:
    """Drift fit of one window; t runs 1..n inside the window."""

    n: int
    m: float
    mu: float
    sigma_a: float

    def residuals(self, window: Sequence[float] | np.ndarray) -> np.ndarray:
        x = np.asarray(window, dtype=np.float64)
        if x.size != self.n:
            raise ValueError(f"window has {x.size} samples, stats were fitted on {self.n}")
        return x - self.m * np.arange(1, self.n + 1) - self.mu


@dataclass(frozen=True)
class WindowReport:
    start: int
    stats: WindowStats
    likelihood: float
    steady: bool

    def to_dict(self) -> dict:
        return {"start": self.start, "n": self.stats.n, "m": self.stats.m, "mu": self.stats.mu,
                "sigma_a": self.stats.sigma_a, "likelihood": self.likelihood,
                "steady": self.steady}


@dataclass(frozen=True)
class _Rows:
    m: np.ndarray
    mu: np.ndarray
    sigma_a: np.ndarray
    likelihood: np.ndarray


def _fit_rows(rows: np.ndarray, t_crit: float, deviation: str) -> _Rows:
    # Every caller goes through here with a C-contiguous (k, n) array, so a row
    # gives bit-identical results whether it is evaluated alone or in a batch.
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    k, n = rows.shape
    t = np.arange(1, n + 1, dtype=np.float64)
    t_mean = (n + 1) / 2.0
    stt = n * (n * n - 1) / 12.0
    x_mean = rows.mean(axis=1)
    m = ((t - t_mean) * (rows - x_mean[:, None])).sum(axis=1) / stt
    mu = (rows.sum(axis=1) - m * (n * (n + 1) / 2.0)) / n
    resid = rows - m[:, None] * t - mu[:, None]
    sigma = np.sqrt((resid * resid).sum(axis=1) / (n - 2))
    # exact constants: zero slope, level equal to the value, no scatter
    flat = rows.max(axis=1) == rows.min(axis=1)
    if flat.any():
        m[flat] = 0.0
        mu[flat] = rows[flat, 0]
        sigma[flat] = 0.0
        resid[flat] = 0.0
    dev = np.abs(resid) if deviation == "drift" else np.abs(rows - mu[:, None])
    inside = dev <= t_crit * sigma[:, None]
    likelihood = inside.sum(axis=1) / n
    return _Rows(m, mu, sigma, likelihood)


def _check_window(window: Sequence[float] | np.ndarray) -> np.ndarray:
    x = np.asarray(window, dtype=np.float64).reshape(-1)
    if x.size < 3:
        raise ValueError(f"a Kelly window needs at least 3 samples, got {x.size}")
    if not np.isfinite(x).all():
        raise ValueError("window contains non-finite values")
    return x


def fit_window(window: Sequence[float] | np.ndarray) -> WindowStats:
    """Least-squares drift ``m``, level ``mu`` and residual scale ``sigma_a``.

    ``mu = (sum(x) - m * sum(t)) / n`` and
    ``sigma_a = sqrt(sum((x - m*t - mu)**2) / (n - 2))``.
    """
    x = _check_window(window)
    r = _fit_rows(x[None, :], 1.0, "level")
    return WindowStats(x.size, float(r.m[0]), float(r.mu[0]), float(r.sigma_a[0]))


def window_verdict(window: Sequence[float] | np.ndarray, t_crit: float,
                   prob_threshold: float, *, deviation: str = "level",
                   start: int = 0) -> WindowReport:
    """Fraction of samples within ``t_crit * sigma_a`` of the level, and the verdict.

    The default ``deviation="level"`` tests ``|x_t - mu|``, so a drifting window
    fails even when it hugs its drift line.
    """
    x = _check_window(window)
    r = _fit_rows(x[None, :], t_crit, deviation)
    stats = WindowStats(x.size, float(r.m[0]), float(r.mu[0]), float(r.sigma_a[0]))
    likelihood = float(r.likelihood[0])
    return WindowReport(start, stats, likelihood, likelihood >= prob_threshold)


def scan_windows(values: np.ndarray, width: int, starts: np.ndarray, t_crit: float,
                 prob_threshold: float, deviation: str = "level",
                 stop_at_steady: bool = True, chunk: int = 256) -> list[WindowReport]:
    """Evaluate the windows beginning at ``starts`` in order.

    With ``stop_at_steady`` the scan ends after the first steady window.
    """
    values = np.asarray(values, dtype=np.float64)
    reports: list[WindowReport] = []
    if starts.size == 0:
        return reports
    view = np.lib.stride_tricks.sliding_window_view(values, width)
    for lo in range(0, starts.size, chunk):
        idx = starts[lo:lo + chunk]
        r = _fit_rows(view[idx], t_crit, deviation)
        for j, s in enumerate(idx):
            lik = float(r.likelihood[j])
            stats = WindowStats(width, float(r.m[j]), float(r.mu[j]), float(r.sigma_a[j]))
            steady = lik >= prob_threshold
            reports.append(WindowReport(int(s), stats, lik, steady))
            if steady and stop_at_steady:
                return reports
    return reports


@dataclass(frozen=True)
class MonitorStatus:
    kind: Literal["filling", "steady", "unsteady"]
    likelihood: float | None = None

    def __str__(self) -> str:
        if self.kind == "filling":
            return "FILLING"
        return f"{self.kind.upper()} L={self.likelihood:.6f}"


@dataclass
class MonitorState:
    """Online Kelly monitor over the most recent ``prob_win_size`` samples.

    Single writer: push from one thread at a time.
    """

    config: DetectorConfig = field(default_factory=default_config)
    count: int = 0
    buffer: deque = field(init=False)

    def __post_init__(self) -> None:
        self.buffer = deque(maxlen=self.config.prob_win_size)

    def push(self, sample: float) -> MonitorStatus:
        sample = float(sample)
        if not math.isfinite(sample):
            raise ValueError(f"non-finite sample {sample!r}")
        self.buffer.append(sample)
        self.count += 1
        if self.count < self.config.prob_win_size:
            return MonitorStatus("filling")
        cfg = self.config
        report = window_verdict(np.fromiter(self.buffer, np.float64, len(self.buffer)),
                                cfg.t_crit, cfg.prob_threshold, deviation=cfg.deviation,
                                start=self.count - cfg.prob_win_size)
        return MonitorStatus("steady" if report.steady else "unsteady", report.likelihood)


def monitor_push(state: MonitorState, sample: float) -> tuple[MonitorState, MonitorStatus]:
    status = state.push(sample)
    return state, status
