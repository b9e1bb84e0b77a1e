"""Steady-state detection for performance time series.

Kernel-based step detection locates the end of warm-up; Kelly's windowed
test then finds the first steady window at or after it.
"""

from kbkssd.core import (DetectionOutcome, DetectorConfig, TimeSeries, default_config,
                         import_forked_json, load_config, load_series)
from kbkssd.kssd import MonitorState, fit_window, monitor_push, window_verdict
from kbkssd.pipeline import detect, detect_batch
from kbkssd.smoothing import smooth
from kbkssd.stepdetect import build_step_kernel, convolve_full, detect_step

__all__ = [
    "DetectionOutcome", "DetectorConfig", "MonitorState", "TimeSeries", "build_step_kernel",
    "convolve_full", "default_config", "detect", "detect_batch", "detect_step", "fit_window",
    "import_forked_json", "load_config", "load_series", "monitor_push", "smooth",
    "window_verdict",
]

__version__ = "0.1.0"
