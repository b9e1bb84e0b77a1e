"""Domain types, detector configuration and series ingestion."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

if TYPE_CHECKING:
    from kbkssd.kssd import WindowReport


class SeriesError(ValueError):
    """Base class for every ingestion failure."""


class SeriesParseError(SeriesError):
    """A token in the input could not be read as a number."""

    def __init__(self, path: str | Path, offset: int, token: Any):
        self.path = str(path)
        self.offset = offset
        self.token = token
        super().__init__(f"{path}: non-numeric value {token!r} at offset {offset}")


class EmptySeriesError(SeriesError):
    pass


class NonFiniteError(SeriesError):
    def __init__(self, where: str, offset: int, value: float):
        self.offset = offset
        super().__init__(f"{where}: non-finite value {value!r} at offset {offset}")


class ForkError(SeriesError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """An ordered run of per-iteration measurements.

    ``samples`` is stored as a read-only float64 array so instances can be
    shared between workers without defensive copies.
    """

    id: str
    samples: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.samples, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise EmptySeriesError(f"series {self.id!r} is empty")
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise NonFiniteError(f"series {self.id!r}", int(bad[0]), float(values[bad[0]]))
        values.setflags(write=False)
        object.__setattr__(self, "samples", values)

    def __len__(self) -> int:
        return int(self.samples.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.samples, other.samples)

    def __hash__(self) -> int:
        return hash((self.id, self.samples.tobytes()))

    def with_samples(self, samples: Sequence[float] | np.ndarray) -> "TimeSeries":
        return TimeSeries(self.id, samples)


@dataclass(frozen=True)
class DetectorConfig:
    """Every tunable of the detector.

    ``deviation`` selects the quantity compared against ``t_crit * sigma_a``
    in the Kelly test: ``"level"`` uses ``|x_t - mu|``, ``"drift"`` uses the
    drift-corrected residual ``|x_t - m*t - mu|``.
    """

    outlier_win_size: int = 100
    lower_pct: float = 5.0
    upper_pct: float = 95.0
    prob_win_size: int = 500
    step_win_size: int = 70
    short_kernel_size: int = 15
    t_crit: float = 4.0
    prob_threshold: float = 0.95
    step_rel_threshold: float = 0.05
    scan_stride: int = 1
    deviation: str = "level"

    def __post_init__(self) -> None:
        for name in ("outlier_win_size", "prob_win_size", "step_win_size",
                     "short_kernel_size", "scan_stride"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name in ("lower_pct", "upper_pct", "t_crit", "prob_threshold", "step_rel_threshold"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
                raise ConfigError(f"{name} must be a real number, got {value!r}")
            value = float(value)
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not 0.0 < self.lower_pct < self.upper_pct < 100.0:
            raise ConfigError(
                f"need 0 < lower_pct < upper_pct < 100, got {self.lower_pct}/{self.upper_pct}")
        if self.prob_win_size < 3:
            raise ConfigError("prob_win_size must be at least 3")
        if self.short_kernel_size < 2:
            raise ConfigError("short_kernel_size must be at least 2")
        if self.t_crit <= 0:
            raise ConfigError("t_crit must be positive")
        if not 0.0 < self.prob_threshold <= 1.0:
            raise ConfigError("prob_threshold must lie in (0, 1]")
        if self.step_rel_threshold < 0:
            raise ConfigError("step_rel_threshold must be non-negative")
        if self.deviation not in ("level", "drift"):
            raise ConfigError(f"deviation must be 'level' or 'drift', got {self.deviation!r}")

    def replace(self, **changes: Any) -> "DetectorConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(DetectorConfig))
INTEGER_FIELDS = frozenset(
    f.name for f in dataclasses.fields(DetectorConfig) if f.type in ("int", int))


def default_config() -> DetectorConfig:
    """The configuration found optimal by the original grid search."""
    return DetectorConfig()


def config_from_mapping(data: dict[str, Any], base: DetectorConfig | None = None) -> DetectorConfig:
    unknown = sorted(set(data) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return (base or default_config()).replace(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> DetectorConfig:
    """Read a flat TOML or JSON document whose keys are DetectorConfig fields.

    Missing keys keep their default values.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a flat key-value document")
    return config_from_mapping(data)


@dataclass(frozen=True)
class DetectionOutcome:
    series_id: str
    steady: bool
    ssi: int | None
    step_index: int | None
    windows: list["WindowReport"] = field(default_factory=list, compare=False)
    config_echo: DetectorConfig = field(default_factory=default_config)
    diagnostic: str | None = None

    def __post_init__(self) -> None:
        if self.steady != (self.ssi is not None):
            raise ValueError("ssi must be present exactly when the series is steady")
        if self.ssi is not None and self.ssi < 0:
            raise ValueError("ssi must be non-negative")

    def to_dict(self, with_windows: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "series_id": self.series_id,
            "steady": self.steady,
            "ssi": self.ssi,
            "step_index": self.step_index,
            "windows_evaluated": len(self.windows),
            "diagnostic": self.diagnostic,
            "config": self.config_echo.to_dict(),
        }
        if with_windows:
            out["windows"] = [w.to_dict() for w in self.windows]
        return out


def _check_number(value: Any, path: str | Path, offset: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SeriesParseError(path, offset, value)
    value = float(value)
    if not math.isfinite(value):
        raise NonFiniteError(str(path), offset, value)
    return value


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SeriesError(f"{path}: malformed JSON: {exc}") from exc


def _sniff_format(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    aliases = {"json": "json-array", "json-array": "json-array",
               "csv": "csv-column", "csv-column": "csv-column"}
    if fmt not in aliases:
        raise ValueError(f"unknown series format {fmt!r}")
    return aliases[fmt]


def load_series(path: str | Path, format: str | None = None) -> TimeSeries:
    """Load a single series from a one-column CSV or a flat JSON number array.

    The format is taken from the file suffix unless given explicitly.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"series file not found: {path}")
    fmt = _sniff_format(path, format)
    values: list[float] = []
    if fmt == "json-array":
        data = _read_json(path)
        if not isinstance(data, list):
            raise SeriesError(f"{path}: expected a flat JSON array of numbers")
        values = [_check_number(v, path, i) for i, v in enumerate(data)]
    else:
        with path.open(newline="") as fh:
            for offset, row in enumerate(r for r in csv.reader(fh) if any(c.strip() for c in r)):
                if len(row) != 1:
                    raise SeriesParseError(path, offset, ",".join(row))
                token = row[0].strip()
                try:
                    value = float(token)
                except ValueError:
                    raise SeriesParseError(path, offset, token) from None
                if not math.isfinite(value):
                    raise NonFiniteError(str(path), offset, value)
                values.append(value)
    if not values:
        raise EmptySeriesError(f"{path}: series is empty")
    return TimeSeries(path.stem, values)


def import_forked_json(path: str | Path, fork: int) -> TimeSeries:
    """Select one fork from a JSON array of per-fork iteration arrays."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"series file not found: {path}")
    data = _read_json(path)
    if not isinstance(data, list) or not all(isinstance(f, list) for f in data):
        raise ForkError(f"{path}: expected a JSON array of numeric arrays (one per fork)")
    if fork < 0 or fork >= len(data):
        raise ForkError(f"{path}: fork {fork} out of range (file has {len(data)} forks)")
    values = [_check_number(v, path, i) for i, v in enumerate(data[fork])]
    if not values:
        raise EmptySeriesError(f"{path}: fork {fork} is empty")
    return TimeSeries(f"{path.stem}#{fork}", values)


def save_series(series: TimeSeries, path: str | Path, format: str | None = None) -> Path:
    """Write a series so that :func:`load_series` reads back identical values."""
    path = Path(path)
    fmt = _sniff_format(path, format)
    values = [float(v) for v in series.samples]
    if fmt == "json-array":
        path.write_text(json.dumps(values))
    else:
        path.write_text("".join(f"{v!r}\n" for v in values))
    return path


def discover_series(directory: str | Path) -> list[Path]:
    """Series files (``*.json``/``*.csv``) in a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in (".json", ".csv"))


def load_dataset(directory: str | Path) -> list[TimeSeries]:
    return [load_series(p) for p in discover_series(directory)]


def as_array(values: Iterable[float] | TimeSeries) -> np.ndarray:
    if isinstance(values, TimeSeries):
        return values.samples
    return np.asarray(values, dtype=np.float64).reshape(-1)
