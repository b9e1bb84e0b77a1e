"""Variance-based sensitivity of the detector to its parameters.

Sampling follows the Saltelli cross-matrix design and the indices use the
Saltelli et al. (2010) estimators: first order from ``f(B) * (f(AB_i) - f(A))``,
total effect from Jansen's ``(f(A) - f(AB_i))**2 / 2`` and second order from
``f(BA_i) * f(AB_j) - f(A) * f(B)``.

Evaluations are laid out block-wise: ``A``, ``B``, ``AB_1..AB_d`` and, with
second order, ``BA_1..BA_d``; each block holds ``n_base`` rows in base-sample
order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats
from scipy.stats import qmc

from kbkssd.core import INTEGER_FIELDS, DetectorConfig, TimeSeries, config_from_mapping, default_config
from kbkssd.groundtruth import GroundTruthRecord
from kbkssd.pipeline import DatasetRunner


@dataclass(frozen=True)
class ParamBounds:
    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if not (len(self.names) == lo.size == hi.size) or lo.size == 0:
            raise ValueError("bounds need one (name, lower, upper) triple per parameter")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate parameter names in bounds")
        if not (lo < hi).all():
            raise ValueError("every lower bound must be below its upper bound")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return len(self.names)

    @classmethod
    def from_triples(cls, triples: Sequence[tuple[str, float, float]]) -> "ParamBounds":
        names, lo, hi = zip(*triples) if triples else ((), (), ())
        return cls(tuple(names), np.array(lo, dtype=float), np.array(hi, dtype=float))


def default_bounds() -> ParamBounds:
    """Ranges around the default calibrated configuration."""
    return ParamBounds.from_triples([
        ("prob_win_size", 400, 600),
        ("step_win_size", 50, 90),
        ("t_crit", 3.0, 5.0),
        ("prob_threshold", 0.75, 0.95),
        ("outlier_win_size", 80, 120),
    ])


def load_bounds(path: str | Path) -> ParamBounds:
    """Read ``name,lower,upper`` CSV rows, or JSON ``{name: [lower, upper]}``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"bounds file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        if isinstance(data, dict):
            triples = [(k, float(v[0]), float(v[1])) for k, v in data.items()]
        else:
            triples = [(str(t[0]), float(t[1]), float(t[2])) for t in data]
    else:
        rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        if rows and rows[0][0].strip().lower() == "name":
            rows = rows[1:]
        if any(len(r) != 3 for r in rows):
            raise ValueError(f"{path}: each row must be name,lower,upper")
        triples = [(r[0].strip(), float(r[1]), float(r[2])) for r in rows]
    return ParamBounds.from_triples(triples)


def evaluation_count(d: int, n_base: int, second_order: bool) -> int:
    return n_base * (2 * d + 2 if second_order else d + 2)


def saltelli_sample(bounds: ParamBounds, n_base: int, second_order: bool = True,
                    seed: int = 0) -> np.ndarray:
    """Saltelli design scaled to ``bounds``; one row per model evaluation.

    ``A`` and ``B`` are the two halves of a scrambled ``2d``-dimensional Sobol'
    sequence, so the design is fully determined by ``seed``.
    """
    if n_base < 2:
        raise ValueError("n_base must be at least 2")
    d = bounds.d
    sampler = qmc.Sobol(d=2 * d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # non powers of two lose the balance property but remain valid
        warnings.simplefilter("ignore", UserWarning)
        base = sampler.random(n_base)
    a, b = base[:, :d], base[:, d:]
    blocks = [a, b]
    for i in range(d):
        ab = a.copy()
        ab[:, i] = b[:, i]
        blocks.append(ab)
    if second_order:
        for i in range(d):
            ba = b.copy()
            ba[:, i] = a[:, i]
            blocks.append(ba)
    unit = np.vstack(blocks)
    return bounds.lower + unit * (bounds.upper - bounds.lower)


def point_config(point: Sequence[float], names: Sequence[str],
                 base: DetectorConfig | None = None) -> DetectorConfig:
    """Configuration for one design row; integer parameters are rounded."""
    values: dict[str, Any] = {}
    for name, v in zip(names, point):
        values[name] = int(round(float(v))) if name in INTEGER_FIELDS else float(v)
    return config_from_mapping(values, base)


def l2_norm(errors: Sequence[float]) -> float:
    return math.sqrt(sum(float(e) * float(e) for e in errors))


def l2_errors(outcomes, labels: Sequence[GroundTruthRecord],
              lengths: Sequence[int]) -> list[int]:
    """Per-series index error; a missed steady state costs the series length."""
    errs = []
    for p, g, n in zip(outcomes, labels, lengths):
        errs.append(abs(p.ssi - g.ssi) if p.steady else n)
    return errs


class Objective:
    """L2 error of the detector over the steady-labelled series of a dataset."""

    def __init__(self, dataset: Sequence[TimeSeries], labels: Sequence[GroundTruthRecord],
                 names: Sequence[str], base: DetectorConfig | None = None):
        by_id = {r.series_id: r for r in labels}
        missing = [s.id for s in dataset if s.id not in by_id]
        if missing:
            raise ValueError(f"no label for series {missing[:5]}")
        self.keep = [i for i, s in enumerate(dataset) if by_id[s.id].steady]
        self.labels = [by_id[dataset[i].id] for i in self.keep]
        self.lengths = [len(dataset[i]) for i in self.keep]
        self.runner = DatasetRunner(dataset)
        self.names = tuple(names)
        self.base = base or default_config()

    def __call__(self, point: Sequence[float]) -> float:
        cfg = point_config(point, self.names, self.base)
        outcomes = self.runner.run(cfg, self.keep)
        return l2_norm(l2_errors(outcomes, self.labels, self.lengths))


def l2_objective(dataset: Sequence[TimeSeries], labels: Sequence[GroundTruthRecord],
                 point: Sequence[float], names: Sequence[str],
                 base: DetectorConfig | None = None) -> float:
    return Objective(dataset, labels, names, base)(point)


@dataclass(frozen=True)
class SobolResult:
    names: tuple[str, ...]
    s1: np.ndarray
    s1_conf: np.ndarray
    st: np.ndarray
    st_conf: np.ndarray
    s2: np.ndarray | None
    s2_conf: np.ndarray | None
    variance: float
    degenerate: bool = False

    def to_dict(self) -> dict[str, Any]:
        def clean(a):
            if a is None:
                return None
            return [clean(v) for v in a] if isinstance(a, (list, np.ndarray)) \
                else (None if not math.isfinite(float(a)) else float(a))

        return {"names": list(self.names), "variance": self.variance,
                "degenerate": self.degenerate,
                "s1": clean(self.s1), "s1_conf": clean(self.s1_conf),
                "st": clean(self.st), "st_conf": clean(self.st_conf),
                "s2": clean(self.s2), "s2_conf": clean(self.s2_conf)}


def _blocks(y: np.ndarray, d: int, n_base: int, second_order: bool) -> np.ndarray:
    k = 2 * d + 2 if second_order else d + 2
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != k * n_base:
        raise ValueError(f"expected {k * n_base} evaluations for d={d}, n_base={n_base}, got {y.size}")
    return y.reshape(k, n_base)


def _estimate(blocks: np.ndarray, d: int, second_order: bool) -> tuple[np.ndarray, ...]:
    # blocks: (k, n) or (r, k, n) for r bootstrap replicates
    fa, fb = blocks[..., 0, :], blocks[..., 1, :]
    fab = blocks[..., 2:2 + d, :]
    var = np.var(np.concatenate([fa, fb], axis=-1), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = np.mean(fb[..., None, :] * (fab - fa[..., None, :]), axis=-1) / var[..., None]
        st = 0.5 * np.mean((fa[..., None, :] - fab) ** 2, axis=-1) / var[..., None]
        s2 = None
        if second_order:
            fba = blocks[..., 2 + d:2 + 2 * d, :]
            ab_prod = np.mean(fa * fb, axis=-1)[..., None, None]
            cross = np.einsum("...in,...jn->...ij", fba, fab) / fa.shape[-1]
            s2 = (cross - ab_prod) / var[..., None, None] - s1[..., :, None] - s1[..., None, :]
            idx = np.arange(d)
            s2[..., idx, idx] = np.nan
            s2 = _upper_mirror(s2)
    return var, s1, st, s2


def _upper_mirror(s2: np.ndarray) -> np.ndarray:
    # the estimator is defined for i < j; mirror it to make the matrix symmetric
    d = s2.shape[-1]
    iu = np.triu_indices(d, 1)
    out = s2.copy()
    out[..., iu[1], iu[0]] = s2[..., iu[0], iu[1]]
    return out


def bootstrap_ci(evaluations: np.ndarray, estimator: Callable[[np.ndarray], np.ndarray],
                 resamples: int = 100, level: float = 0.95, seed: int = 0,
                 method: str = "normal") -> np.ndarray:
    """Bootstrap interval for every value returned by ``estimator``.

    ``evaluations`` has shape ``(k, n_base)``; base-sample columns are drawn
    with replacement jointly across all blocks. ``method="normal"`` gives
    ``estimate +/- z * sd(replicates)``; ``"percentile"`` takes replicate
    quantiles. Returns an array of shape ``estimate.shape + (2,)``.
    """
    if resamples < 1:
        raise ValueError("resamples must be at least 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    evaluations = np.asarray(evaluations, dtype=np.float64)
    point = np.asarray(estimator(evaluations), dtype=np.float64)
    rng = np.random.default_rng(seed)
    n = evaluations.shape[-1]
    reps = np.stack([np.asarray(estimator(evaluations[..., rng.integers(0, n, n)]), dtype=np.float64)
                     for _ in range(resamples)])
    if method == "normal":
        z = stats.norm.ppf(0.5 + level / 2)
        half = z * np.std(reps, axis=0, ddof=1) if resamples > 1 else np.zeros_like(point)
        return np.stack([point - half, point + half], axis=-1)
    if method == "percentile":
        lo, hi = np.quantile(reps, [0.5 - level / 2, 0.5 + level / 2], axis=0)
        return np.stack([lo, hi], axis=-1)
    raise ValueError(f"unknown interval method {method!r}")


def sobol_indices(evaluations: Sequence[float] | np.ndarray, d: int, n_base: int,
                  second_order: bool = True, names: Sequence[str] | None = None,
                  resamples: int = 100, level: float = 0.95, seed: int = 0) -> SobolResult:
    """First, second and total-order indices with bootstrap intervals.

    A model with zero output variance has no defined indices: every entry is
    NaN and ``degenerate`` is set. Negative estimates are reported unclamped.
    """
    blocks = _blocks(evaluations, d, n_base, second_order)
    names = tuple(names) if names is not None else tuple(f"x{i + 1}" for i in range(d))
    var, s1, st, s2 = _estimate(blocks, d, second_order)
    var = float(var)
    if not var > 0.0:
        nan = np.full(d, np.nan)
        s2n = np.full((d, d), np.nan) if second_order else None
        return SobolResult(names, nan, np.full((d, 2), np.nan), nan.copy(),
                           np.full((d, 2), np.nan), s2n,
                           None if s2n is None else np.full((d, d, 2), np.nan), var, True)

    def pick(which: int) -> Callable[[np.ndarray], np.ndarray]:
        return lambda b: _estimate(b, d, second_order)[which]

    s1_conf = bootstrap_ci(blocks, pick(1), resamples, level, seed)
    st_conf = bootstrap_ci(blocks, pick(2), resamples, level, seed)
    s2_conf = bootstrap_ci(blocks, pick(3), resamples, level, seed) if second_order else None
    return SobolResult(names, s1, s1_conf, st, st_conf, s2, s2_conf, var)


def run_sobol(dataset: Sequence[TimeSeries], labels: Sequence[GroundTruthRecord],
              bounds: ParamBounds, n_base: int, second_order: bool = True, seed: int = 0,
              resamples: int = 100, level: float = 0.95,
              base: DetectorConfig | None = None) -> tuple[np.ndarray, np.ndarray, SobolResult]:
    """Sample, evaluate the detector objective on every row, and estimate indices."""
    design = saltelli_sample(bounds, n_base, second_order, seed)
    objective = Objective(dataset, labels, bounds.names, base)
    y = np.array([objective(row) for row in design])
    result = sobol_indices(y, bounds.d, n_base, second_order, bounds.names,
                           resamples, level, seed)
    return design, y, result


def result_csv(result: SobolResult) -> str:
    """One row per parameter with S1/ST intervals, then the S2 pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["index", "param", "param2", "value", "ci_low", "ci_high"])

    def fmt(v: float) -> str:
        return "" if not math.isfinite(v) else repr(float(v))

    for kind, val, conf in (("S1", result.s1, result.s1_conf), ("ST", result.st, result.st_conf)):
        for i, name in enumerate(result.names):
            w.writerow([kind, name, "", fmt(val[i]), fmt(conf[i, 0]), fmt(conf[i, 1])])
    if result.s2 is not None and result.s2_conf is not None:
        d = len(result.names)
        for i in range(d):
            for j in range(i + 1, d):
                w.writerow(["S2", result.names[i], result.names[j], fmt(result.s2[i, j]),
                            fmt(result.s2_conf[i, j, 0]), fmt(result.s2_conf[i, j, 1])])
    return buf.getvalue()
