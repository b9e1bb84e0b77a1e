"""Reference labels from five human judgments."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

JUDGES = 5
NOISE = -1
LabelKind = Literal["clustered", "scattered"]


@dataclass(frozen=True)
class JudgmentSet:
    series_id: str
    labels: tuple[bool, ...]
    indices: tuple[int, ...]
    length: int | None = None

    def __post_init__(self) -> None:
        if len(self.labels) != JUDGES:
            raise ValueError(f"{self.series_id}: expected {JUDGES} labels, got {len(self.labels)}")
        if len(self.indices) > sum(self.labels):
            raise ValueError(f"{self.series_id}: more indices than steady votes")
        if any(i < 0 for i in self.indices):
            raise ValueError(f"{self.series_id}: indices must be non-negative")


@dataclass(frozen=True)
class GroundTruthRecord:
    series_id: str
    steady: bool
    ssi: int | None
    label_kind: LabelKind | None = None

    def __post_init__(self) -> None:
        if self.steady != (self.ssi is not None):
            raise ValueError(f"{self.series_id}: ssi must be present exactly when steady")


def dbscan_1d(points: Sequence[float], eps: float, min_pts: int) -> list[int]:
    """DBSCAN on the real line.

    Returns a cluster id per input point (``-1`` for noise). A point is core
    when at least ``min_pts`` points, itself included, lie within ``eps``.
    Points are visited in ascending value order (stable for equal values), so
    cluster ids grow from left to right and border points join the first
    cluster that reaches them.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    order = sorted(range(len(points)), key=lambda i: points[i])
    values = [float(points[i]) for i in order]

    def neighbours(j: int) -> list[int]:
        return [k for k, v in enumerate(values) if abs(v - values[j]) <= eps]

    labels = [None] * len(values)  # type: list[int | None]
    cluster = -1
    for j in range(len(values)):
        if labels[j] is not None:
            continue
        seeds = neighbours(j)
        if len(seeds) < min_pts:
            labels[j] = NOISE
            continue
        cluster += 1
        labels[j] = cluster
        queue = [k for k in seeds if k != j]
        while queue:
            k = queue.pop(0)
            if labels[k] == NOISE:
                labels[k] = cluster
            if labels[k] is not None:
                continue
            labels[k] = cluster
            reach = neighbours(k)
            if len(reach) >= min_pts:
                queue.extend(reach)
    out = [NOISE] * len(points)
    for j, i in enumerate(order):
        out[i] = labels[j]  # type: ignore[assignment]
    return out


def _consensus(indices: Sequence[int], eps: float, min_pts: int) -> tuple[int, LabelKind]:
    ids = dbscan_1d(indices, eps, min_pts)
    clusters: dict[int, list[int]] = {}
    for value, cid in zip(indices, ids):
        if cid != NOISE:
            clusters.setdefault(cid, []).append(int(value))
    # a consensus needs a majority of the five judges
    big = [sorted(c) for c in clusters.values() if len(c) >= 3]
    if big:
        best = min(big, key=lambda c: (-len(c), c[0]))
        return best[len(best) // 2], "clustered"
    ordered = sorted(int(v) for v in indices)
    return ordered[len(ordered) // 2], "scattered"


def aggregate_indices(indices: Sequence[int], eps: float, min_pts: int = 3) -> tuple[int, LabelKind]:
    """Reference index from five judged indices.

    The largest DBSCAN cluster (ties: the one starting lower) decides: its
    median for three or five members, its third-smallest member for four.
    With no cluster of at least three, the median of all five is used and the
    label is ``"scattered"``.
    """
    if len(indices) != JUDGES:
        raise ValueError(f"expected {JUDGES} indices, got {len(indices)}")
    return _consensus(indices, eps, min_pts)


def aggregate_labels(labels: Sequence[bool]) -> bool:
    if len(labels) != JUDGES:
        raise ValueError(f"expected {JUDGES} labels, got {len(labels)}")
    return sum(bool(v) for v in labels) >= 3


def default_eps(length: int | None) -> float:
    if length is None:
        return 5.0
    return max(5.0, 0.01 * length)


def build_record(judgments: JudgmentSet, eps: float | None = None,
                 min_pts: int = 3) -> GroundTruthRecord:
    """Aggregate one judgment set.

    When fewer than five steady-voting judges supplied indices, the same
    consensus rule runs on the indices that exist.
    """
    if not aggregate_labels(judgments.labels):
        return GroundTruthRecord(judgments.series_id, False, None, None)
    if not judgments.indices:
        raise ValueError(f"{judgments.series_id}: steady by majority but no indices given")
    if eps is None:
        eps = default_eps(judgments.length)
    ssi, kind = _consensus(judgments.indices, eps, min_pts)
    return GroundTruthRecord(judgments.series_id, True, ssi, kind)


def _flag(text: str, where: str) -> bool:
    text = text.strip()
    if text not in ("0", "1"):
        raise ValueError(f"{where}: label must be 0 or 1, got {text!r}")
    return text == "1"


def read_judgments(path: str | Path) -> list[JudgmentSet]:
    """Parse ``series_id,label_1..label_5,idx_1..idx_5[,length]`` rows."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"judgments file not found: {path}")
    out = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        needed = ["series_id"] + [f"label_{i}" for i in range(1, 6)] + [f"idx_{i}" for i in range(1, 6)]
        missing = [c for c in needed if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {', '.join(missing)}")
        for line, row in enumerate(reader, start=2):
            where = f"{path}:{line}"
            labels = tuple(_flag(row[f"label_{i}"], where) for i in range(1, 6))
            indices = []
            for i in range(1, 6):
                cell = (row[f"idx_{i}"] or "").strip()
                if cell:
                    try:
                        indices.append(int(cell))
                    except ValueError:
                        raise ValueError(f"{where}: index {cell!r} is not an integer") from None
            length = (row.get("length") or "").strip()
            out.append(JudgmentSet(row["series_id"], labels, tuple(indices),
                                   int(length) if length else None))
    return out


LABEL_COLUMNS = ["series_id", "steady", "ssi", "label_kind"]


def write_labels(records: Sequence[GroundTruthRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(LABEL_COLUMNS)
    for r in records:
        writer.writerow([r.series_id, int(r.steady), "" if r.ssi is None else r.ssi,
                         r.label_kind or ""])
    return buf.getvalue()


def read_labels(path: str | Path) -> list[GroundTruthRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"labels file not found: {path}")
    out = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in LABEL_COLUMNS[:3] if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {', '.join(missing)}")
        for line, row in enumerate(reader, start=2):
            steady = _flag(row["steady"], f"{path}:{line}")
            ssi = row["ssi"].strip()
            kind = (row.get("label_kind") or "").strip() or None
            if kind not in (None, "clustered", "scattered"):
                raise ValueError(f"{path}:{line}: unknown label_kind {kind!r}")
            out.append(GroundTruthRecord(row["series_id"], steady,
                                         int(ssi) if ssi else None, kind))  # type: ignore[arg-type]
    return out
