"""Stream datasets: CSV loading, partitioning, standardization, label acquisition."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

MIN_STREAM = 100
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class LabeledInstance:
    x: np.ndarray
    y: object
    t: int
    segment_id: int = 0


@dataclass
class StreamDataset:
    """Instances in time order. ``y`` holds floats (regression) or class indices."""

    X: np.ndarray
    y: np.ndarray
    task: str
    name: str = "stream"
    n_classes: Optional[int] = None
    segments: Optional[np.ndarray] = None
    class_names: Optional[list] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "classification":
            self.y = np.asarray(self.y, dtype=int)
            if self.n_classes is None:
                self.n_classes = int(self.y.max()) + 1 if len(self.y) else 0
            if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
                raise ValueError("class index out of range")
        else:
            self.y = np.asarray(self.y, dtype=float)
        if len(self.y) != len(self.X):
            raise ValueError("X and y lengths differ")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __iter__(self) -> Iterator[LabeledInstance]:
        seg = self.segments if self.segments is not None else np.zeros(len(self), dtype=int)
        for t in range(len(self)):
            yield LabeledInstance(self.X[t], self.y[t].item(), t, int(seg[t]))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def load_csv(path, task: str, label_column: str = "target", name: Optional[str] = None) -> StreamDataset:
    """Read a header-first CSV; every non-label column must be numeric."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        feat_names = [h for i, h in enumerate(header) if i != li]
        rows, labels = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {rowno} has {len(row)} cells, expected {len(header)}")
            feats = []
            for i, cell in enumerate(row):
                if i == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(f"{path}: row {rowno}, column {header[i]!r}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}: row {rowno}, column {header[i]!r}: non-finite value {cell!r}")
                feats.append(v)
            rows.append(feats)
            labels.append(row[li].strip())
    if not rows:
        raise ValueError(f"{path}: no data rows")

    X = np.array(rows, dtype=float).reshape(len(rows), len(feat_names))
    if task == "classification":
        mapping: dict = {}
        y = np.array([mapping.setdefault(lab, len(mapping)) for lab in labels], dtype=int)
        return StreamDataset(X, y, task, name or path.stem, n_classes=len(mapping),
                             class_names=list(mapping))
    try:
        y = np.array([float(v) for v in labels])
    except ValueError:
        raise ValueError(f"{path}: non-numeric regression target") from None
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{path}: non-finite regression target")
    return StreamDataset(X, y, task, name or path.stem)


def write_csv(ds: StreamDataset, path, label_column: str = "target") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i + 1}" for i in range(ds.n_features)] + [label_column])
        for x, y in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in x] + [repr(y.item())])


@dataclass(frozen=True)
class Partition:
    n: int
    train: range
    validation: range
    stream: range
    retrain_batch_size: int


def partition(ds_or_n) -> Partition:
    """First 5% train, next 10% validation, rest stream; batch = 1% of length."""
    n = ds_or_n if isinstance(ds_or_n, int) else len(ds_or_n)
    if n < MIN_STREAM:
        raise ValueError(f"need at least {MIN_STREAM} instances, got {n}")
    n_train = _round_half_up(0.05 * n)
    n_val = _round_half_up(0.10 * n)
    return Partition(
        n=n,
        train=range(0, n_train),
        validation=range(n_train, n_train + n_val),
        stream=range(n_train + n_val, n),
        retrain_batch_size=max(1, _round_half_up(0.01 * n)),
    )


@dataclass
class TrainingPool:
    """Original training indices plus every label range acquired so far."""

    base: range
    acquired: list = field(default_factory=list)
    labels_acquired: int = 0

    def indices(self) -> np.ndarray:
        parts = [np.arange(self.base.start, self.base.stop)]
        parts += [np.arange(r.start, r.stop) for r in self.acquired]
        return np.concatenate(parts)

    @property
    def max_index(self) -> int:
        stops = [self.base.stop] + [r.stop for r in self.acquired]
        return max(stops) - 1


def acquire_recent(pool: TrainingPool, part: Partition, t: int) -> TrainingPool:
    """Add labels for [t - batch + 1, t], clipped to the stream and minus what is held."""
    if t not in part.stream:
        raise ValueError(f"t={t} outside stream region {part.stream}")
    lo = max(t - part.retrain_batch_size + 1, part.stream.start)
    wanted = np.ones(t + 1 - lo, dtype=bool)
    for r in pool.acquired:
        a, b = max(r.start, lo), min(r.stop, t + 1)
        if a < b:
            wanted[a - lo:b - lo] = False
    acquired = list(pool.acquired)
    gained = 0
    # split the still-missing indices into contiguous ranges
    edges = np.flatnonzero(np.diff(np.concatenate(([0], wanted.astype(np.int8), [0]))))
    for a, b in zip(edges[::2], edges[1::2]):
        acquired.append(range(lo + int(a), lo + int(b)))
        gained += int(b - a)
    return TrainingPool(pool.base, acquired, pool.labels_acquired + gained)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


class StandardizedView:
    """Lazily standardized rows of a dataset."""

    def __init__(self, ds: StreamDataset, transform: Standardizer):
        self.ds = ds
        self.transform = transform

    def __len__(self):
        return len(self.ds)

    def __getitem__(self, idx):
        return self.transform.transform(self.ds.X[idx])


def standardize(ds: StreamDataset, pool: TrainingPool):
    """Fit per-feature mean/std on the pool only; std floored at 1e-8."""
    idx = pool.indices()
    if len(idx) == 0:
        raise ValueError("empty training pool")
    Xp = ds.X[idx]
    mean = Xp.mean(axis=0)
    std = Xp.std(axis=0)
    tr = Standardizer(mean, np.maximum(std, STD_FLOOR))
    return tr, StandardizedView(ds, tr)
