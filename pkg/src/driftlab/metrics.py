"""Detection quality (MTD/FAC/MDC), RMSE, generalized MCC and uncertainty deciles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MATCH_WINDOW = 600


@dataclass(frozen=True)
class DetectionReport:
    mtd: Optional[float]
    fac: int
    mdc: int
    matching_window: int
    matches: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.fac < 0 or self.mdc < 0:
            raise ValueError("counts must be nonnegative")
        if (self.mtd is None) != (len(self.matches) == 0):
            raise ValueError("mtd is defined exactly when something matched")


@dataclass(frozen=True)
class PredictionReport:
    rmse: Optional[float]
    mcc: Optional[float]
    n_evaluated: int
    retrain_count: int
    labels_acquired: int

    def __post_init__(self):
        if (self.rmse is None) == (self.mcc is None):
            raise ValueError("exactly one of rmse and mcc must be set")


@dataclass(frozen=True)
class DecileReport:
    task: str
    mean_uncertainty: np.ndarray
    error: np.ndarray  # RMSE per decile (regression) or accuracy (classification)
    counts: np.ndarray

    def rows(self):
        for i in range(len(self.counts)):
            yield i + 1, float(self.mean_uncertainty[i]), float(self.error[i]), int(self.counts[i])


def _time(d) -> int:
    return int(getattr(d, "time_index", d))


def detection_metrics(truth: Sequence[int], detections: Sequence, window: int = MATCH_WINDOW) -> DetectionReport:
    """Greedy matching: each true drift τ, in time order, takes the earliest
    unmatched detection in (τ, τ + window].

    ``detections`` may be DriftSignal objects or plain time indices.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    times = [_time(d) for d in detections]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("detections must be time-sorted")
    used = [False] * len(times)
    matches = []
    for tau in sorted(int(t) for t in truth):
        for i, d in enumerate(times):
            if not used[i] and tau < d <= tau + window:
                used[i] = True
                matches.append((tau, d))
                break
    mtd = float(np.mean([d - tau for tau, d in matches])) if matches else None
    return DetectionReport(mtd, used.count(False), len(truth) - len(matches), int(window), tuple(matches))


def rmse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if p.size == 0 or p.size != y.size:
        raise ValueError("rmse needs equal nonzero lengths")
    return float(np.sqrt(np.mean((p - y) ** 2)))


def confusion_matrix(predicted, actual, K: int) -> np.ndarray:
    p = np.asarray(predicted, dtype=np.int64).ravel()
    a = np.asarray(actual, dtype=np.int64).ravel()
    if p.size != a.size:
        raise ValueError("predicted and actual differ in length")
    if p.size and (min(p.min(), a.min()) < 0 or max(p.max(), a.max()) >= K):
        raise ValueError(f"label outside [0, {K})")
    C = np.zeros((K, K), dtype=np.int64)
    np.add.at(C, (a, p), 1)  # rows: truth, columns: prediction
    return C


def mcc_from_confusion(C) -> float:
    C = np.asarray(C, dtype=np.int64)
    s = int(C.sum())
    c = int(np.trace(C))
    t = C.sum(axis=1)
    p = C.sum(axis=0)
    # exact integer arithmetic up to the final division
    num = c * s - int(np.dot(p, t))
    den = (s * s - int(np.dot(p, p))) * (s * s - int(np.dot(t, t)))
    if den == 0:
        return 0.0
    return num / math.sqrt(den)


def mcc(predicted, actual, K: int) -> float:
    """Generalized (multiclass) Matthews correlation; 0 when undefined."""
    return mcc_from_confusion(confusion_matrix(predicted, actual, K))


def prediction_report(record, n_classes: Optional[int] = None) -> PredictionReport:
    if record.task == "regression":
        return PredictionReport(rmse(record.predictions, record.targets), None,
                                len(record.targets), record.n_retrains, record.labels_acquired)
    K = n_classes or int(max(np.max(record.predictions), np.max(record.targets))) + 1
    return PredictionReport(None, mcc(record.predictions, record.targets, K),
                            len(record.targets), record.n_retrains, record.labels_acquired)


def decile_bounds(n: int, groups: int = 10) -> list[tuple[int, int]]:
    """Contiguous group slices; the first ``n % groups`` groups get one extra."""
    base, extra = divmod(n, groups)
    bounds, start = [], 0
    for g in range(groups):
        size = base + (1 if g < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def decile_analysis(uncertainty, predictions, targets, task: str) -> DecileReport:
    u = np.asarray(uncertainty, dtype=float).ravel()
    p = np.asarray(predictions).ravel()
    y = np.asarray(targets).ravel()
    if u.size < 10:
        raise ValueError("decile analysis needs at least 10 records")
    if not (u.size == p.size == y.size):
        raise ValueError("uncertainty, predictions and targets differ in length")
    order = np.argsort(u, kind="stable")
    if task == "regression":
        err = (p.astype(float) - y.astype(float)) ** 2
    elif task == "classification":
        err = (p == y).astype(float)
    else:
        raise ValueError(f"unknown task {task!r}")
    mu, ev, cnt = [], [], []
    for a, b in decile_bounds(u.size):
        sel = order[a:b]
        mu.append(u[sel].mean())
        ev.append(math.sqrt(err[sel].mean()) if task == "regression" else err[sel].mean())
        cnt.append(b - a)
    return DecileReport(task, np.array(mu), np.array(ev), np.array(cnt))


def spearman(a, b) -> float:
    """Rank correlation with average ranks for ties."""
    def ranks(x):
        x = np.asarray(x, dtype=float)
        order = np.argsort(x, kind="stable")
        r = np.empty(len(x))
        r[order] = np.arange(len(x), dtype=float)
        for v in np.unique(x):
            sel = x == v
            r[sel] = r[sel].mean()
        return r
    ra, rb = ranks(a), ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    den = math.sqrt(float(np.dot(ra, ra) * np.dot(rb, rb)))
    return float(np.dot(ra, rb) / den) if den else 0.0
