"""ADWIN and per-feature KSWIN change detectors plus the two-sample KS test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels

DEFAULT_DELTA = 0.002
# smallest positive double; p-values are clamped to (0, 1]
MIN_P = np.nextafter(0.0, 1.0)


@dataclass(frozen=True)
class DriftSignal:
    time_index: int
    source: str  # "uncertainty_adwin", "error_adwin" or "kswin"
    p_value: Optional[float] = None
    feature_index: Optional[int] = None

    def __post_init__(self):
        if self.time_index < 0:
            raise ValueError("negative time index")
        if (self.p_value is not None) != (self.source == "kswin"):
            raise ValueError("p_value is required for kswin signals and only for them")


class Adwin:
    """Adaptive windowing over an exponential histogram of buckets.

    ``delta`` is the confidence of the cut test; larger values react faster
    and raise more alarms.

    Examples
    --------
    >>> det = Adwin(0.002)
    >>> any(det.update(0.0) for _ in range(500))
    False
    >>> any(det.update(1.0) for _ in range(200))
    True
    """

    max_buckets = 5
    min_sub_window = 5
    min_width = 10
    n_levels = 48

    def __init__(self, delta: float = DEFAULT_DELTA):
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        self.delta = float(delta)
        self.reset()

    def reset(self) -> None:
        self._totals = np.zeros((self.n_levels, self.max_buckets + 1))
        self._variances = np.zeros((self.n_levels, self.max_buckets + 1))
        self._counts = np.zeros(self.n_levels, dtype=np.int64)
        self._scal = np.zeros(3)
        self.n_detections = 0

    def update(self, value: float) -> bool:
        value = float(value)
        if not math.isfinite(value):
            raise ValueError("ADWIN input must be finite")
        cuts = _kernels.adwin_update(
            self._totals, self._variances, self._counts, self._scal, value,
            self.delta, self.max_buckets, self.min_sub_window, float(self.min_width),
        )
        if cuts:
            self.n_detections += 1
        return bool(cuts)

    @property
    def width(self) -> int:
        return int(self._scal[_kernels.WIDTH])

    @property
    def total(self) -> float:
        return float(self._scal[_kernels.TOTAL])

    @property
    def estimation(self) -> float:
        w = self._scal[_kernels.WIDTH]
        return float(self._scal[_kernels.TOTAL] / w) if w else 0.0

    @property
    def variance(self) -> float:
        w = self._scal[_kernels.WIDTH]
        return float(self._scal[_kernels.VARIANCE] / w) if w else 0.0

    def buckets(self) -> list[list[tuple[float, int]]]:
        """(sum, count) per bucket, grouped by level, oldest first within a level."""
        return [
            [(float(self._totals[i, j]), 2**i) for j in range(self._counts[i])]
            for i in range(self.n_levels)
            if self._counts[i]
        ] if self._counts.any() else []

    def level_counts(self) -> np.ndarray:
        return self._counts.copy()


def adwin_add(state: Adwin, value: float) -> tuple[Adwin, bool]:
    """Functional-style wrapper: mutates and returns ``state``."""
    return state, state.update(value)


def ks_statistic(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("KS statistic needs two nonempty samples")
    return float(_kernels.ks_merge(np.sort(a), np.sort(b)))


def ks_p_value(D: float, n: int, m: int, tol: float = 1e-10) -> float:
    """Asymptotic two-sample Kolmogorov p-value, clamped to (0, 1]."""
    if not 0.0 <= D <= 1.0:
        raise ValueError("D must lie in [0, 1]")
    if n < 1 or m < 1:
        raise ValueError("sample sizes must be >= 1")
    return max(MIN_P, min(1.0, kolmogorov_series(D, n, m, tol)))


def kolmogorov_series(D: float, n: int, m: int, tol: float = 1e-10) -> float:
    """Unclamped 2 * sum_j (-1)^(j-1) exp(-2 j^2 lambda^2)."""
    en = n * m / (n + m)
    sq = math.sqrt(en)
    lam = D * (sq + 0.12 + 0.11 / sq)
    if lam == 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, 10_000):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += sign * term
        if term < tol:
            break
        sign = -sign
    return 2.0 * total


class Kswin:
    """Per-feature KS windowing.

    Each feature keeps its last ``window_size`` values; when full, the newest
    ``stat_size`` values are tested against the older ones.
    """

    def __init__(self, alpha: float = 0.005, window_size: int = 200, stat_size: int = 100):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < stat_size < window_size:
            raise ValueError("need 0 < stat_size < window_size")
        self.alpha = float(alpha)
        self.window_size = int(window_size)
        self.stat_size = int(stat_size)
        self.n_features: Optional[int] = None
        self.reset()

    def reset(self) -> None:
        self._buf: Optional[np.ndarray] = None if self.n_features is None else np.empty((self.window_size, self.n_features))
        self._fill = 0
        self._head = 0
        self.last_p_values: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self._fill

    def update(self, x, t: int = 0) -> tuple[bool, Optional[DriftSignal]]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.n_features is None:
            self.n_features = x.size
            self._buf = np.empty((self.window_size, x.size))
        elif x.size != self.n_features:
            raise ValueError(f"feature dimension changed from {self.n_features} to {x.size}")
        self._buf[self._head] = x
        self._head = (self._head + 1) % self.window_size
        self._fill = min(self._fill + 1, self.window_size)
        if self._fill < self.window_size:
            return False, None
        # ring buffer is full: oldest row sits at _head
        window = np.roll(self._buf, -self._head, axis=0)
        split = self.window_size - self.stat_size
        stats = _kernels.kswin_stats(np.ascontiguousarray(window), split)
        p = np.array([ks_p_value(min(1.0, d), split, self.stat_size) for d in stats])
        self.last_p_values = p
        best = int(np.argmin(p))
        if p[best] < self.alpha:
            signal = DriftSignal(int(t), "kswin", float(p[best]), best)
            self._fill = 0
            self._head = 0
            return True, signal
        return False, None


def kswin_add(state: Kswin, x, t: int = 0):
    detected, best = state.update(x, t)
    return state, detected, best
