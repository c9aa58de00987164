"""Synthetic drifting streams with known real and virtual drift points.

Real drifts change the target function *and* the distribution of the relevant
features, so the change is visible in the model's inputs. Virtual drifts only
move the noise features; the target given the relevant features is untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import StreamDataset

N_FRIEDMAN = 10
N_MIXED = 6
# per-regime tables are indexed by the real regime r, cycling past the end
# offset added to the five relevant Friedman features
FRIEDMAN_OFFSETS = (0.0, 1.0, -1.0, 2.0)
# P(b1 != b2) in real regime r; b1, b2 stay Bernoulli(0.5) marginally
MIXED_DISAGREE = (0.5, 0.9, 0.6, 0.95)


def _per_regime(real: np.ndarray, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values[real % len(values)]


@dataclass(frozen=True)
class DriftSchedule:
    real_drifts: tuple[int, ...]
    virtual_drifts: tuple[int, ...]
    length: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "real_drifts", tuple(int(t) for t in self.real_drifts))
        object.__setattr__(self, "virtual_drifts", tuple(int(t) for t in self.virtual_drifts))
        for name, ts in (("real", self.real_drifts), ("virtual", self.virtual_drifts)):
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError(f"{name} drift indices must be strictly increasing")
            if any(not 0 < t < self.length for t in ts):
                raise ValueError(f"{name} drift index outside (0, {self.length})")
        if set(self.real_drifts) & set(self.virtual_drifts):
            raise ValueError("real and virtual drift indices overlap")

    def regimes(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-instance count of real and of virtual drifts strictly before it.

        A drift at τ takes effect from τ + 1, matching the (τ, τ + window]
        detection window of the metrics.
        """
        t = np.arange(self.length)
        real = np.searchsorted(np.asarray(self.real_drifts, dtype=int), t, side="left")
        virtual = np.searchsorted(np.asarray(self.virtual_drifts, dtype=int), t, side="left")
        return real, virtual

    def lines(self) -> list[str]:
        events = [(t, "real") for t in self.real_drifts] + [(t, "virtual") for t in self.virtual_drifts]
        return [f"{kind} {t}" for t, kind in sorted(events)]

    @classmethod
    def parse(cls, text: str, length: int, seed: int = 0) -> "DriftSchedule":
        real, virtual = [], []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2 or parts[0] not in ("real", "virtual"):
                raise ValueError(f"schedule line {lineno}: expected '<real|virtual> <index>', got {line!r}")
            (real if parts[0] == "real" else virtual).append(int(parts[1]))
        return cls(tuple(real), tuple(virtual), length, seed)


def schedule_like_paper(kind: str = "friedman", seed: int = 0) -> DriftSchedule:
    if kind not in ("friedman", "mixed"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return DriftSchedule((4500, 7500, 10500), (6000, 9000), 15000, seed)


# cyclic shift of the five relevant features; every power of it below 5 is a derangement
_DERANGEMENT = np.array([1, 2, 3, 4, 0])


def friedman_function(X, regime: int = 0) -> np.ndarray:
    """Noise-free Friedman #1 target for regime ``regime``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    perm = np.arange(5)
    for _ in range(regime):
        perm = perm[_DERANGEMENT]
    x = X[:, perm]
    amp = 10.0 * (1.0 + 0.5 * regime)
    return amp * np.sin(np.pi * x[:, 0] * x[:, 1]) + 20.0 * (x[:, 2] - 0.5) ** 2 + 10.0 * x[:, 3] + 5.0 * x[:, 4]


def friedman_stream(schedule: DriftSchedule, noise: float = 1.0,
                    offsets=FRIEDMAN_OFFSETS) -> StreamDataset:
    rng = np.random.default_rng(schedule.seed)
    n = schedule.length
    real, virtual = schedule.regimes()
    U = rng.random((n, N_FRIEDMAN))
    eps = rng.standard_normal(n)
    X = U.copy()
    X[:, :5] += _per_regime(real, offsets)[:, None]
    # virtual regime v >= 1 draws noise features from U[v, v + 1]
    X[:, 5:] += virtual[:, None]
    y = np.empty(n)
    for r in np.unique(real):
        sel = real == r
        y[sel] = friedman_function(X[sel], int(r))
    y += noise * eps
    return StreamDataset(X, y, "regression", name="friedman", segments=_segments(real, virtual))


def mixed_label(X, regime: int = 0) -> np.ndarray:
    """1 when at least two of (b1, b2, boundary condition) hold; odd regimes flip the boundary."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    b1, b2, d1, d2 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    cond = d1 < 0.5 + 0.3 * np.sin(3.0 * np.pi * d2)
    if regime % 2:
        cond = ~cond
    votes = (b1 > 0.5).astype(int) + (b2 > 0.5).astype(int) + cond.astype(int)
    return (votes >= 2).astype(int)


def mixed_stream(schedule: DriftSchedule, disagree=MIXED_DISAGREE) -> StreamDataset:
    rng = np.random.default_rng(schedule.seed)
    n = schedule.length
    real, virtual = schedule.regimes()
    b1 = rng.integers(0, 2, size=n)
    flip = rng.random(n) < _per_regime(real, disagree)
    B = np.column_stack([b1, b1 ^ flip]).astype(float)
    D = rng.integers(0, 10, size=(n, 4)) / 9.0
    # virtual drifts move d3, d4 from {0..9}/9 to {5..14}/9 (further per regime)
    D[:, 2:] += (5.0 * virtual / 9.0)[:, None]
    X = np.hstack([B, D])
    y = np.empty(n, dtype=int)
    for r in np.unique(real):
        sel = real == r
        y[sel] = mixed_label(X[sel], int(r))
    return StreamDataset(X, y, "classification", name="mixed", n_classes=2,
                         segments=_segments(real, virtual))


def _segments(real: np.ndarray, virtual: np.ndarray) -> np.ndarray:
    return real * 100 + virtual


def generate(kind: str, seed: int = 0, schedule: DriftSchedule | None = None) -> tuple[StreamDataset, DriftSchedule]:
    schedule = schedule or schedule_like_paper(kind, seed)
    if kind == "friedman":
        return friedman_stream(schedule), schedule
    if kind == "mixed":
        return mixed_stream(schedule), schedule
    raise ValueError(f"unknown synthetic kind {kind!r}")
