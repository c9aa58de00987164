"""Retraining strategies over a prequential stream, and sensitivity calibration.

Every strategy shares one loop: standardize, predict with MC dropout, record,
then (maybe) acquire the most recent labels and retrain from scratch. They
differ only in what decides to retrain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import nnet
from .detectors import DEFAULT_DELTA, Adwin, DriftSignal, Kswin
from .ingest import Partition, StreamDataset, TrainingPool, acquire_recent, standardize
from .uncertainty import score

log = logging.getLogger(__name__)

STRATEGIES = (
    "no_retrain", "uninformed", "equal_distribution", "kswin_limited",
    "udd", "kswin_unlimited", "adwin_error",
)
BUDGET_MATCHED = ("uninformed", "equal_distribution", "kswin_limited")

# 1e-90, 1e-86, ..., 1e-6, 1e-2 plus a few coarse values near the default
CALIBRATION_GRID = tuple(sorted({10.0 ** e for e in range(-90, -1, 4)} | {2e-3, 1e-2, 0.05, 0.1}, reverse=True))


@dataclass
class RunRecord:
    strategy: str
    task: str
    stream_start: int
    predictions: np.ndarray
    uncertainty: np.ndarray
    targets: np.ndarray
    detections: list = field(default_factory=list)
    retrain_times: list = field(default_factory=list)
    labels_acquired: int = 0
    acquired: list = field(default_factory=list)
    # highest data index seen in training by the model that predicted each instance
    train_horizon: Optional[np.ndarray] = None
    seed: int = 0
    alpha: Optional[float] = None
    budget: Optional[int] = None

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.stream_start, self.stream_start + len(self.predictions))

    @property
    def n_retrains(self) -> int:
        return len(self.retrain_times)


# the input-layer group lasso keeps the network blind to features it does not need,
# which is what lets uncertainty ignore shifts in irrelevant inputs
DEFAULT_TRAIN = nnet.TrainConfig(input_group_l1=3.0, input_group_reweight=True)


@dataclass(frozen=True)
class Trainer:
    """How a (re)trained model is built: architecture plus optimiser settings."""

    spec: nnet.NetworkSpec
    cfg: nnet.TrainConfig = DEFAULT_TRAIN

    def fit(self, ds: StreamDataset, pool: TrainingPool, seed: int):
        transform, view = standardize(ds, pool)
        idx = pool.indices()
        cfg = replace(self.cfg, seed=seed, batch_size=min(self.cfg.batch_size, len(idx)))
        net = nnet.train(nnet.init_network(self.spec, seed), view[idx], ds.y[idx], cfg)
        return net, transform


def default_spec(ds: StreamDataset) -> nnet.NetworkSpec:
    if ds.task == "regression":
        return nnet.NetworkSpec((ds.n_features, 128, 64, 32, 16, 1), (0.2, 0.2, 0.1, 0.1), "linear")
    return nnet.NetworkSpec((ds.n_features, 128, 64, 32, 16, 8, ds.n_classes), (0.1,) * 5, "softmax")


def default_T(task: str) -> int:
    return 100 if task == "regression" else 50


def pass_seed(seed: int, t: int) -> int:
    """Mask seed for the MC passes at stream index ``t``."""
    return seed * 2**32 + t


def retrain_seed(seed: int, k: int) -> int:
    return seed * 1_000_003 + 7919 * (k + 1)


@dataclass
class Model:
    """A trained network with the standardization fitted on its training pool."""

    net: nnet.Network
    transform: object
    horizon: int

    def mc(self, ds: StreamDataset, t: int, T: int, seed: int):
        x = self.transform.transform(ds.X[t])
        return score(nnet.mc_predict(self.net, x, T, pass_seed(seed, t)), ds.task)


def initial_model(ds: StreamDataset, part: Partition, trainer: Trainer, seed: int) -> Model:
    pool = TrainingPool(part.train)
    net, transform = trainer.fit(ds, pool, seed)
    return Model(net, transform, part.train.stop - 1)


class _Trigger:
    """Decides after each prediction whether to retrain."""

    def __call__(self, t: int, u: float, pred, ds: StreamDataset) -> Optional[DriftSignal]:
        return None

    def after_retrain(self) -> None:
        pass


class _AdwinOnUncertainty(_Trigger):
    def __init__(self, alpha: float):
        self.adwin = Adwin(alpha)
        self.widths_after_reset: list = []

    def __call__(self, t, u, pred, ds):
        if self.adwin.update(u):
            return DriftSignal(t, "uncertainty_adwin")
        return None

    def after_retrain(self):
        self.adwin.reset()
        self.widths_after_reset.append(self.adwin.width)


class _AdwinOnError(_Trigger):
    def __init__(self, delta: float):
        self.adwin = Adwin(delta)

    def __call__(self, t, u, pred, ds):
        if ds.task == "classification":
            err = float(pred != ds.y[t])
        else:
            err = abs(float(ds.y[t]) - pred)
        if self.adwin.update(err):
            return DriftSignal(t, "error_adwin")
        return None

    def after_retrain(self):
        self.adwin.reset()


class _KswinOnFeatures(_Trigger):
    def __init__(self, alpha: float):
        self.kswin = Kswin(alpha)

    def __call__(self, t, u, pred, ds):
        detected, best = self.kswin.update(ds.X[t], t)
        return best if detected else None


class _Scheduled(_Trigger):
    def __init__(self, times: Sequence[int]):
        self.times = set(int(t) for t in times)

    def __call__(self, t, u, pred, ds):
        return DriftSignal(t, "uncertainty_adwin") if t in self.times else None


def _run(strategy: str, model: Model, ds: StreamDataset, part: Partition, trainer: Trainer,
         trigger: _Trigger, T: int, seed: int, record_signals: bool = True,
         on_step: Optional[Callable] = None) -> RunRecord:
    n = len(part.stream)
    classification = ds.task == "classification"
    preds = np.empty(n, dtype=int if classification else float)
    unc = np.empty(n)
    horizon = np.empty(n, dtype=int)
    pool = TrainingPool(part.train)
    detections, retrains = [], []
    for i, t in enumerate(part.stream):
        s = model.mc(ds, t, T, seed)
        pred = s.predicted_class if classification else s.prediction
        preds[i] = pred
        unc[i] = s.value
        horizon[i] = model.horizon
        if on_step is not None:
            on_step(t, model, pool)
        signal = trigger(t, s.value, pred, ds)
        if signal is None:
            continue
        if record_signals:
            detections.append(signal)
        pool = acquire_recent(pool, part, t)
        net, transform = trainer.fit(ds, pool, retrain_seed(seed, len(retrains)))
        model = Model(net, transform, pool.max_index)
        retrains.append(t)
        trigger.after_retrain()
    return RunRecord(
        strategy=strategy, task=ds.task, stream_start=part.stream.start,
        predictions=preds, uncertainty=unc, targets=ds.y[part.stream.start:part.stream.stop].copy(),
        detections=detections, retrain_times=retrains, labels_acquired=pool.labels_acquired,
        acquired=list(pool.acquired), train_horizon=horizon, seed=seed,
    )


def run_no_retrain(model: Model, ds, part, trainer: Trainer, T: int, seed: int) -> RunRecord:
    return _run("no_retrain", model, ds, part, trainer, _Trigger(), T, seed)


def run_udd(model: Model, ds, part, trainer: Trainer, alpha: float, T: int, seed: int,
            on_step: Optional[Callable] = None) -> RunRecord:
    """ADWIN on the MC-dropout uncertainty; each detection retrains and resets ADWIN."""
    rec = _run("udd", model, ds, part, trainer, _AdwinOnUncertainty(alpha), T, seed, on_step=on_step)
    rec.alpha = alpha
    return rec


def run_scheduled(strategy: str, model: Model, ds, part, trainer: Trainer, times, T: int,
                  seed: int, budget: Optional[int] = None) -> RunRecord:
    rec = _run(strategy, model, ds, part, trainer, _Scheduled(times), T, seed, record_signals=False)
    rec.budget = budget
    return rec


def uninformed_times(part: Partition, budget: int, seed: int) -> list:
    if budget > len(part.stream):
        raise ValueError("budget exceeds stream length")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(part.stream), size=budget, replace=False)
    return sorted(int(part.stream.start + p) for p in picks)


def run_uninformed(model: Model, ds, part, trainer: Trainer, budget: int, T: int,
                   seeds: Sequence[int]) -> list:
    """One run per seed with ``budget`` uniformly drawn retraining times."""
    return [
        run_scheduled("uninformed", model, ds, part, trainer, uninformed_times(part, budget, s), T, s, budget)
        for s in seeds
    ]


def equal_distribution_times(part: Partition, budget: int) -> list:
    L = len(part.stream)
    return [part.stream.start + int(np.floor(k * L / (budget + 1) + 0.5)) for k in range(1, budget + 1)]


def run_equal_distribution(model: Model, ds, part, trainer: Trainer, budget: int, T: int, seed: int) -> RunRecord:
    return run_scheduled("equal_distribution", model, ds, part, trainer,
                         equal_distribution_times(part, budget), T, seed, budget)


def kswin_pass(ds: StreamDataset, rows: range, alpha: float) -> list:
    """Detector-only pass over raw features; buffers reset after each signal."""
    det = Kswin(alpha)
    out = []
    for t in rows:
        detected, best = det.update(ds.X[t], t)
        if detected:
            out.append(best)
    return out


def select_by_p_value(signals: Sequence[DriftSignal], budget: int) -> list:
    ranked = sorted(signals, key=lambda s: (s.p_value, s.time_index))
    return sorted(s.time_index for s in ranked[:budget])


def run_kswin(model: Model, ds, part, trainer: Trainer, alpha: float, budget: Optional[int],
              T: int, seed: int) -> RunRecord:
    """Unlimited when ``budget`` is None; otherwise detect first, then replay."""
    if budget is None:
        rec = _run("kswin_unlimited", model, ds, part, trainer, _KswinOnFeatures(alpha), T, seed)
        rec.alpha = alpha
        return rec
    signals = kswin_pass(ds, part.stream, alpha)
    if not signals:
        log.warning("kswin_limited: no detections in the first pass; no retraining")
    times = select_by_p_value(signals, budget)
    rec = run_scheduled("kswin_limited", model, ds, part, trainer, times, T, seed, budget)
    chosen = set(times)
    rec.detections = [s for s in signals if s.time_index in chosen]
    rec.alpha = alpha
    return rec


def run_adwin_error(model: Model, ds, part, trainer: Trainer, T: int, seed: int,
                    delta: float = DEFAULT_DELTA) -> RunRecord:
    """Full-label baseline: ADWIN on the per-instance prediction error."""
    rec = _run("adwin_error", model, ds, part, trainer, _AdwinOnError(delta), T, seed)
    rec.labels_acquired = len(part.stream)
    rec.alpha = delta
    return rec


def validation_uncertainty(model: Model, ds, part, T: int, seed: int) -> np.ndarray:
    return np.array([model.mc(ds, t, T, seed).value for t in part.validation])


def count_adwin(values: np.ndarray, alpha: float) -> int:
    det = Adwin(alpha)
    return sum(det.update(v) for v in values)


def choose_alpha(counts: dict, default: float = DEFAULT_DELTA) -> float:
    """Largest alpha with exactly one detection, else closest count to one (ties: larger alpha)."""
    if not any(c >= 1 for c in counts.values()):
        return default
    exact = [a for a, c in counts.items() if c == 1]
    if exact:
        return max(exact)
    candidates = [(abs(c - 1), -a) for a, c in counts.items() if c >= 1]
    return -min(candidates)[1]


def calibration_sweep(model: Model, ds, part, detector_kind: str, T: int, seed: int,
                      grid: Sequence[float] = CALIBRATION_GRID) -> tuple[float, dict]:
    if len(part.validation) == 0:
        raise ValueError("empty validation segment")
    if detector_kind == "udd":
        values = validation_uncertainty(model, ds, part, T, seed)
        counts = {a: count_adwin(values, a) for a in grid}
    elif detector_kind == "kswin":
        counts = {a: len(kswin_pass(ds, part.validation, a)) for a in grid}
    else:
        raise ValueError(f"unknown detector kind {detector_kind!r}")
    return choose_alpha(counts), counts


def calibrate_alpha(model: Model, ds, part, detector_kind: str, T: int, seed: int) -> float:
    return calibration_sweep(model, ds, part, detector_kind, T, seed)[0]
