"""Point predictions and scalar uncertainty from MC-dropout samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nnet import PredictiveSample


@dataclass(frozen=True)
class UncertaintyScore:
    kind: str  # "entropy_bits" or "variance"
    value: float
    prediction: object  # probability vector (classification) or float (regression)
    predicted_class: Optional[int] = None


def predictive_mean(sample: PredictiveSample) -> np.ndarray:
    passes = sample.passes
    if passes.shape[0] == 0:
        raise ValueError("empty sample")
    return passes.mean(axis=0)


def entropy(p) -> float:
    """Shannon entropy in bits, with 0 * log2(0) taken as 0."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("entropy expects a probability vector")
    nz = p[p > 0]
    h = -float(np.sum(nz * np.log2(nz)))
    return h if h > 0.0 else 0.0


def variance(sample: PredictiveSample) -> float:
    """Population variance (divide by T) of scalar passes."""
    passes = sample.passes
    if passes.ndim == 2 and passes.shape[1] != 1:
        raise ValueError("variance needs scalar passes")
    # shifting by one pass keeps identical passes at exactly zero
    vals = passes.reshape(-1) - passes.reshape(-1)[0]
    return float(np.mean((vals - vals.mean()) ** 2))


def score(sample: PredictiveSample, task: str) -> UncertaintyScore:
    if task == "classification":
        if sample.head != "softmax":
            raise ValueError("classification needs a softmax sample")
        mean = predictive_mean(sample)
        # argmax returns the first maximum: ties go to the lowest class index
        return UncertaintyScore("entropy_bits", entropy(mean / mean.sum()), mean, int(np.argmax(mean)))
    if task == "regression":
        if sample.head != "linear":
            raise ValueError("regression needs a linear-head sample")
        return UncertaintyScore("variance", variance(sample), float(predictive_mean(sample)[0]))
    raise ValueError(f"unknown task {task!r}")
