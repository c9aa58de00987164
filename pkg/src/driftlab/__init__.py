"""Drift detection for neural-network regressors and classifiers from MC-dropout uncertainty."""

__version__ = "0.1.0"
