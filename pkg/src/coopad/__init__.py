"""Cooperative time-series anomaly detection.

Patch-level time/frequency classification produces anomaly probabilities
that softly mask a reconstruction autoencoder; residual features between
input and reconstruction drive a second classification stage. Scores are
the sum of classification probability and reconstruction error.
"""

from .model import CoopConfig, CoopModel, ForwardResult, PatchProbabilities
from .train import TrainConfig, fit
from .score import detect

__all__ = [
    "CoopConfig", "CoopModel", "ForwardResult", "PatchProbabilities",
    "TrainConfig", "fit", "detect",
]

__version__ = "0.1.0"
