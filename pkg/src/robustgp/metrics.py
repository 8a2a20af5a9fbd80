"""Predictive accuracy, calibration and detection metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError, InputError

VAR_FLOOR = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


def _pair(a, b):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch {a.size} vs {b.size}", axes=("prediction", "y_true"))
    return a, b


def rmse(mean, y_true) -> float:
    m, y = _pair(mean, y_true)
    return float(np.sqrt(np.mean((m - y) ** 2)))


def mae(mean, y_true) -> float:
    m, y = _pair(mean, y_true)
    return float(np.mean(np.abs(m - y)))


def nlpd(mean, variance, y_true, floor: bool = True) -> tuple[float, bool]:
    """Mean Gaussian negative log predictive density and whether the variance floor was hit."""
    m, y = _pair(mean, y_true)
    v, _ = _pair(variance, y_true)
    if np.any(v < 0):
        raise InputError("predictive variance must be nonnegative")
    hit = bool(np.any(v < VAR_FLOOR))
    if hit:
        if not floor:
            raise InputError("zero predictive variance; enable the variance floor")
        v = np.maximum(v, VAR_FLOOR)
    return float(np.mean(0.5 * ((y - m) ** 2 / v + np.log(v) + LOG_2PI))), hit


def detection_scores(truth, selected) -> tuple[float, float]:
    """(precision, recall); precision of an empty selection is 1, recall with no truth is 1."""
    truth = set(int(i) for i in truth)
    selected = set(int(i) for i in selected)
    tp = len(truth & selected)
    precision = tp / len(selected) if selected else 1.0
    recall = tp / len(truth) if truth else 1.0
    return precision, recall


@dataclass
class MetricRow:
    method: str
    replication: int
    rmse: float
    mae: float
    nlpd: float
    detect_precision: float | None = None
    detect_recall: float | None = None
    fit_seconds: float = 0.0
    jitter_warnings: int = 0
    variance_floored: bool = False
    trace_monotone: bool | None = None
    error: str = ""

    FIELDS = (
        "method", "replication", "rmse", "mae", "nlpd", "detect_precision", "detect_recall",
        "fit_seconds", "jitter_warnings", "variance_floored", "trace_monotone", "error",
    )

    def validate(self) -> None:
        if self.error:
            return
        if not (self.rmse >= 0 and self.mae >= 0):
            raise InputError(f"{self.method}: rmse/mae must be nonnegative")
        for name in ("detect_precision", "detect_recall"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InputError(f"{self.method}: {name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def failed(cls, method: str, replication: int, message: str) -> "MetricRow":
        nan = float("nan")
        return cls(method, replication, nan, nan, nan, error=message)


