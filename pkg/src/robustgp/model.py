"""A fitted GP with robust variances, in original target units, plus JSON persistence."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError
from .gp import (
    HyperBounds,
    JitterWarning,
    Prediction,
    Standardizer,
    compute_state,
    fit_hyperparameters,
    initial_hyperparameters,
    posterior_predict,
)
from .kernels import KERNELS, Dataset, Hyperparameters
from .optimize import OptimizerConfig


@dataclass(frozen=True)
class RobustGPModel:
    """GP conditioned on training data with per-point robust variances.

    ``hyper`` and ``rho`` live on the standardized target scale; ``predict``
    returns de-standardized moments.
    """

    X: np.ndarray
    y: np.ndarray
    hyper: Hyperparameters
    rho: np.ndarray
    standardizer: Standardizer = field(default_factory=Standardizer)
    kernel: str = "matern52"
    jitter_warnings: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise InputError(f"unknown kernel {self.kernel!r}")
        rho = np.asarray(self.rho, dtype=float).reshape(-1)
        if rho.shape[0] != np.asarray(self.y).shape[0]:
            raise InputError(f"rho has {rho.shape[0]} entries for {np.asarray(self.y).shape[0]} training points")
        object.__setattr__(self, "rho", rho)

    @property
    def support(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.rho > 0)]

    def _state(self):
        ds = Dataset(self.X, self.standardizer.transform(self.y))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", JitterWarning)
            return compute_state(ds, self.hyper, self.rho, self.kernel)

    def nmll(self) -> float:
        return self._state().nmll

    def predict(self, Xstar, observational: bool = False) -> Prediction:
        p = posterior_predict(self._state(), Xstar, observational)
        return Prediction(self.standardizer.inverse_mean(p.mean), self.standardizer.inverse_variance(p.variance))

    @classmethod
    def fit(
        cls,
        dataset: Dataset,
        kernel: str = "matern52",
        rho=None,
        standardize: bool = True,
        isotropic: bool = False,
        optimizer: OptimizerConfig | None = None,
        bounds: HyperBounds | None = None,
    ) -> "RobustGPModel":
        """Fit hyperparameters with ``rho`` (standardized scale) held fixed; zero by default."""
        std = Standardizer.fit(dataset.y, standardize)
        ds = dataset.with_y(std.transform(dataset.y))
        init = initial_hyperparameters(ds, isotropic, std.degenerate)
        bounds = bounds or HyperBounds()
        if std.degenerate:
            bounds = replace(bounds, noise=(bounds.noise[0], 1e-5))
        rho = np.zeros(dataset.n) if rho is None else np.asarray(rho, dtype=float)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", JitterWarning)
            hyper = fit_hyperparameters(ds, init, rho, kernel, optimizer, bounds)
        jit = sum(issubclass(w.category, JitterWarning) for w in caught)
        return cls(dataset.X, dataset.y, hyper, rho, std, kernel, jit)

    @classmethod
    def from_pursuit(cls, dataset: Dataset, result, kernel: str = "matern52") -> "RobustGPModel":
        sel = result.selected
        return cls(dataset.X, dataset.y, sel.hyper, sel.rho, result.standardizer, kernel, result.jitter_warnings)

    def to_dict(self) -> dict:
        return {
            "library_version": __version__,
            "kernel": self.kernel,
            "hyperparameters": self.hyper.to_dict(),
            "rho": [float(v) for v in self.rho],
            "support": self.support,
            "standardization": self.standardizer.to_dict(),
            "train": {"X": self.X.tolist(), "y": [float(v) for v in self.y]},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobustGPModel":
        try:
            return cls(
                X=np.asarray(d["train"]["X"], dtype=float),
                y=np.asarray(d["train"]["y"], dtype=float),
                hyper=Hyperparameters.from_dict(d["hyperparameters"]),
                rho=np.asarray(d["rho"], dtype=float),
                standardizer=Standardizer.from_dict(d["standardization"]),
                kernel=d["kernel"],
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed model file: missing or invalid {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RobustGPModel":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read model {path}: {exc}") from exc
        return cls.from_dict(d)
