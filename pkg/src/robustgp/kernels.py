"""Stationary kernels and covariance assembly."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, InputError

KERNELS = ("matern52", "rbf")
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class Hyperparameters:
    """GP hyperparameters.

    ``lengthscales`` holds one entry per input dimension (ARD) or a single
    entry shared by all dimensions (isotropic mode).
    """

    lengthscales: np.ndarray
    outputscale: float = 1.0
    noise: float = 0.1
    mean_const: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "outputscale", float(self.outputscale))
        object.__setattr__(self, "noise", float(self.noise))
        object.__setattr__(self, "mean_const", float(self.mean_const))
        if ls.ndim != 1 or ls.size == 0:
            raise InputError("lengthscales must be a non-empty vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise InputError(f"lengthscales must be finite and > 0, got {ls}")
        if not np.isfinite(self.outputscale) or self.outputscale <= 0:
            raise InputError(f"outputscale must be > 0, got {self.outputscale}")
        if not np.isfinite(self.noise) or self.noise < 0:
            raise InputError(f"noise must be >= 0, got {self.noise}")
        if not np.isfinite(self.mean_const):
            raise InputError("mean_const must be finite")

    @property
    def isotropic(self) -> bool:
        return self.lengthscales.size == 1

    def replace(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "outputscale": self.outputscale,
            "noise": self.noise,
            "mean_const": self.mean_const,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(
            lengthscales=np.asarray(d["lengthscales"], dtype=float),
            outputscale=d["outputscale"],
            noise=d["noise"],
            mean_const=d.get("mean_const", 0.0),
        )

    @classmethod
    def default(cls, d: int, isotropic: bool = False) -> "Hyperparameters":
        return cls(lengthscales=np.full(1 if isotropic else d, 0.5))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise DimensionError("X must be a 2-d array", axes=("X",))
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries",
                axes=("X.rows", "y"),
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"need n >= 1 and d >= 1, got {X.shape}", axes=("n", "d"))
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains non-finite values")
        X = X.copy()
        y = y.copy()
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def with_y(self, y) -> "Dataset":
        return Dataset(self.X, y, dict(self.meta))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], dict(self.meta))


def _check_kernel(kernel: str) -> None:
    if kernel not in KERNELS:
        raise InputError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def _broadcast_lengthscales(lengthscales, d: int) -> np.ndarray:
    ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
    if ls.size == 1:
        return np.full(d, ls[0])
    if ls.size != d:
        raise DimensionError(
            f"{ls.size} lengthscales for {d} input columns", axes=("lengthscales", "d")
        )
    return ls


def scaled_sq_dist(X1, X2, lengthscales) -> np.ndarray:
    """Squared Euclidean distance after dividing each column by its lengthscale."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != X2.shape[1]:
        raise DimensionError(
            f"X1 has {X1.shape[1]} columns, X2 has {X2.shape[1]}", axes=("X1.cols", "X2.cols")
        )
    ls = _broadcast_lengthscales(lengthscales, X1.shape[1])
    if np.any(ls <= 0):
        raise InputError("lengthscales must be strictly positive")
    A = X1 / ls
    B = X2 / ls
    # Explicit differences: exact zeros on the diagonal, no cancellation.
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def matern52(X1, X2, hyper: Hyperparameters) -> np.ndarray:
    r = np.sqrt(scaled_sq_dist(X1, X2, hyper.lengthscales))
    return hyper.outputscale * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-_SQRT5 * r)


def rbf(X1, X2, hyper: Hyperparameters) -> np.ndarray:
    return hyper.outputscale * np.exp(-0.5 * scaled_sq_dist(X1, X2, hyper.lengthscales))


def kernel_matrix(X1, X2, hyper: Hyperparameters, kernel: str = "matern52") -> np.ndarray:
    _check_kernel(kernel)
    return matern52(X1, X2, hyper) if kernel == "matern52" else rbf(X1, X2, hyper)


def base_cov_matrix(dataset: Dataset, hyper: Hyperparameters, kernel: str = "matern52") -> np.ndarray:
    """K0 = k(X, X) + noise * I, symmetrized exactly."""
    K = kernel_matrix(dataset.X, dataset.X, hyper, kernel)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += hyper.noise
    return K


def kernel_grad_log_lengthscales(X, hyper: Hyperparameters, kernel: str = "matern52") -> list[np.ndarray]:
    """Derivatives of k(X, X) w.r.t. each log-lengthscale.

    Returns one n x n matrix per lengthscale entry; in isotropic mode the
    single derivative sums over input dimensions.
    """
    _check_kernel(kernel)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    ls = _broadcast_lengthscales(hyper.lengthscales, d)
    diff = (X[:, None, :] - X[None, :, :]) / ls
    comp = diff * diff  # per-dimension scaled squared distance, n x n x d
    r2 = comp.sum(axis=-1)
    if kernel == "matern52":
        r = np.sqrt(r2)
        # dk/dlog(l_k) = (5/3) sf2 (1 + sqrt5 r) exp(-sqrt5 r) * comp_k
        factor = hyper.outputscale * (5.0 / 3.0) * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)
    else:
        factor = hyper.outputscale * np.exp(-0.5 * r2)
    if hyper.isotropic:
        return [factor * r2]
    return [factor * comp[:, :, k] for k in range(d)]
