"""Exact GP inference: marginal likelihood, LOO moments, prediction, fitting."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular

from .errors import DimensionError, InputError, NotPositiveDefinite, NumericalDegeneracy
from .kernels import (
    Dataset,
    Hyperparameters,
    base_cov_matrix,
    kernel_grad_log_lengthscales,
    kernel_matrix,
)
from .optimize import OptimizeResult, OptimizerConfig, minimize_box

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
JITTER_WARN = 1e-6


class JitterWarning(RuntimeWarning):
    pass


def cholesky_with_jitter(M) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``M + jitter * I`` with the smallest jitter that works.

    Jitter levels are taken relative to the mean of the diagonal of ``M``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    scale = float(np.mean(np.diag(M))) if M.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    info = 0
    for level in JITTER_LADDER:
        jitter = level * scale
        A = M + jitter * np.eye(M.shape[0]) if jitter else M
        c, info = lapack.dpotrf(A, lower=1, clean=1)
        if info == 0:
            return c, jitter
    raise NotPositiveDefinite(
        f"matrix is not positive definite even with jitter {JITTER_LADDER[-1]} x mean(diag)",
        last_pivot=int(info),
    )


@dataclass(frozen=True)
class FittedState:
    """Factorized GP at fixed hyperparameters and robust variances.

    ``resid`` is ``y - mean_const``; every quantity derived from the targets
    (``alpha``, LOO moments, gradients) uses it.
    """

    X: np.ndarray
    y: np.ndarray
    hyper: Hyperparameters
    kernel: str
    K0: np.ndarray
    rho: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    jitter: float
    resid: np.ndarray
    alpha: np.ndarray
    log_det: float
    nmll: float

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @cached_property
    def inv(self) -> np.ndarray:
        Kinv = cho_solve((self.chol, True), np.eye(self.n))
        return 0.5 * (Kinv + Kinv.T)

    @property
    def prec_diag(self) -> np.ndarray:
        return np.diag(self.inv).copy()

    @property
    def jitter_warning(self) -> bool:
        return self.jitter > JITTER_WARN * float(np.mean(np.diag(self.cov)))


def compute_state(
    dataset: Dataset,
    hyper: Hyperparameters,
    rho=None,
    kernel: str = "matern52",
    K0: np.ndarray | None = None,
) -> FittedState:
    n = dataset.n
    rho = np.zeros(n) if rho is None else np.asarray(rho, dtype=float).reshape(-1)
    if rho.shape[0] != n:
        raise DimensionError(f"rho has {rho.shape[0]} entries for n={n}", axes=("rho", "n"))
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise InputError("robust variances must be finite and nonnegative")
    if K0 is None:
        K0 = base_cov_matrix(dataset, hyper, kernel)
    cov = K0.copy()
    cov[np.diag_indices(n)] += rho
    chol, jitter = cholesky_with_jitter(cov)
    if jitter > JITTER_WARN * float(np.mean(np.diag(cov))):
        warnings.warn(f"large jitter {jitter:.3g} added to covariance", JitterWarning, stacklevel=2)
    resid = dataset.y - hyper.mean_const
    alpha = cho_solve((chol, True), resid)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    value = 0.5 * (float(resid @ alpha) + log_det + n * LOG_2PI)
    return FittedState(
        X=dataset.X,
        y=dataset.y,
        hyper=hyper,
        kernel=kernel,
        K0=K0,
        rho=rho.copy(),
        cov=cov,
        chol=chol,
        jitter=jitter,
        resid=resid,
        alpha=alpha,
        log_det=log_det,
        nmll=value,
    )


def nmll(dataset: Dataset, hyper: Hyperparameters, rho=None, kernel: str = "matern52") -> float:
    """Negative log marginal likelihood with robust variances ``rho``."""
    return compute_state(dataset, hyper, rho, kernel).nmll


def loo_mean_var(state: FittedState) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-out predictive mean and variance of each target, from the precision matrix."""
    p = state.prec_diag
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise NumericalDegeneracy("precision diagonal is not strictly positive")
    return state.y - state.alpha / p, 1.0 / p


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    variance: np.ndarray


def posterior_predict(state: FittedState, Xstar, observational: bool = False) -> Prediction:
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    if Xstar.shape[1] != state.X.shape[1]:
        raise DimensionError(
            f"Xstar has {Xstar.shape[1]} columns, training inputs have {state.X.shape[1]}",
            axes=("Xstar.cols", "X.cols"),
        )
    h = state.hyper
    Ks = kernel_matrix(state.X, Xstar, h, state.kernel)
    mean = h.mean_const + Ks.T @ state.alpha
    v = solve_triangular(state.chol, Ks, lower=True)
    var = np.maximum(h.outputscale - np.sum(v * v, axis=0), 0.0)
    if observational:
        var = var + h.noise
    return Prediction(mean=mean, variance=var)


# ---------------------------------------------------------------------------
# hyperparameter gradients and fitting


@dataclass(frozen=True)
class HyperBounds:
    lengthscale: tuple[float, float] = (1e-3, 1e3)
    outputscale: tuple[float, float] = (1e-4, 1e4)
    noise: tuple[float, float] = (1e-6, 10.0)
    mean_halfwidth: float = 10.0


def pack_hyper(hyper: Hyperparameters, fit_mean: bool = True) -> np.ndarray:
    parts = [np.log(hyper.lengthscales), [np.log(hyper.outputscale), np.log(hyper.noise)]]
    if fit_mean:
        parts.append([hyper.mean_const])
    return np.concatenate(parts)


def unpack_hyper(theta, template: Hyperparameters, fit_mean: bool = True) -> Hyperparameters:
    p = template.lengthscales.size
    return Hyperparameters(
        lengthscales=np.exp(theta[:p]),
        outputscale=float(np.exp(theta[p])),
        noise=float(np.exp(theta[p + 1])),
        mean_const=float(theta[p + 2]) if fit_mean else template.mean_const,
    )


def hyper_box(template: Hyperparameters, bounds: HyperBounds, fit_mean: bool = True, mean_center: float = 0.0):
    p = template.lengthscales.size
    lo = [np.log(bounds.lengthscale[0])] * p + [np.log(bounds.outputscale[0]), np.log(bounds.noise[0])]
    hi = [np.log(bounds.lengthscale[1])] * p + [np.log(bounds.outputscale[1]), np.log(bounds.noise[1])]
    if fit_mean:
        lo.append(mean_center - bounds.mean_halfwidth)
        hi.append(mean_center + bounds.mean_halfwidth)
    return np.array(lo), np.array(hi)


def grad_hyper_from_state(state: FittedState, fit_mean: bool = True) -> np.ndarray:
    """Gradient of the NMLL w.r.t. (log-lengthscales, log-outputscale, log-noise[, mean]).

    Uses d(nmll) = 1/2 tr((inv - alpha alpha^T) dK) with the robust variances held fixed.
    """
    h = state.hyper
    W = state.inv - np.outer(state.alpha, state.alpha)
    grads = [0.5 * float(np.sum(W * dK)) for dK in kernel_grad_log_lengthscales(state.X, h, state.kernel)]
    Kf = state.K0 - h.noise * np.eye(state.n)
    grads.append(0.5 * float(np.sum(W * Kf)))
    grads.append(0.5 * h.noise * float(np.trace(W)))
    if fit_mean:
        grads.append(-float(np.sum(state.alpha)))
    return np.array(grads)


def nmll_grad_hyper(
    dataset: Dataset, hyper: Hyperparameters, rho=None, kernel: str = "matern52", fit_mean: bool = True
) -> np.ndarray:
    return grad_hyper_from_state(compute_state(dataset, hyper, rho, kernel), fit_mean)


def fit_hyperparameters(
    dataset: Dataset,
    init: Hyperparameters,
    rho=None,
    kernel: str = "matern52",
    config: OptimizerConfig | None = None,
    bounds: HyperBounds | None = None,
    fit_mean: bool = True,
    return_result: bool = False,
):
    """Minimize the NMLL over hyperparameters with robust variances held fixed."""
    bounds = bounds or HyperBounds()
    lo, hi = hyper_box(init, bounds, fit_mean, mean_center=float(np.mean(dataset.y)))

    def objective(theta):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", JitterWarning)
            st = compute_state(dataset, unpack_hyper(theta, init, fit_mean), rho, kernel)
        return st.nmll, grad_hyper_from_state(st, fit_mean)

    theta0 = np.clip(pack_hyper(init, fit_mean), lo, hi)
    res: OptimizeResult = minimize_box(objective, theta0, lo, hi, config)
    fitted = unpack_hyper(res.x, init, fit_mean)
    return (fitted, res) if return_result else fitted


# ---------------------------------------------------------------------------
# target standardization


@dataclass(frozen=True)
class Standardizer:
    shift: float = 0.0
    scale: float = 1.0
    degenerate: bool = False

    @classmethod
    def fit(cls, y, enabled: bool = True) -> "Standardizer":
        y = np.asarray(y, dtype=float)
        if not enabled:
            return cls()
        sd = float(np.std(y))
        if y.size < 2 or sd <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
            return cls(degenerate=True)
        return cls(shift=float(np.mean(y)), scale=sd)

    def transform(self, y):
        return (np.asarray(y, dtype=float) - self.shift) / self.scale

    def inverse_mean(self, m):
        return np.asarray(m, dtype=float) * self.scale + self.shift

    def inverse_variance(self, v):
        return np.asarray(v, dtype=float) * self.scale**2

    def to_dict(self) -> dict:
        return {"shift": self.shift, "scale": self.scale, "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(float(d["shift"]), float(d["scale"]), bool(d.get("degenerate", False)))


def initial_hyperparameters(dataset: Dataset, isotropic: bool = False, degenerate: bool = False) -> Hyperparameters:
    """Data-scaled starting point: half the input range per dimension."""
    span = np.ptp(dataset.X, axis=0)
    span = np.where(span > 0, span, 1.0)
    ls = np.array([0.5 * float(np.mean(span))]) if isotropic else 0.5 * span
    return Hyperparameters(
        lengthscales=np.clip(ls, 1e-2, 1e2),
        outputscale=1.0,
        noise=1e-6 if degenerate else 0.1,
        mean_const=float(np.mean(dataset.y)),
    )
