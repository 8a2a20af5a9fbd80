"""Data-point-specific robust variances.

Each training point ``i`` gets an additive noise variance ``rho_i >= 0``.
Besides the canonical ``rho`` coordinates, the module provides the bounded
reparameterization ``rho(s) = k0_diag * (1 / (1 - s) - 1)`` with
``s in [0, s_max]``, in which the NMLL is convex for well-conditioned base
covariances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, OptimizationFailed
from .gp import (
    FittedState,
    HyperBounds,
    JitterWarning,
    compute_state,
    grad_hyper_from_state,
    hyper_box,
    loo_mean_var,
    pack_hyper,
    unpack_hyper,
)
from .kernels import Dataset, Hyperparameters, base_cov_matrix
from .optimize import OptimizerConfig, minimize_box

S_MAX = 1.0 - 1e-3


@dataclass(frozen=True)
class RobustVariances:
    rho: np.ndarray
    max_support: int | None = None

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float).reshape(-1).copy()
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise InputError("robust variances must be finite and nonnegative")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        if self.max_support is not None and self.support.size > self.max_support:
            raise InputError(f"support size {self.support.size} exceeds maximum {self.max_support}")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.rho > 0)


@dataclass(frozen=True)
class SParam:
    s: np.ndarray
    k0_diag: np.ndarray
    s_max: float = S_MAX

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(-1)
        c = np.asarray(self.k0_diag, dtype=float).reshape(-1)
        if s.shape != c.shape:
            raise InputError(f"s has {s.size} entries, k0_diag has {c.size}")
        if not 0.0 <= self.s_max < 1.0:
            raise InputError(f"s_max must lie in [0, 1), got {self.s_max}")
        if np.any(s < 0) or np.any(s >= 1.0):
            raise InputError("s must lie in [0, 1)")
        if np.any(s > self.s_max * (1 + 1e-12)):
            raise InputError(f"s exceeds s_max={self.s_max}")
        object.__setattr__(self, "s", s.copy())
        object.__setattr__(self, "k0_diag", c.copy())


def _rho_of_s(s, c):
    # s / (1 - s) equals 1 / (1 - s) - 1 without cancellation for small s
    return c * (s / (1.0 - s))


def rho_from_s(sparam: SParam) -> np.ndarray:
    return _rho_of_s(sparam.s, sparam.k0_diag)


def s_from_rho(rho, k0_diag) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise InputError("rho must be nonnegative")
    return rho / (rho + np.asarray(k0_diag, dtype=float))


def _loo_residual_and_var(state: FittedState):
    """LOO residual and LOO variance with point i's own robust variance removed."""
    loo_mean, loo_var = loo_mean_var(state)
    return state.y - loo_mean, loo_var - state.rho


def _check_index(state: FittedState, i: int) -> int:
    if not 0 <= int(i) < state.n:
        raise IndexError(f"index {i} out of range for n={state.n}")
    return int(i)


def optimal_rho_single(state: FittedState, i: int) -> float:
    """Closed-form maximizer of the marginal likelihood in rho_i, others fixed.

    ``[(y_i - E_loo)^2 - V_loo]_+``, where the LOO variance excludes the
    current ``rho_i`` so the result is valid whether or not ``i`` is active.
    """
    i = _check_index(state, i)
    e, v = _loo_residual_and_var(state)
    return float(max(e[i] ** 2 - v[i], 0.0))


def _gain(e2, v, rho_now):
    rho_opt = np.maximum(e2 - v, 0.0)
    a = v + rho_now
    b = v + rho_opt
    return 0.5 * (e2 / a + np.log(a) - e2 / b - np.log(b))


def mll_gains(state: FittedState) -> np.ndarray:
    """NMLL decrease from re-optimizing each rho_i alone, for all i at once."""
    e, v = _loo_residual_and_var(state)
    return np.maximum(_gain(e * e, v, state.rho), 0.0)


def mll_gain(state: FittedState, i: int) -> float:
    i = _check_index(state, i)
    if state.rho[i] > 0:
        raise InputError(f"index {i} is already in the support")
    return float(mll_gains(state)[i])


def nmll_grad_rho(state: FittedState) -> np.ndarray:
    return 0.5 * (np.diag(state.inv) - state.alpha**2)


def nmll_hessian_rho(state: FittedState) -> np.ndarray:
    Kinv = state.inv
    H = 0.5 * (2.0 * np.outer(state.alpha, state.alpha) - Kinv) * Kinv
    return 0.5 * (H + H.T)


def nmll_hessian_s(state: FittedState, sparam: SParam) -> np.ndarray:
    """Hessian of the NMLL in the bounded coordinates ``s``.

    Evaluated through the diagonally normalized covariance
    ``Khat = D^-1/2 K D^-1/2`` and ``alpha_hat = D^1/2 alpha``.
    """
    c = sparam.k0_diag
    if not np.allclose(c, np.diag(state.K0), rtol=1e-10, atol=0.0):
        raise InputError("sparam.k0_diag does not match the diagonal of the base covariance")
    if not np.allclose(rho_from_s(sparam), state.rho, rtol=1e-8, atol=1e-12):
        raise InputError("sparam is inconsistent with the robust variances of the state")
    d = np.diag(state.cov)
    sq = np.sqrt(d)
    Khat_inv = sq[:, None] * state.inv * sq[None, :]
    a_hat = sq * state.alpha
    inner = (
        2.0 * np.outer(a_hat, a_hat) * (Khat_inv - np.eye(state.n))
        + 2.0 * np.diag(np.diag(Khat_inv))
        - Khat_inv * Khat_inv
    )
    w = 1.0 / (1.0 - sparam.s)
    H = 0.5 * (w[:, None] * inner * w[None, :])
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# optimization of rho restricted to a support


@dataclass(frozen=True)
class SupportConfig:
    parameterization: str = "convex"  # or "canonical"
    optimize_hyper: bool = True
    fit_mean: bool = True
    s_max: float = S_MAX
    kernel: str = "matern52"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    bounds: HyperBounds = field(default_factory=HyperBounds)
    mean_center: float = 0.0

    def __post_init__(self):
        if self.parameterization not in ("convex", "canonical"):
            raise InputError(f"unknown parameterization {self.parameterization!r}")


@dataclass
class SupportFit:
    rho: np.ndarray
    nmll: float
    hyper: Hyperparameters
    support: np.ndarray
    converged: bool
    message: str
    history: list[float]
    jitter_warnings: int = 0


def optimize_rho_on_support(
    dataset: Dataset,
    hyper: Hyperparameters,
    support,
    init_s=None,
    config: SupportConfig | None = None,
    k0_diag=None,
) -> SupportFit:
    """Minimize the NMLL over rho on ``support`` (zero elsewhere).

    ``init_s`` is a length-n vector of starting s values (only support entries
    are used). ``k0_diag`` fixes the scale of the s-map; it defaults to the
    diagonal of the base covariance at ``hyper`` and stays fixed while the
    hyperparameters move.
    """
    cfg = config or SupportConfig()
    n = dataset.n
    support = np.unique(np.asarray(support, dtype=int).reshape(-1))
    if support.size and (support[0] < 0 or support[-1] >= n):
        raise InputError(f"support indices must lie in [0, {n})")
    if k0_diag is None:
        k0_diag = np.diag(base_cov_matrix(dataset, hyper, cfg.kernel)).copy()
    c = np.asarray(k0_diag, dtype=float)
    cS = c[support]
    s_max = cfg.s_max
    s0 = np.zeros(n) if init_s is None else np.asarray(init_s, dtype=float).reshape(-1)
    if s0.shape[0] != n:
        raise InputError(f"init_s has {s0.shape[0]} entries for n={n}")
    s0 = np.clip(s0[support], 0.0, s_max)

    convex = cfg.parameterization == "convex"
    rho_cap = cS * (s_max / (1.0 - s_max))
    u0 = s0 if convex else _rho_of_s(s0, cS)
    u_hi = np.full(support.size, s_max) if convex else rho_cap

    if cfg.optimize_hyper:
        t_lo, t_hi = hyper_box(hyper, cfg.bounds, cfg.fit_mean, cfg.mean_center)
        theta0 = np.clip(pack_hyper(hyper, cfg.fit_mean), t_lo, t_hi)
    else:
        t_lo = t_hi = theta0 = np.zeros(0)
    p = theta0.size
    lo = np.concatenate([t_lo, np.zeros(support.size)])
    hi = np.concatenate([t_hi, u_hi])
    jitter_hits = 0

    def split(z):
        h = unpack_hyper(z[:p], hyper, cfg.fit_mean) if cfg.optimize_hyper else hyper
        u = z[p:]
        rho = np.zeros(n)
        rho[support] = _rho_of_s(u, cS) if convex else u
        return h, u, rho

    def objective(z):
        nonlocal jitter_hits
        h, u, rho = split(z)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", JitterWarning)
            st = compute_state(dataset, h, rho, cfg.kernel)
        if st.jitter_warning:
            jitter_hits += 1
        g_rho = nmll_grad_rho(st)[support]
        g_u = g_rho * cS / (1.0 - u) ** 2 if convex else g_rho
        g_h = grad_hyper_from_state(st, cfg.fit_mean) if cfg.optimize_hyper else np.zeros(0)
        return st.nmll, np.concatenate([g_h, g_u])

    z0 = np.concatenate([theta0, u0])
    if z0.size == 0:
        st = compute_state(dataset, hyper, np.zeros(n), cfg.kernel)
        return SupportFit(np.zeros(n), st.nmll, hyper, support, True, "nothing to optimize", [st.nmll])
    res = minimize_box(objective, z0, lo, hi, cfg.optimizer)
    if not np.isfinite(res.fun):
        raise OptimizationFailed("non-finite objective", trace=res.history)
    h, _, rho = split(res.x)
    return SupportFit(
        rho=rho,
        nmll=float(res.fun),
        hyper=h,
        support=support,
        converged=res.converged,
        message=res.message,
        history=res.history,
        jitter_warnings=jitter_hits,
    )
