"""Deterministic box-constrained quasi-Newton minimization.

Two backends share one interface. ``"lbfgsb"`` wraps scipy's L-BFGS-B.
``"projected"`` is a small projected L-BFGS with Armijo backtracking along
``P(x + t d)``. Both stop when the relative decrease of the objective falls
below ``ftol`` or the projected gradient's infinity norm below ``gtol``, and
neither accepts a step that increases the objective.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from scipy.optimize import minimize

from .errors import InputError, NumericalError, OptimizationFailed


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    nfev: int
    converged: bool
    message: str
    history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class OptimizerConfig:
    ftol: float = 1e-8
    gtol: float = 1e-6
    maxiter: int = 500
    memory: int = 10
    max_backtracks: int = 40
    c1: float = 1e-4
    method: str = "lbfgsb"

    def __post_init__(self):
        if self.method not in ("lbfgsb", "projected"):
            raise InputError(f"unknown optimizer method {self.method!r}")


def _project(x, lower, upper):
    return np.minimum(np.maximum(x, lower), upper)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _safe(fun):
    """Wrap ``fun`` so numerical failures read as +inf with no gradient."""
    def evaluate(z):
        try:
            f, g = fun(z)
        except NumericalError:
            return np.inf, None
        f = float(f)
        if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
            return np.inf, None
        return f, np.asarray(g, dtype=float)

    return evaluate


def minimize_box(fun, x0, lower, upper, config: OptimizerConfig | None = None) -> OptimizeResult:
    """Minimize ``fun`` (returning ``(value, gradient)``) over a box."""
    cfg = config or OptimizerConfig()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = _project(np.asarray(x0, dtype=float).copy(), lower, upper)
    evaluate = _safe(fun)
    f, g = evaluate(x)
    if not np.isfinite(f):
        raise OptimizationFailed("objective is not finite at the initial point", trace=[f])
    if cfg.method == "lbfgsb":
        return _minimize_lbfgsb(evaluate, x, f, g, lower, upper, cfg)
    return _minimize_projected(evaluate, x, f, g, lower, upper, cfg)


def _minimize_lbfgsb(evaluate, x0, f0, g0, lower, upper, cfg) -> OptimizeResult:
    cache = {}
    best = {"x": x0.copy(), "f": f0, "g": g0}

    def objective(z):
        key = z.tobytes()
        if key not in cache:
            f, g = evaluate(z)
            if g is None:
                g = np.zeros_like(z)
            cache.clear()
            cache[key] = (f, g)
            if f < best["f"]:
                best.update(x=z.copy(), f=f, g=g)
        return cache[key]

    history = [f0]

    def callback(intermediate_result):
        history.append(float(intermediate_result.fun))

    res = minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lower, upper)),
        callback=callback,
        options={"ftol": cfg.ftol, "gtol": cfg.gtol, "maxiter": cfg.maxiter, "maxcor": cfg.memory},
    )
    x, f, g = res.x, float(res.fun), np.asarray(res.jac, dtype=float)
    if not np.isfinite(f) or f > best["f"]:
        x, f, g = best["x"], best["f"], best["g"]
    converged = res.status == 0 or "ABNORMAL" in str(res.message)
    return OptimizeResult(
        x=x, fun=f, grad=g, nit=int(res.nit), nfev=int(res.nfev), converged=bool(converged),
        message=str(res.message), history=history,
    )


def _minimize_projected(evaluate, x, f, g, lower, upper, cfg) -> OptimizeResult:
    nfev = 1
    history = [f]
    pairs: deque = deque(maxlen=cfg.memory)
    message = "maximum iterations reached"
    converged = False
    nit = 0

    for nit in range(1, cfg.maxiter + 1):
        pg = x - _project(x - g, lower, upper)
        if np.max(np.abs(pg), initial=0.0) < cfg.gtol:
            message, converged = "projected gradient below tolerance", True
            nit -= 1
            break

        at_lower = (x <= lower) & (g > 0)
        at_upper = (x >= upper) & (g < 0)
        free = ~(at_lower | at_upper)

        accepted = False
        for use_memory in (True, False) if pairs else (False,):
            if use_memory:
                d = -_two_loop(np.where(free, g, 0.0), list(pairs))
                d[~free] = 0.0
                if g @ d >= -1e-14 * (g @ g):
                    continue
                t = 1.0
            else:
                pairs.clear()
                d = -np.where(free, g, 0.0)
                t = min(1.0, 1.0 / max(np.max(np.abs(d)), 1e-12))
            for _ in range(cfg.max_backtracks):
                x_new = _project(x + t * d, lower, upper)
                step = x_new - x
                if not np.any(step):
                    break
                f_new, g_new = evaluate(x_new)
                nfev += 1
                if f_new <= f + cfg.c1 * (g @ step):
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
        if not accepted:
            message, converged = "line search could not decrease the objective", True
            break

        s_vec = x_new - x
        y_vec = g_new - g
        sy = s_vec @ y_vec
        if sy > 1e-10 * max(s_vec @ s_vec, 1e-300) and sy > 0:
            pairs.append((s_vec, y_vec, 1.0 / sy))

        f_prev = f
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if (f_prev - f) <= cfg.ftol * max(abs(f_prev), abs(f), 1.0):
            message, converged = "relative objective change below tolerance", True
            break

    return OptimizeResult(
        x=x, fun=f, grad=g, nit=nit, nfev=nfev, converged=converged, message=message, history=history
    )
