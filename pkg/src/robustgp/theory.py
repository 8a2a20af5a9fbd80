"""Curvature certificates and empirical checks for the robust-variance objective.

All Hessians here are reported for ``-2 log L`` (twice the NMLL), the
convention in which the strong-convexity constant ``m`` and smoothness
constant ``M`` are stated. ``y`` always denotes the residual vector
``y - mean_const``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EnumerationBudgetExceeded, InputError
from .gp import compute_state
from .kernels import Dataset, Hyperparameters, base_cov_matrix
from .optimize import OptimizerConfig
from .pursuit import PursuitConfig, Schedule, SizePrior, forward_pursuit
from .robust import (
    S_MAX,
    SParam,
    SupportConfig,
    nmll_hessian_rho,
    nmll_hessian_s,
    optimize_rho_on_support,
    rho_from_s,
)

MAX_ENUMERATION = math.comb(14, 4)


@dataclass
class ConvexityCertificate:
    condition_kind: str
    holds: bool
    lhs: float
    y_norm_sq: float
    delta: float | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None
    lambda_hat_min: float | None = None
    lambda_hat_max: float | None = None
    m: float | None = None
    M: float | None = None
    s_max: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: _json_float(v) for k, v in asdict(self).items()}


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _sym_eigvalsh(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    return np.linalg.eigvalsh(0.5 * (K + K.T))


def normalized_cov(K) -> np.ndarray:
    d = np.sqrt(np.diag(K))
    return K / d[:, None] / d[None, :]


def diag_dominance_delta(K) -> float:
    """Smallest delta with sum_{j != i} |K_ij| <= delta |K_ii| for every row."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"expected a square matrix, got shape {K.shape}")
    diag = np.abs(np.diag(K))
    if np.any(diag == 0):
        raise InputError("diagonal dominance is undefined with a zero diagonal entry")
    off = np.abs(K).sum(axis=1) - diag
    return float(np.max(off / diag)) if K.shape[0] > 1 else 0.0


def dd_delta_threshold(m: float) -> float:
    """Largest admissible delta for the diagonal-dominance convexity condition at margin ``m``."""
    a = 5.0 - m
    return (a - math.sqrt(a * a - 8.0 * (1.0 - m))) / 4.0


def _ratio_bound(prefactor, numerator, denominator):
    """prefactor * numerator / denominator with the limit conventions used below."""
    if abs(numerator) <= 1e-12:
        return 0.0
    if numerator < 0:
        return -math.inf
    if denominator <= 0:
        return math.inf
    return prefactor * numerator / denominator


def convexity_cert_dd(K0, y, m: float = 0.0) -> ConvexityCertificate:
    """Strong convexity (margin m) in s over the whole box, from diagonal dominance of K0."""
    if m < 0:
        raise InputError("m must be nonnegative")
    y2 = float(np.dot(y, y))
    delta = diag_dominance_delta(K0)
    lam_min = float(_sym_eigvalsh(K0)[0])
    thr = dd_delta_threshold(m)
    if delta >= 1.0:
        lhs = -math.inf
    else:
        num = 2.0 / (1.0 + delta) - 1.0 / (1.0 - delta) ** 2 - m
        den = 2.0 * (1.0 - (1.0 - delta) / (1.0 + delta))
        lhs = _ratio_bound(lam_min * (1.0 - delta) ** 2, num, den)
    holds = bool(delta < thr and lhs >= y2 and lhs > -math.inf)
    return ConvexityCertificate(
        "dd-convexity", holds, lhs, y2, delta=delta, lambda_min=lam_min, m=m, extra={"delta_threshold": thr}
    )


def convexity_cert_eigen(K_s, K_hat, y, m: float = 0.0) -> ConvexityCertificate:
    """Strong convexity (margin m) at the point whose covariance is ``K_s``."""
    y2 = float(np.dot(y, y))
    ev = _sym_eigvalsh(K_s)
    evh = _sym_eigvalsh(K_hat)
    lmin, lmax = float(ev[0]), float(ev[-1])
    hmin, hmax = float(evh[0]), float(evh[-1])
    num = 2.0 / hmax - 1.0 / hmin**2 - m
    den = 2.0 * (1.0 - lmin / lmax)
    if den <= 1e-10 * 2.0:
        den = 0.0
    lhs = _ratio_bound(lmin * hmin**2, num, den)
    holds = bool(num > 0 and lhs > y2)
    return ConvexityCertificate(
        "eigenvalue-convexity", holds, lhs, y2,
        lambda_min=lmin, lambda_max=lmax, lambda_hat_min=hmin, lambda_hat_max=hmax, m=m,
    )


def _check_smoothness_pre(M, s_max):
    if not 0 <= s_max < 1:
        raise InputError(f"s_max must lie in [0, 1), got {s_max}")
    need = 1.0 / (1.0 - s_max) ** 2
    if M < need * (1.0 - 1e-12):
        raise InputError(f"M={M} must be at least 1/(1-s_max)^2 = {need}")


def smoothness_cert_eigen(K_s, K_hat, y, M: float, s_max: float) -> ConvexityCertificate:
    """Smoothness (curvature at most M) at the point with covariance ``K_s``, for any s <= s_max."""
    _check_smoothness_pre(M, s_max)
    y2 = float(np.dot(y, y))
    ev = _sym_eigvalsh(K_s)
    evh = _sym_eigvalsh(K_hat)
    lmin, lmax = float(ev[0]), float(ev[-1])
    hmin, hmax = float(evh[0]), float(evh[-1])
    num = M * (1.0 - s_max) ** 2 - 2.0 / hmin + 1.0 / hmax**2
    den = 2.0 * (lmax / lmin - 1.0)
    if den <= 1e-10 * 2.0:
        den = 0.0
    lhs = _ratio_bound(lmin * hmin**2, num, den)
    holds = bool(lhs > y2 or (lhs == 0.0 and y2 == 0.0))
    return ConvexityCertificate(
        "eigenvalue-smoothness", holds, lhs, y2,
        lambda_min=lmin, lambda_max=lmax, lambda_hat_min=hmin, lambda_hat_max=hmax, M=M, s_max=s_max,
    )


def smoothness_cert_dd(K0, y, M: float, s_max: float) -> ConvexityCertificate:
    """Smoothness (curvature at most M) over the box [0, s_max]^n, from diagonal dominance of K0."""
    _check_smoothness_pre(M, s_max)
    y2 = float(np.dot(y, y))
    delta = diag_dominance_delta(K0)
    lam_min = float(_sym_eigvalsh(K0)[0])
    if delta >= 1.0:
        lhs = -math.inf
    else:
        num = M * (1.0 - s_max) ** 2 - 2.0 / (1.0 - delta) + 1.0 / (1.0 + delta) ** 2
        den = 2.0 * ((1.0 + delta) / (1.0 - delta) - 1.0)
        lhs = _ratio_bound(lam_min * (1.0 - delta) ** 2, num, den)
    holds = bool(lhs >= y2 and lhs > -math.inf)
    return ConvexityCertificate(
        "dd-smoothness", holds, lhs, y2, delta=delta, lambda_min=lam_min, M=M, s_max=s_max
    )


def _bisect(pred, lo, hi, iters=80):
    """Boundary of a monotone predicate true at ``lo`` and false at ``hi``."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def certified_m(K0, y) -> float | None:
    """Largest m certified by the diagonal-dominance condition, or None."""
    if not convexity_cert_dd(K0, y, 0.0).holds:
        return None
    return _bisect(lambda m: convexity_cert_dd(K0, y, m).holds, 0.0, 1.0)


def certified_M(K0, y, s_max: float) -> float | None:
    """Smallest M certified by the diagonal-dominance smoothness condition, or None."""
    lo = 1.0 / (1.0 - s_max) ** 2
    if smoothness_cert_dd(K0, y, lo, s_max).holds:
        return lo
    hi = 2.0 * lo
    while not smoothness_cert_dd(K0, y, hi, s_max).holds:
        hi *= 2.0
        if hi > 1e12:
            return None
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if smoothness_cert_dd(K0, y, mid, s_max).holds:
            hi = mid
        else:
            lo = mid
    return hi



# ---------------------------------------------------------------------------
# Hessian evaluation and sweeps


def hessian_s_neg2l(dataset: Dataset, hyper: Hyperparameters, s, kernel: str = "matern52", K0=None):
    """Hessian of -2 log L in s at the given point (k0_diag from the base covariance)."""
    if K0 is None:
        K0 = base_cov_matrix(dataset, hyper, kernel)
    c = np.diag(K0).copy()
    sp = SParam(np.asarray(s, dtype=float), c, s_max=max(S_MAX, float(np.max(s, initial=0.0))))
    st = compute_state(dataset, hyper, rho_from_s(sp), kernel, K0=K0)
    return 2.0 * nmll_hessian_s(st, sp), st


def eigen_sweep(dataset, hyper, n_points: int, s_max: float, rng, kernel: str = "matern52"):
    """Extreme eigenvalues of the s-Hessian of -2 log L at random points of [0, s_max]^n."""
    K0 = base_cov_matrix(dataset, hyper, kernel)
    lo, hi = [], []
    for _ in range(n_points):
        s = rng.uniform(0.0, s_max, dataset.n)
        H, _ = hessian_s_neg2l(dataset, hyper, s, kernel, K0)
        ev = _sym_eigvalsh(H)
        lo.append(float(ev[0]))
        hi.append(float(ev[-1]))
    return np.array(lo), np.array(hi)


def hessian_landscape_probe(
    dataset: Dataset,
    hyper: Hyperparameters,
    grid,
    parameterization: str = "convex",
    kernel: str = "matern52",
) -> list[dict]:
    """Min/max Hessian eigenvalues of -2 log L over a grid of points.

    ``grid`` is either a 1-d array of scalars (each applied to every
    coordinate) or a 2-d array of explicit points. Grid values are rho for
    the canonical parameterization and s for the convex one.
    """
    if dataset.n > 50:
        raise InputError("landscape probe is limited to n <= 50")
    if parameterization not in ("convex", "canonical"):
        raise InputError(f"unknown parameterization {parameterization!r}")
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 1:
        pts = np.repeat(pts[:, None], dataset.n, axis=1)
    if pts.shape[1] != dataset.n:
        raise InputError(f"grid points need {dataset.n} coordinates, got {pts.shape[1]}")
    K0 = base_cov_matrix(dataset, hyper, kernel)
    report = []
    for p in pts:
        if parameterization == "convex":
            H, _ = hessian_s_neg2l(dataset, hyper, p, kernel, K0)
        else:
            H = 2.0 * nmll_hessian_rho(compute_state(dataset, hyper, p, kernel, K0=K0))
        ev = _sym_eigvalsh(H)
        report.append({"point": p.tolist(), "min_eig": float(ev[0]), "max_eig": float(ev[-1])})
    return report


# ---------------------------------------------------------------------------
# approximation guarantee


@dataclass
class RatioResult:
    ratio: float
    bound: float
    passes: bool
    greedy_value: float
    best_value: float
    greedy_support: list[int]
    best_support: list[int]
    n_supports: int


def _frozen_support_config(s_max, kernel):
    return SupportConfig(
        parameterization="convex",
        optimize_hyper=False,
        fit_mean=False,
        s_max=s_max,
        kernel=kernel,
        optimizer=OptimizerConfig(ftol=1e-13, gtol=1e-10, maxiter=2000),
    )


def approximation_ratio_check(
    dataset: Dataset,
    hyper: Hyperparameters,
    r: int,
    m: float,
    M: float,
    s_max: float = 0.5,
    kernel: str = "matern52",
    time_budget: float | None = None,
) -> RatioResult:
    """Greedy forward selection versus exhaustive enumeration of r-supports.

    Hyperparameters stay fixed and targets are used as given. Values are the
    MLL improvement over rho = 0; ``ratio = greedy / best`` (1 when both
    vanish) and ``bound = 1 - exp(-m / M)``.
    """
    n = dataset.n
    if n > 14:
        raise InputError(f"exhaustive enumeration needs n <= 14, got {n}")
    if r < 0 or r > n:
        raise InputError(f"sparsity r={r} outside [0, {n}]")
    n_supports = math.comb(n, r)
    if n_supports > MAX_ENUMERATION:
        raise EnumerationBudgetExceeded(f"C({n}, {r}) = {n_supports} supports exceeds the cap {MAX_ENUMERATION}")
    bound = 1.0 - math.exp(-m / M)
    cfg = _frozen_support_config(s_max, kernel)
    K0 = base_cov_matrix(dataset, hyper, kernel)
    k0 = np.diag(K0).copy()
    base = compute_state(dataset, hyper, None, kernel, K0=K0).nmll

    pcfg = PursuitConfig(
        kernel=kernel, optimize_hyper=False, fit_mean=False, standardize=False,
        s_max=s_max, optimizer=cfg.optimizer,
    )
    if r == 0:
        return RatioResult(1.0, bound, True, 0.0, 0.0, [], [], 1)
    res = forward_pursuit(
        dataset, hyper, Schedule.one_at_a_time(r), SizePrior("uniform"), use_bms=False, config=pcfg
    )
    greedy_support = [int(i) for i in res.selected.support]
    greedy_value = base - res.selected.nmll

    start = time.monotonic()
    best_value, best_support = -math.inf, None
    for S in itertools.combinations(range(n), r):
        if time_budget is not None and time.monotonic() - start > time_budget:
            raise EnumerationBudgetExceeded(f"enumeration exceeded {time_budget} s")
        fit = optimize_rho_on_support(dataset, hyper, S, config=cfg, k0_diag=k0)
        value = base - fit.nmll
        if list(S) == greedy_support:
            value = max(value, greedy_value)
        if value > best_value + 1e-12:
            best_value, best_support = value, list(S)
    if best_value <= 0 and greedy_value <= 0:
        ratio = 1.0
    else:
        ratio = greedy_value / best_value
    return RatioResult(
        ratio=float(ratio),
        bound=bound,
        passes=bool(ratio >= bound - 1e-6),
        greedy_value=float(greedy_value),
        best_value=float(best_value),
        greedy_support=greedy_support,
        best_support=best_support,
        n_supports=n_supports,
    )


# ---------------------------------------------------------------------------
# instance generation


@dataclass
class CertifiedInstance:
    dataset: Dataset
    hyper: Hyperparameters
    K0: np.ndarray
    delta: float
    m: float
    M: float
    s_max: float


def _lengthscale_for_delta(X, target, kernel, noise):
    def delta_at(ls):
        h = Hyperparameters(np.array([ls]), 1.0, noise)
        return diag_dominance_delta(base_cov_matrix(Dataset(X, np.zeros(len(X))), h, kernel))

    lo, hi = 1e-4, 10.0
    if delta_at(hi) < target:
        return hi
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if delta_at(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def generate_certified_instance(
    rng: np.random.Generator,
    n_range=(3, 12),
    delta_range=(0.005, 0.08),
    s_max: float = 0.5,
    fill: float = 0.9,
    kernel: str = "matern52",
    n_spikes: int = 3,
) -> CertifiedInstance:
    """Random instance whose diagonal-dominance certificates hold with positive m.

    Inputs are spread on a line with a lengthscale tuned to a target delta;
    targets are Gaussian with a few enlarged entries, then scaled so that
    ``||y||^2`` uses a ``fill`` fraction of the admissible budget at a random
    margin.
    """
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    d = int(rng.integers(1, 3))
    X = rng.uniform(0.0, 1.0, (n, d))
    noise = float(rng.uniform(0.05, 0.5))
    ls = _lengthscale_for_delta(X, float(rng.uniform(*delta_range)), kernel, noise)
    hyper = Hyperparameters(np.array([ls]), 1.0, noise, 0.0)
    K0 = base_cov_matrix(Dataset(X, np.zeros(n)), hyper, kernel)
    delta = diag_dominance_delta(K0)
    m0 = certified_m(K0, np.zeros(n))
    if m0 is None:
        raise InputError("generated base covariance is not diagonally dominant enough")
    m_target = float(rng.uniform(0.05, 0.5)) * m0
    budget = convexity_cert_dd(K0, np.zeros(n), m_target).lhs
    y = rng.standard_normal(n)
    spikes = rng.choice(n, size=min(n_spikes, n), replace=False)
    y[spikes] *= rng.uniform(3.0, 8.0, spikes.size)
    if math.isfinite(budget):
        y *= math.sqrt(fill * budget / float(y @ y))
    m = certified_m(K0, y)
    M = certified_M(K0, y, s_max)
    return CertifiedInstance(Dataset(X, y), hyper, K0, delta, m, M, s_max)


def theory_report(instances: int, seed: int, sweep_points: int = 100, ratio_r: int = 2) -> dict:
    """Certificates, Hessian sweeps and approximation ratios on generated instances."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(instances):
        inst = generate_certified_instance(rng, n_range=(4, 10))
        y = inst.dataset.y
        conv = convexity_cert_dd(inst.K0, y, inst.m)
        smooth = smoothness_cert_dd(inst.K0, y, inst.M, inst.s_max)
        lo, _ = eigen_sweep(inst.dataset, inst.hyper, sweep_points, S_MAX, rng)
        _, hi = eigen_sweep(inst.dataset, inst.hyper, sweep_points, inst.s_max, rng)
        r = min(ratio_r, inst.dataset.n // 2)
        ratio = approximation_ratio_check(inst.dataset, inst.hyper, r, inst.m, inst.M, inst.s_max)
        rows.append({
            "instance": k,
            "n": inst.dataset.n,
            "delta": inst.delta,
            "m": inst.m,
            "M": inst.M,
            "s_max": inst.s_max,
            "convexity_holds": conv.holds,
            "smoothness_holds": smooth.holds,
            "min_eig": float(lo.min()),
            "max_eig": float(hi.max()),
            "convexity_respected": bool(lo.min() >= inst.m - 1e-8),
            "smoothness_respected": bool(hi.max() <= inst.M + 1e-8),
            "r": r,
            "ratio": ratio.ratio,
            "bound": ratio.bound,
            "ratio_passes": ratio.passes,
        })
    return {
        "seed": seed,
        "instances": rows,
        "all_pass": all(
            r["convexity_respected"] and r["smoothness_respected"] and r["ratio_passes"] for r in rows
        ),
    }
