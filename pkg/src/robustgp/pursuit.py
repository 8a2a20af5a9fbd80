"""Relevance pursuit: greedy forward/backward selection of robust variances.

Forward pursuit grows the set of points carrying a robust variance, ranking
candidates by the exact marginal-likelihood gain of their closed-form
optimal variance. Backward pursuit starts from a full set and drops the
points with the smallest fitted variances. Either run produces a trace of
models; Bayesian model selection with a prior on the support size picks one.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, NumericalError, PursuitFailed
from .gp import (
    HyperBounds,
    JitterWarning,
    Standardizer,
    compute_state,
    initial_hyperparameters,
)
from .kernels import Dataset, Hyperparameters, base_cov_matrix
from .optimize import OptimizerConfig
from .robust import (
    S_MAX,
    SupportConfig,
    SupportFit,
    mll_gains,
    optimal_rho_single,
    optimize_rho_on_support,
    s_from_rho,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    steps: tuple[int, ...]

    def __post_init__(self):
        steps = tuple(int(k) for k in self.steps)
        if any(k < 1 for k in steps):
            raise InputError(f"schedule steps must be >= 1, got {steps}")
        object.__setattr__(self, "steps", steps)

    @property
    def total(self) -> int:
        return sum(self.steps)

    def validate(self, n: int) -> None:
        if self.total > n:
            raise InputError(f"schedule adds/removes {self.total} points but n={n}")

    @classmethod
    def one_at_a_time(cls, total: int) -> "Schedule":
        return cls((1,) * int(total))

    @classmethod
    def fraction_based(cls, n: int, fraction: float = 0.05, max_fraction: float = 0.3) -> "Schedule":
        """Steps of ``round(fraction * n)`` points up to ``floor(max_fraction * n)`` in total."""
        if not (0 < fraction <= 1 and 0 <= max_fraction <= 1):
            raise InputError("fractions must lie in (0, 1]")
        k = max(1, int(round(fraction * n)))
        cap = int(math.floor(max_fraction * n + 1e-9))
        steps = []
        while sum(steps) < cap:
            steps.append(min(k, cap - sum(steps)))
        return cls(tuple(steps))

    @classmethod
    def backward_fraction(cls, n: int, fraction: float = 0.05, max_fraction: float = 0.3) -> "Schedule":
        """Removal schedule visiting the same support sizes as :meth:`fraction_based`."""
        fwd = cls.fraction_based(n, fraction, max_fraction)
        first = n - fwd.total
        steps = ([first] if first > 0 else []) + list(reversed(fwd.steps))
        return cls(tuple(steps))


@dataclass(frozen=True)
class SizePrior:
    kind: str = "exponential"
    rate: float = 1.0
    max_size: int | None = None

    def __post_init__(self):
        if self.kind not in ("exponential", "uniform"):
            raise InputError(f"unknown prior kind {self.kind!r}")
        if self.kind == "exponential" and not (self.rate > 0):
            raise InputError("exponential prior needs a positive rate")

    def log_prob(self, size: int) -> float:
        if self.max_size is not None and size > self.max_size:
            return -math.inf
        if self.kind == "uniform":
            return 0.0
        return -self.rate * size

    @classmethod
    def default(cls, n: int, max_size: int | None = None) -> "SizePrior":
        # p(|S| = 0.2 n) / p(|S| = 0) = 1e-3
        return cls("exponential", rate=3.0 * math.log(10.0) / (0.2 * n), max_size=max_size)


@dataclass
class TraceEntry:
    support: np.ndarray
    rho: np.ndarray
    hyper: Hyperparameters | None
    nmll: float
    log_model_posterior: float = -math.inf
    converged: bool = True
    failed: bool = False
    message: str = ""
    jitter_warnings: int = 0

    @property
    def size(self) -> int:
        return int(self.support.size)

    def to_dict(self) -> dict:
        return {
            "support": [int(i) for i in self.support],
            "size": self.size,
            "nmll": self.nmll,
            "log_model_posterior": self.log_model_posterior,
            "failed": self.failed,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class PursuitConfig:
    kernel: str = "matern52"
    parameterization: str = "convex"
    optimize_hyper: bool = True
    freeze_hyper_after_empty: bool = False
    fit_mean: bool = True
    restart_hyper: bool = True
    standardize: bool = True
    isotropic: bool = False
    s_max: float = S_MAX
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    bounds: HyperBounds = field(default_factory=HyperBounds)


@dataclass
class PursuitResult:
    selected: TraceEntry
    trace: list[TraceEntry]
    standardizer: Standardizer
    k0_diag: np.ndarray
    algorithm: str

    @property
    def jitter_warnings(self) -> int:
        return sum(e.jitter_warnings for e in self.trace)


def model_posterior_score(entry: TraceEntry, prior: SizePrior) -> float:
    """Approximate log model posterior: log-evidence at the fitted variances plus log prior."""
    if entry.failed or not np.isfinite(entry.nmll):
        entry.log_model_posterior = -math.inf
    else:
        entry.log_model_posterior = -entry.nmll + prior.log_prob(entry.size)
    return entry.log_model_posterior


def _prepare(dataset: Dataset, init_hyper, cfg: PursuitConfig):
    std = Standardizer.fit(dataset.y, cfg.standardize)
    ds = dataset.with_y(std.transform(dataset.y))
    bounds = cfg.bounds
    if std.degenerate:
        bounds = replace(bounds, noise=(bounds.noise[0], max(bounds.noise[0], 1e-6) * 10))
    if init_hyper is None:
        init_hyper = initial_hyperparameters(ds, cfg.isotropic, degenerate=std.degenerate)
    return std, ds, init_hyper, bounds


def _support_config(cfg: PursuitConfig, bounds: HyperBounds, optimize_hyper: bool, mean_center: float):
    return SupportConfig(
        parameterization=cfg.parameterization,
        optimize_hyper=optimize_hyper,
        fit_mean=cfg.fit_mean,
        s_max=cfg.s_max,
        kernel=cfg.kernel,
        optimizer=cfg.optimizer,
        bounds=bounds,
        mean_center=mean_center,
    )


def _entry_from_fit(fit: SupportFit) -> TraceEntry:
    return TraceEntry(
        support=np.array(sorted(int(i) for i in fit.support), dtype=int),
        rho=fit.rho.copy(),
        hyper=fit.hyper,
        nmll=fit.nmll,
        converged=fit.converged,
        message=fit.message,
        jitter_warnings=fit.jitter_warnings,
    )


def _failed_entry(support, n, exc) -> TraceEntry:
    return TraceEntry(
        support=np.array(sorted(int(i) for i in support), dtype=int),
        rho=np.zeros(n),
        hyper=None,
        nmll=math.inf,
        failed=True,
        converged=False,
        message=f"{type(exc).__name__}: {exc}",
    )


def _select(trace, prior: SizePrior, use_bms: bool) -> TraceEntry:
    for e in trace:
        model_posterior_score(e, prior)
    ok = [e for e in trace if not e.failed and np.isfinite(e.nmll)]
    if not ok:
        raise PursuitFailed("every model in the trace failed to fit")
    if not use_bms:
        return ok[-1]
    scores = np.array([e.log_model_posterior for e in trace])
    if not np.any(np.isfinite(scores)):
        raise PursuitFailed("no model in the trace has a finite posterior score")
    return trace[int(np.argmax(scores))]


def _top_k(gains, exclude, k):
    g = np.asarray(gains, dtype=float).copy()
    g[list(exclude)] = -np.inf
    chosen = []
    for _ in range(min(k, int(np.sum(np.isfinite(g))))):
        # gains within 1e-12 of the best are ties, broken by lowest index
        j = int(np.flatnonzero(g >= np.max(g) - 1e-12)[0])
        chosen.append(j)
        g[j] = -np.inf
    return chosen


def _fit_support(ds, support, init_s, k0, cfg: PursuitConfig, support_cfg, warm, start):
    """Optimize on ``support`` from the warm-start hyperparameters and, when
    enabled, also from the initial ones; keep the lower NMLL."""
    best = optimize_rho_on_support(ds, warm, support, init_s=init_s, config=support_cfg, k0_diag=k0)
    if cfg.restart_hyper and support_cfg.optimize_hyper and start is not warm:
        try:
            alt = optimize_rho_on_support(ds, start, support, init_s=init_s, config=support_cfg, k0_diag=k0)
        except NumericalError as exc:
            log.debug("restart from initial hyperparameters failed: %s", exc)
        else:
            if alt.nmll < best.nmll:
                best = alt
    return best


def _sequential_init(ds, hyper, rho, new, kernel, k0, s_max):
    """Closed-form warm start for newly added coordinates, one at a time."""
    rho = rho.copy()
    cap = k0 * (s_max / (1.0 - s_max))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", JitterWarning)
        for j in new:
            st = compute_state(ds, hyper, rho, kernel)
            rho[j] = min(optimal_rho_single(st, j), cap[j])
    return rho


def forward_pursuit(
    dataset: Dataset,
    init_hyper: Hyperparameters | None = None,
    schedule: Schedule | None = None,
    prior: SizePrior | None = None,
    use_bms: bool = True,
    config: PursuitConfig | None = None,
) -> PursuitResult:
    """Greedy forward relevance pursuit.

    Starts from an empty support, and at every iteration optimizes the robust
    variances (jointly with the hyperparameters unless disabled), ranks the
    remaining points by their marginal-likelihood gain, and adds the
    ``schedule.steps[i]`` best ones. The final support is optimized as well,
    so the trace has ``len(schedule.steps) + 1`` entries.
    """
    cfg = config or PursuitConfig()
    n = dataset.n
    schedule = schedule or Schedule.fraction_based(n)
    schedule.validate(n)
    prior = prior or SizePrior.default(n, max_size=schedule.total)
    std, ds, hyper, bounds = _prepare(dataset, init_hyper, cfg)
    mean_center = float(np.mean(ds.y))

    joint = _support_config(cfg, bounds, cfg.optimize_hyper, mean_center)
    fit = optimize_rho_on_support(ds, hyper, [], config=joint)
    k0 = np.diag(base_cov_matrix(ds, fit.hyper, cfg.kernel)).copy()
    later = joint
    if cfg.freeze_hyper_after_empty:
        later = _support_config(cfg, bounds, False, mean_center)
    trace = [_entry_from_fit(fit)]
    support: list[int] = []

    for k in schedule.steps:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", JitterWarning)
            state = compute_state(ds, fit.hyper, fit.rho, cfg.kernel)
        new = _top_k(mll_gains(state), support, k)
        support = sorted(support + new)
        rho0 = _sequential_init(ds, fit.hyper, fit.rho, new, cfg.kernel, k0, cfg.s_max)
        try:
            fit = _fit_support(ds, support, s_from_rho(rho0, k0), k0, cfg, later, fit.hyper, hyper)
        except NumericalError as exc:
            log.warning("forward pursuit stopped at |S|=%d: %s", len(support), exc)
            trace.append(_failed_entry(support, n, exc))
            break
        trace.append(_entry_from_fit(fit))

    selected = _select(trace, prior, use_bms)
    return PursuitResult(selected, trace, std, k0, "forward")


def backward_pursuit(
    dataset: Dataset,
    init_hyper: Hyperparameters | None = None,
    schedule: Schedule | None = None,
    prior: SizePrior | None = None,
    config: PursuitConfig | None = None,
    initial_support=None,
) -> PursuitResult:
    """Backward relevance pursuit with Bayesian model selection over the trace.

    The support starts at ``initial_support`` (all points by default); each
    iteration optimizes the robust variances on the current support and then
    removes the ``schedule.steps[i]`` points with the smallest variances.
    """
    cfg = config or PursuitConfig()
    n = dataset.n
    schedule = schedule or Schedule.backward_fraction(n)
    schedule.validate(n)
    support = list(range(n)) if initial_support is None else sorted(int(i) for i in initial_support)
    if schedule.total > len(support):
        raise InputError(f"schedule removes {schedule.total} points from a support of {len(support)}")
    prior = prior or SizePrior.default(n, max_size=n)
    std, ds, hyper, bounds = _prepare(dataset, init_hyper, cfg)
    mean_center = float(np.mean(ds.y))

    joint = _support_config(cfg, bounds, cfg.optimize_hyper, mean_center)
    base = optimize_rho_on_support(ds, hyper, [], config=joint)
    k0 = np.diag(base_cov_matrix(ds, base.hyper, cfg.kernel)).copy()
    later = _support_config(cfg, bounds, False, mean_center) if cfg.freeze_hyper_after_empty else joint

    trace: list[TraceEntry] = []
    start = hyper
    hyper, rho = base.hyper, np.zeros(n)
    for step in (None,) + schedule.steps:
        if step is not None:
            ranked = sorted(support, key=lambda j: (rho[j], j))
            removed = set(ranked[:step])
            support = [j for j in support if j not in removed]
            rho = rho.copy()
            rho[list(removed)] = 0.0
        try:
            fit = _fit_support(ds, support, s_from_rho(rho, k0), k0, cfg, later, hyper, start)
        except NumericalError as exc:
            log.warning("backward pursuit failed at |S|=%d: %s", len(support), exc)
            trace.append(_failed_entry(support, n, exc))
            continue
        trace.append(_entry_from_fit(fit))
        hyper, rho = fit.hyper, fit.rho

    selected = _select(trace, prior, True)
    return PursuitResult(selected, trace, std, k0, "backward")


# ---------------------------------------------------------------------------
# configuration parsing and the public facade


def parse_schedule(spec, n: int, algorithm: str = "forward") -> Schedule:
    """Parse ``"one"`` or ``"frac:FRACTION:MAX_FRACTION"``."""
    if spec is None:
        spec = "frac:0.05:0.3"
    if isinstance(spec, Schedule):
        return spec
    spec = str(spec).strip()
    if spec == "one":
        total = int(math.floor(0.3 * n + 1e-9))
        return Schedule.one_at_a_time(total) if algorithm == "forward" else Schedule.backward_fraction(n, 1.0 / n, 0.3)
    if spec.startswith("frac"):
        parts = spec.split(":")
        try:
            fraction = float(parts[1]) if len(parts) > 1 else 0.05
            max_fraction = float(parts[2]) if len(parts) > 2 else 0.3
        except ValueError as exc:
            raise InputError(f"bad schedule {spec!r}") from exc
        if algorithm == "forward":
            return Schedule.fraction_based(n, fraction, max_fraction)
        return Schedule.backward_fraction(n, fraction, max_fraction)
    raise InputError(f"unknown schedule {spec!r}; use 'one' or 'frac:F:MAX'")


def parse_prior(spec, n: int, max_size: int | None = None) -> SizePrior:
    """Parse ``"exp"``, ``"exp:RATE"`` or ``"uniform"``."""
    if spec is None or spec == "exp":
        return SizePrior.default(n, max_size)
    if isinstance(spec, SizePrior):
        return spec
    spec = str(spec).strip()
    if spec == "uniform":
        return SizePrior("uniform", max_size=max_size)
    if spec.startswith("exp:"):
        try:
            rate = float(spec.split(":", 1)[1])
        except ValueError as exc:
            raise InputError(f"bad prior {spec!r}") from exc
        return SizePrior("exponential", rate=rate, max_size=max_size)
    raise InputError(f"unknown prior {spec!r}; use 'exp', 'exp:RATE' or 'uniform'")


@dataclass(frozen=True)
class DetectConfig:
    algorithm: str = "forward"
    schedule: object = None
    prior: object = None
    use_bms: bool = True
    pursuit: PursuitConfig = field(default_factory=PursuitConfig)

    def __post_init__(self):
        if self.algorithm not in ("forward", "backward"):
            raise InputError(f"algorithm must be 'forward' or 'backward', got {self.algorithm!r}")


def run_pursuit(dataset: Dataset, config: DetectConfig | None = None) -> PursuitResult:
    cfg = config or DetectConfig()
    n = dataset.n
    schedule = parse_schedule(cfg.schedule, n, cfg.algorithm)
    if cfg.algorithm == "forward":
        prior = parse_prior(cfg.prior, n, max_size=schedule.total)
        return forward_pursuit(dataset, None, schedule, prior, cfg.use_bms, cfg.pursuit)
    prior = parse_prior(cfg.prior, n, max_size=n)
    return backward_pursuit(dataset, None, schedule, prior, cfg.pursuit)


def detect_outliers(dataset: Dataset, config: DetectConfig | None = None):
    """Return ``(indices, rho, diagnostics)`` for the selected model.

    ``indices`` lists the points of the selected support whose fitted robust
    variance is strictly positive; ``rho`` is on the standardized scale.
    """
    result = run_pursuit(dataset, config)
    sel = result.selected
    indices = [int(i) for i in sel.support if sel.rho[i] > 0]
    diagnostics = {
        "algorithm": result.algorithm,
        "selected_size": sel.size,
        "trace": [e.to_dict() for e in result.trace],
        "hyperparameters": sel.hyper.to_dict() if sel.hyper is not None else None,
        "standardization": result.standardizer.to_dict(),
        "jitter_warnings": result.jitter_warnings,
        "result": result,
    }
    return indices, sel.rho.copy(), diagnostics
