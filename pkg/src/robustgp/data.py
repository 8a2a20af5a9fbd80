"""CSV ingestion, synthetic test functions and outlier corruption."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError
from .kernels import Dataset

# ---------------------------------------------------------------------------
# CSV


def _check_header(header, require_y: bool) -> tuple[int, bool]:
    names = [h.strip() for h in header]
    has_y = bool(names) and names[-1] == "y"
    if require_y and not has_y:
        raise ParseError("last column must be named 'y'", row=0, column=names[-1] if names else None)
    xs = names[:-1] if has_y else names
    if not xs:
        raise ParseError("need at least one input column x1", row=0, column=None)
    for k, name in enumerate(xs, start=1):
        if name != f"x{k}":
            raise ParseError(f"expected column name 'x{k}', found {name!r}", row=0, column=name)
    return len(xs), has_y


def _read_table(path, require_y: bool):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty", row=0, column=None)
    d, has_y = _check_header(rows[0], require_y)
    names = [h.strip() for h in rows[0]]
    data = []
    for r, row in enumerate(rows[1:], start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(names):
            col = names[len(row)] if len(row) < len(names) else f"#{len(row)}"
            raise ParseError(f"expected {len(names)} cells, found {len(row)}", row=r, column=col)
        vals = []
        for name, cell in zip(names, row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", row=r, column=name) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r}", row=r, column=name)
            vals.append(v)
        data.append(vals)
    if not data:
        raise ParseError(f"{path} has a header but no data rows", row=1, column=None)
    arr = np.array(data, dtype=float)
    return arr, d, has_y


def load_csv(path) -> Dataset:
    """Read a ``x1,...,xd,y`` CSV file into a Dataset."""
    arr, d, _ = _read_table(path, require_y=True)
    return Dataset(arr[:, :d], arr[:, d], {"source": str(path)})


def load_inputs(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read prediction inputs; the ``y`` column is optional."""
    arr, d, has_y = _read_table(path, require_y=False)
    return arr[:, :d], (arr[:, d] if has_y else None)


def write_table(path, header, columns) -> None:
    """Write columns as CSV with shortest round-trip float formatting and LF endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def save_csv(path, dataset: Dataset) -> None:
    header = [f"x{k + 1}" for k in range(dataset.d)] + ["y"]
    write_table(path, header, [dataset.X[:, k] for k in range(dataset.d)] + [dataset.y])


# ---------------------------------------------------------------------------
# test functions


@lru_cache(maxsize=1)
def _constants() -> dict:
    text = resources.files("robustgp").joinpath("data/test_functions.json").read_text(encoding="utf-8")
    return json.loads(text)


def sine(X):
    return np.sin(2.0 * np.pi * X[:, 0])


def neal(X):
    t = 6.0 * X[:, 0] - 3.0
    return 0.3 + 0.4 * t + 0.5 * np.sin(2.7 * t) + 1.1 / (1.0 + t * t)


def friedman1(X):
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def hartmann6(X):
    c = _constants()["hartmann6"]
    alpha = np.asarray(c["alpha"])
    A = np.asarray(c["A"])
    P = np.asarray(c["P_times_1e4"]) * 1e-4
    inner = np.einsum("kj,nkj->nk", A, (X[:, None, :] - P[None, :, :]) ** 2)
    return -np.exp(-inner) @ alpha


TEST_FUNCTIONS = {
    "sine": (sine, 1),
    "neal": (neal, 1),
    "friedman5": (friedman1, 5),
    "friedman10": (friedman1, 10),
    "hartmann6": (hartmann6, 6),
}


def _as_rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_function(
    name: str,
    n: int,
    d: int | None = None,
    noise_sigma: float = 0.0,
    seed=0,
    relative_noise: bool = False,
) -> tuple[Dataset, np.ndarray]:
    """Sample inputs uniformly on the unit cube and noisy targets of a test function.

    With ``relative_noise`` the noise standard deviation is ``noise_sigma``
    times the standard deviation of the sampled latent values.
    """
    if name not in TEST_FUNCTIONS:
        raise InputError(f"unknown function {name!r}; expected one of {sorted(TEST_FUNCTIONS)}")
    fn, arity = TEST_FUNCTIONS[name]
    if d is not None and d != arity:
        raise InputError(f"{name} takes {arity} inputs, got d={d}")
    if n < 1:
        raise InputError("n must be >= 1")
    if noise_sigma < 0:
        raise InputError("noise_sigma must be >= 0")
    rng = _as_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, arity))
    latent = fn(X)
    sigma = noise_sigma * (float(np.std(latent)) if relative_noise else 1.0)
    y = latent + sigma * rng.standard_normal(n) if sigma > 0 else latent.copy()
    return Dataset(X, y, {"function": name, "noise_sigma": sigma}), latent


# ---------------------------------------------------------------------------
# corruption

CORRUPTIONS = ("none", "constant", "uniform_in_range", "student_t", "laplace", "asymmetric", "focused")


@dataclass(frozen=True)
class CorruptionSpec:
    """Sparse corruption model: each point is replaced with probability ``probability``.

    Kind-specific ``params`` (defaults in brackets, ``std`` is the standard
    deviation of the clean targets):

    - constant: ``value`` [100] or ``value_in_std`` (value = value_in_std * std)
    - student_t: ``df`` [2], ``scale`` [std]
    - laplace: ``scale`` [std]
    - asymmetric: ``low``/``high`` [2, 4], negative shift of U[low, high] * std
    - focused: ``shift`` [3], ``width`` [0.1]; corrupted points are the ones
      nearest a random centre, moved to mean + shift * std (+ width * std noise)
    """

    kind: str = "none"
    probability: float = 0.0
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTIONS:
            raise InputError(f"unknown corruption kind {self.kind!r}; expected one of {CORRUPTIONS}")
        if not 0.0 <= self.probability <= 1.0:
            raise InputError(f"corruption probability must lie in [0, 1], got {self.probability}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "probability": self.probability, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionSpec":
        return cls(d.get("kind", "none"), float(d.get("probability", 0.0)), dict(d.get("params", {})), int(d.get("seed", 0)))


def corrupt(dataset: Dataset, latent, spec: CorruptionSpec, rng=None) -> tuple[Dataset, np.ndarray]:
    """Return the corrupted dataset and the sorted ground-truth corrupted indices."""
    rng = _as_rng(spec.seed if rng is None else rng)
    latent = np.asarray(latent, dtype=float)
    y = dataset.y.copy()
    n = dataset.n
    mask = rng.uniform(size=n) < spec.probability
    if spec.kind == "none" or not mask.any():
        return dataset, np.zeros(0, dtype=int)
    p = spec.params
    std = float(np.std(dataset.y)) or 1.0
    k = int(mask.sum())
    if spec.kind == "focused":
        centre = dataset.X[rng.integers(n)]
        dist = np.sum((dataset.X - centre) ** 2, axis=1)
        idx = np.sort(np.argsort(dist, kind="stable")[:k])
    else:
        idx = np.flatnonzero(mask)
    if spec.kind == "constant":
        value = float(p["value_in_std"]) * std if "value_in_std" in p else float(p.get("value", 100.0))
        y[idx] = value
    elif spec.kind == "uniform_in_range":
        y[idx] = rng.uniform(float(dataset.y.min()), float(dataset.y.max()), k)
    elif spec.kind == "student_t":
        y[idx] = latent[idx] + float(p.get("scale", std)) * rng.standard_t(float(p.get("df", 2.0)), k)
    elif spec.kind == "laplace":
        y[idx] = latent[idx] + rng.laplace(0.0, float(p.get("scale", std)), k)
    elif spec.kind == "asymmetric":
        y[idx] = latent[idx] - rng.uniform(float(p.get("low", 2.0)), float(p.get("high", 4.0)), k) * std
    elif spec.kind == "focused":
        level = float(np.mean(dataset.y)) + float(p.get("shift", 3.0)) * std
        y[idx] = level + float(p.get("width", 0.1)) * std * rng.standard_normal(k)
    meta = dict(dataset.meta, corrupted=idx.tolist(), corruption=spec.to_dict())
    return Dataset(dataset.X, y, meta), idx
