"""Command-line interface: fit, predict, detect, benchmark, theory-check."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, jsonio
from .data import load_csv, load_inputs, write_table
from .errors import InputError, NumericalError
from .experiment import ExperimentConfig, run_experiment
from .kernels import KERNELS
from .model import RobustGPModel
from .pursuit import DetectConfig, PursuitConfig, detect_outliers
from .theory import theory_report

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
log = logging.getLogger("robustgp")


def _read_rho(path, n: int) -> np.ndarray:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read rho file {path}: {exc}") from exc
    rho = d.get("rho") if isinstance(d, dict) else d
    if rho is None:
        raise InputError(f"{path} has no 'rho' entry")
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.size != n:
        raise InputError(f"rho file has {rho.size} entries, data has {n} rows")
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise InputError("rho entries must be finite and nonnegative")
    return rho


def cmd_fit(args) -> int:
    ds = load_csv(args.data)
    rho = _read_rho(args.rho_file, ds.n) if args.rho_file else None
    model = RobustGPModel.fit(ds, kernel=args.kernel, rho=rho, standardize=not args.no_standardize,
                              isotropic=args.isotropic)
    model.save(args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = RobustGPModel.load(args.model)
    X, _ = load_inputs(args.data)
    pred = model.predict(X, observational=args.observational)
    header = [f"x{k + 1}" for k in range(X.shape[1])] + ["mean", "variance"]
    write_table(args.out, header, [X[:, k] for k in range(X.shape[1])] + [pred.mean, pred.variance])
    return EXIT_OK


def cmd_detect(args) -> int:
    ds = load_csv(args.data)
    cfg = DetectConfig(
        algorithm=args.algorithm,
        schedule=args.schedule,
        prior=args.prior,
        use_bms=not args.budget,
        pursuit=PursuitConfig(
            kernel=args.kernel,
            parameterization=args.parameterization,
            freeze_hyper_after_empty=args.freeze_hyper,
        ),
    )
    indices, rho, diag = detect_outliers(ds, cfg)
    report = {
        "library_version": __version__,
        "indices": indices,
        "rho": rho,
        "selected_size": diag["selected_size"],
        "trace": diag["trace"],
        "hyperparameters": diag["hyperparameters"],
        "standardization": diag["standardization"],
        "jitter_warnings": diag["jitter_warnings"],
        "config": {
            "algorithm": args.algorithm,
            "schedule": args.schedule,
            "prior": args.prior,
            "kernel": args.kernel,
            "parameterization": args.parameterization,
            "freeze_hyper": args.freeze_hyper,
            "budget_mode": args.budget,
        },
    }
    jsonio.dump(args.out, report)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.workers is not None:
        config = ExperimentConfig.from_dict({**config.to_dict(), "workers": args.workers})
    result = run_experiment(config, args.out_dir)
    for method, stats in result.summary["methods"].items():
        parts = [f"{m}={stats[m]['median']:.4g}" for m in ("rmse", "mae", "nlpd") if m in stats]
        print(f"{method}: " + " ".join(parts))
    return EXIT_OK


def cmd_theory_check(args) -> int:
    if args.instances < 1:
        raise InputError("--instances must be >= 1")
    report = theory_report(args.instances, args.seed, sweep_points=args.sweep_points)
    jsonio.dump(args.out, report)
    return EXIT_OK if report["all_pass"] else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustgp", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit GP hyperparameters, optionally with fixed robust variances")
    f.add_argument("--data", required=True)
    f.add_argument("--kernel", choices=KERNELS, default="matern52")
    f.add_argument("--rho-file", help="JSON with a 'rho' vector (standardized scale), e.g. detect output")
    f.add_argument("--no-standardize", action="store_true")
    f.add_argument("--isotropic", action="store_true")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict with a saved model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--observational", action="store_true", help="include the base noise variance")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    d = sub.add_parser("detect", help="relevance pursuit outlier detection")
    d.add_argument("--data", required=True)
    d.add_argument("--algorithm", choices=("forward", "backward"), default="forward")
    d.add_argument("--schedule", default="frac:0.05:0.3", help="'one' or 'frac:FRACTION:MAX_FRACTION'")
    d.add_argument("--prior", default="exp", help="'exp', 'exp:RATE' or 'uniform'")
    d.add_argument("--kernel", choices=KERNELS, default="matern52")
    d.add_argument("--parameterization", choices=("convex", "canonical"), default="convex")
    d.add_argument("--freeze-hyper", action="store_true", help="keep hyperparameters from the outlier-free fit")
    d.add_argument("--budget", action="store_true", help="return the last trace entry instead of model selection")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)

    b = sub.add_parser("benchmark", help="run a benchmark experiment from a JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--workers", type=int)
    b.set_defaults(func=cmd_benchmark)

    t = sub.add_parser("theory-check", help="certificate and approximation-ratio report")
    t.add_argument("--instances", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--sweep-points", type=int, default=100)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_theory_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
