"""Command-line interface.

Exit codes: 0 success, 1 a validation or certification check failed,
2 unusable configuration or arguments, 3 a runtime failure such as a
degenerate replication budget.  Machine-readable output goes to files
named by --out (CSV or JSON, full precision); stdout stays human.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bandwidth import (
    PowerSchedule,
    validate_density_bandwidth,
    validate_regression_bandwidth,
)
from .data import read_dataset_csv, trim_region, write_dataset_csv
from .density import residual_density, write_density_csv
from .errors import (
    AllTrimmed,
    ConfigError,
    DegenerateDenominator,
    DegenerateReplications,
    DimensionError,
    GridError,
    InsufficientReplications,
    InvalidBandwidth,
    InvalidOrder,
    LogDomainError,
    QuadratureError,
)
from .experiments import ExperimentConfig, run_target
from .kernels import product_kernel, univariate_kernel, validate_kernel_conditions
from .simulate import dgp_from_flat, generate_sample
from .smoothing import fit_residuals

_CONFIG_ERRORS = (
    ConfigError,
    GridError,
    InsufficientReplications,
    InvalidBandwidth,
    InvalidOrder,
    DimensionError,
)
_RUNTIME_ERRORS = (
    DegenerateReplications,
    AllTrimmed,
    DegenerateDenominator,
    QuadratureError,
    LogDomainError,
    OSError,
)

_KERNELS = ("quadweight", "triweight")


def _cmd_estimate(args) -> int:
    try:
        data = read_dataset_csv(args.data)
    except FileNotFoundError as exc:
        raise ConfigError(f"cannot read dataset {args.data}: {exc}") from exc
    trim = trim_region(args.trim_lo, args.trim_hi, dim=data.dim)
    kernel0 = product_kernel(args.kernel, dim=data.dim)
    kernel1 = univariate_kernel(args.kernel)
    fit = fit_residuals(data, args.b0, trim, kernel0)
    grid = None
    if args.grid_lo is not None or args.grid_hi is not None:
        if args.grid_lo is None or args.grid_hi is None or args.grid_lo >= args.grid_hi:
            raise ConfigError("need grid-lo < grid-hi when an evaluation grid is given")
        grid = np.linspace(args.grid_lo, args.grid_hi, args.grid_points)
    curve = residual_density(fit, args.b1, grid=grid, kernel=kernel1)
    print(
        f"n = {data.n}, dim = {data.dim}, kept = {fit.n_kept},"
        f" b0 = {args.b0:.6g}, b1 = {args.b1:.6g}, kernel = {args.kernel}"
    )
    print(
        f"density on [{curve.grid[0]:.6g}, {curve.grid[-1]:.6g}]"
        f" ({curve.grid.size} points), mass = {curve.mass():.6g}"
    )
    if args.out:
        write_density_csv(args.out, curve)
        print(f"wrote {args.out}")
    return 0


def _cmd_kernel_check(args) -> int:
    report = validate_kernel_conditions(
        univariate_kernel(args.kernel), product_kernel(args.kernel, dim=args.dim)
    )
    if args.json:
        payload = {
            "residual_kernel": report.residual_kernel,
            "regression_kernel": report.regression_kernel,
            "dim": report.dim,
            "passed": report.passed,
            "conditions": [
                {
                    "condition": c.condition,
                    "target": c.target,
                    "value": c.value,
                    "tolerance": c.tolerance,
                    "passed": c.passed,
                }
                for c in report.conditions
            ],
        }
        print(json.dumps(payload, indent=2))
    else:
        print(report.render())
    return 0 if report.passed else 1


def _cmd_rates(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.workers is not None:
        cfg = ExperimentConfig.from_dict({**cfg.raw, "workers": args.workers})
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.raw, "seed": args.seed})
    result = run_target(cfg)
    print(f"target: {result.target}")
    print(result.render())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2)
        print(f"wrote {args.out}")
    return 0 if result.passed else 1


def _cmd_validate_bandwidths(args) -> int:
    regression = validate_regression_bandwidth(
        PowerSchedule(args.c0, args.a), args.d
    )
    density = validate_density_bandwidth(PowerSchedule(args.c1, args.gamma), args.d)
    if args.json:
        print(
            json.dumps(
                {
                    "regression": regression.to_dict(),
                    "density": density.to_dict(),
                    "satisfied": regression.satisfied and density.satisfied,
                },
                indent=2,
            )
        )
    else:
        print(regression.render())
        print()
        print(density.render())
    return 0 if regression.satisfied and density.satisfied else 1


def _cmd_simulate(args) -> int:
    dgp_keys = {}
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
            if path.suffix == ".json":
                dgp_keys = json.loads(text)
            elif path.suffix == ".toml":
                try:
                    import tomllib
                except ModuleNotFoundError:  # Python < 3.11
                    import tomli as tomllib

                dgp_keys = tomllib.loads(text)
            else:
                raise ConfigError(f"config must be .json or .toml, got {path.suffix!r}")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(dgp_keys, dict):
            raise ConfigError("config file must hold a flat table")
    dgp = dgp_from_flat(dgp_keys)
    data = generate_sample(dgp, args.n, args.seed, replication=args.replication)
    write_dataset_csv(args.out, data)
    print(
        f"wrote {args.out}: n = {data.n}, dim = {data.dim},"
        f" m = {dgp.m.name}, g = {dgp.g.name}, f = {dgp.f.name}, seed = {args.seed}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resdens",
        description="Two-stage regression-error density estimation and its certification lab.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the error density from a CSV sample")
    est.add_argument("--data", required=True, help="dataset CSV (x1..xd, y columns)")
    est.add_argument("--b0", type=float, required=True, help="regression bandwidth")
    est.add_argument("--b1", type=float, required=True, help="density bandwidth")
    est.add_argument("--trim-lo", type=float, default=0.1, help="trim box lower corner")
    est.add_argument("--trim-hi", type=float, default=0.9, help="trim box upper corner")
    est.add_argument("--kernel", choices=_KERNELS, default="quadweight")
    est.add_argument("--grid-lo", type=float, default=None, help="evaluation grid start")
    est.add_argument("--grid-hi", type=float, default=None, help="evaluation grid end")
    est.add_argument("--grid-points", type=int, default=512)
    est.add_argument("--out", default=None, help="write the density curve CSV here")
    est.set_defaults(handler=_cmd_estimate)

    kc = sub.add_parser("kernel-check", help="certify kernel moment and smoothness conditions")
    kc.add_argument("--kernel", choices=_KERNELS, default="quadweight")
    kc.add_argument("--dim", type=int, default=1)
    kc.add_argument("--json", action="store_true", help="machine-readable report")
    kc.set_defaults(handler=_cmd_kernel_check)

    rates = sub.add_parser("rates", help="run a configured certification target")
    rates.add_argument("--config", required=True, help="target config (.json or .toml)")
    rates.add_argument("--workers", type=int, default=None, help="replication thread count")
    rates.add_argument("--seed", type=int, default=None, help="override the config seed")
    rates.add_argument("--out", default=None, help="write the JSON result here")
    rates.set_defaults(handler=_cmd_rates)

    vb = sub.add_parser(
        "validate-bandwidths", help="check power-law bandwidth schedules for both stages"
    )
    vb.add_argument("--d", type=int, required=True, help="covariate dimension")
    vb.add_argument("--a", type=float, required=True, help="regression exponent")
    vb.add_argument("--gamma", type=float, required=True, help="density exponent")
    vb.add_argument("--c0", type=float, default=1.0, help="regression coefficient")
    vb.add_argument("--c1", type=float, default=1.0, help="density coefficient")
    vb.add_argument("--json", action="store_true", help="machine-readable report")
    vb.set_defaults(handler=_cmd_validate_bandwidths)

    sim = sub.add_parser("simulate", help="draw a sample from a configured design")
    sim.add_argument("--out", required=True, help="dataset CSV to write")
    sim.add_argument("--n", type=int, required=True, help="sample size")
    sim.add_argument("--seed", type=int, default=20120815)
    sim.add_argument("--replication", type=int, default=0)
    sim.add_argument("--config", default=None, help="flat design config (.json or .toml)")
    sim.set_defaults(handler=_cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
