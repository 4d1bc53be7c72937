"""Command-line interface: ``sarrs fit``, ``sarrs simulate`` and ``sarrs benchmark``.

Exit codes: 0 on success, 2 for user or input errors, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .estimator import SarrsConfig, SarrsError, bsw_fit, sarrs_fit
from .gpls import GplsError
from .init import RankZeroError, estimate_sigma
from .penalty import PenaltyKind
from .simbench import PRESETS, MethodSpec, Scenario, generate_scenario, run_benchmark

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
SIDECAR_SCHEMA_VERSION = 1


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def _parse_cell(text):
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def read_matrix_csv(path):
    """Read a numeric comma-separated matrix, skipping one optional header row.

    The first row is treated as a header when any of its cells is not a
    number. Raises :class:`InputError` naming the line and column of the
    first problem.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: file not found")
    rows = []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            values = [_parse_cell(c) for c in row]
            if lineno == 1 and any(v is None for v in values):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InputError(f"{path}: line {lineno} has {len(row)} columns, expected {width}")
            for col, (cell, value) in enumerate(zip(row, values), start=1):
                if value is None:
                    raise InputError(
                        f"{path}: line {lineno}, column {col}: non-numeric cell {cell.strip()!r}"
                    )
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no numeric rows")
    return np.array(rows, dtype=np.float64)


def format_matrix_csv(a):
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in np.atleast_2d(a))


def write_matrix_csv(path, a):
    Path(path).write_text(format_matrix_csv(a))


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _auto_or_float(text):
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {text!r}") from None


def _rank_arg(text):
    if text in ("auto", "full"):
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto', 'full' or an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"rank must be >= 1, got {value}")
    return value


def cmd_fit(args):
    start = time.perf_counter()
    x = read_matrix_csv(args.x)
    y = read_matrix_csv(args.y)
    if x.shape[0] != y.shape[0]:
        raise InputError(f"{args.x} has {x.shape[0]} rows but {args.y} has {y.shape[0]}")
    p, m = x.shape[1], y.shape[1]

    if args.sigma is not None:
        sigma, sigma_source = args.sigma, "flag"
    else:
        sigma, sigma_source = estimate_sigma(y), "estimated"
    rank = min(p, m) if args.rank == "full" else (None if args.rank == "auto" else args.rank)
    config = SarrsConfig(
        rank=rank,
        init=args.init,
        penalty=args.penalty,
        lam=args.lam,
        shape=args.shape,
        sigma=sigma,
        eta=args.eta,
    )
    fitter = sarrs_fit if args.method == "sarrs" else bsw_fit
    fit = fitter(x, y, config)
    elapsed = time.perf_counter() - start

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        _write_json(out / "a_hat.json", {"rows": p, "cols": m, "data": fit.a_hat.tolist()})
    else:
        write_matrix_csv(out / "a_hat.csv", fit.a_hat)
    diag = fit.diagnostics
    sidecar = {
        "schema_version": SIDECAR_SCHEMA_VERSION,
        "method": args.method,
        "penalty": diag["penalty"],
        "rank_used": fit.rank_used,
        "support": [int(i) for i in fit.support],
        "lambda": diag["lambda"],
        "sigma": sigma,
        "sigma_source": sigma_source,
        "init": diag["init"],
        "gpls_invocations": diag["gpls_invocations"],
        "warnings": diag["warnings"],
        "shape": [p, m],
        "timings": {"total_seconds": elapsed},
    }
    if args.method == "bsw":
        sidecar["alternations"] = diag["alternations"]
    else:
        sidecar["gpls_iterations"] = diag["gpls_iterations"]
    _write_json(out / "fit.json", sidecar)
    return EXIT_OK


def _scenario_from_args(args):
    base = PRESETS[args.preset] if args.preset else None
    fields = {}
    for key in ("n", "m", "p", "s", "r", "rho", "sigma", "b", "n_vld", "n_test"):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    try:
        if base is not None:
            return replace(base, **fields)
        missing = [k for k in ("n", "m", "p", "s", "r") if k not in fields]
        if missing:
            raise InputError(f"missing scenario fields without --preset: {', '.join(missing)}")
        return Scenario(**fields)
    except ValueError as exc:
        raise InputError(f"invalid scenario: {exc}") from None


def cmd_simulate(args):
    sc = _scenario_from_args(args)
    data = generate_scenario(sc, args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "x.csv", data.x)
    write_matrix_csv(out / "y.csv", data.y)
    write_matrix_csv(out / "a_true.csv", data.a)
    meta = asdict(sc)
    meta.update(
        {
            "seed": args.seed,
            "covariance": "identity" if sc.rho == 0 else f"ar1(rho={sc.rho!r})",
            "preset": args.preset,
        }
    )
    _write_json(out / "meta.json", meta)
    return EXIT_OK


_COMPARISON_METHODS = [
    {"method": "bsw", "penalty": "grlasso"},
    {"method": "bsw", "penalty": "grmcp"},
    {"method": "sarrs", "penalty": "grlasso"},
    {"method": "sarrs", "penalty": "grmcp"},
]


def _preset_config(name):
    hi, lo = asdict(PRESETS["paper-high-dim"]), asdict(PRESETS["paper-low-dim"])
    if name == "table1":
        scenarios = [dict(hi, b=0.5), dict(hi, b=1.0)]
        methods = _COMPARISON_METHODS
    elif name == "table2":
        scenarios = [dict(lo, b=0.2), dict(lo, b=0.4)]
        methods = _COMPARISON_METHODS
    elif name == "table3":
        scenarios = [dict(hi, b=0.5), dict(hi, b=1.0), dict(lo, b=0.2), dict(lo, b=0.4)]
        methods = [
            {"method": "bsw", "penalty": "grlasso"},
            {"method": "bsw", "penalty": "grmcp"},
            {"method": "sarrs", "penalty": "grlasso"},
        ]
    elif name == "smoke":
        scenarios = [
            {"n": 20, "m": 4, "p": 10, "s": 4, "r": 2, "rho": 0.1, "sigma": 1.0,
             "b": 1.0, "n_vld": 200, "n_test": 200, "name": "smoke"}
        ]
        return {"scenarios": scenarios, "methods": _COMPARISON_METHODS, "replications": 2, "grid_size": 10}
    else:
        raise InputError(f"unknown benchmark preset {name!r}")
    return {"scenarios": scenarios, "methods": methods, "replications": 50, "grid_size": 50}


def _load_benchmark_config(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: file not found")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: top level must be a JSON object")
    return cfg


def cmd_benchmark(args):
    cfg = _preset_config(args.preset) if args.preset else _load_benchmark_config(args.config)
    try:
        raw_scenarios = cfg["scenarios"]
        raw_methods = cfg.get("methods", [{"method": "sarrs", "penalty": "grlasso"}])
        scenarios = [Scenario(**s) for s in raw_scenarios]
        methods = [MethodSpec(**mth) for mth in raw_methods]
        reps = int(args.reps if args.reps is not None else cfg.get("replications", 50))
        grid_size = int(cfg.get("grid_size", 50))
        seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed benchmark config: {exc!r}") from None
    if not scenarios:
        raise InputError("benchmark config lists no scenarios")
    if not methods:
        raise InputError("benchmark config lists no methods")
    if reps < 2:
        raise InputError(f"need at least 2 replications, got {reps}")
    if grid_size < 1:
        raise InputError(f"grid_size must be positive, got {grid_size}")

    result = run_benchmark(scenarios, methods, reps, seed, grid_size)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        _write_json(
            out / "benchmark.json",
            {
                "schema_version": SIDECAR_SCHEMA_VERSION,
                "seed": seed,
                "replications": reps,
                "grid_size": grid_size,
                "scenarios": [asdict(s) for s in scenarios],
                "rows": result.table,
            },
        )
    else:
        (out / "benchmark.csv").write_text(result.table_csv())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="sarrs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a coefficient matrix from CSV data")
    fit.add_argument("--x", required=True, help="design matrix CSV (n x p)")
    fit.add_argument("--y", required=True, help="response matrix CSV (n x m)")
    fit.add_argument("-o", "--output", required=True, help="output directory")
    fit.add_argument("--method", choices=["sarrs", "bsw"], default="sarrs")
    fit.add_argument("--penalty", choices=[k.value for k in PenaltyKind], default="grlasso")
    fit.add_argument("--lambda", dest="lam", type=_auto_or_float, default=None,
                     help="penalty level or 'auto' (default)")
    fit.add_argument("--shape", type=float, default=None, help="MCP/SCAD gamma or capped-l1 cap")
    fit.add_argument("--rank", type=_rank_arg, default="auto", help="integer, 'auto' or 'full'")
    fit.add_argument("--init", choices=["lowrank", "sparse"], default="lowrank")
    fit.add_argument("--sigma", type=_auto_or_float, default=None, help="noise level or 'auto'")
    fit.add_argument("--eta", type=float, default=None, help="rank threshold multiplier")
    fit.add_argument("--format", choices=["csv", "json"], default="csv")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="draw a synthetic data set")
    sim.add_argument("--preset", choices=sorted(PRESETS), default=None)
    for key in ("n", "m", "p", "s", "r", "n_vld", "n_test"):
        sim.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int, default=None)
    for key in ("rho", "sigma", "b"):
        sim.add_argument(f"--{key}", dest=key, type=float, default=None)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("-o", "--output", required=True, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    bench = sub.add_parser("benchmark", help="run the simulation benchmark")
    src = bench.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=["table1", "table2", "table3", "smoke"])
    src.add_argument("--config", help="JSON file with scenarios, methods, replications")
    bench.add_argument("--reps", type=int, default=None)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--format", choices=["csv", "json"], default="csv")
    bench.add_argument("-o", "--output", required=True, help="output directory")
    bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SarrsError, GplsError, RankZeroError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
