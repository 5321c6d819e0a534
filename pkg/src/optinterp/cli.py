"""Command-line entry point: experiment sweeps and the invariant suite.

Exit codes: 0 on success, 1 when an invariant check fails, 2 on configuration
errors.  The default output directory comes from ``OPTINTERP_OUT`` (falling
back to ``./results``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import InvalidSpec
from .experiments import (
    BUILTIN_NAMES,
    DEFAULT_SCALE,
    ExperimentSpec,
    builtin_spec,
    emit_plotdata,
    run_experiment,
    write_csv,
)
from .invariants import run_invariant_suite

ENV_OUT = "OPTINTERP_OUT"


def _default_outdir() -> Path:
    return Path(os.environ.get(ENV_OUT, "results"))


def _load_spec(args) -> ExperimentSpec:
    if args.spec is not None:
        try:
            data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidSpec(f"cannot read spec file {args.spec}: {exc}") from exc
        spec = ExperimentSpec.from_dict(data)
    else:
        spec = builtin_spec(args.figure, scale=args.scale_n)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.estimators is not None:
        overrides["estimators"] = tuple(s.strip() for s in args.estimators.split(",") if s.strip())
    if overrides:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), **_serializable(overrides)})
    return spec


def _serializable(overrides: dict) -> dict:
    out = dict(overrides)
    if "estimators" in out:
        out["estimators"] = list(out["estimators"])
    return out


def _cmd_run(args) -> int:
    spec = _load_spec(args)
    rows = run_experiment(spec, jobs=args.jobs)
    outdir = Path(args.out) if args.out else _default_outdir()
    csv_path = write_csv(rows, outdir / f"{spec.name}.csv")
    plot_paths = emit_plotdata(rows, outdir / f"{spec.name}_plotdata")
    failures = sum(1 for r in rows if r.error)
    print(f"wrote {csv_path} ({len(rows)} rows) and {len(plot_paths)} plot series")
    if failures:
        print(f"note: {failures} cells recorded errors (see the error column)")
    return 0


def _cmd_invariants(args) -> int:
    modules = None
    if args.modules:
        modules = tuple(s.strip() for s in args.modules.split(",") if s.strip())
    report = run_invariant_suite(
        seed=args.seed if args.seed is not None else 0,
        tol_scale=args.tol_scale,
        modules=modules,
    )
    print(report.format())
    return 0 if report.all_passed else 1


def _cmd_list_figures(_args) -> int:
    for name in BUILTIN_NAMES:
        spec = builtin_spec(name)
        print(f"{name}: model={spec.model} n={spec.n} sweep {spec.sweep_param}="
              f"{list(spec.sweep_values)} estimators={list(spec.estimators)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optinterp",
        description="Interpolating-estimator experiments for overparametrized regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment sweep and write CSV + plot data")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="path to a JSON experiment spec")
    src.add_argument("--figure", choices=BUILTIN_NAMES, help="built-in figure sweep")
    run_p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./results)")
    run_p.add_argument("--seed", type=int, help="override the spec seed")
    run_p.add_argument("--replicates", type=int, help="override the replicate count")
    run_p.add_argument("--estimators", help="comma-separated estimator subset")
    run_p.add_argument(
        "--scale-n",
        type=float,
        default=DEFAULT_SCALE,
        dest="scale_n",
        help="sample-size scale factor for built-in figures (default 1/6)",
    )
    run_p.add_argument("--jobs", type=int, default=1, help="worker processes for the sweep")
    run_p.set_defaults(func=_cmd_run)

    inv_p = sub.add_parser("invariants", help="run the cross-module invariant suite")
    inv_p.add_argument("--seed", type=int, default=0)
    inv_p.add_argument(
        "--tol-scale",
        type=float,
        default=1.0,
        dest="tol_scale",
        help="multiply every check tolerance (diagnostic)",
    )
    inv_p.add_argument("--modules", help="comma-separated module subset to check")
    inv_p.set_defaults(func=_cmd_invariants)

    list_p = sub.add_parser("list-figures", help="list built-in figure sweeps")
    list_p.set_defaults(func=_cmd_list_figures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidSpec as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
