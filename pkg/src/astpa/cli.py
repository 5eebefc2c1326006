"""Command line interface: run benchmarks, list problems, verify suites."""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .registry import get_problem, list_problems
from .reporting import ESTIMATORS, emit_report, run_benchmark


def _parse_config_file(path):
    """Simple key = value lines; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


_CONFIG_TYPES = {
    "problem": str, "estimator": str, "reps": int, "seed": int, "out": str,
    "sigma": float, "q": float, "n": int, "burnin": int, "m": int,
    "n_total": int, "diag_mass": lambda v: v.lower() in ("1", "true", "yes"),
    "parallel": int,
}


def _apply_config(args, path):
    # config file values take precedence over flags
    for key, raw in _parse_config_file(path).items():
        if key not in _CONFIG_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        setattr(args, key, _CONFIG_TYPES[key](raw))
    return args


def _cmd_run(args):
    overrides = {}
    for key in ("sigma", "q", "n", "burnin", "m", "n_total"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    if args.diag_mass:
        overrides["diag_mass"] = True
    summary = run_benchmark(
        args.problem, args.estimator, reps=args.reps, seed_base=args.seed,
        overrides=overrides, parallelism=args.parallel,
    )
    paths = emit_report(summary, out_dir=args.out)
    ref = summary.reference_p
    print(f"{summary.problem_id} [{summary.estimator}] x{summary.n_reps}:")
    print(f"  E[p]          = {summary.mean_p:.4e}"
          + (f"   (reference {ref:.3e})" if ref else ""))
    print(f"  sampling CoV  = {summary.sampling_cov:.3f}")
    print(f"  E[CoV-anal]   = {summary.mean_cov_analytical:.3f}")
    print(f"  E[N_total]    = {summary.mean_n_total:.0f}")
    if summary.failures:
        print(f"  failed trials = {len(summary.failures)}")
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0


def _cmd_list(_args):
    width = max(len(p) for p in list_problems())
    for pid in list_problems():
        pdef = get_problem(pid)
        print(f"{pid:<{width}}  d={pdef.d:<4} sigma={pdef.sigma:<4} "
              f"q={pdef.q:<4.0f} N_qnp={pdef.n_total['qnp']:<9,} "
              f"{pdef.description}")
    return 0


def _cmd_verify(args):
    from .verify import property_checks, table_checks

    if args.suite == "properties":
        results = property_checks()
    else:
        results = table_checks(parallelism=args.parallel, reps=args.reps)
    n_fail = 0
    for res in results:
        print(res.line())
        n_fail += 0 if res.passed else 1
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return 1 if n_fail else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Rare event estimation benchmarks "
                    f"(astpa {__version__})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one benchmark row")
    run.add_argument("--problem", required=True, choices=list_problems())
    run.add_argument("--estimator", default="astpa-qnp", choices=ESTIMATORS)
    run.add_argument("--reps", type=int, default=100)
    run.add_argument("--seed", type=int, default=1000)
    run.add_argument("--out", default=os.environ.get("BENCH_OUT_DIR", "bench_out"))
    run.add_argument("--sigma", type=float, default=None)
    run.add_argument("--q", type=float, default=None)
    run.add_argument("--n", type=int, default=None, help="chain samples N")
    run.add_argument("--burnin", type=int, default=None)
    run.add_argument("--m", type=int, default=None,
                     help="importance-sampling draws M")
    run.add_argument("--n-total", dest="n_total", type=int, default=None)
    run.add_argument("--diag-mass", dest="diag_mass", action="store_true")
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--config", default=None,
                     help="key=value file overriding the flags")
    run.set_defaults(func=_cmd_run)

    lst = sub.add_parser("list", help="list registered problems")
    lst.set_defaults(func=_cmd_list)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("--suite", choices=("properties", "tables"),
                     default="properties")
    ver.add_argument("--reps", type=int, default=None,
                     help="repetitions per table row (default 100)")
    ver.add_argument("--parallel", type=int, default=1)
    ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        _apply_config(args, args.config)
    try:
        return args.func(args)
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
