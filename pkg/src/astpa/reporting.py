"""Repeated-trial orchestration and machine-readable reports."""

from __future__ import annotations

import csv
import datetime
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import SusConfig, crude_mc, sus
from .estimator import Budget, TotalBudget, run_astpa
from .qnp import QnpConfig
from .registry import get_problem, make_sus_space, mc_sample_stream, posterior_log_constant

ESTIMATORS = ("astpa-qnp", "astpa-hmc", "sus", "mc")


@dataclass
class TrialSummary:
    problem_id: str
    estimator: str
    n_reps: int
    seed_base: int
    mean_p: float
    sampling_cov: float
    mean_n_total: float
    mean_cov_analytical: float
    reference_p: Optional[float]
    trials: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    overrides: dict = field(default_factory=dict)
    wall_time: float = 0.0


def _astpa_overrides(pdef, overrides):
    sigma = overrides.get("sigma", pdef.sigma)
    q = overrides.get("q", pdef.q)
    diag = overrides.get("diag_mass", pdef.diag_w)
    qnp_cfg = QnpConfig(diag=diag) if diag is not None else QnpConfig()
    return sigma, q, qnp_cfg


def _resolve_budget(pdef, kind, overrides):
    if any(k in overrides for k in ("n", "burnin", "m")):
        n = overrides.get("n")
        if n is None:
            raise ValueError("override 'n' is required with 'burnin'/'m'")
        nb = overrides.get("burnin", max(1, round(0.125 * n)))
        m = overrides.get("m", 2 * (round(0.30 * n) // 2))
        return Budget(n=n, n_burnin=nb, m=m, adam_max=pdef.adam_max)
    n_total = overrides.get("n_total", pdef.n_total[kind])
    return TotalBudget(
        n_total=n_total, adam_max=pdef.adam_max,
        burnin_frac=pdef.burnin_frac, m_frac=pdef.m_frac,
    )


def run_trial(problem_id, estimator, seed, overrides=None, log_c_pi=None):
    """One independent repetition; returns a flat record dict."""
    overrides = overrides or {}
    pdef = get_problem(problem_id)
    t0 = time.perf_counter()

    if estimator in ("astpa-qnp", "astpa-hmc"):
        from .iis import EmConfig

        kind = "qnp" if estimator == "astpa-qnp" else "hmc"
        problem, model = pdef.build_astpa()
        sigma, q, qnp_cfg = _astpa_overrides(pdef, overrides)
        budget = _resolve_budget(pdef, kind, overrides)
        em = EmConfig.single_full() if pdef.em_kind == "single-full" else None
        rep = run_astpa(
            problem, model, sigma=sigma, q=q, budget=budget, seed=seed,
            sampler=kind, qnp_config=qnp_cfg, log_c_pi=log_c_pi,
            em_config=em,
        )
        rec = rep.to_dict()
        rec["estimator"] = estimator
        return rec

    if estimator == "sus":
        problem, model = pdef.build_baseline()
        space = make_sus_space(pdef, seed=seed + 900_000)
        cfg = SusConfig(
            n_per_level=overrides.get("n", pdef.sus_n_per_level), seed=seed
        )
        res = sus(problem, space, cfg)
        return {
            "estimator": estimator,
            "p_f": res.p,
            "n_total": res.n_calls,
            "n_levels": res.n_levels,
            "levels": [list(t) for t in res.levels],
            "cov_analytical": float("nan"),
            "seed": seed,
            "wall_time": time.perf_counter() - t0,
        }

    if estimator == "mc":
        problem, model = pdef.build_baseline()
        stream = mc_sample_stream(pdef)
        n = overrides.get("n", pdef.mc_n_default)
        res = crude_mc(problem, model, n, seed=seed, sample_stream=stream)
        return {
            "estimator": estimator,
            "p_f": res.p,
            "n_total": res.n,
            "n_failures": res.n_failures,
            "cov_analytical": res.cov,
            "seed": seed,
            "wall_time": time.perf_counter() - t0,
        }

    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def _trial_job(args):
    problem_id, estimator, seed, overrides, log_c_pi = args
    try:
        return seed, run_trial(problem_id, estimator, seed, overrides, log_c_pi), None
    except Exception as exc:  # noqa: BLE001
        return seed, None, f"{type(exc).__name__}: {exc}"


def run_benchmark(problem_id, estimator, reps=100, seed_base=1000,
                  overrides=None, parallelism=1):
    """Run independent repetitions with seeds seed_base + i and aggregate."""
    overrides = dict(overrides or {})
    pdef = get_problem(problem_id)
    t0 = time.perf_counter()

    log_c_pi = None
    if pdef.cpi is not None and estimator.startswith("astpa"):
        log_c_pi = posterior_log_constant(pdef).log_c

    jobs = [
        (problem_id, estimator, seed_base + i, overrides, log_c_pi)
        for i in range(reps)
    ]
    results = []
    failures = []
    if parallelism > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for seed, rec, err in pool.map(_trial_job, jobs):
                if err is None:
                    results.append(rec)
                else:
                    failures.append({"seed": seed, "error": err})
    else:
        for job in jobs:
            seed, rec, err = _trial_job(job)
            if err is None:
                results.append(rec)
            else:
                failures.append({"seed": seed, "error": err})

    p_vals = np.array([r["p_f"] for r in results], dtype=float)
    n_vals = np.array([r["n_total"] for r in results], dtype=float)
    covs = np.array([r.get("cov_analytical", float("nan")) for r in results],
                    dtype=float)
    mean_p = float(p_vals.mean()) if p_vals.size else float("nan")
    if p_vals.size > 1 and mean_p > 0:
        sampling_cov = float(p_vals.std(ddof=1) / mean_p)
    else:
        sampling_cov = float("nan")
    finite_covs = covs[np.isfinite(covs)]
    return TrialSummary(
        problem_id=problem_id,
        estimator=estimator,
        n_reps=reps,
        seed_base=seed_base,
        mean_p=mean_p,
        sampling_cov=sampling_cov,
        mean_n_total=float(n_vals.mean()) if n_vals.size else float("nan"),
        mean_cov_analytical=(
            float(finite_covs.mean()) if finite_covs.size else float("nan")
        ),
        reference_p=pdef.reference_p,
        trials=results,
        failures=failures,
        overrides=overrides,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# report files


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


_CSV_FIELDS = (
    "trial", "seed", "p_f", "n_total", "cov_analytical", "wall_time"
)


def emit_report(summary, out_dir=None, formats=("csv", "json")):
    """Write trials.csv (rows + aggregate footer) and report.json.

    Field order is fixed; two runs with identical seeds produce identical
    files except the JSON timestamp.
    """
    out_dir = out_dir or os.environ.get("BENCH_OUT_DIR", "bench_out")
    run_name = f"{summary.problem_id}_{summary.estimator}_s{summary.seed_base}"
    run_dir = os.path.join(out_dir, run_name)
    os.makedirs(run_dir, exist_ok=True)
    paths = {}

    if "csv" in formats:
        path = os.path.join(run_dir, "trials.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_CSV_FIELDS)
            for i, rec in enumerate(summary.trials):
                w.writerow([
                    i,
                    rec.get("seed"),
                    _fmt(float(rec["p_f"])),
                    _fmt(float(rec["n_total"])),
                    _fmt(float(rec.get("cov_analytical", float("nan")))),
                    _fmt(float(rec.get("wall_time", float("nan")))),
                ])
            # footer: means per column, sampling C.o.V in the last slot
            w.writerow([
                "aggregate",
                summary.n_reps,
                _fmt(summary.mean_p),
                _fmt(summary.mean_n_total),
                _fmt(summary.mean_cov_analytical),
                _fmt(summary.sampling_cov),
            ])
        paths["csv"] = path

    if "json" in formats:
        path = os.path.join(run_dir, "report.json")
        payload = {
            "problem": summary.problem_id,
            "estimator": summary.estimator,
            "n_reps": summary.n_reps,
            "seed_base": summary.seed_base,
            "overrides": summary.overrides,
            "aggregate": {
                "mean_p": summary.mean_p,
                "sampling_cov": summary.sampling_cov,
                "mean_n_total": summary.mean_n_total,
                "mean_cov_analytical": summary.mean_cov_analytical,
                "reference_p": summary.reference_p,
            },
            "failures": summary.failures,
            "trials": summary.trials,
            "wall_time": summary.wall_time,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=False, allow_nan=True)
        paths["json"] = path

    return paths
