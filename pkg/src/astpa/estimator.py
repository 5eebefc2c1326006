"""End-to-end rare event probability estimation pipeline.

Stages: build the smoothed target, locate the rare-event domain with Adam,
run the (preconditioned) chain, form the shifted probability estimate from
the chain, estimate the target's normalizing constant by inverse importance
sampling, and multiply.  The model-call ledger is exact:

    N_Total = N_Adam + N_BurnIn + N + M

because the target construction call at the anchor is reused by Adam's
first iteration and Adam's final evaluation is reused as the chain start
(both through the one-deep limit-state cache).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .discovery import AdamConfig, discover, placement_check
from .hmc import SamplerConfig, ess_min, hmcmc_chain, thinning_stride
from .iis import EmConfig, IisResult, estimate_ch, fit_gmm
from .qnp import QnpConfig, qnp_chain
from .target import AstpaTarget


class StageError(RuntimeError):
    """Pipeline failure carrying the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Budget:
    """Explicit chain/importance-sampling budget."""

    n: int
    n_burnin: int
    m: int
    adam_max: int = 500

    def resolve(self, n_adam):
        return self.n, self.n_burnin, self.m


@dataclass
class TotalBudget:
    """Fixed total model-call budget, split after the optimizer has run.

    Burn-in is ~1/8 of N and the importance-sampling set ~30% of N; the
    remainder after the optimizer's calls goes to the chain so the ledger
    hits ``n_total`` exactly.
    """

    n_total: int
    burnin_frac: float = 0.125
    m_frac: float = 0.30
    adam_max: int = 500

    def resolve(self, n_adam):
        rest = self.n_total - n_adam
        if rest < 40:
            raise ValueError(
                f"budget {self.n_total} too small after {n_adam} optimizer calls"
            )
        n = int(rest / (1.0 + self.burnin_frac + self.m_frac))
        nb = int(round(self.burnin_frac * n))
        m = rest - n - nb
        if m % 2 == 1:
            m -= 1
            n += 1
        return n, nb, m


@dataclass
class EstimateReport:
    p_f: float
    log_p_f: float
    p_tilde: float
    c_h: float
    log_c_h: float
    cov_analytical: float
    n_adam: int
    n_burnin: int
    n: int
    m: int
    n_total: int
    j: int
    n_s: int
    ess_min: float
    accept_rate: float
    eps_final: float
    iis_rule: str
    placement: str
    seed: int
    wall_time: float
    sampler: str
    c_pi: Optional[float] = None
    log_c_pi: Optional[float] = None
    n_failure_samples: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "p_f": self.p_f,
            "log_p_f": self.log_p_f,
            "p_tilde": self.p_tilde,
            "c_h": self.c_h,
            "log_c_h": self.log_c_h,
            "cov_analytical": self.cov_analytical,
            "n_adam": self.n_adam,
            "n_burnin": self.n_burnin,
            "n": self.n,
            "m": self.m,
            "n_total": self.n_total,
            "j": self.j,
            "n_s": self.n_s,
            "ess_min": self.ess_min,
            "accept_rate": self.accept_rate,
            "eps_final": self.eps_final,
            "iis_rule": self.iis_rule,
            "placement": self.placement,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "sampler": self.sampler,
            "c_pi": self.c_pi,
            "log_c_pi": self.log_c_pi,
            "n_failure_samples": self.n_failure_samples,
            "notes": list(self.notes),
        }
        return out


def shifted_estimate(g_values, log_l_values, log_scale=0.0):
    """Chain average of the indicator-weighted density ratio, in log space.

    The ratio pi/h on the failure set is exp(-log l - log_scale), never
    below 1 for an unscaled target.  Returns ``(p_tilde, log_p_tilde,
    n_failures)`` with ``p_tilde = 0`` when no chain state failed.
    """
    g_values = np.asarray(g_values, float)
    log_l = np.asarray(log_l_values, float)
    n = g_values.size
    fail = g_values <= 0.0
    n_fail = int(np.sum(fail))
    if n_fail == 0:
        return 0.0, -np.inf, 0
    log_w = -(log_l[fail] + log_scale)
    log_p = float(logsumexp(log_w) - math.log(n))
    return math.exp(log_p), log_p, n_fail


def combine_estimate(log_p_tilde, log_c_h):
    """Product of the shifted estimate and the normalizing constant."""
    if log_p_tilde == -np.inf:
        return 0.0, -np.inf
    log_p = log_p_tilde + log_c_h
    return math.exp(log_p), log_p


def analytical_cov(g_thinned, log_l_thinned, p_tilde, iis_result, log_scale=0.0):
    """Coefficient of variation of the product estimator.

    Var(p) = p_tilde^2 Var(C) + C^2 Var(p_tilde) + Var(p_tilde) Var(C),
    with Var(p_tilde) from the thinned chain set and Var(C) from the
    independent importance-sampling draws.  Computed through relative
    variances so scales cancel.
    """
    if p_tilde <= 0.0:
        return float("nan")
    g_thinned = np.asarray(g_thinned, float)
    log_l_thinned = np.asarray(log_l_thinned, float)
    n_s = g_thinned.size
    w = np.where(
        g_thinned <= 0.0,
        np.exp(-(log_l_thinned + log_scale) - math.log(p_tilde)),
        0.0,
    )  # weights relative to p_tilde
    dev = w - 1.0
    relvar_p = float(np.sum(dev * dev) / (n_s * (n_s - 1)))
    relvar_c = iis_result.relvar
    relvar = relvar_p + relvar_c + relvar_p * relvar_c
    return math.sqrt(relvar)


def run_astpa(problem, model, sigma, q, budget, seed=0, sampler="qnp",
              anchor=None, qnp_config=None, adam_config=None, em_config=None,
              log_c_pi=None, log_scale=0.0, g_scale=None):
    """Full pipeline; returns an EstimateReport with an exact call ledger.

    ``problem`` and ``model`` must live in the sampler's (unbounded) space;
    compose them with the bound transforms beforehand.  For an unnormalized
    original density, pass its log normalizing constant as ``log_c_pi``.
    """
    t_start = time.perf_counter()
    calls_start = problem.n_calls
    notes = []

    try:
        target = AstpaTarget(
            model, problem, sigma=sigma, q=q, anchor=anchor,
            log_scale=log_scale, g_scale=g_scale,
        )
    except Exception as exc:  # noqa: BLE001
        raise StageError("target", exc) from None

    try:
        adam_cfg = adam_config or AdamConfig(max_iters=budget.adam_max)
        disc = discover(target, config=adam_cfg)
        placement, _ = placement_check(target, disc.x)
        if placement != "ok":
            notes.append("placement check suggests relaxing the target")
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError("discovery", exc) from None

    n, nb, m = budget.resolve(disc.n_calls)

    try:
        cfg = SamplerConfig(n_iter=nb + n, n_burnin=nb, seed=seed)
        if sampler == "qnp":
            run = qnp_chain(target, cfg, disc.x, qnp_config or QnpConfig())
        elif sampler == "hmc":
            run = hmcmc_chain(target, cfg, disc.x)
        else:
            raise ValueError(f"unknown sampler {sampler!r}")
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError("chain", exc) from None

    g_post = run.post(run.g_values)
    log_l_post = run.post(run.log_l)
    p_tilde, log_p_tilde, n_fail = shifted_estimate(g_post, log_l_post, log_scale)

    try:
        e_min = ess_min(run.post_burnin)
        j = thinning_stride(n, e_min)
        thinned_idx = np.arange(0, n, j)
        em = em_config or EmConfig.for_dimension(model.d)
        # the mixture is fitted on the full post-burn-in set; the thinned
        # subset only feeds the variance estimate below
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gmm, _ = fit_gmm(run.post_burnin, em, seed=seed + 1)
    except Exception as exc:  # noqa: BLE001
        raise StageError("mixture-fit", exc) from None

    try:
        iis = estimate_ch(target, gmm, m, seed=seed + 2)
    except Exception as exc:  # noqa: BLE001
        raise StageError("iis", exc) from None

    p_f, log_p_f = combine_estimate(log_p_tilde, iis.log_ch)
    if log_c_pi is not None:
        log_p_f = log_p_f - log_c_pi
        p_f = math.exp(log_p_f) if np.isfinite(log_p_f) else 0.0
    if p_f == 0.0:
        notes.append("no failure samples; increase the budget or relax the target")

    cov = analytical_cov(
        g_post[thinned_idx], log_l_post[thinned_idx], p_tilde, iis, log_scale
    )

    n_total = disc.n_calls + nb + n + m
    ledger = problem.n_calls - calls_start
    if ledger != n_total:
        notes.append(f"ledger mismatch: counted {ledger}, reported {n_total}")

    return EstimateReport(
        p_f=p_f,
        log_p_f=log_p_f,
        p_tilde=p_tilde,
        c_h=iis.ch,
        log_c_h=iis.log_ch,
        cov_analytical=cov,
        n_adam=disc.n_calls,
        n_burnin=nb,
        n=n,
        m=m,
        n_total=n_total,
        j=j,
        n_s=int(thinned_idx.size),
        ess_min=e_min,
        accept_rate=run.diagnostics["accept_fraction"],
        eps_final=run.eps_final,
        iis_rule=iis.rule,
        placement=placement,
        seed=seed,
        wall_time=time.perf_counter() - t_start,
        sampler=sampler,
        c_pi=None if log_c_pi is None else math.exp(log_c_pi),
        log_c_pi=log_c_pi,
        n_failure_samples=n_fail,
        notes=notes,
    )
