"""Benchmark problem registry.

One entry per published table row: joint density, limit state, smoothing
parameters, per-sampler total call budgets, baseline defaults and reference
values.  ``build_astpa`` returns fresh sampler-space objects (bound
transforms applied); ``build_baseline`` returns the original-space pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import chain_space, direct_space, standard_normal_space
from .densities import (
    GaussianCopulaGumbel,
    IndependentLognormal,
    NealFunnel,
    RingPosterior,
    RosenbrockDensity,
)
from .hmc import SamplerConfig, hmcmc_chain
from .iis import estimate_c_pi
from .limit_states import (
    Hyperspherical,
    LinearSum,
    OcticLognormal,
    QuadraticGumbel,
    RingQuadratic,
)
from .target import DensityTarget
from .transforms import BoundSpec, TransformedLimitState, pushforward_log_density


@dataclass
class CpiSettings:
    n_pi: int
    m_pi: int
    n_burnin: int
    seed: int


@dataclass
class ProblemDef:
    problem_id: str
    description: str
    d: int
    sigma: float
    q: float
    n_total: dict  # per sampler kind: {"qnp": int, "hmc": int}
    make_model: callable
    make_problem: callable
    reference_p: Optional[float] = None  # published direct-sampling column
    adam_max: int = 500
    bounds: Optional[str] = None  # 'lower-zero' applies log transform
    sus_n_per_level: int = 1000
    sus_space: str = "direct"  # 'direct' | 'std-normal' | 'chain'
    cpi: Optional[CpiSettings] = None
    mc_n_default: int = 1_000_000
    # chain budget split; the ridge-transit problems need a long burn-in
    burnin_frac: float = 0.125
    m_frac: float = 0.30
    diag_w: Optional[bool] = None  # None -> dimension default
    em_kind: Optional[str] = None  # 'single-full' for correlated targets

    def build_astpa(self):
        """Sampler-space (problem, model); fresh call counter."""
        model = self.make_model()
        problem = self.make_problem()
        if self.bounds == "lower-zero":
            spec = BoundSpec.lower(0.0, self.d)
            return TransformedLimitState(problem, spec), pushforward_log_density(
                spec, model
            )
        return problem, model

    def build_baseline(self):
        """Original-space (problem, model) for direct-sampling estimators."""
        return self.make_problem(), self.make_model()


_REGISTRY: dict = {}


def _register(p):
    _REGISTRY[p.problem_id] = p


def list_problems():
    return sorted(_REGISTRY)


def get_problem(problem_id):
    try:
        return _REGISTRY[problem_id]
    except KeyError:
        raise KeyError(
            f"unknown problem {problem_id!r}; known: {', '.join(list_problems())}"
        ) from None


# -- quadratic limit state with correlated Gumbel marginals -----------------

for _d, _lam, _gamma, _nq, _nh, _ref, _sus in [
    (2, 70.0, 2, 4_048, 5_348, 2.51e-7, 7000),
    (3, 5.0, 3, 4_598, 8_598, 4.17e-7, 5000),
    (40, -200.0, 20, 5_298, 13_298, 4.60e-6, 7400),
]:
    _register(ProblemDef(
        problem_id=f"ex1-d{_d}",
        description=(
            f"quadratic limit state (lambda={_lam:g}, gamma={_gamma}) with "
            f"correlated Gumbel marginals, d={_d}"
        ),
        d=_d,
        sigma=0.1,
        q=20.0,
        n_total={"qnp": _nq, "hmc": _nh},
        make_model=(lambda d=_d: GaussianCopulaGumbel(d)),
        make_problem=(lambda d=_d, lam=_lam, g=_gamma: QuadraticGumbel(d, lam, g)),
        reference_p=_ref,
        sus_n_per_level=_sus,
        sus_space="std-normal",
        em_kind=("single-full" if _d >= 20 else None),
    ))

# -- linear limit state with banana-ridge densities --------------------------

for _d, _a, _b, _gam, _nq, _nh, _ref, _sus in [
    (2, 0.05, 5.0, 1.0, 3_848, 1_020_000, 1.15e-5, 138_000),
    (3, 1.0, 5.0, 0.5, 4_948, 1_020_000, 1.00e-6, 154_000),
]:
    _register(ProblemDef(
        problem_id=f"ex2-d{_d}",
        description=f"linear limit state with d={_d} banana-ridge density",
        d=_d,
        sigma=0.1,
        q=20.0,
        n_total={"qnp": _nq, "hmc": _nh},
        make_model=(lambda d=_d, a=_a, b=_b, g=_gam: RosenbrockDensity(d, a, b, g)),
        make_problem=(lambda d=_d: LinearSum(d)),
        reference_p=_ref,
        adam_max=1500,
        sus_n_per_level=_sus,
        burnin_frac=0.55,  # the chain finishes the ridge climb during burn-in
        m_frac=0.30,
    ))

# -- hyperspherical limit state with funnel density --------------------------

for _d, _r, _nq, _nh, _ref, _sus in [
    (2, 2.0, 1_213, 1_213, 3.11e-5, 1000),
    (31, 2.0, 3_213, 3_213, 1.87e-5, 4540),
    (51, 2.0, 4_313, 4_313, 1.37e-5, 4800),
    (51, 1.0, 4_840, 4_840, 1.28e-7, 5040),
    (101, 2.0, 7_813, 14_313, 6.82e-6, 4650),
]:
    _suffix = f"ex3-d{_d}" + ("" if _r == 2.0 else f"-r{_r:g}")
    _register(ProblemDef(
        problem_id=_suffix,
        description=f"hyperspherical limit state (r={_r:g}) with funnel density, d={_d}",
        d=_d,
        sigma=0.1,
        q=20.0,
        n_total={"qnp": _nq, "hmc": _nh},
        make_model=(lambda d=_d: NealFunnel(d)),
        make_problem=(lambda d=_d, r=_r: Hyperspherical(d, r)),
        reference_p=_ref,
        sus_n_per_level=_sus,
        # the funnel's position-dependent scale defeats a full inverse
        # Hessian beyond a few dimensions (stale off-diagonal structure);
        # the diagonal mode tracks it well
        diag_w=(True if _d >= 31 else None),
    ))

# -- octic limit state with independent lognormal marginals ------------------

for _y0, _nq, _nh, _ref, _sus in [
    (15.0, 8_812, 30_312, 2.22e-5, 2980),
    (16.0, 11_833, 30_333, 3.54e-6, 4340),
]:
    _register(ProblemDef(
        problem_id=f"ex4-y{_y0:g}",
        description=f"octic limit state (Y0={_y0:g}) with lognormal marginals, d=200",
        d=200,
        sigma=0.2,
        q=10.0,
        n_total={"qnp": _nq, "hmc": _nh},
        make_model=(lambda: IndependentLognormal(200, mean=1.0, std=1.0)),
        make_problem=(lambda y0=_y0: OcticLognormal(200, y0)),
        reference_p=_ref,
        bounds="lower-zero",
        sus_n_per_level=_sus,
    ))

# -- ring-shaped posterior (unnormalized) with quadratic limit state ----------

_CPI_BUDGETS = {2: (8000, 2000, 999), 50: (8000, 2000, 999),
                150: (8000, 2000, 999), 500: (14000, 4000, 1999)}

for _d, _r, _nq, _nh, _ref, _sus in [
    (2, 3.8, 1_639, 1_639, 3.38e-5, 9810),
    (50, 3.4, 3_156, 3_156, 2.32e-5, 18_720),
    (150, 3.4, 5_056, 5_056, 6.78e-5, 17_330),
    (150, 3.6, 4_998, 4_998, 1.65e-8, 32_480),
    (500, 3.6, 6_597, 6_597, 2.90e-3, 11_200),
    (500, 3.8, 6_639, 6_639, 0.99e-7, 27_980),
]:
    _npi, _mpi, _burn = _CPI_BUDGETS[_d]
    _register(ProblemDef(
        problem_id=f"ex5-d{_d}-r{_r:g}",
        description=(
            f"quadratic limit state (r={_r:g}) under the ring-shaped "
            f"posterior, d={_d}"
        ),
        d=_d,
        sigma=0.3,
        q=10.0,
        n_total={"qnp": _nq, "hmc": _nh},
        make_model=(lambda d=_d: RingPosterior(d)),
        make_problem=(lambda d=_d, r=_r: RingQuadratic(d, r)),
        reference_p=_ref,
        sus_n_per_level=_sus,
        sus_space="chain",
        cpi=CpiSettings(n_pi=_npi, m_pi=_mpi, n_burnin=_burn, seed=770_000 + _d),
        mc_n_default=100_000,
    ))


# -- posterior normalizing constants, cached per dimension -------------------

_CPI_CACHE: dict = {}


def posterior_log_constant(pdef):
    """log C of the unnormalized posterior, computed once per dimension."""
    if pdef.cpi is None:
        return None
    key = pdef.d
    if key not in _CPI_CACHE:
        model = pdef.make_model()
        res = estimate_c_pi(
            model, n_pi=pdef.cpi.n_pi, m_pi=pdef.cpi.m_pi,
            n_burnin=pdef.cpi.n_burnin, seed=pdef.cpi.seed,
        )
        _CPI_CACHE[key] = res
    return _CPI_CACHE[key]


def posterior_chain_states(pdef, seed, n_states=4000, n_burnin=500):
    """Thinned posterior chain for baselines that need a first-level set."""
    model = pdef.make_model()
    cfg = SamplerConfig(n_iter=n_burnin + n_states, n_burnin=n_burnin, seed=seed)
    run = hmcmc_chain(DensityTarget(model), cfg, np.zeros(model.d))
    return run.post_burnin


def make_sus_space(pdef, seed):
    """Sampling-space adapter for subset simulation on a registry problem."""
    model = pdef.make_model()
    if pdef.sus_space == "std-normal":
        return standard_normal_space(model)
    if pdef.sus_space == "chain":
        n_first = pdef.sus_n_per_level
        states = posterior_chain_states(
            pdef, seed, n_states=max(2 * n_first, 4000)
        )
        return chain_space(model, states)
    return direct_space(model)


def mc_sample_stream(pdef, chunk_hint=None):
    """Direct sampler for crude Monte Carlo, or a chain stream for posteriors."""
    if pdef.sus_space != "chain":
        model = pdef.make_model()
        return model.sample
    model = pdef.make_model()

    def stream(k, seed):
        cfg = SamplerConfig(
            n_iter=500 + 3 * k, n_burnin=500, seed=seed, n_leapfrog=1
        )
        run = hmcmc_chain(DensityTarget(model), cfg, np.zeros(model.d))
        return run.post_burnin[::3][:k]

    return stream
