"""Built-in verification suites.

``property_checks`` are fast structural checks (gradients, integrator
geometry, sampler equivalences, estimator identities).  ``table_checks``
re-run the desk-scale benchmark rows and compare against the published
reference values at fixed tolerances.  Both are exposed through the CLI and
exercised by the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baselines import crude_mc
from .densities import (
    GaussianCopulaGumbel,
    IndependentGaussian,
    IndependentLognormal,
    NealFunnel,
    RosenbrockDensity,
)
from .estimator import Budget, run_astpa
from .hmc import leapfrog
from .iis import estimate_ch
from .limit_states import Hyperspherical, LinearSum
from .qnp import BfgsState, bfgs_update, verify_mala_equivalence
from .registry import get_problem
from .target import AstpaTarget, DensityTarget
from .transforms import BoundSpec, pushforward_log_density


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.detail}"


def _fd_grad(f, x, rel=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def _grad_ok(f, grad, x, rtol=1e-5):
    fd = _fd_grad(f, x)
    return np.all(np.abs(fd - grad) <= rtol * np.maximum(1.0, np.abs(grad)))


def check_gradients(n_points=100):
    """Densities, targets and pushforwards against finite differences."""
    cases = []
    for model in (
        IndependentGaussian(3),
        GaussianCopulaGumbel(3),
        RosenbrockDensity(2, a=0.05, b=5.0, gamma=1.0),
        NealFunnel(4),
        IndependentLognormal(3),
    ):
        cases.append((model.family, model, model.sample(n_points, seed=7)))
    worst = ""
    ok = True
    for name, model, pts in cases:
        for x in pts:
            _, grad = model.log_density_and_grad(x)
            if not _grad_ok(lambda p: model.log_density(p), grad, x):
                ok = False
                worst = f"{name} at {np.round(x, 3)}"
                break
    # smoothed target gradient
    target = AstpaTarget(NealFunnel(2), Hyperspherical(2, r=2.0), sigma=0.1)
    rng = np.random.default_rng(0)
    for _ in range(n_points):
        x = rng.normal(scale=2.0, size=2)
        ev = target.eval(x)
        if not _grad_ok(lambda p: target.eval(p).log_h, ev.grad, x):
            ok = False
            worst = f"target at {np.round(x, 3)}"
            break
    # pushforward gradient
    push = pushforward_log_density(
        BoundSpec.lower(0.0, 2), IndependentLognormal(2)
    )
    for _ in range(n_points):
        y = rng.normal(size=2)
        lp, grad = push.log_density_and_grad(y)
        if not _grad_ok(lambda p: push.log_density_and_grad(p)[0], grad, y):
            ok = False
            worst = f"pushforward at {np.round(y, 3)}"
            break
    detail = "all analytic gradients within 1e-5 of central differences" if ok \
        else f"mismatch: {worst}"
    return CheckResult("gradient-suite", ok, detail)


def check_leapfrog_geometry():
    """Reversibility to 1e-10 and one-step volume preservation to 1e-6."""
    t = DensityTarget(IndependentGaussian(3))
    rng = np.random.default_rng(1)
    x, z = rng.normal(size=3), rng.normal(size=3)
    xf, zf, _ = leapfrog(t, x, z, 0.05, 30)
    xb, zb, _ = leapfrog(t, xf, -zf, 0.05, 30)
    rev = max(np.max(np.abs(xb - x)), np.max(np.abs(-zb - z)))

    t2 = DensityTarget(IndependentGaussian(2))

    def step(u):
        a, b = leapfrog(t2, u[:2], u[2:], 0.2, 1)[:2]
        return np.concatenate([a, b])

    u0 = rng.normal(size=4)
    J = np.empty((4, 4))
    h = 1e-5
    for i in range(4):
        up, um = u0.copy(), u0.copy()
        up[i] += h
        um[i] -= h
        J[:, i] = (step(up) - step(um)) / (2 * h)
    vol = abs(abs(np.linalg.det(J)) - 1.0)
    ok = rev <= 1e-10 and vol <= 1e-6
    return CheckResult(
        "leapfrog-geometry", ok,
        f"reversibility {rev:.2e} (<=1e-10), |det J - 1| {vol:.2e} (<=1e-6)",
    )


def check_mala_equivalence(trials=1000):
    """Single-step preconditioned chain vs its Langevin construction."""
    t = DensityTarget(IndependentGaussian(5, sigma=np.linspace(0.5, 2.0, 5)))
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(trials):
        A = rng.normal(size=(5, 5))
        W = 0.15 * (A @ A.T + 5 * np.eye(5))
        B = rng.normal(size=(5, 5))
        M = B @ B.T + 5 * np.eye(5)
        x = rng.normal(size=5)
        if k % 2 == 0:
            dp, da = verify_mala_equivalence(t, x, seed=k, eps=0.25, W=W, M=M)
        else:
            dp, da = verify_mala_equivalence(t, x, seed=k, eps=0.25, M=M)
        worst = max(worst, dp, da)
    ok = worst <= 1e-10
    return CheckResult(
        "mala-equivalence", ok,
        f"max proposal/acceptance deviation {worst:.2e} over {trials} "
        "random SPD trials (<=1e-10)",
    )


def check_bfgs():
    """Secant exactness, quadratic termination, SPD under the skip rule."""
    st = bfgs_update(BfgsState.identity(1), np.array([8.0]), np.array([2.0]))
    secant = abs(st.W[0, 0] - 4.0)
    rng = np.random.default_rng(3)
    A = rng.normal(size=(5, 5))
    H = A @ A.T + 5 * np.eye(5)
    evals, evecs = np.linalg.eigh(H)
    st = BfgsState.identity(5)
    for i in range(5):
        s = math.sqrt(20.0 / evals[i]) * evecs[:, i]
        st = bfgs_update(st, s, H @ s)
    quad = np.linalg.norm(st.W - np.linalg.inv(H), ord="fro")
    spd_ok = True
    st = BfgsState.identity(5)
    for _ in range(10_000):
        s = rng.normal(scale=rng.uniform(0.1, 3.0), size=5)
        y = H @ s + 0.2 * rng.normal(size=5)
        st = bfgs_update(st, s, y)
        try:
            np.linalg.cholesky(st.W)
        except np.linalg.LinAlgError:
            spd_ok = False
            break
    ok = secant == 0.0 and quad <= 1e-6 and spd_ok
    return CheckResult(
        "bfgs", ok,
        f"1-D secant dev {secant:.1e}, quadratic |W-H^-1|_F {quad:.2e} "
        f"(<=1e-6), SPD after 10^4 attempts: {spd_ok}",
    )


def check_ess():
    from .hmc import ess_1d

    rng = np.random.default_rng(4)
    iid_ratio = ess_1d(rng.standard_normal(10_000)) / 10_000
    n = 200_000
    x = np.empty(n)
    x[0] = rng.standard_normal()
    noise = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = 0.5 * x[i - 1] + math.sqrt(0.75) * noise[i]
    ar_ratio = ess_1d(x) / n
    ok = 0.8 <= iid_ratio <= 1.2 and abs(ar_ratio - 1 / 3) <= 0.25 / 3
    return CheckResult(
        "ess", ok,
        f"iid ESS/N {iid_ratio:.3f} (in [0.8, 1.2]), AR(1) rho=0.5 ESS/N "
        f"{ar_ratio:.3f} (1/3 +- 25%)",
    )


def check_iis_unbiasedness(seeds=200):
    from .densities import GaussianMixture
    from .target import TargetEval

    class Scaled:
        d = 2

        def __init__(self, density, log_c):
            self.density = density
            self.log_c = log_c

        def eval(self, x):
            lp = self.density.log_density(x)
            return TargetEval(lp + self.log_c, None, np.nan, lp, self.log_c)

    truth = 3.0
    h_density = IndependentGaussian(2, mean=1.0, sigma=1.5)
    target = Scaled(h_density, math.log(truth))
    q = GaussianMixture([1.0], np.full((1, 2), 0.5),
                        (2.5**2 * np.eye(2))[None], kind="full")
    vals = np.array([estimate_ch(target, q, 400, seed=s).ch
                     for s in range(seeds)])
    se = vals.std(ddof=1) / math.sqrt(seeds)
    dev = abs(vals.mean() - truth)
    exact = estimate_ch(Scaled(q, math.log(7.0)), q, 100, seed=0).ch
    ok = dev <= 2 * se and abs(exact - 7.0) <= 1e-9
    return CheckResult(
        "iis-unbiasedness", ok,
        f"mean dev {dev:.3e} <= 2 SE {2 * se:.3e} over {seeds} seeds; "
        f"constant-ratio case {exact:.12g}",
    )


def check_scale_invariance():
    model = IndependentGaussian(3)

    class OneCoord(LinearSum):
        def _gval(self, x):
            return self.threshold - x[0], np.array([-1.0, 0.0, 0.0])

    budget = Budget(n=800, n_burnin=100, m=240)
    rep0 = run_astpa(OneCoord(3, threshold=2.5), model, sigma=0.2, q=10.0,
                     budget=budget, seed=11, anchor=np.zeros(3))
    rep1 = run_astpa(OneCoord(3, threshold=2.5), IndependentGaussian(3),
                     sigma=0.2, q=10.0, budget=budget, seed=11,
                     anchor=np.zeros(3), log_scale=math.log(1e3))
    rel = abs(rep1.p_f - rep0.p_f) / rep0.p_f
    ok = rel <= 1e-12
    return CheckResult(
        "estimator-scale-invariance", ok,
        f"relative change {rel:.2e} under a 10^3 target rescale (<=1e-12)",
    )


def check_ledger():
    problem = Hyperspherical(2, r=2.0)
    model = NealFunnel(2)
    from .estimator import TotalBudget

    rep = run_astpa(problem, model, sigma=0.1, q=20.0,
                    budget=TotalBudget(n_total=1213), seed=3)
    ok = (problem.n_calls == rep.n_total == 1213
          and rep.n_total == rep.n_adam + rep.n_burnin + rep.n + rep.m)
    return CheckResult(
        "call-ledger", ok,
        f"counter {problem.n_calls} == reported {rep.n_total} == "
        f"{rep.n_adam}+{rep.n_burnin}+{rep.n}+{rep.m}",
    )


def property_checks():
    return [
        check_gradients(),
        check_leapfrog_geometry(),
        check_mala_equivalence(),
        check_bfgs(),
        check_ess(),
        check_iis_unbiasedness(),
        check_scale_invariance(),
        check_ledger(),
    ]


# ---------------------------------------------------------------------------
# desk-scale table criteria


@dataclass
class Criterion:
    name: str
    problem_id: str
    estimator: str
    reps: int
    p_band: tuple
    cov_max: float
    anal_cov_tol: float = None
    extra: str = None


TABLE_CRITERIA = [
    Criterion("funnel-d2", "ex3-d2", "astpa-qnp", 100,
              (2.7e-5, 3.5e-5), 0.20, anal_cov_tol=0.05),
    Criterion("gumbel-d2", "ex1-d2", "astpa-qnp", 100, (2.0e-7, 3.0e-7), 0.25),
    Criterion("banana-d2", "ex2-d2", "astpa-qnp", 100,
              (0.8e-5, 1.5e-5), 0.35, extra="hmc-ess-contrast"),
    Criterion("funnel-d101", "ex3-d101", "astpa-qnp", 100,
              (5.2e-6, 8.2e-6), 0.35),
    Criterion("octic-d200", "ex4-y15", "astpa-qnp", 100, (1.6e-5, 2.9e-5), 0.40),
]


def run_criterion(crit, parallelism=1, reps=None):
    from .reporting import run_benchmark

    reps = reps or crit.reps
    s = run_benchmark(crit.problem_id, crit.estimator, reps=reps,
                      seed_base=20_000, parallelism=parallelism)
    lo, hi = crit.p_band
    ok = lo <= s.mean_p <= hi and s.sampling_cov <= crit.cov_max
    detail = (f"E[p]={s.mean_p:.3e} in [{lo:.2e}, {hi:.2e}], "
              f"C.o.V {s.sampling_cov:.3f} <= {crit.cov_max}, "
              f"E[N]={s.mean_n_total:.0f}, failures {len(s.failures)}")
    if crit.anal_cov_tol is not None:
        gap = abs(s.mean_cov_analytical - s.sampling_cov)
        ok = ok and gap <= crit.anal_cov_tol
        detail += (f", |anal-samp C.o.V| {gap:.3f} <= {crit.anal_cov_tol}")
    if crit.extra == "hmc-ess-contrast":
        h = run_benchmark(crit.problem_id, "astpa-hmc", reps=max(10, reps // 5),
                          seed_base=20_000, parallelism=parallelism,
                          overrides={"n_total": 3848})
        ess_q = np.mean([t.get("ess_min", np.nan) for t in s.trials])
        ess_h = np.mean([t.get("ess_min", np.nan) for t in h.trials])
        ok = ok and ess_q >= 5.0 * ess_h
        detail += f", ESS contrast {ess_q:.1f} vs {ess_h:.1f} (>=5x)"
    return CheckResult(crit.name, ok, detail)


def check_ring_constant_and_probability(reps=100, parallelism=1):
    """Posterior-constant accuracy and the downstream probability."""
    from scipy.integrate import dblquad

    from .densities import RingPosterior
    from .registry import posterior_log_constant
    from .reporting import run_benchmark

    post = RingPosterior(2)
    val, _ = dblquad(
        lambda x2, x1: math.exp(post.log_density(np.array([x1, x2]))),
        -3.5, 3.5, lambda x1: -3.5, lambda x1: 3.5,
    )
    pdef = get_problem("ex5-d2-r3.8")
    cpi = posterior_log_constant(pdef)
    rel = abs(cpi.c - val) / val
    s = run_benchmark("ex5-d2-r3.8", "astpa-qnp", reps=reps,
                      seed_base=20_000, parallelism=parallelism)
    p_ok = abs(s.mean_p - 3.45e-5) <= 0.30 * 3.45e-5
    ok = rel <= 0.05 and p_ok
    return CheckResult(
        "ring-constant-and-probability", ok,
        f"posterior constant {cpi.c:.3e} vs quadrature {val:.3e} "
        f"(rel {rel:.3f} <= 0.05); E[p]={s.mean_p:.3e} within 30% of 3.45e-5",
    )


def check_crude_mc_reference():
    pdef = get_problem("ex3-d2")
    problem, model = pdef.build_baseline()
    res = crude_mc(problem, model, 10_000_000, seed=4242)
    ref = 3.11e-5
    se = math.sqrt(ref * (1 - ref) / 10_000_000)
    ok = abs(res.p - ref) <= 3 * se
    return CheckResult(
        "crude-mc-cross-check", ok,
        f"p={res.p:.3e} within 3 SE ({3 * se:.2e}) of {ref:.2e} at n=1e7",
    )


def table_checks(parallelism=1, reps=None):
    out = [run_criterion(c, parallelism=parallelism, reps=reps)
           for c in TABLE_CRITERIA]
    out.append(check_ring_constant_and_probability(
        reps=reps or 100, parallelism=parallelism))
    out.append(check_crude_mc_reference())
    return out
