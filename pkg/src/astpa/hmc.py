"""Hamiltonian MCMC: leapfrog integration, dual-averaging step size, chains.

One driver runs both the standard sampler and the quasi-Newton preconditioned
variant (the latter passes a W-adapter, see ``qnp``).  The step size is tuned
toward a 65% acceptance rate by dual averaging over the first ``2 *
n_burnin`` iterations: a doubling/halving search first brackets a reasonable
value, dual averaging then takes over, restarting once at the burn-in
boundary because the preconditioned variant switches dynamics there.  After
the adaptation window the step size is frozen at the averaged value.

Model-call accounting: the driver evaluates the initial state once and then
one gradient per leapfrog step, so a chain costs ``L * n_iter + 1``
evaluations (the initial one is served from the limit-state cache when the
pipeline has just evaluated that point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular


class ChainStagnation(RuntimeError):
    """Raised when every proposal in a long window was rejected."""


# ---------------------------------------------------------------------------
# mass matrix representations


class _IdentityMass:
    kind = "identity"

    def __init__(self, d):
        self.d = d

    def sample(self, rng):
        return rng.standard_normal(self.d)

    def inv_mul(self, z):
        return z

    def kinetic(self, z):
        return 0.5 * float(np.dot(z, z))


class _ExplicitMass:
    """User-supplied SPD mass matrix M (full or diagonal)."""

    kind = "explicit"

    def __init__(self, M):
        M = np.asarray(M, float)
        if M.ndim == 1:
            if np.any(M <= 0):
                raise ValueError("diagonal mass must be positive")
            self.diag = M
            self._sqrt = np.sqrt(M)
            self.d = M.size
            self._full = False
        elif M.ndim == 2:
            self.d = M.shape[0]
            if not np.allclose(M, M.T, atol=1e-10):
                raise ValueError("mass matrix must be symmetric")
            self._L = cholesky(M, lower=True)
            self._cho = (self._L, True)
            self._full = True
        else:
            raise ValueError("mass must be a vector or a matrix")

    def sample(self, rng):
        zeta = rng.standard_normal(self.d)
        if self._full:
            return self._L @ zeta
        return self._sqrt * zeta

    def inv_mul(self, z):
        if self._full:
            return cho_solve(self._cho, z)
        return z / self.diag

    def kinetic(self, z):
        return 0.5 * float(np.dot(z, self.inv_mul(z)))


class _MassFromInverse:
    """Mass M = W^-1 represented through W itself (no explicit inversion)."""

    kind = "from-inverse"

    def __init__(self, W):
        W = np.asarray(W, float)
        self.W = W
        self.d = W.shape[0]
        self._L = cholesky(W, lower=True)  # W = L L^T, so M^(1/2) = L^-T

    def sample(self, rng):
        zeta = rng.standard_normal(self.d)
        return solve_triangular(self._L, zeta, lower=True, trans="T")

    def inv_mul(self, z):
        return self.W @ z

    def kinetic(self, z):
        return 0.5 * float(np.dot(z, self.W @ z))


class _DiagMassFromInverse:
    kind = "diag-from-inverse"

    def __init__(self, w):
        w = np.asarray(w, float)
        if np.any(w <= 0):
            raise ValueError("inverse-mass diagonal must be positive")
        self.w = w
        self.d = w.size
        self._inv_sqrt = 1.0 / np.sqrt(w)

    def sample(self, rng):
        return self._inv_sqrt * rng.standard_normal(self.d)

    def inv_mul(self, z):
        return self.w * z

    def kinetic(self, z):
        return 0.5 * float(np.dot(z, self.w * z))


def make_mass(M, d):
    if M is None:
        return _IdentityMass(d)
    return _ExplicitMass(M)


# ---------------------------------------------------------------------------
# step size adaptation


class DualAveraging:
    """Nesterov-style dual averaging toward a target acceptance rate."""

    def __init__(self, eps0, target=0.65, gamma=0.05, t0=10.0, kappa=0.75):
        if eps0 <= 0:
            raise ValueError("initial step size must be positive")
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0

    #: clamp on log eps; keeps runaway acceptance streaks finite
    LOG_EPS_BOUND = 50.0

    def update(self, accept_prob):
        self.t += 1
        frac = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        self.log_eps = min(max(self.log_eps, -self.LOG_EPS_BOUND),
                           self.LOG_EPS_BOUND)
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def eps(self):
        return math.exp(self.log_eps)

    @property
    def eps_bar(self):
        return math.exp(self.log_eps_bar)


class _StepSizeSchedule:
    """Search, adapt, restart at the phase switch, freeze at the horizon."""

    MAX_SEARCH_STEPS = 30

    def __init__(self, step_size, eps_init, n_burnin, target_accept):
        self.fixed = step_size is not None
        self.current = float(step_size if self.fixed else eps_init)
        self.nb = n_burnin
        self.horizon = 2 * n_burnin
        self.target = target_accept
        self.mode = "fixed" if self.fixed else "search"
        self._dir = 0
        self._searched = 0
        self.da: Optional[DualAveraging] = None

    def _start_da(self, eps0):
        self.da = DualAveraging(eps0, target=self.target)
        self.current = eps0
        self.mode = "da"

    def observe(self, m, alpha):
        """Feed iteration m's acceptance probability; updates ``current``."""
        if self.fixed or self.mode == "frozen":
            return
        if m > self.horizon:
            self.mode = "frozen"
            return
        if self.mode == "search":
            self._searched += 1
            above = alpha > 0.5
            if self._dir == 0:
                self._dir = 1 if above else -1
                self.current *= 2.0**self._dir
            elif above == (self._dir > 0) and self._searched < self.MAX_SEARCH_STEPS:
                self.current *= 2.0**self._dir
            else:
                self._start_da(self.current)
        elif self.mode == "da":
            self.current = self.da.update(alpha)
        if m == self.nb:
            # dynamics change at the burn-in boundary; restart the averaging
            eps0 = self.da.eps_bar if self.da is not None else self.current
            self._start_da(eps0)
        if m == self.horizon:
            if self.da is not None:
                self.current = self.da.eps_bar
            self.mode = "frozen"


# ---------------------------------------------------------------------------
# sampler configuration and output


@dataclass
class SamplerConfig:
    n_iter: int
    n_burnin: int
    step_size: Optional[float] = None  # None -> auto tuning
    n_leapfrog: int = 1
    mass: Optional[np.ndarray] = None  # None -> identity
    target_accept: float = 0.65
    eps_init: float = 0.1
    divergence_threshold: float = 1000.0
    stall_window: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1 or self.n_leapfrog < 1:
            raise ValueError("n_iter and n_leapfrog must be >= 1")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step size must be positive")


@dataclass
class ChainRun:
    states: np.ndarray
    log_target: np.ndarray
    g_values: np.ndarray
    log_pi: np.ndarray
    log_l: np.ndarray
    accepted: np.ndarray
    accept_prob: np.ndarray
    calls_per_iter: np.ndarray
    eps_trace: np.ndarray
    eps_final: float
    n_burnin: int
    n_target_evals: int
    seed: int
    w_final: Optional[np.ndarray] = None
    mass_kind: str = "identity"
    diagnostics: dict = field(default_factory=dict)

    @property
    def post_burnin(self):
        return self.states[self.n_burnin:]

    def post(self, arr):
        return arr[self.n_burnin:]


# ---------------------------------------------------------------------------
# leapfrog (standalone form, standard dynamics)


def leapfrog(target, x, z, eps, n_steps, mass=None):
    """Integrate Hamilton's equations with the leapfrog scheme.

    Returns ``(x', z', info)`` where info carries the endpoint evaluation,
    the number of gradient evaluations and a divergence flag.
    """
    x = np.asarray(x, float).copy()
    z = np.asarray(z, float).copy()
    mass = mass if hasattr(mass, "inv_mul") else make_mass(mass, x.size)
    ev = target.eval(x)
    n_evals = 1
    diverged = not np.isfinite(ev.log_h)
    if not diverged:
        for _ in range(n_steps):
            z = z + 0.5 * eps * ev.grad
            x = x + eps * mass.inv_mul(z)
            ev = target.eval(x)
            n_evals += 1
            if not np.isfinite(ev.log_h) or not np.all(np.isfinite(ev.grad)):
                diverged = True
                break
            z = z + 0.5 * eps * ev.grad
    info = {"eval": ev, "n_evals": n_evals, "diverged": diverged}
    return x, z, info


# ---------------------------------------------------------------------------
# chain driver


def _chain_log_density(ev):
    # scale-free view of the target: any constant offset on log h cancels in
    # the Metropolis ratio mathematically, and composing from the factors
    # keeps the cancellation exact in floating point as well
    return ev.log_pi + ev.log_l


def _run_chain(target, config, x0, wadapter=None):
    rng = np.random.default_rng(config.seed)
    d = target.d
    nb, ni, L = config.n_burnin, config.n_iter, config.n_leapfrog

    x = np.asarray(x0, float).copy()
    if x.shape != (d,):
        raise ValueError("initial state has wrong dimension")
    ev = target.eval(x)
    n_evals = 1
    if not np.isfinite(_chain_log_density(ev)):
        raise ValueError("initial state has non-finite log-target")

    if wadapter is not None and config.mass is not None:
        raise ValueError("preconditioned chain manages its own mass matrix")
    mass1 = make_mass(config.mass, d)
    mass2 = mass1
    warns = []

    schedule = _StepSizeSchedule(
        config.step_size, config.eps_init, nb, config.target_accept
    )

    states = np.empty((ni, d))
    log_target = np.empty(ni)
    g_values = np.empty(ni)
    log_pi = np.empty(ni)
    log_l = np.empty(ni)
    accepted = np.zeros(ni, dtype=bool)
    accept_prob = np.empty(ni)
    calls_per_iter = np.zeros(ni, dtype=int)
    eps_trace = np.empty(ni)

    consecutive_rejects = 0

    for m in range(1, ni + 1):
        if m == nb + 1 and wadapter is not None:
            mass2, msg = wadapter.build_mass()
            if msg:
                warns.append(msg)
        burnin_precond = wadapter is not None and m <= nb
        mass = mass1 if m <= nb else mass2
        eps = schedule.current

        z0 = mass.sample(rng)
        h0 = -_chain_log_density(ev) + mass.kinetic(z0)

        if burnin_precond:
            w_snapshot = wadapter.snapshot()

        xt, evt, zt = x, ev, z0
        diverged = False
        for _ in range(L):
            if burnin_precond:
                zt = zt + 0.5 * eps * wadapter.matvec(evt.grad)
                x_new = xt + eps * wadapter.matvec(zt)
            else:
                zt = zt + 0.5 * eps * evt.grad
                x_new = xt + eps * mass.inv_mul(zt)
            ev_new = target.eval(x_new)
            calls_per_iter[m - 1] += 1
            bad = not np.isfinite(_chain_log_density(ev_new)) or not np.all(
                np.isfinite(ev_new.grad)
            )
            if bad:
                diverged = True
                xt, evt = x_new, ev_new
                break
            if burnin_precond:
                zt = zt + 0.5 * eps * wadapter.matvec(ev_new.grad)
                # curvature pair from this step; W stays B for the trajectory
                wadapter.update(x_new - xt, evt.grad - ev_new.grad)
            else:
                zt = zt + 0.5 * eps * ev_new.grad
            xt, evt = x_new, ev_new
        n_evals += calls_per_iter[m - 1]

        if diverged:
            alpha = 0.0
        else:
            h1 = -_chain_log_density(evt) + mass.kinetic(zt)
            if not np.isfinite(h1) or abs(h1 - h0) > config.divergence_threshold:
                diverged = True
                alpha = 0.0
            else:
                d_h = h0 - h1
                alpha = 1.0 if d_h >= 0 else math.exp(d_h)

        u = rng.uniform()
        if not diverged and u < alpha:
            x, ev = xt, evt
            consecutive_rejects = 0
            accepted[m - 1] = True
        else:
            consecutive_rejects += 1

        if burnin_precond and alpha < wadapter.alpha_floor:
            wadapter.restore(w_snapshot)

        states[m - 1] = x
        log_target[m - 1] = _chain_log_density(ev)
        g_values[m - 1] = ev.g
        log_pi[m - 1] = ev.log_pi
        log_l[m - 1] = ev.log_l
        accept_prob[m - 1] = alpha
        eps_trace[m - 1] = eps

        schedule.observe(m, alpha)

        if consecutive_rejects >= config.stall_window:
            raise ChainStagnation(
                f"no acceptance in {config.stall_window} consecutive iterations "
                f"(iteration {m}, step size {eps:.3e})"
            )

    post_acc = accepted[nb:]
    diagnostics = {
        "mean_accept": float(np.mean(accept_prob[nb:])),
        "accept_fraction": float(np.mean(post_acc)),
        "warnings": warns,
    }
    if ni - nb >= 100:
        diagnostics["ess_min"] = float(ess_min(states[nb:]))

    return ChainRun(
        states=states,
        log_target=log_target,
        g_values=g_values,
        log_pi=log_pi,
        log_l=log_l,
        accepted=accepted,
        accept_prob=accept_prob,
        calls_per_iter=calls_per_iter,
        eps_trace=eps_trace,
        eps_final=float(schedule.current),
        n_burnin=nb,
        n_target_evals=n_evals,
        seed=config.seed,
        w_final=None if wadapter is None else wadapter.export(),
        mass_kind=mass2.kind if wadapter is not None else mass1.kind,
        diagnostics=diagnostics,
    )


def hmcmc_chain(target, config, x0):
    """Standard HMCMC with Gaussian momenta and Metropolis correction."""
    return _run_chain(target, config, x0, wadapter=None)


# ---------------------------------------------------------------------------
# effective sample size and thinning


def _autocovariance(x):
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real / n
    return acov


def ess_1d(x):
    """ESS of one chain dimension via the initial positive sequence rule."""
    x = np.asarray(x, float)
    n = x.size
    if n < 4:
        return float(n)
    acov = _autocovariance(x)
    if acov[0] <= 0:
        return 1.0  # constant chain carries no information
    rho = acov / acov[0]
    n_pairs = (n - 1) // 2
    tau = 0.0
    prev = np.inf
    for k in range(n_pairs):
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0.0:
            break
        pair = min(pair, prev)  # enforce monotone decrease
        tau += pair
        prev = pair
    tau = 2.0 * tau - 1.0
    tau = max(tau, 1.0 / n)
    return float(n / tau)


def ess(states):
    """Per-dimension effective sample sizes of an (n, d) chain segment."""
    states = np.atleast_2d(np.asarray(states, float))
    return np.array([ess_1d(states[:, j]) for j in range(states.shape[1])])


def ess_min(states):
    return float(np.min(ess(states)))


def thinning_stride(n, ess_minimum):
    """Thinning stride floor(n / (4 ESS_min)), clamped to {3, ..., 30}."""
    if ess_minimum <= 0:
        return 30
    j = int(n / (4.0 * ess_minimum))
    return int(np.clip(j, 3, 30))
